use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ruleforge"))
}

fn mini(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn empty_rules(dir: &Path) -> PathBuf {
    let p = dir.join("empty.json");
    fs::write(&p, r#"{"version": 1, "rules": []}"#).unwrap();
    p
}

fn train_mini(dir: &Path) -> PathBuf {
    let out = dir.join("rules.json");
    let o = run(&[
        "train",
        "--data",
        s(&mini("train.jsonl")),
        "--out",
        s(&out),
        "--transport",
        "replay",
        "--fixture",
        s(&mini("fixture.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn generate_with_empty_rulebase_uses_default() {
    let dir = tempfile::tempdir().unwrap();
    let rules = empty_rules(dir.path());
    let o = run(&["generate", "--rules", s(&rules), "--triple", "A|p|B"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "A p B\n");
    let o = run(&["generate", "--rules", s(&rules), "--triple", r"A\|B|p|C", "--triple", "D|q|E"]);
    assert_eq!(stdout(&o), "A|B p C D q E\n");
}

#[test]
fn train_matches_golden_rulebase() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let out = dir.path().join("rules.json");
    let o = run(&[
        "train",
        "--data",
        s(&mini("train.jsonl")),
        "--out",
        s(&out),
        "--report",
        s(&report),
        "--transport",
        "replay",
        "--fixture",
        s(&mini("fixture.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "processed 20: 11 added, 8 already covered, 1 failed; 21 completions; rulebase has 11 rules\n"
    );
    let golden = include_str!("golden/mini_rules.json");
    assert_eq!(fs::read_to_string(&out).unwrap(), golden);
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 20);

    // A second pass on the result only retries the instance that failed.
    let fixture = dir.path().join("fail.jsonl");
    fs::write(&fixture, "{\"reply\": \"<code>output = \\\"no\\\";</code>\"}\n".repeat(6)).unwrap();
    let again = dir.path().join("again.json");
    let o = run(&[
        "train", "--data", s(&mini("train.jsonl")), "--rules", s(&out), "--out", s(&again), "--transport", "replay",
        "--fixture", s(&fixture),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("processed 20: 0 added, 19 already covered, 1 failed; 6 completions"), "{}", stdout(&o));
    assert_eq!(fs::read_to_string(&again).unwrap(), golden);
}

#[test]
fn interrupted_training_leaves_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("short.jsonl");
    let full = fs::read_to_string(mini("fixture.jsonl")).unwrap();
    fs::write(&fixture, full.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let out = dir.path().join("rules.json");
    let args = |fx: &Path| {
        vec![
            "train".to_string(),
            "--data".into(),
            s(&mini("train.jsonl")).into(),
            "--out".into(),
            s(&out).into(),
            "--transport".into(),
            "replay".into(),
            "--fixture".into(),
            s(fx).into(),
        ]
    };
    let o = bin().args(args(&fixture)).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stopped at m05"), "{}", stderr(&o));
    let partial = fs::read_to_string(&out).unwrap();
    assert_eq!(partial.matches("\"id\"").count(), 2);

    // Resume with the remaining replies.
    let rest = dir.path().join("rest.jsonl");
    fs::write(&rest, full.lines().skip(3).collect::<Vec<_>>().join("\n")).unwrap();
    let mut resume = args(&rest);
    resume.extend(["--rules".into(), s(&out).into()]);
    let o = bin().args(resume).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), include_str!("golden/mini_rules.json"));
}

#[test]
fn inspect_variants() {
    let dir = tempfile::tempdir().unwrap();
    let rules = train_mini(dir.path());
    let o = run(&["inspect", "--rules", s(&rules), "--predicates", "birth place,birth year"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "no rule\n");

    let o = run(&["inspect", "--rules", s(&rules), "--predicates", "birthDate, birth place"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "id: r-0002\norigin: trained\nprovenance: m03\npredicates: birth place, birth date\n\n\
         output = \"{triples[0].subj} was born in {triples[0].obj} on {triples[1].obj}.\";\n"
    );
    let o = run(&["inspect", "--rules", s(&rules), "--id", "r-0011"]);
    assert!(stdout(&o).starts_with("id: r-0011\norigin: trained\nprovenance: m18\npredicates: country\n"));
    let o = run(&["inspect", "--rules", s(&rules), "--id", "zzz"]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(1), "no rule\n".to_string()));

    let o = run(&["inspect", "--rules", s(&rules)]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "r-0001\ttrained\tcity served");
}

#[test]
fn stats_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let rules = train_mini(dir.path());
    let o = run(&["stats", "--rules", s(&rules)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rules"], 11);
    assert_eq!(v["by_origin"]["trained"], 11);
    assert_eq!(v["key_sizes"], serde_json::json!({"1": 5, "2": 5, "3": 1}));

    let records = dir.path().join("records.jsonl");
    let o = run(&["evaluate", "--rules", s(&rules), "--data", s(&mini("test.jsonl")), "--jobs", "3", "--out", s(&records)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["instances"], 5);
    assert_eq!(v["counts"], serde_json::json!({"exact": 3, "split": 1, "default": 1}));
    let bleu = v["bleu"].as_f64().unwrap();
    assert!(bleu > 0.0 && bleu < 100.0);
    let recs = fs::read_to_string(&records).unwrap();
    assert_eq!(recs.lines().count(), 5);
    assert!(recs.lines().next().unwrap().starts_with(r#"{"id":"t01","hypothesis":"Aalesund Airport serves the city of Alesund.""#));
}

#[test]
fn generate_from_file_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let rules = train_mini(dir.path());
    let input = dir.path().join("in.jsonl");
    fs::write(
        &input,
        "{\"id\": \"a\", \"triples\": [[\"Odense\", \"country\", \"Denmark\"]]}\n\n\
         {\"triples\": [[\"Odense\", \"country\", \"Denmark\"], [\"X\", \"architect\", \"Y\"]]}\n",
    )
    .unwrap();
    let o = run(&["generate", "--rules", s(&rules), "--input", s(&input), "--trace"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "a");
    assert_eq!(lines[0]["text"], "Odense is in Denmark.");
    assert_eq!(lines[0]["kind"], "exact");
    assert_eq!(lines[1]["kind"], "default");
    assert_eq!(lines[1]["trace"]["parts"][1]["rule"], "default");
    assert!(lines[1].get("id").is_none());
}

#[test]
fn direct_baseline_with_replay() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("direct.jsonl");
    let replies = [
        "Here is the description:\nAalesund Airport serves the city of Alesund.",
        "Pete Conrad was born in Philadelphia on 1930-06-02.",
        "\"Odense is in Denmark, whose capital is Copenhagen and whose leader is Lars Rasmussen.\"",
        "The Chrysler Building was designed by William Van Alen.",
        "Birdy plays Indie folk music and is signed to Atlantic Records.\nI hope this helps!",
    ];
    let text: String = replies.iter().map(|r| format!("{}\n", serde_json::json!({ "reply": r }))).collect();
    fs::write(&fixture, text).unwrap();
    let o = run(&["direct", "--data", s(&mini("test.jsonl")), "--transport", "replay", "--fixture", s(&fixture)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["bleu"].as_f64().unwrap() - 100.0).abs() < 1e-9, "{v}");
    assert!(v.get("counts").is_none());
}

#[test]
fn augment_with_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    fs::write(
        &data,
        "{\"id\": \"i1\", \"triples\": [[\"A\", \"a\", \"B\"], [\"A\", \"b\", \"C\"]], \"references\": [\"A a B, b C.\"]}\n",
    )
    .unwrap();
    let rules = empty_rules(dir.path());
    let fixture = dir.path().join("fx.jsonl");
    let replies = [
        "<sample>\nin: (Q | a | R), (Q | b | S)\nout: Q a R and b S.\n</sample>",
        "<code>output = \"{triples[0].subj} a {triples[0].obj} and b {triples[1].obj}.\";</code>",
    ];
    let text: String = replies.iter().map(|r| format!("{}\n", serde_json::json!({ "reply": r }))).collect();
    fs::write(&fixture, text).unwrap();
    let out = dir.path().join("out.json");
    let syn = dir.path().join("syn.jsonl");
    let o = run(&[
        "augment", "--data", s(&data), "--rules", s(&rules), "--out", s(&out), "--synthetic", s(&syn),
        "--transport", "replay", "--fixture", s(&fixture),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("processed 1: 1 added"), "{}", stdout(&o));
    let rb: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rb["rules"][0]["origin"], "synthetic");
    let syn_line = fs::read_to_string(&syn).unwrap();
    assert!(syn_line.contains("\"origin\":\"synthetic\""), "{syn_line}");
}

#[test]
fn usage_and_operational_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["generate", "--nope"]).status.code(), Some(2));
    assert_eq!(run(&["generate", "--triple", "A|p|B"]).status.code(), Some(2));
    let rules = empty_rules(dir.path());
    assert_eq!(run(&["generate", "--rules", s(&rules)]).status.code(), Some(2));
    let o = run(&["generate", "--rules", s(&rules), "--triple", "A|p"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected subj|pred|obj"), "{}", stderr(&o));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["stats", "--rules", s(&missing)]).status.code(), Some(1));
    let o = run(&["train", "--data", s(&mini("train.jsonl")), "--out", s(&dir.path().join("o.json")), "--transport", "replay"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_supplies_paths_and_templates() {
    let dir = tempfile::tempdir().unwrap();
    let rules = train_mini(dir.path());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, format!(r#"{{"paths": {{"rules": {:?}, "data": {:?}}}}}"#, s(&rules), s(&mini("test.jsonl")))).unwrap();
    let o = run(&["--config", s(&cfg), "evaluate"]);
    assert!(o.status.success(), "{}", stderr(&o));

    fs::write(&cfg, r#"{"paths": {"templates": {"rule": "does-not-exist.txt"}}}"#).unwrap();
    let o = run(&["stats", "--config", s(&cfg), "--rules", s(&rules)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("template rule"), "{}", stderr(&o));
}
