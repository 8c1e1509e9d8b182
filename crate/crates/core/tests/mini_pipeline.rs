use std::path::PathBuf;

use ruleforge_core::evalx::{evaluate, TraceCounts};
use ruleforge_core::llm::{Client, LlmConfig, ReplayTransport};
use ruleforge_core::model::{load_dataset, rulebase_to_string, RuleBase, RuleOrigin};
use ruleforge_core::ruledsl::Limits;
use ruleforge_core::trainer::{train, verify_rule, AttemptKind, Outcome, TrainConfig, TrainOutput};

fn mini(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini").join(name)
}

fn run() -> (TrainOutput, usize) {
    let data = load_dataset(&mini("train.jsonl")).unwrap();
    let client = Client::new(ReplayTransport::load(&mini("fixture.jsonl")).unwrap(), LlmConfig::default());
    let out = train(&data, RuleBase::new(), &client, &TrainConfig::default(), None).unwrap();
    (out, client.calls())
}

#[test]
fn mini_training_outcomes() {
    let (out, calls) = run();
    assert_eq!(calls, 21);
    assert_eq!(out.reports.len(), 20);
    let skipped = ["m02", "m04", "m06", "m11", "m13", "m14", "m19", "m20"];
    for r in &out.reports {
        let want = if skipped.contains(&r.instance_id.as_str()) {
            Outcome::CoveredSkip
        } else if r.instance_id == "m10" {
            Outcome::SkippedAfterFailures
        } else {
            Outcome::RuleAdded
        };
        assert_eq!(r.outcome, want, "{}", r.instance_id);
    }
    assert_eq!(out.rulebase.len(), 11);
    assert!(out.rulebase.rules().iter().all(|r| r.origin() == RuleOrigin::Trained));

    let by_id = |id: &str| out.reports.iter().find(|r| r.instance_id == id).unwrap();
    let kinds = |id: &str| by_id(id).diagnostics.iter().map(|d| (d.kind, d.distance)).collect::<Vec<_>>();
    assert_eq!(kinds("m03"), [(AttemptKind::Distance, Some(7)), (AttemptKind::Passed, Some(0))]);
    assert_eq!(kinds("m05"), [(AttemptKind::Passed, Some(5))]);
    assert_eq!(kinds("m07"), [(AttemptKind::Distance, Some(6)), (AttemptKind::Passed, Some(0))]);
    assert_eq!(kinds("m08")[0].0, AttemptKind::Parse);
    assert_eq!(kinds("m09")[0].0, AttemptKind::Runtime);
    assert_eq!(by_id("m10").attempts, 6);
    assert_eq!(by_id("m10").diagnostics.len(), 6);

    let m12 = out.rulebase.get(by_id("m12").rule_id.as_deref().unwrap()).unwrap();
    assert!(!m12.body().contains("relations"), "{}", m12.body());
}

#[test]
fn trained_rules_pass_their_gate_offline() {
    let data = load_dataset(&mini("train.jsonl")).unwrap();
    let (out, _) = run();
    for rule in out.rulebase.rules() {
        let inst = data.iter().find(|i| Some(i.id.as_str()) == rule.provenance()).unwrap();
        let d = verify_rule(rule, inst, &Limits::default()).unwrap();
        assert!(d <= 5, "{} {d}", rule.id());
    }
}

#[test]
fn mini_training_is_deterministic_and_idempotent() {
    let (a, _) = run();
    let (b, _) = run();
    assert_eq!(rulebase_to_string(&a.rulebase), rulebase_to_string(&b.rulebase));

    // Only m10 is still uncovered; give it six more failures.
    let data = load_dataset(&mini("train.jsonl")).unwrap();
    let client = Client::new(ReplayTransport::from_replies(vec!["<code>output = \"no\";</code>"; 6]), LlmConfig::default());
    let again = train(&data, a.rulebase.clone(), &client, &TrainConfig::default(), None).unwrap();
    assert_eq!(again.rulebase, a.rulebase);
    assert_eq!(client.calls(), 6);
}

#[test]
fn mini_test_set_evaluates() {
    let (out, _) = run();
    let test = load_dataset(&mini("test.jsonl")).unwrap();
    let eval = evaluate(&out.rulebase, &test, &Limits::default(), 2).unwrap();
    assert_eq!(eval.report.instances, 5);
    assert_eq!(eval.report.counts, Some(TraceCounts { exact: 3, split: 1, default: 1 }));
    let hyps: Vec<&str> = eval.records.iter().map(|r| r.hypothesis.as_str()).collect();
    assert_eq!(hyps[0], "Aalesund Airport serves the city of Alesund.");
    assert_eq!(hyps[1], "Pete Conrad was born in Philadelphia on 1930-06-02.");
    assert_eq!(hyps[2], "Odense is in Denmark. Its capital is Copenhagen. The leader of Denmark is Lars Rasmussen.");
    assert_eq!(hyps[3], "Chrysler Building architect William Van Alen");
}
