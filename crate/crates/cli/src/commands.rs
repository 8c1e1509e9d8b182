use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use ruleforge_core::evalx::{self, Evaluation};
use ruleforge_core::llm::{Client, HttpTransport, ReplayTransport};
use ruleforge_core::model::{
    load_dataset, load_rulebase, save_dataset, save_rulebase, PredicateKey, Rule, RuleBase, Triple,
};
use ruleforge_core::ruledsl::canonical_print;
use ruleforge_core::selector::generate;
use ruleforge_core::trainer::{self, write_reports, Aborted, Outcome, SynthesisReport, TrainOutput};

use crate::config::{AppConfig, TransportKind};
use crate::triples::parse_inline;
use crate::{Cli, Command, LlmArgs};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    cfg.validate()?;
    let paths = &cfg.paths;
    match cli.command {
        Command::Train { data, rules, out, report, threshold, llm } => {
            let data = need(data, &paths.data, "--data")?;
            let out = need(out, &paths.out, "--out")?;
            let rb = match rules.or_else(|| paths.rules.clone()) {
                Some(p) => load_rulebase(&p).with_context(|| format!("loading {}", p.display()))?,
                None => RuleBase::new(),
            };
            let dataset = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let mut tc = cfg.train.clone();
            if let Some(t) = threshold {
                tc.levenshtein_threshold = t;
            }
            let client = make_client(&cfg, &llm)?;
            let result = trainer::train(&dataset, rb, &client, &tc, Some(&out));
            finish(result, &out, report.or_else(|| paths.report.clone()).as_deref(), None, &client)
        }
        Command::Augment { data, rules, out, report, synthetic, threshold, llm } => {
            let data = need(data, &paths.data, "--data")?;
            let rules = need(rules, &paths.rules, "--rules")?;
            let out = need(out, &paths.out, "--out")?;
            let rb = load_rulebase(&rules).with_context(|| format!("loading {}", rules.display()))?;
            let dataset = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let mut tc = cfg.train.clone();
            if let Some(t) = threshold {
                tc.levenshtein_threshold = t;
            }
            let client = make_client(&cfg, &llm)?;
            let result = trainer::augment(rb, &dataset, &client, &tc, Some(&out));
            finish(result, &out, report.or_else(|| paths.report.clone()).as_deref(), synthetic.as_deref(), &client)
        }
        Command::Generate { rules, triples, input, trace } => {
            let rules = need(rules, &paths.rules, "--rules")?;
            let inputs = read_inputs(&triples, input.as_deref())?;
            let rb = load_rulebase(&rules).with_context(|| format!("loading {}", rules.display()))?;
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            for (id, ts) in &inputs {
                let (text, tr) = generate(&rb, ts, &cfg.train.limits);
                if trace {
                    let line = TracedOutput { id: id.as_deref(), text: &text, kind: tr.kind(), trace: &tr };
                    serde_json::to_writer(&mut w, &line)?;
                    writeln!(w)?;
                } else {
                    writeln!(w, "{text}")?;
                }
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { rules, data, out, jobs } => {
            let rules = need(rules, &paths.rules, "--rules")?;
            let data = need(data, &paths.data, "--data")?;
            let rb = load_rulebase(&rules).with_context(|| format!("loading {}", rules.display()))?;
            let test = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let eval = evalx::evaluate(&rb, &test, &cfg.train.limits, jobs)?;
            report_evaluation(&eval, out.as_deref())
        }
        Command::Direct { data, out, llm } => {
            let data = need(data, &paths.data, "--data")?;
            let test = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let client = make_client(&cfg, &llm)?;
            let eval = evalx::evaluate_direct(&test, &client, &cfg.train.templates.direct)?;
            report_evaluation(&eval, out.as_deref())
        }
        Command::Inspect { rules, id, predicates } => {
            let rules = need(rules, &paths.rules, "--rules")?;
            let rb = load_rulebase(&rules).with_context(|| format!("loading {}", rules.display()))?;
            let found = match (&id, &predicates) {
                (Some(id), _) => Some(rb.get(id)),
                (None, Some(list)) => {
                    let preds: Vec<&str> = list.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
                    let key = PredicateKey::from_predicates(&preds)?;
                    Some(rb.lookup(&key))
                }
                (None, None) => None,
            };
            match found {
                Some(Some(rule)) => {
                    print!("{}", show_rule(&rb, rule));
                    Ok(ExitCode::SUCCESS)
                }
                Some(None) => {
                    println!("no rule");
                    Ok(ExitCode::from(1))
                }
                None => {
                    for rule in rb.rules() {
                        let mark = if is_shadowed(&rb, rule) { "\tshadowed" } else { "" };
                        println!("{}\t{}\t{}{mark}", rule.id(), rule.origin(), rule.spec_predicates().join(", "));
                    }
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Command::Stats { rules } => {
            let rules = need(rules, &paths.rules, "--rules")?;
            let rb = load_rulebase(&rules).with_context(|| format!("loading {}", rules.display()))?;
            println!("{}", serde_json::to_string_pretty(&stats(&rb))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// A command line that cannot run as given; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn need(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Usage(format!("{name} is required (or set it under \"paths\" in the config)")).into())
}

fn make_client(cfg: &AppConfig, args: &LlmArgs) -> Result<Client> {
    let mut llm = cfg.llm.clone();
    if let Some(e) = &args.endpoint {
        llm.endpoint = e.clone();
    }
    if let Some(m) = &args.model {
        llm.model = m.clone();
    }
    llm.validate()?;
    let client = match args.transport.unwrap_or(cfg.transport) {
        TransportKind::Replay => {
            let fixture = need(args.fixture.clone(), &cfg.paths.fixture, "--fixture")?;
            let replay = ReplayTransport::load(&fixture).with_context(|| format!("loading {}", fixture.display()))?;
            Client::new(replay, llm)
        }
        TransportKind::Http => {
            let http = HttpTransport::from_env(&llm)?;
            Client::new(http, llm)
        }
    };
    match args.transcript.clone().or_else(|| cfg.paths.transcript.clone()) {
        Some(p) => Ok(client.with_transcript_file(&p)?),
        None => Ok(client),
    }
}

#[derive(Deserialize)]
struct InputLine {
    #[serde(default)]
    id: Option<String>,
    triples: Vec<Vec<String>>,
}

fn read_inputs(inline: &[String], file: Option<&Path>) -> Result<Vec<(Option<String>, Vec<Triple>)>> {
    match (inline.is_empty(), file) {
        (false, None) => {
            let ts = inline.iter().map(|t| parse_inline(t)).collect::<Result<Vec<_>>>()?;
            Ok(vec![(None, ts)])
        }
        (true, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut out = Vec::new();
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let at = || format!("{}:{}", path.display(), n + 1);
                let rec: InputLine = serde_json::from_str(line).with_context(at)?;
                if rec.triples.is_empty() {
                    bail!("{}: no triples", at());
                }
                let ts = rec
                    .triples
                    .iter()
                    .map(|t| match &t[..] {
                        [s, p, o] => Triple::new(s, p, o).map_err(anyhow::Error::from),
                        _ => Err(anyhow!("triple with {} fields", t.len())),
                    })
                    .collect::<Result<Vec<_>>>()
                    .with_context(at)?;
                out.push((rec.id, ts));
            }
            Ok(out)
        }
        (true, None) => Err(Usage("give triples with --triple or a file with --input".into()).into()),
        (false, Some(_)) => Err(Usage("--triple and --input cannot be combined".into()).into()),
    }
}

#[derive(Serialize)]
struct TracedOutput<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a str>,
    text: &'a str,
    kind: ruleforge_core::selector::TraceKind,
    trace: &'a ruleforge_core::selector::GenerationTrace,
}

fn finish(
    result: Result<TrainOutput, Box<Aborted>>,
    out: &Path,
    report: Option<&Path>,
    synthetic: Option<&Path>,
    client: &Client,
) -> Result<ExitCode> {
    let (output, failure) = match result {
        Ok(o) => (o, None),
        Err(a) => {
            let Aborted { at, partial, source } = *a;
            (partial, Some(anyhow!(source).context(format!("stopped at {at}"))))
        }
    };
    save_rulebase(&output.rulebase, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = report {
        write_reports(p, &output.reports).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = synthetic {
        save_dataset(&output.synthetic, p).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{}", summary(&output.reports, output.rulebase.len(), client.calls()));
    match failure {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => Err(e.context(format!("partial rulebase saved to {}", out.display()))),
    }
}

fn summary(reports: &[SynthesisReport], rules: usize, calls: usize) -> String {
    let count = |o: Outcome| reports.iter().filter(|r| r.outcome == o).count();
    let mut s = format!(
        "processed {}: {} added, {} already covered, {} failed",
        reports.len(),
        count(Outcome::RuleAdded),
        count(Outcome::CoveredSkip),
        count(Outcome::SkippedAfterFailures)
    );
    let samples = count(Outcome::SampleFailed);
    if samples > 0 {
        s.push_str(&format!(", {samples} without a sample"));
    }
    s.push_str(&format!("; {calls} completions; rulebase has {rules} rules"));
    s
}

fn report_evaluation(eval: &Evaluation, out: Option<&Path>) -> Result<ExitCode> {
    if let Some(p) = out {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("writing {}", p.display()))?);
        for r in &eval.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&eval.report)?);
    Ok(ExitCode::SUCCESS)
}

fn is_shadowed(rb: &RuleBase, rule: &Rule) -> bool {
    rb.lookup(rule.key()).map(Rule::id) != Some(rule.id())
}

fn show_rule(rb: &RuleBase, rule: &Rule) -> String {
    let mut s = format!("id: {}\norigin: {}\n", rule.id(), rule.origin());
    if let Some(p) = rule.provenance() {
        s.push_str(&format!("provenance: {p}\n"));
    }
    s.push_str(&format!("predicates: {}\n", rule.spec_predicates().join(", ")));
    if is_shadowed(rb, rule) {
        s.push_str("shadowed by an earlier rule with the same predicates\n");
    }
    s.push('\n');
    s.push_str(&canonical_print(rule.program()));
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Stats {
    rules: usize,
    indexed_keys: usize,
    by_origin: BTreeMap<String, usize>,
    key_sizes: BTreeMap<usize, usize>,
}

fn stats(rb: &RuleBase) -> Stats {
    let mut by_origin = BTreeMap::new();
    let mut key_sizes = BTreeMap::new();
    for r in rb.rules() {
        *by_origin.entry(r.origin().to_string()).or_insert(0) += 1;
        *key_sizes.entry(r.key().len()).or_insert(0) += 1;
    }
    Stats { rules: rb.len(), indexed_keys: rb.indexed_count(), by_origin, key_sizes }
}
