//! Metrics, rulebase evaluation and the prompted-model baseline.

mod metrics;

pub use metrics::{corpus_bleu, levenshtein, tokenize};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Client, Conversation, LlmError};
use crate::model::{Instance, RuleBase, Triple};
use crate::prompt::{self, TemplateError};
use crate::ruledsl::Limits;
use crate::selector::{self, GenerationTrace, TraceKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCounts {
    pub exact: usize,
    pub split: usize,
    pub default: usize,
}

/// Per-input wall-clock statistics in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl Timing {
    /// Nearest-rank percentiles over `samples`.
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1000.0).collect();
        ms.sort_by(f64::total_cmp);
        let rank = |p: f64| ms[((p * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        let total: f64 = ms.iter().sum();
        Self {
            total_ms: total,
            mean_ms: total / ms.len() as f64,
            p50_ms: rank(0.50),
            p90_ms: rank(0.90),
            p99_ms: rank(0.99),
            max_ms: ms[ms.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub bleu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<TraceCounts>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub kind: TraceKind,
    pub split_count: usize,
    pub used_default: bool,
    /// Rule id per part, `"default"` for the default rule.
    pub rules: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl From<&GenerationTrace> for TraceSummary {
    fn from(t: &GenerationTrace) -> Self {
        Self {
            kind: t.kind(),
            split_count: t.split_count,
            used_default: t.used_default,
            rules: t.parts.iter().map(|p| p.rule.clone().unwrap_or_else(|| "default".into())).collect(),
            failures: t
                .parts
                .iter()
                .filter_map(|p| Some(format!("{}: {}", p.rule.as_deref()?, p.failure.as_deref()?)))
                .collect(),
        }
    }
}

/// One evaluated input; written as JSON lines next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub hypothesis: String,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub records: Vec<InstanceRecord>,
}

/// Runs the rulebase over `testset` and scores it.
///
/// Up to `jobs` threads generate in parallel; records keep test-set order.
/// Timing covers generation only.
pub fn evaluate(rb: &RuleBase, testset: &[Instance], limits: &Limits, jobs: usize) -> Result<Evaluation, EvalError> {
    if testset.is_empty() {
        return Err(EvalError::Argument("empty test set".into()));
    }
    let run = |inst: &Instance| {
        let start = Instant::now();
        let (text, trace) = selector::generate(rb, &inst.triples, limits);
        (text, trace, start.elapsed())
    };
    let jobs = jobs.clamp(1, testset.len());
    let results: Vec<(String, GenerationTrace, Duration)> = if jobs == 1 {
        testset.iter().map(run).collect()
    } else {
        let chunk = testset.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = testset
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("generation does not panic")).collect()
        })
    };

    let mut counts = TraceCounts::default();
    let mut records = Vec::with_capacity(testset.len());
    let mut times = Vec::with_capacity(testset.len());
    for (inst, (text, trace, elapsed)) in testset.iter().zip(results) {
        match trace.kind() {
            TraceKind::Exact => counts.exact += 1,
            TraceKind::Split => counts.split += 1,
            TraceKind::Default => counts.default += 1,
        }
        times.push(elapsed);
        records.push(InstanceRecord {
            id: inst.id.clone(),
            hypothesis: text,
            references: inst.references.clone(),
            trace: Some(TraceSummary::from(&trace)),
        });
    }
    Ok(Evaluation { report: score(&records, Some(counts), &times)?, records })
}

fn score(records: &[InstanceRecord], counts: Option<TraceCounts>, times: &[Duration]) -> Result<EvalReport, EvalError> {
    let hyps: Vec<&str> = records.iter().map(|r| r.hypothesis.as_str()).collect();
    let refs: Vec<Vec<&str>> = records.iter().map(|r| r.references.iter().map(String::as_str).collect()).collect();
    Ok(EvalReport { instances: records.len(), bleu: corpus_bleu(&hyps, &refs)?, counts, timing: Timing::from_samples(times) })
}

/// Triples one per line, for the direct prompt.
fn format_triple_lines(triples: &[Triple]) -> String {
    triples.iter().map(prompt::format_triple).collect::<Vec<_>>().join("\n")
}

/// Asks the model to verbalize `triples` directly and cleans up the reply.
pub fn direct_generate(triples: &[Triple], client: &Client, template: &str) -> Result<String, EvalError> {
    let text = prompt::render("direct", template, &[("triples", &format_triple_lines(triples))])?;
    let mut conv = Conversation::new();
    conv.push_user(text)?;
    let reply = client.complete(&conv)?;
    Ok(clean_direct_reply(&reply.content))
}

/// Runs the direct baseline over `testset`, one completion per instance.
pub fn evaluate_direct(testset: &[Instance], client: &Client, template: &str) -> Result<Evaluation, EvalError> {
    if testset.is_empty() {
        return Err(EvalError::Argument("empty test set".into()));
    }
    let mut records = Vec::with_capacity(testset.len());
    let mut times = Vec::with_capacity(testset.len());
    for inst in testset {
        let start = Instant::now();
        let hypothesis = direct_generate(&inst.triples, client, template)?;
        times.push(start.elapsed());
        records.push(InstanceRecord { id: inst.id.clone(), hypothesis, references: inst.references.clone(), trace: None });
    }
    Ok(Evaluation { report: score(&records, None, &times)?, records })
}

/// Drops chatter around the description: lead-in lines such as "Here is a
/// description:", closing remarks, and quotes wrapping the whole text.
pub fn clean_direct_reply(reply: &str) -> String {
    let lines: Vec<&str> = reply.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut start = 0;
    let mut end = lines.len();
    while start < end && end - start > 1 && is_preamble(lines[start]) {
        start += 1;
    }
    while end > start + 1 && is_closing(lines[end - 1]) {
        end -= 1;
    }
    let text = lines[start..end].join(" ");
    let text = unquote(&text);
    if text.is_empty() {
        reply.trim().to_string()
    } else {
        text.to_string()
    }
}

fn is_preamble(line: &str) -> bool {
    let l = line.to_lowercase();
    l.ends_with(':')
        || ["here is", "here's", "sure", "certainly", "of course", "okay", "ok,"].iter().any(|p| l.starts_with(p))
}

fn is_closing(line: &str) -> bool {
    let l = line.to_lowercase();
    ["note:", "(note", "i hope", "let me know", "this description"].iter().any(|p| l.starts_with(p))
}

fn unquote(text: &str) -> &str {
    let t = text.trim();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            let inner = &t[open.len_utf8()..t.len() - close.len_utf8()];
            if !inner.contains(open) && !inner.contains(close) {
                return inner.trim();
            }
        }
    }
    t
}
