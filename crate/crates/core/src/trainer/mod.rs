//! Training: one pass over a dataset in which a chat model writes a rule
//! for every instance the rulebase cannot yet handle in one piece, checked
//! by running it against the reference and repaired on failure. Then
//! augmentation adds rules for co-occurring predicate combinations.

mod augment;
mod extract;

pub use augment::{augment, make_synthetic_instance, parse_sample, select_fewshot, synthetic_id, SampleOutcome};
pub use extract::{extract_code, ExtractError};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalx::levenshtein;
use crate::llm::{Client, Conversation, LlmError};
use crate::model::{save_rulebase, Instance, ModelError, Rule, RuleBase, RuleOrigin};
use crate::prompt::{self, TemplateError, Templates};
use crate::ruledsl::{self, ExecOutcome, Limits};
use crate::selector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// A rule passes when its output is within this edit distance of the
    /// reference, inclusive.
    pub levenshtein_threshold: usize,
    /// Repair prompts per conversation.
    pub repair_attempts: u32,
    /// Fresh conversations after the first one fails.
    pub restart_attempts: u32,
    pub limits: Limits,
    /// Largest predicate cluster augmentation works on.
    pub component_cap: usize,
    /// Most combinations taken from one cluster; unbounded when `None`.
    pub per_component_cap: Option<usize>,
    /// Most combinations overall; unbounded when `None`.
    pub global_cap: Option<usize>,
    pub templates: Templates,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            levenshtein_threshold: 5,
            repair_attempts: 2,
            restart_attempts: 1,
            limits: Limits::default(),
            component_cap: 20,
            per_component_cap: None,
            global_cap: Some(5000),
            templates: Templates::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.component_cap < 2 {
            return Err(TrainError::Config(format!("component_cap must be at least 2, got {}", self.component_cap)));
        }
        if self.limits.max_steps == 0 || self.limits.max_output_chars == 0 || self.limits.wall_clock.is_zero() {
            return Err(TrainError::Config("limits must all be positive".into()));
        }
        self.templates.validate()?;
        Ok(())
    }

    /// Completions a fully failing synthesis consumes.
    pub fn max_calls_per_rule(&self) -> usize {
        (1 + self.repair_attempts as usize) * (1 + self.restart_attempts as usize)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("checkpoint failed: {0}")]
    Checkpoint(#[from] ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The key was already indexed; no model calls.
    CoveredSkip,
    RuleAdded,
    SkippedAfterFailures,
    /// Augmentation only: the model never produced a usable sample.
    SampleFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Passed,
    Extraction,
    Parse,
    Runtime,
    Limit,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptDiagnostic {
    /// Conversation number, from 0.
    pub conversation: u32,
    /// Reply number within the conversation; 0 is the first answer.
    pub attempt: u32,
    pub kind: AttemptKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<usize>,
}

/// What happened to one instance (or one augmentation combination).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub instance_id: String,
    /// Requested predicates, for augmentation records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicates: Option<Vec<String>>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    /// Rule-writing completions consumed.
    pub attempts: usize,
    /// Completions spent obtaining the synthetic sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_distance: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<AttemptDiagnostic>,
}

impl SynthesisReport {
    fn skip(instance_id: &str) -> Self {
        Self {
            instance_id: instance_id.into(),
            predicates: None,
            outcome: Outcome::CoveredSkip,
            rule_id: None,
            attempts: 0,
            sample_calls: None,
            final_distance: None,
            diagnostics: Vec::new(),
        }
    }
}

pub fn write_reports(path: &Path, reports: &[SynthesisReport]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Result of one synthesis: the accepted rule, if any, and its history.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub rule: Option<Rule>,
    pub calls: usize,
    pub final_distance: Option<usize>,
    pub diagnostics: Vec<AttemptDiagnostic>,
}

/// Writes, tests and repairs a rule for `instance` against its first
/// reference.
///
/// Each conversation opens with the rule prompt; a failing reply gets a
/// repair prompt, up to `repair_attempts` times. After that a fresh
/// conversation starts, up to `restart_attempts` times.
pub fn synthesize_rule(
    instance: &Instance,
    client: &Client,
    cfg: &TrainConfig,
    rule_id: &str,
    origin: RuleOrigin,
) -> Result<Synthesis, TrainError> {
    let reference = &instance.references[0];
    let spec: Vec<&str> = instance.triples.iter().map(|t| t.normalized_pred()).collect();
    let opening = prompt::render(
        "rule",
        &cfg.templates.rule,
        &[
            ("triples", &format!("[{}]", prompt::format_triples_inline(&instance.triples))),
            ("relations", &serde_json::to_string(&spec).expect("strings serialize")),
            ("output", reference),
            ("grammar", ruledsl::GRAMMAR_REFERENCE),
        ],
    )?;

    let mut out = Synthesis { rule: None, calls: 0, final_distance: None, diagnostics: Vec::new() };
    for conversation in 0..=cfg.restart_attempts {
        let mut conv = Conversation::new();
        conv.push_user(opening.clone())?;
        for attempt in 0..=cfg.repair_attempts {
            let reply = client.complete(&conv)?;
            out.calls += 1;
            let verdict = check_reply(&reply.content, instance, &spec, cfg, rule_id, origin);
            conv.push_assistant(reply)?;
            out.final_distance = verdict.distance;
            out.diagnostics.push(AttemptDiagnostic {
                conversation,
                attempt,
                kind: verdict.kind,
                detail: verdict.detail.clone(),
                distance: verdict.distance,
            });
            if let Some(rule) = verdict.rule {
                out.rule = Some(rule);
                return Ok(out);
            }
            if attempt < cfg.repair_attempts {
                let repair = match verdict.kind {
                    AttemptKind::Distance => prompt::render(
                        "repair_output",
                        &cfg.templates.repair_output,
                        &[("expected", reference), ("produced", &verdict.detail)],
                    )?,
                    _ => prompt::render(
                        "repair_error",
                        &cfg.templates.repair_error,
                        &[("expected", reference), ("error", &verdict.detail)],
                    )?,
                };
                conv.push_user(repair)?;
            }
        }
    }
    Ok(out)
}

struct Verdict {
    kind: AttemptKind,
    /// Produced text for `Distance` and `Passed`, the error otherwise.
    detail: String,
    distance: Option<usize>,
    rule: Option<Rule>,
}

fn check_reply(
    reply: &str,
    instance: &Instance,
    spec: &[&str],
    cfg: &TrainConfig,
    rule_id: &str,
    origin: RuleOrigin,
) -> Verdict {
    let fail = |kind, detail: String| Verdict { kind, detail, distance: None, rule: None };
    let body = match extract_code(reply) {
        Ok(b) => b,
        Err(e) => return fail(AttemptKind::Extraction, format!("{e}; wrap the code in <code></code> tags")),
    };
    let rule = match Rule::new(rule_id, spec, body, origin, Some(instance.id.clone())) {
        Ok(r) => r,
        Err(ModelError::RuleBody { message, .. }) => return fail(AttemptKind::Parse, message),
        Err(e) => return fail(AttemptKind::Parse, e.to_string()),
    };
    let sorted = selector::sort_to_spec(&instance.triples, &rule).expect("spec is the instance's own order");
    match ruledsl::execute(rule.program(), &sorted, &cfg.limits) {
        ExecOutcome::Ok(text) => {
            let d = levenshtein(&text, &instance.references[0]);
            let passed = d <= cfg.levenshtein_threshold;
            Verdict {
                kind: if passed { AttemptKind::Passed } else { AttemptKind::Distance },
                detail: text,
                distance: Some(d),
                rule: passed.then_some(rule),
            }
        }
        other @ ExecOutcome::ParseError { .. } => fail(AttemptKind::Parse, other.to_string()),
        other @ ExecOutcome::RuntimeError { .. } => fail(AttemptKind::Runtime, other.to_string()),
        other @ ExecOutcome::LimitExceeded(_) => fail(AttemptKind::Limit, other.to_string()),
    }
}

/// Re-runs a rule on the instance it was written for and returns the edit
/// distance of its output to the first reference.
pub fn verify_rule(rule: &Rule, instance: &Instance, limits: &Limits) -> Result<usize, String> {
    let sorted = selector::sort_to_spec(&instance.triples, rule).map_err(|e| e.to_string())?;
    match ruledsl::execute(rule.program(), &sorted, limits) {
        ExecOutcome::Ok(text) => Ok(levenshtein(&text, &instance.references[0])),
        other => Err(other.to_string()),
    }
}

/// A finished (or interrupted) training or augmentation pass.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub rulebase: RuleBase,
    pub reports: Vec<SynthesisReport>,
    /// Synthetic instances behind rules added by augmentation.
    pub synthetic: Vec<Instance>,
}

/// A pass stopped early. `partial` is consistent: every rule in it passed
/// the gate and the checkpoint, if any, matches it.
#[derive(Debug, Error)]
#[error("stopped at {at}: {source}")]
pub struct Aborted {
    pub at: String,
    pub partial: TrainOutput,
    #[source]
    pub source: TrainError,
}

fn abort(at: &str, partial: TrainOutput, source: impl Into<TrainError>) -> Box<Aborted> {
    Box::new(Aborted { at: at.into(), partial, source: source.into() })
}

/// One pass over `dataset`.
///
/// Instances the rulebase already matches exactly are skipped; for the rest
/// a rule is synthesized and, when it passes, appended and indexed straight
/// away. With `checkpoint` set, the rulebase is saved there after every
/// accepted rule, so a rerun on the saved file resumes the pass.
pub fn train(
    dataset: &[Instance],
    rb: RuleBase,
    client: &Client,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutput, Box<Aborted>> {
    let mut out = TrainOutput { rulebase: rb, reports: Vec::with_capacity(dataset.len()), synthetic: Vec::new() };
    if let Err(e) = cfg.validate() {
        return Err(abort("start", out, e));
    }
    for inst in dataset {
        if selector::lookup_exact(&out.rulebase, &inst.triples).is_some() {
            out.reports.push(SynthesisReport::skip(&inst.id));
            continue;
        }
        let id = out.rulebase.next_id("r");
        let syn = match synthesize_rule(inst, client, cfg, &id, RuleOrigin::Trained) {
            Ok(s) => s,
            Err(e) => return Err(abort(&inst.id, out, e)),
        };
        let report = accept(&mut out.rulebase, syn, &inst.id, None);
        out.reports.push(report);
        if out.reports.last().unwrap().outcome == Outcome::RuleAdded {
            if let Some(path) = checkpoint {
                if let Err(e) = save_rulebase(&out.rulebase, path) {
                    return Err(abort(&inst.id, out, e));
                }
            }
        }
    }
    Ok(out)
}

fn accept(rb: &mut RuleBase, syn: Synthesis, instance_id: &str, predicates: Option<Vec<String>>) -> SynthesisReport {
    let (outcome, rule_id) = match syn.rule {
        Some(rule) => {
            let id = rule.id().to_string();
            rb.push(rule).expect("next_id yields a fresh id");
            (Outcome::RuleAdded, Some(id))
        }
        None => (Outcome::SkippedAfterFailures, None),
    };
    SynthesisReport {
        instance_id: instance_id.into(),
        predicates,
        outcome,
        rule_id,
        attempts: syn.calls,
        sample_calls: None,
        final_distance: syn.final_distance,
        diagnostics: syn.diagnostics,
    }
}
