use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{abort, accept, synthesize_rule, Aborted, Outcome, SynthesisReport, TrainConfig, TrainError, TrainOutput};
use crate::cluster::{build_cooccurrence_graph, components_capped, enumerate_predicate_combos};
use crate::llm::{Client, Conversation};
use crate::model::{normalize_predicate, save_rulebase, Instance, InstanceOrigin, PredicateKey, RuleBase, RuleOrigin, Triple};
use crate::prompt;
use crate::selector::greedy_cover;

/// `syn-` followed by 12 hex digits of a hash of the sorted normalized
/// predicates, so the same combination always gets the same id.
pub fn synthetic_id(key: &PredicateKey) -> String {
    let digest = Sha256::digest(key.entries().join("\n").as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("syn-{hex}")
}

/// Finds the first `<sample>` block whose `in:` triples use exactly the
/// requested predicates (as a multiset) and returns its triples and `out:`
/// text.
pub fn parse_sample(reply: &str, requested: &PredicateKey) -> Result<(Vec<Triple>, String), String> {
    let mut rest = reply;
    let mut last_err = String::from("no <sample> block in the reply");
    while let Some(open) = rest.find("<sample>") {
        let after = &rest[open + "<sample>".len()..];
        let (block, next) = match after.find("</sample>") {
            Some(end) => (&after[..end], &after[end + "</sample>".len()..]),
            None => (after, ""),
        };
        rest = next;
        match parse_block(block) {
            Ok((triples, out)) => {
                let key = match crate::model::predicate_key(&triples) {
                    Ok(k) => k,
                    Err(e) => {
                        last_err = e.to_string();
                        continue;
                    }
                };
                if &key == requested {
                    return Ok((triples, out));
                }
                last_err = format!(
                    "sample uses predicates [{}] but [{}] were requested",
                    key.entries().join(", "),
                    requested.entries().join(", ")
                );
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn parse_block(block: &str) -> Result<(Vec<Triple>, String), String> {
    let mut input = None;
    let mut out = None;
    for line in block.lines().map(str::trim) {
        if let Some(v) = line.strip_prefix("in:") {
            input.get_or_insert(v.trim());
        } else if let Some(v) = line.strip_prefix("out:") {
            out.get_or_insert(v.trim());
        }
    }
    let input = input.ok_or("sample has no in: line")?;
    let out = out.filter(|o| !o.is_empty()).ok_or("sample has no out: text")?;
    Ok((parse_triple_list(input)?, out.to_string()))
}

/// `(s | p | o), (s | p | o)`. Parentheses inside a field are allowed as
/// long as a triple never contains `), (`.
fn parse_triple_list(text: &str) -> Result<Vec<Triple>, String> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("triples must look like (s | p | o), got {text:?}"))?;
    let mut triples = Vec::new();
    let mut rest = inner;
    loop {
        let (item, next) = match find_separator(rest) {
            Some((at, len)) => (&rest[..at], Some(&rest[at + len..])),
            None => (rest, None),
        };
        let fields: Vec<&str> = item.split('|').map(str::trim).collect();
        let [s, p, o] = fields[..] else {
            return Err(format!("expected three fields in ({item})"));
        };
        triples.push(Triple::new(s, p, o).map_err(|e| e.to_string())?);
        match next {
            Some(n) => rest = n,
            None => break,
        }
    }
    Ok(triples)
}

/// Position and length of the next `)` `,` `(` separator, spaces allowed.
fn find_separator(s: &str) -> Option<(usize, usize)> {
    let mut from = 0;
    while let Some(i) = s[from..].find(')') {
        let at = from + i;
        let tail = s[at + 1..].trim_start();
        if let Some(t) = tail.strip_prefix(',') {
            let t2 = t.trim_start();
            if t2.starts_with('(') {
                let len = s.len() - at - t2.len() + 1;
                return Some((at, len));
            }
        }
        from = at + 1;
    }
    None
}

/// Dataset instances by predicate, for few-shot lookups.
pub(crate) struct FewshotIndex<'a> {
    dataset: &'a [Instance],
    keys: Vec<PredicateKey>,
    postings: HashMap<String, Vec<usize>>,
}

impl<'a> FewshotIndex<'a> {
    pub(crate) fn new(dataset: &'a [Instance]) -> Self {
        let keys: Vec<PredicateKey> = dataset.iter().map(Instance::key).collect();
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            for p in k.counts().into_keys() {
                postings.entry(p.to_string()).or_default().push(i);
            }
        }
        Self { dataset, keys, postings }
    }

    fn first_containing(&self, key: &PredicateKey) -> Option<usize> {
        let shortest = key
            .counts()
            .into_keys()
            .map(|p| self.postings.get(p).map_or(&[][..], Vec::as_slice))
            .min_by_key(|l| l.len())?;
        shortest.iter().copied().find(|&i| key.is_submultiset_of(&self.keys[i]))
    }

    pub(crate) fn select(&self, predicates: &[String], rb: &RuleBase) -> Vec<&'a Instance> {
        let pseudo: Vec<Triple> = predicates
            .iter()
            .map(|p| Triple::new("s", p, "o").expect("predicates are non-empty"))
            .collect();
        let mut picked: Vec<usize> = Vec::new();
        for part in greedy_cover(rb, &pseudo) {
            let key = match part.rule {
                Some(pos) => rb.rules()[pos].key().clone(),
                None => crate::model::predicate_key(&[pseudo[part.indices[0]].clone()]).expect("non-empty"),
            };
            if let Some(i) = self.first_containing(&key) {
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
        }
        picked.into_iter().map(|i| &self.dataset[i]).collect()
    }
}

/// Dataset instances to show as examples when asking for a sample over
/// `predicates`: the rule selector splits the predicates, and each part
/// contributes the first instance whose key contains it.
pub fn select_fewshot<'a>(predicates: &[String], dataset: &'a [Instance], rb: &RuleBase) -> Vec<&'a Instance> {
    FewshotIndex::new(dataset).select(predicates, rb)
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub instance: Option<Instance>,
    pub calls: usize,
    /// Why each unusable reply was rejected.
    pub failures: Vec<String>,
}

/// Asks the model for an invented instance over `predicates`, re-asking
/// once in a fresh conversation when the reply has no usable sample.
pub fn make_synthetic_instance(
    predicates: &[String],
    dataset: &[Instance],
    rb: &RuleBase,
    client: &Client,
    cfg: &TrainConfig,
) -> Result<SampleOutcome, TrainError> {
    sample_with(predicates, &FewshotIndex::new(dataset), rb, client, cfg)
}

fn sample_with(
    predicates: &[String],
    index: &FewshotIndex<'_>,
    rb: &RuleBase,
    client: &Client,
    cfg: &TrainConfig,
) -> Result<SampleOutcome, TrainError> {
    if predicates.is_empty() {
        return Err(TrainError::Config("a sample needs at least one predicate".into()));
    }
    let normalized = predicates
        .iter()
        .map(|p| normalize_predicate(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let requested = PredicateKey::from_predicates(&normalized).map_err(|e| TrainError::Config(e.to_string()))?;

    let mut examples = String::new();
    for inst in index.select(&normalized, rb) {
        let relations: Vec<&str> = inst.triples.iter().map(|t| t.normalized_pred()).collect();
        examples.push_str(&prompt::render(
            "sample_example",
            &cfg.templates.sample_example,
            &[
                ("relations", &relations.join(", ")),
                ("input", &prompt::format_triples_inline(&inst.triples)),
                ("out", &inst.references[0]),
            ],
        )?);
    }
    let text = prompt::render(
        "sample",
        &cfg.templates.sample,
        &[("examples", &examples), ("relations", &normalized.join(", "))],
    )?;

    let mut out = SampleOutcome { instance: None, calls: 0, failures: Vec::new() };
    for _ in 0..2 {
        let mut conv = Conversation::new();
        conv.push_user(text.clone())?;
        let reply = client.complete(&conv)?;
        out.calls += 1;
        match parse_sample(&reply.content, &requested) {
            Ok((triples, reference)) => {
                let inst = Instance::new(synthetic_id(&requested), triples, vec![reference], InstanceOrigin::Synthetic)
                    .expect("parsed samples have triples and a reference");
                out.instance = Some(inst);
                return Ok(out);
            }
            Err(e) => out.failures.push(e),
        }
    }
    Ok(out)
}

/// Adds rules for predicate combinations that co-occur in `dataset` but
/// have no rule yet.
///
/// Combinations come from the capped co-occurrence components, in
/// component order, then by size, then lexicographically. `global_cap`
/// counts every combination visited, indexed or not, so a resumed run
/// stops where the first one would have. With `checkpoint` set, the
/// rulebase is saved after every accepted rule.
pub fn augment(
    rb: RuleBase,
    dataset: &[Instance],
    client: &Client,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutput, Box<Aborted>> {
    let mut out = TrainOutput { rulebase: rb, reports: Vec::new(), synthetic: Vec::new() };
    if let Err(e) = cfg.validate() {
        return Err(abort("start", out, e));
    }
    let index = FewshotIndex::new(dataset);
    let graph = build_cooccurrence_graph(dataset);
    let mut visited = 0usize;
    'outer: for component in components_capped(&graph, cfg.component_cap) {
        for combo in enumerate_predicate_combos(&component, cfg.per_component_cap) {
            if cfg.global_cap.is_some_and(|cap| visited >= cap) {
                break 'outer;
            }
            visited += 1;
            let key = PredicateKey::from_predicates(&combo).expect("graph nodes are normalized predicates");
            let syn_id = synthetic_id(&key);
            if out.rulebase.is_indexed(&key) {
                let mut report = SynthesisReport::skip(&syn_id);
                report.predicates = Some(combo);
                out.reports.push(report);
                continue;
            }
            let sample = match sample_with(&combo, &index, &out.rulebase, client, cfg) {
                Ok(s) => s,
                Err(e) => return Err(abort(&syn_id, out, e)),
            };
            let Some(instance) = sample.instance else {
                out.reports.push(SynthesisReport {
                    instance_id: syn_id,
                    predicates: Some(combo),
                    outcome: Outcome::SampleFailed,
                    rule_id: None,
                    attempts: 0,
                    sample_calls: Some(sample.calls),
                    final_distance: None,
                    diagnostics: Vec::new(),
                });
                continue;
            };
            let rule_id = out.rulebase.next_id("s");
            let syn = match synthesize_rule(&instance, client, cfg, &rule_id, RuleOrigin::Synthetic) {
                Ok(s) => s,
                Err(e) => return Err(abort(&syn_id, out, e)),
            };
            let mut report = accept(&mut out.rulebase, syn, &syn_id, Some(combo));
            report.sample_calls = Some(sample.calls);
            let added = report.outcome == Outcome::RuleAdded;
            out.reports.push(report);
            if added {
                out.synthetic.push(instance);
                if let Some(path) = checkpoint {
                    if let Err(e) = save_rulebase(&out.rulebase, path) {
                        return Err(abort(&syn_id, out, e));
                    }
                }
            }
        }
    }
    Ok(out)
}
