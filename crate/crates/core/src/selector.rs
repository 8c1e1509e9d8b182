//! Inference: match input triples to rules, split what no single rule
//! covers, and fall back to the default rendering for the rest.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{predicate_key, PredicateKey, Rule, RuleBase, Triple};
use crate::ruledsl::{self, ExecOutcome, Limits};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectorError {
    #[error("input predicates {input} do not match rule {rule:?} with key {expected}")]
    KeyMismatch { rule: String, expected: PredicateKey, input: String },
}

/// Orders `triples` to the rule's predicate spec.
///
/// Position `i` of the result has the predicate `spec_predicates[i]`.
/// Triples sharing a predicate keep their input order.
pub fn sort_to_spec(triples: &[Triple], rule: &Rule) -> Result<Vec<Triple>, SelectorError> {
    let refs: Vec<&Triple> = triples.iter().collect();
    let order = spec_order(&refs, rule).ok_or_else(|| SelectorError::KeyMismatch {
        rule: rule.id().to_string(),
        expected: rule.key().clone(),
        input: match predicate_key(triples) {
            Ok(k) => k.to_string(),
            Err(_) => "[]".to_string(),
        },
    })?;
    Ok(order.into_iter().map(|i| triples[i].clone()).collect())
}

/// Positions into `triples` in spec order, or `None` on a key mismatch.
fn spec_order(triples: &[&Triple], rule: &Rule) -> Option<Vec<usize>> {
    let spec = rule.spec_predicates();
    if spec.len() != triples.len() {
        return None;
    }
    let mut used = vec![false; triples.len()];
    let mut order = Vec::with_capacity(spec.len());
    for want in spec {
        let i = (0..triples.len()).find(|&i| !used[i] && triples[i].normalized_pred() == want)?;
        used[i] = true;
        order.push(i);
    }
    Some(order)
}

/// The indexed rule whose key equals the input's key.
pub fn lookup_exact<'a>(rb: &'a RuleBase, triples: &[Triple]) -> Option<&'a Rule> {
    predicate_key(triples).ok().and_then(|k| rb.lookup(&k))
}

/// One step of a cover: a rule (by rulebase position) or the default rule,
/// and the input positions it consumes in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverPart {
    pub rule: Option<usize>,
    pub indices: Vec<usize>,
}

/// Greedy split of an input no single rule covers.
///
/// Each round takes the rule whose key is the largest sub-multiset of the
/// remaining predicates, the earliest inserted on ties. Its triples are
/// taken in input order. Triples left when no key fits get one default
/// part each, after all rule parts.
pub fn greedy_cover(rb: &RuleBase, triples: &[Triple]) -> Vec<CoverPart> {
    let mut remaining: Vec<usize> = (0..triples.len()).collect();
    let mut parts = Vec::new();
    while !remaining.is_empty() {
        let Some(pos) = best_rule(rb, triples, &remaining) else { break };
        let mut taken = Vec::with_capacity(rb.rules()[pos].key().len());
        for want in rb.rules()[pos].key().entries() {
            let at = remaining
                .iter()
                .position(|&i| !taken.contains(&i) && triples[i].normalized_pred() == want)
                .expect("chosen key is a sub-multiset of the remainder");
            taken.push(remaining[at]);
        }
        taken.sort_unstable();
        remaining.retain(|i| !taken.contains(i));
        parts.push(CoverPart { rule: Some(pos), indices: taken });
    }
    parts.extend(remaining.into_iter().map(|i| CoverPart { rule: None, indices: vec![i] }));
    parts
}

/// Enumerating sub-multisets costs one hash lookup each; scanning costs one
/// merge per indexed rule. Pick whichever is cheaper for this remainder.
fn best_rule(rb: &RuleBase, triples: &[Triple], remaining: &[usize]) -> Option<usize> {
    let max_len = remaining.len().min(rb.max_key_len());
    if max_len == 0 {
        return None;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in remaining {
        *counts.entry(triples[i].normalized_pred()).or_insert(0) += 1;
    }
    let distinct: Vec<(&str, usize)> = counts.into_iter().collect();
    let subsets = distinct
        .iter()
        .try_fold(1usize, |acc, &(_, c)| acc.checked_mul(c + 1))
        .unwrap_or(usize::MAX);
    if subsets <= rb.indexed_count() {
        by_enumeration(rb, &distinct, max_len)
    } else {
        by_scan(rb, &distinct, max_len)
    }
}

fn by_scan(rb: &RuleBase, distinct: &[(&str, usize)], max_len: usize) -> Option<usize> {
    let whole = PredicateKey::from_normalized(
        distinct.iter().flat_map(|&(p, c)| std::iter::repeat_n(p.to_string(), c)).collect(),
    );
    let mut best: Option<(usize, usize)> = None;
    for &pos in rb.indexed_positions() {
        let key = rb.rules()[pos].key();
        if key.len() > max_len || best.is_some_and(|(len, _)| key.len() <= len) {
            continue;
        }
        if key.is_submultiset_of(&whole) {
            best = Some((key.len(), pos));
        }
    }
    best.map(|(_, pos)| pos)
}

fn by_enumeration(rb: &RuleBase, distinct: &[(&str, usize)], max_len: usize) -> Option<usize> {
    fn walk(
        rb: &RuleBase,
        distinct: &[(&str, usize)],
        left: usize,
        buf: &mut Vec<String>,
        best: &mut Option<usize>,
    ) {
        if left == 0 {
            let key = PredicateKey::from_normalized(buf.clone());
            if let Some(pos) = rb.position_of(&key) {
                if best.is_none_or(|b| pos < b) {
                    *best = Some(pos);
                }
            }
            return;
        }
        let Some((&(pred, count), rest)) = distinct.split_first() else { return };
        let room: usize = rest.iter().map(|&(_, c)| c).sum();
        let lo = left.saturating_sub(room);
        for take in lo..=count.min(left) {
            let mark = buf.len();
            buf.extend(std::iter::repeat_n(pred.to_string(), take));
            walk(rb, rest, left - take, buf, best);
            buf.truncate(mark);
        }
    }

    let mut buf = Vec::with_capacity(max_len);
    for size in (1..=max_len).rev() {
        let mut best = None;
        walk(rb, distinct, size, &mut buf, &mut best);
        if best.is_some() {
            return best;
        }
    }
    None
}

/// The default rule: subject, raw predicate and object joined by spaces.
pub fn render_default(triple: &Triple) -> String {
    format!("{} {} {}", triple.subj, triple.pred, triple.obj)
}

/// One emitted piece of a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePart {
    /// Producing rule id; `None` is the default rule, written as `"default"`.
    #[serde(serialize_with = "ser_rule", deserialize_with = "de_rule")]
    pub rule: Option<String>,
    pub indices: Vec<usize>,
    pub text: String,
    /// Set when the rule failed and the part fell back to default text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn ser_rule<S: Serializer>(rule: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(rule.as_deref().unwrap_or("default"))
}

fn de_rule<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s = String::deserialize(d)?;
    Ok((s != "default").then_some(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// One rule matched the whole input and ran cleanly.
    Exact,
    /// Several rules, no default text.
    Split,
    /// Some text came from the default rule, for uncovered triples or
    /// because a rule failed.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub exact: bool,
    pub parts: Vec<TracePart>,
    pub split_count: usize,
    /// Some triples were left uncovered by every rule.
    pub used_default: bool,
}

impl GenerationTrace {
    pub fn has_failure(&self) -> bool {
        self.parts.iter().any(|p| p.failure.is_some())
    }

    pub fn kind(&self) -> TraceKind {
        if self.used_default || self.has_failure() {
            TraceKind::Default
        } else if self.exact {
            TraceKind::Exact
        } else {
            TraceKind::Split
        }
    }
}

/// Verbalizes `triples`. Never fails: rules that error at inference time
/// degrade to default text and the trace records why.
pub fn generate(rb: &RuleBase, triples: &[Triple], limits: &Limits) -> (String, GenerationTrace) {
    let (exact, cover) = match lookup_exact(rb, triples) {
        Some(_) => {
            let pos = predicate_key(triples).ok().and_then(|k| rb.position_of(&k));
            (true, vec![CoverPart { rule: pos, indices: (0..triples.len()).collect() }])
        }
        None => (false, greedy_cover(rb, triples)),
    };

    let mut parts = Vec::with_capacity(cover.len());
    for part in cover {
        let mine: Vec<&Triple> = part.indices.iter().map(|&i| &triples[i]).collect();
        let (rule, text, failure) = match part.rule {
            None => (None, render_default(mine[0]), None),
            Some(pos) => {
                let rule = &rb.rules()[pos];
                match run_rule(rule, &mine, limits) {
                    Ok(text) => (Some(rule.id().to_string()), text, None),
                    Err(why) => {
                        let text = mine.iter().map(|t| render_default(t)).collect::<Vec<_>>().join(" ");
                        (Some(rule.id().to_string()), text, Some(why))
                    }
                }
            }
        };
        parts.push(TracePart { rule, indices: part.indices, text, failure });
    }

    let text = parts.iter().map(|p| p.text.as_str()).filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ");
    let trace = GenerationTrace {
        exact,
        split_count: parts.len().saturating_sub(1),
        used_default: parts.iter().any(|p| p.rule.is_none()),
        parts,
    };
    (text, trace)
}

fn run_rule(rule: &Rule, triples: &[&Triple], limits: &Limits) -> Result<String, String> {
    let order = spec_order(triples, rule).ok_or_else(|| "key mismatch".to_string())?;
    let sorted: Vec<Triple> = order.into_iter().map(|i| triples[i].clone()).collect();
    match ruledsl::execute(rule.program(), &sorted, limits) {
        ExecOutcome::Ok(text) => Ok(text),
        other => Err(other.to_string()),
    }
}
