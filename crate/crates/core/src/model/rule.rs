use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{normalize_predicate, ModelError, PredicateKey};
use crate::ruledsl::{self, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleOrigin {
    Trained,
    Synthetic,
    Manual,
    Default,
}

impl fmt::Display for RuleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleOrigin::Trained => "trained",
            RuleOrigin::Synthetic => "synthetic",
            RuleOrigin::Manual => "manual",
            RuleOrigin::Default => "default",
        })
    }
}

/// A predicate specification paired with a compiled rule body.
#[derive(Debug, Clone)]
pub struct Rule {
    id: String,
    spec_predicates: Vec<String>,
    body: String,
    origin: RuleOrigin,
    provenance: Option<String>,
    key: PredicateKey,
    program: Arc<Program>,
}

impl Rule {
    /// Normalizes the predicates and compiles the body.
    pub fn new(
        id: impl Into<String>,
        predicates: &[impl AsRef<str>],
        body: impl Into<String>,
        origin: RuleOrigin,
        provenance: Option<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        let body = body.into();
        if id.trim().is_empty() {
            return Err(ModelError::EmptyArgument("rule id"));
        }
        if predicates.is_empty() {
            return Err(ModelError::EmptyArgument("rule predicate list"));
        }
        let spec_predicates = predicates
            .iter()
            .map(|p| normalize_predicate(p.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let program = ruledsl::parse(&body).map_err(|e| ModelError::RuleBody {
            id: id.clone(),
            message: e.to_string(),
        })?;
        let key = PredicateKey::from_normalized(spec_predicates.clone());
        Ok(Self {
            id,
            spec_predicates,
            body,
            origin,
            provenance,
            key,
            program: Arc::new(program),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec_predicates(&self) -> &[String] {
        &self.spec_predicates
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn origin(&self) -> RuleOrigin {
        self.origin
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn key(&self) -> &PredicateKey {
        &self.key
    }

    pub fn program(&self) -> &Program {
        &self.program
    }
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.spec_predicates == other.spec_predicates
            && self.body == other.body
            && self.origin == other.origin
            && self.provenance == other.provenance
    }
}

/// Ordered rule collection with a first-wins predicate-key index.
#[derive(Debug, Clone, Default)]
pub struct RuleBase {
    rules: Vec<Rule>,
    ids: HashMap<String, usize>,
    index: HashMap<PredicateKey, usize>,
    /// Positions of indexed rules, ascending.
    indexed: Vec<usize>,
    max_key_len: usize,
}

impl RuleBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a rule. A rule whose key is already indexed is stored but
    /// stays shadowed by the earlier one.
    pub fn push(&mut self, rule: Rule) -> Result<(), ModelError> {
        if self.ids.contains_key(&rule.id) {
            return Err(ModelError::DuplicateRuleId(rule.id));
        }
        let pos = self.rules.len();
        self.ids.insert(rule.id.clone(), pos);
        if !self.index.contains_key(&rule.key) {
            self.index.insert(rule.key.clone(), pos);
            self.indexed.push(pos);
            self.max_key_len = self.max_key_len.max(rule.key.len());
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.ids.get(id).map(|&i| &self.rules[i])
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains_key(id)
    }

    /// Position of the indexed rule for `key`.
    pub fn position_of(&self, key: &PredicateKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn lookup(&self, key: &PredicateKey) -> Option<&Rule> {
        self.position_of(key).map(|i| &self.rules[i])
    }

    pub fn is_indexed(&self, key: &PredicateKey) -> bool {
        self.index.contains_key(key)
    }

    /// Positions of indexed rules in insertion order.
    pub fn indexed_positions(&self) -> &[usize] {
        &self.indexed
    }

    pub fn indexed_count(&self) -> usize {
        self.indexed.len()
    }

    pub fn max_key_len(&self) -> usize {
        self.max_key_len
    }

    /// First id of the form `{prefix}-NNNN` not yet taken.
    pub fn next_id(&self, prefix: &str) -> String {
        let mut n = self.rules.len() + 1;
        loop {
            let id = format!("{prefix}-{n:04}");
            if !self.ids.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }
}

impl PartialEq for RuleBase {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl RuleBase {
    pub fn from_rules(rules: impl IntoIterator<Item = Rule>) -> Result<Self, ModelError> {
        let mut rb = RuleBase::new();
        for r in rules {
            rb.push(r)?;
        }
        Ok(rb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: &str, preds: &[&str]) -> Rule {
        Rule::new(id, preds, "output = \"x\";", RuleOrigin::Manual, None).unwrap()
    }

    #[test]
    fn first_inserted_key_wins() {
        let mut rb = RuleBase::new();
        rb.push(rule("r1", &["b", "a"])).unwrap();
        rb.push(rule("r2", &["a", "b"])).unwrap();
        let key = PredicateKey::from_predicates(&["a", "b"]).unwrap();
        assert_eq!(rb.lookup(&key).unwrap().id(), "r1");
        assert_eq!(rb.len(), 2);
        assert_eq!(rb.indexed_count(), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut rb = RuleBase::new();
        rb.push(rule("r1", &["a"])).unwrap();
        assert!(matches!(rb.push(rule("r1", &["b"])), Err(ModelError::DuplicateRuleId(_))));
    }

    #[test]
    fn bad_body_names_rule() {
        let err = Rule::new("broken", &["a"], "let x = ;", RuleOrigin::Manual, None).unwrap_err();
        match err {
            ModelError::RuleBody { id, .. } => assert_eq!(id, "broken"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_predicates_are_normalized() {
        let r = rule("r", &["birthPlace", "birth_year"]);
        assert_eq!(r.spec_predicates(), ["birth place", "birth year"]);
    }

    #[test]
    fn next_id_skips_taken() {
        let mut rb = RuleBase::new();
        rb.push(rule("rule-0002", &["a"])).unwrap();
        assert_eq!(rb.next_id("rule"), "rule-0003");
        rb.push(rule("rule-0003", &["b"])).unwrap();
        assert_eq!(rb.next_id("rule"), "rule-0004");
    }
}
