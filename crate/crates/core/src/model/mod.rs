//! Domain types shared by every stage: triples, instances, rules and the
//! rulebase, plus their on-disk formats.

mod predicate;
mod rule;
mod store;

pub use predicate::{normalize_predicate, predicate_key, PredicateKey};
pub use rule::{Rule, RuleBase, RuleOrigin};
pub use store::{
    load_dataset, load_rulebase, parse_dataset, parse_rulebase, rulebase_to_string, save_dataset,
    save_rulebase,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("predicate {0:?} is empty after normalization")]
    EmptyPredicate(String),
    #[error("empty {0}")]
    EmptyArgument(&'static str),
    #[error("triple field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("instance {0:?} has no references")]
    NoReferences(String),
    #[error("duplicate rule id {0:?}")]
    DuplicateRuleId(String),
    #[error("rule {id:?}: body does not parse: {message}")]
    RuleBody { id: String, message: String },
    #[error("rulebase format error at rule {index}: {reason}")]
    RuleFormat { index: usize, reason: String },
    #[error("rulebase format error: {0}")]
    Format(String),
    #[error("dataset format error at line {line}: {reason}")]
    DatasetFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One (subject, predicate, object) fact.
///
/// Fields are stored trimmed. The raw predicate text is kept for prompts and
/// default rendering; its normalized form is cached for matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subj: String,
    pub pred: String,
    pub obj: String,
    norm_pred: String,
}

impl Triple {
    pub fn new(subj: &str, pred: &str, obj: &str) -> Result<Self, ModelError> {
        let field = |value: &str, name| {
            let v = value.trim();
            if v.is_empty() {
                Err(ModelError::EmptyField(name))
            } else {
                Ok(v.to_string())
            }
        };
        let pred = field(pred, "pred")?;
        let norm_pred = normalize_predicate(&pred)?;
        Ok(Self {
            subj: field(subj, "subj")?,
            pred,
            obj: field(obj, "obj")?,
            norm_pred,
        })
    }

    pub fn normalized_pred(&self) -> &str {
        &self.norm_pred
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} | {} | {})", self.subj, self.pred, self.obj)
    }
}

impl Serialize for Triple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [&self.subj, &self.pred, &self.obj].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Triple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [s, p, o] = <[String; 3]>::deserialize(d)?;
        Triple::new(&s, &p, &o).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InstanceOrigin {
    #[default]
    Dataset,
    Synthetic,
}

/// Triples together with their reference verbalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub triples: Vec<Triple>,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "is_dataset")]
    pub origin: InstanceOrigin,
}

fn is_dataset(o: &InstanceOrigin) -> bool {
    *o == InstanceOrigin::Dataset
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        triples: Vec<Triple>,
        references: Vec<String>,
        origin: InstanceOrigin,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if triples.is_empty() {
            return Err(ModelError::EmptyArgument("triple list"));
        }
        if references.is_empty() {
            return Err(ModelError::NoReferences(id));
        }
        Ok(Self { id, triples, references, origin })
    }

    pub fn key(&self) -> PredicateKey {
        predicate_key(&self.triples).expect("instances always carry triples")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_fields_are_trimmed() {
        let t = Triple::new(" A ", "p", "B").unwrap();
        assert_eq!(t.subj, "A");
        assert!(Triple::new("A", " ", "B").is_err());
        assert!(Triple::new("", "p", "B").is_err());
    }

    #[test]
    fn triple_keeps_raw_predicate() {
        let t = Triple::new("Mozart", "birthPlace", "Vienna").unwrap();
        assert_eq!(t.pred, "birthPlace");
        assert_eq!(t.normalized_pred(), "birth place");
    }

    #[test]
    fn instance_requires_references() {
        let t = Triple::new("A", "p", "B").unwrap();
        assert!(Instance::new("x", vec![t.clone()], vec![], InstanceOrigin::Dataset).is_err());
        assert!(Instance::new("x", vec![], vec!["r".into()], InstanceOrigin::Dataset).is_err());
        assert!(Instance::new("x", vec![t], vec!["r".into()], InstanceOrigin::Dataset).is_ok());
    }
}
