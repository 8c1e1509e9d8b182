use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ModelError, Triple};

/// Canonical form of a predicate name used for all rule matching.
///
/// Trims, splits camelCase, turns underscores into spaces, collapses
/// whitespace runs and lowercases. The result is a fixed point:
/// normalizing it again returns the same text.
pub fn normalize_predicate(raw: &str) -> Result<String, ModelError> {
    let mut spaced = String::with_capacity(raw.len() + 4);
    let mut prev: Option<char> = None;
    for c in raw.chars() {
        let c = if c == '_' { ' ' } else { c };
        if let Some(p) = prev {
            if p.is_lowercase() && c.is_uppercase() {
                spaced.push(' ');
            }
        }
        spaced.push(c);
        prev = Some(c);
    }
    let out = spaced
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ");
    if out.is_empty() {
        return Err(ModelError::EmptyPredicate(raw.to_string()));
    }
    Ok(out)
}

/// Sorted multiset of normalized predicates; the rule index key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredicateKey(Vec<String>);

impl PredicateKey {
    /// Builds a key from raw predicate texts.
    pub fn from_predicates<S: AsRef<str>>(preds: &[S]) -> Result<Self, ModelError> {
        if preds.is_empty() {
            return Err(ModelError::EmptyArgument("predicate list"));
        }
        let mut entries = preds
            .iter()
            .map(|p| normalize_predicate(p.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        entries.sort();
        Ok(Self(entries))
    }

    /// Builds a key from entries that are already normalized.
    pub(crate) fn from_normalized(mut entries: Vec<String>) -> Self {
        entries.sort();
        Self(entries)
    }

    pub fn entries(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry of `self` occurs in `other` at least as often.
    pub fn is_submultiset_of(&self, other: &PredicateKey) -> bool {
        if self.0.len() > other.0.len() {
            return false;
        }
        // Both sides are sorted: a single merge pass suffices.
        let mut theirs = other.0.iter();
        'outer: for mine in &self.0 {
            for t in theirs.by_ref() {
                match t.cmp(mine) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    /// Entry counts, in sorted order.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for e in &self.0 {
            *m.entry(e.as_str()).or_insert(0) += 1;
        }
        m
    }
}

impl fmt::Display for PredicateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(", "))
    }
}

/// Key of the predicates carried by `triples`; independent of input order.
pub fn predicate_key(triples: &[Triple]) -> Result<PredicateKey, ModelError> {
    if triples.is_empty() {
        return Err(ModelError::EmptyArgument("triple list"));
    }
    Ok(PredicateKey::from_normalized(
        triples.iter().map(|t| t.normalized_pred().to_string()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_camel_case() {
        assert_eq!(normalize_predicate("birthPlace").unwrap(), "birth place");
    }

    #[test]
    fn keeps_spaced_form() {
        assert_eq!(normalize_predicate("birth place").unwrap(), "birth place");
    }

    #[test]
    fn normalizes_underscores_and_padding() {
        assert_eq!(
            normalize_predicate("  Elevation_Above_The_Sea_Level ").unwrap(),
            "elevation above the sea level"
        );
    }

    #[test]
    fn rejects_blank() {
        assert!(normalize_predicate("   ").is_err());
        assert!(normalize_predicate("__").is_err());
    }

    #[test]
    fn key_examples() {
        let t = |s: &str, p: &str, o: &str| Triple::new(s, p, o).unwrap();
        let k = predicate_key(&[t("M", "birth year", "1756"), t("M", "birth place", "Vienna")]).unwrap();
        assert_eq!(k.entries(), ["birth place", "birth year"]);
        let k = predicate_key(&[t("A", "p", "B")]).unwrap();
        assert_eq!(k.entries(), ["p"]);
        let k = predicate_key(&[t("A", "p", "B"), t("C", "p", "D")]).unwrap();
        assert_eq!(k.entries(), ["p", "p"]);
        assert!(predicate_key(&[]).is_err());
    }

    #[test]
    fn submultiset() {
        let k = |v: &[&str]| PredicateKey::from_predicates(v).unwrap();
        assert!(k(&["a", "b"]).is_submultiset_of(&k(&["a", "b", "c"])));
        assert!(k(&["p"]).is_submultiset_of(&k(&["p", "p"])));
        assert!(!k(&["p", "p"]).is_submultiset_of(&k(&["p", "q"])));
        assert!(!k(&["d"]).is_submultiset_of(&k(&["a", "b", "c"])));
        assert!(k(&["c"]).is_submultiset_of(&k(&["a", "b", "c"])));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in "[ a-zA-Z_0-9]{1,24}") {
            if let Ok(once) = normalize_predicate(&raw) {
                prop_assert_eq!(normalize_predicate(&once).unwrap(), once);
            }
        }

        #[test]
        fn key_is_permutation_invariant(
            preds in prop::collection::vec("[a-c][a-zA-Z]{0,3}", 1..7),
            seed in any::<u64>(),
        ) {
            let triples: Vec<Triple> = preds.iter().map(|p| Triple::new("s", p, "o").unwrap()).collect();
            let mut shuffled = triples.clone();
            // Deterministic Fisher-Yates driven by the seed.
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(predicate_key(&triples).unwrap(), predicate_key(&shuffled).unwrap());
        }
    }
}
