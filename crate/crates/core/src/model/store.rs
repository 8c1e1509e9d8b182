//! JSON rulebase documents and line-delimited JSON datasets.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Instance, InstanceOrigin, ModelError, Rule, RuleBase, RuleOrigin, Triple};

const FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct RuleFile<'a> {
    version: u64,
    rules: Vec<RuleRecord<'a>>,
}

#[derive(Serialize)]
struct RuleRecord<'a> {
    id: &'a str,
    predicates: &'a [String],
    body: &'a str,
    origin: RuleOrigin,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a str>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecordIn {
    id: String,
    predicates: Vec<String>,
    body: String,
    origin: RuleOrigin,
    #[serde(default)]
    provenance: Option<String>,
}

pub fn rulebase_to_string(rb: &RuleBase) -> String {
    let file = RuleFile {
        version: FORMAT_VERSION,
        rules: rb
            .rules()
            .iter()
            .map(|r| RuleRecord {
                id: r.id(),
                predicates: r.spec_predicates(),
                body: r.body(),
                origin: r.origin(),
                provenance: r.provenance(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("rulebase serializes");
    s.push('\n');
    s
}

/// Writes through a sibling temp file so a reader never sees a partial file.
pub fn save_rulebase(rb: &RuleBase, path: &Path) -> Result<(), ModelError> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(rulebase_to_string(rb).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_rulebase(path: &Path) -> Result<RuleBase, ModelError> {
    parse_rulebase(&fs::read_to_string(path)?)
}

pub fn parse_rulebase(text: &str) -> Result<RuleBase, ModelError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| ModelError::Format("top level is not an object".into()))?;
    match obj.get("version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(ModelError::Format(format!("unsupported version {v}"))),
        None => return Err(ModelError::Format("missing `version`".into())),
    }
    let rules = obj
        .get("rules")
        .and_then(Value::as_array)
        .ok_or_else(|| ModelError::Format("missing `rules` array".into()))?;

    let mut rb = RuleBase::new();
    let mut seen = HashSet::new();
    for (index, raw) in rules.iter().enumerate() {
        let rec: RuleRecordIn = serde_json::from_value(raw.clone())
            .map_err(|e| ModelError::RuleFormat { index, reason: e.to_string() })?;
        if !seen.insert(rec.id.clone()) {
            return Err(ModelError::RuleFormat {
                index,
                reason: format!("duplicate rule id {:?}", rec.id),
            });
        }
        let rule = Rule::new(rec.id, &rec.predicates, rec.body, rec.origin, rec.provenance)
            .map_err(|e| match e {
                e @ ModelError::RuleBody { .. } => e,
                other => ModelError::RuleFormat { index, reason: other.to_string() },
            })?;
        rb.push(rule)?;
    }
    Ok(rb)
}

#[derive(Deserialize)]
struct InstanceIn {
    id: Option<String>,
    triples: Option<Vec<Vec<String>>>,
    references: Option<Vec<String>>,
    #[serde(default)]
    origin: InstanceOrigin,
}

pub fn load_dataset(path: &Path) -> Result<Vec<Instance>, ModelError> {
    parse_dataset(&fs::read_to_string(path)?)
}

/// Parses one instance per non-blank line. Predicates keep their raw text.
pub fn parse_dataset(text: &str) -> Result<Vec<Instance>, ModelError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| ModelError::DatasetFormat { line: line_no, reason };
        let rec: InstanceIn = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let id = rec.id.filter(|s| !s.trim().is_empty()).ok_or_else(|| err("missing `id`".into()))?;
        let raw_triples = rec.triples.ok_or_else(|| err("missing `triples`".into()))?;
        let references = rec.references.ok_or_else(|| err("missing `references`".into()))?;
        if raw_triples.is_empty() {
            return Err(err("empty `triples`".into()));
        }
        if references.is_empty() {
            return Err(err("empty `references`".into()));
        }
        let triples = raw_triples
            .iter()
            .enumerate()
            .map(|(j, t)| match t.as_slice() {
                [s, p, o] => Triple::new(s, p, o).map_err(|e| err(format!("triple {j}: {e}"))),
                _ => Err(err(format!("triple {j} has {} fields, expected 3", t.len()))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Instance { id, triples, references, origin: rec.origin });
    }
    Ok(out)
}

pub fn save_dataset(instances: &[Instance], path: &Path) -> Result<(), ModelError> {
    let mut buf = String::new();
    for inst in instances {
        buf.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        buf.push('\n');
    }
    fs::write(path, buf)?;
    Ok(())
}
