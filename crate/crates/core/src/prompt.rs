//! Prompt templates and their rendering.
//!
//! Templates are plain text with `{name}` placeholders; `{{` and `}}` stand
//! for literal braces. Substituted values are inserted as-is and never
//! rescanned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Triple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown placeholder {{{name}}} in template {template}")]
    Unknown { template: String, name: String },
    #[error("unbalanced brace at byte {offset} in template {template}; write {{{{ or }}}} for a literal brace")]
    Brace { template: String, offset: usize },
}

/// Substitutes `vars` into `template`. `label` names the template in errors.
pub fn render(label: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let bytes = template.as_bytes();
    let mut i = 0;
    let mut lit = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push_str(&template[lit..i + 1]);
                i += 2;
                lit = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push_str(&template[lit..i + 1]);
                i += 2;
                lit = i;
            }
            b'{' => {
                let close = template[i + 1..]
                    .find('}')
                    .map(|j| i + 1 + j)
                    .ok_or_else(|| TemplateError::Brace { template: label.into(), offset: i })?;
                let name = &template[i + 1..close];
                if !is_ident(name) {
                    return Err(TemplateError::Brace { template: label.into(), offset: i });
                }
                let value = vars
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::Unknown { template: label.into(), name: name.into() })?;
                out.push_str(&template[lit..i]);
                out.push_str(value);
                i = close + 1;
                lit = i;
            }
            b'}' => return Err(TemplateError::Brace { template: label.into(), offset: i }),
            _ => i += 1,
        }
    }
    out.push_str(&template[lit..]);
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks that `template` renders when given exactly the placeholders in `names`.
pub fn check(label: &str, template: &str, names: &[&str]) -> Result<(), TemplateError> {
    let vars: Vec<(&str, &str)> = names.iter().map(|n| (*n, "")).collect();
    render(label, template, &vars).map(|_| ())
}

/// `(s | p | o)`, the form triples take in every prompt.
pub fn format_triple(t: &Triple) -> String {
    format!("({} | {} | {})", t.subj, t.pred, t.obj)
}

/// Triples as `(s | p | o), (s | p | o)`.
pub fn format_triples_inline(triples: &[Triple]) -> String {
    triples.iter().map(format_triple).collect::<Vec<_>>().join(", ")
}

pub const RULE_TEMPLATE: &str = r#"Write code in the rule language described below that turns the given facts (triples) into a factual textual description (output).
Write only the fragment of code that replaces the comment in the snippet below and nothing else. Do not repeat code that is already written. `triples` is a list of triples; each triple t has the text fields t.subj, t.pred and t.obj.
Your code goes inside this template:

triples = {triples}
relations = {relations}
if (relations == {relations}) {{
  # your code to generate output
  output = ...;
}}

The output should be "{output}". The code must also work when the subj and obj values of the triples are different; the relations (pred) given to the program will always be the same and in the same order. Wrap any code in <code></code> tags.

Rule language reference:
{grammar}"#;

pub const REPAIR_OUTPUT_TEMPLATE: &str = r#"The desired output is: "{expected}"
but your code produces: "{produced}"
Please correct the code so that it returns the desired output. Remember to wrap the code in <code></code> tags."#;

pub const REPAIR_ERROR_TEMPLATE: &str = r#"The desired output is: "{expected}"
but running your code fails with: {error}
Please correct the code so that it returns the desired output. Remember to wrap the code in <code></code> tags."#;

pub const SAMPLE_TEMPLATE: &str = r#"Your task is to create one sample for a data-to-text dataset.
For the given set of relations, write a list of RDF triples that uses them and a text that describes those triples. Keep the same format as in the examples below.
All the triples should be related (e.g. add information about entities already mentioned).
The text should ONLY describe the input triples and NOT add any extra information.

#### Example
relations: birth place, birth year, capital of
<sample>
in: (Mozart | birth place | Viena), (Mozart | birth year | 1756), (Vienna | capital of | Austria)
out: Mozart was born in 1756 in the capital of Austria, Vienna.
</sample>

{examples}#### Example
relations: {relations}
"#;

pub const SAMPLE_EXAMPLE_TEMPLATE: &str = r#"#### Example
relations: {relations}
<sample>
in: {input}
out: {out}
</sample>

"#;

pub const DIRECT_TEMPLATE: &str = r#"Here is a list of RDF triples.
{triples}
Describe this data in plain text. Reply with the text of the description only."#;

/// The prompt texts used by training, augmentation and the direct baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Templates {
    /// Placeholders: `triples`, `relations`, `output`, `grammar`.
    pub rule: String,
    /// Placeholders: `expected`, `produced`.
    pub repair_output: String,
    /// Placeholders: `expected`, `error`.
    pub repair_error: String,
    /// Placeholders: `examples`, `relations`.
    pub sample: String,
    /// Placeholders: `relations`, `input`, `out`.
    pub sample_example: String,
    /// Placeholders: `triples`.
    pub direct: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            rule: RULE_TEMPLATE.into(),
            repair_output: REPAIR_OUTPUT_TEMPLATE.into(),
            repair_error: REPAIR_ERROR_TEMPLATE.into(),
            sample: SAMPLE_TEMPLATE.into(),
            sample_example: SAMPLE_EXAMPLE_TEMPLATE.into(),
            direct: DIRECT_TEMPLATE.into(),
        }
    }
}

impl Templates {
    /// Every template with the placeholder names it may use.
    pub fn entries(&self) -> [(&'static str, &str, &'static [&'static str]); 6] {
        [
            ("rule", &self.rule, &["triples", "relations", "output", "grammar"]),
            ("repair_output", &self.repair_output, &["expected", "produced"]),
            ("repair_error", &self.repair_error, &["expected", "error"]),
            ("sample", &self.sample, &["examples", "relations"]),
            ("sample_example", &self.sample_example, &["relations", "input", "out"]),
            ("direct", &self.direct, &["triples"]),
        ]
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        for (label, text, names) in self.entries() {
            check(label, text, names)?;
        }
        Ok(())
    }
}
