use anyhow::{bail, Result};

use ruleforge_core::model::Triple;

/// Parses `subj|pred|obj`. `\|` is a literal bar and `\\` a backslash;
/// fields are trimmed.
pub fn parse_inline(text: &str) -> Result<Triple> {
    let mut fields = vec![String::new()];
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(n @ ('|' | '\\')) => fields.last_mut().unwrap().push(n),
                Some(n) => {
                    let f = fields.last_mut().unwrap();
                    f.push('\\');
                    f.push(n);
                }
                None => fields.last_mut().unwrap().push('\\'),
            },
            '|' => fields.push(String::new()),
            c => fields.last_mut().unwrap().push(c),
        }
    }
    let [s, p, o] = &fields[..] else {
        bail!("triple {text:?} has {} fields; expected subj|pred|obj (write \\| for a literal bar)", fields.len());
    };
    Ok(Triple::new(s, p, o)?)
}
