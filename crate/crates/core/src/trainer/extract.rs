use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no code found in the reply")]
pub struct ExtractError;

/// Pulls the rule body out of a model reply.
///
/// Takes the first `<code>` span, else the first fenced block, else the
/// whole reply. Then drops echoed template scaffolding (`triples = ...`,
/// `relations = ...`, the `if (relations == ...) {` wrapper and its closing
/// brace, the `output = ...;` placeholder), trims blank edge lines and
/// removes a common indent.
pub fn extract_code(reply: &str) -> Result<String, ExtractError> {
    let raw = code_span(reply);
    let raw = strip_fence(raw);
    let lines = drop_scaffold(raw.lines().collect());
    let body = dedent(&lines);
    if body.trim().is_empty() {
        return Err(ExtractError);
    }
    Ok(body)
}

fn code_span(reply: &str) -> &str {
    if let Some(open) = reply.find("<code>") {
        let rest = &reply[open + "<code>".len()..];
        return rest.find("</code>").map_or(rest, |end| &rest[..end]);
    }
    if let Some(open) = reply.find("```") {
        let rest = &reply[open + 3..];
        // Skip the info string, e.g. ```rust
        let rest = rest.find('\n').map_or("", |nl| &rest[nl + 1..]);
        return rest.find("```").map_or(rest, |end| &rest[..end]);
    }
    reply
}

/// Handles a fenced block nested inside `<code>` tags.
fn strip_fence(code: &str) -> &str {
    let t = code.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.find('\n').map_or("", |nl| &rest[nl + 1..]);
        return rest.strip_suffix("```").unwrap_or(rest);
    }
    code
}

fn is_assignment_to(line: &str, name: &str) -> bool {
    line.trim_start()
        .strip_prefix(name)
        .map(str::trim_start)
        .is_some_and(|r| r.starts_with('=') && !r.starts_with("=="))
}

fn is_scaffold_if(line: &str) -> bool {
    let Some(rest) = line.trim_start().strip_prefix("if") else { return false };
    let rest = rest.trim_start();
    let rest = rest.strip_prefix('(').unwrap_or(rest).trim_start();
    rest.strip_prefix("relations").is_some_and(|r| r.trim_start().starts_with("=="))
}

fn is_placeholder(line: &str) -> bool {
    let t: String = line.chars().filter(|c| !c.is_whitespace()).collect();
    t == "output=...;" || t == "output=..." || t == "print(output)" || t == "print(output);"
}

/// Net `{` minus `}` outside string literals.
fn brace_delta(line: &str) -> i64 {
    let mut depth = 0;
    let mut in_str = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' if in_str => {
                chars.next();
            }
            '"' => in_str = !in_str,
            '#' if !in_str => break,
            '/' if !in_str && chars.clone().next() == Some('/') => break,
            '{' if !in_str => depth += 1,
            '}' if !in_str => depth -= 1,
            _ => {}
        }
    }
    depth
}

fn drop_scaffold(lines: Vec<&str>) -> Vec<&str> {
    let mut keep = vec![true; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if is_assignment_to(line, "triples") || is_assignment_to(line, "relations") || is_placeholder(line) {
            keep[i] = false;
        } else if is_scaffold_if(line) && (brace_delta(line) > 0 || line.trim_end().ends_with(':')) {
            keep[i] = false;
            let mut depth = brace_delta(line);
            if depth > 0 {
                let mut j = i + 1;
                while j < lines.len() {
                    depth += brace_delta(lines[j]);
                    if depth <= 0 {
                        if lines[j].trim() == "}" {
                            keep[j] = false;
                        }
                        break;
                    }
                    j += 1;
                }
            }
        }
        i += 1;
    }
    lines.into_iter().zip(keep).filter_map(|(l, k)| k.then_some(l)).collect()
}

fn dedent(lines: &[&str]) -> String {
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let (Some(first), Some(last)) = (first, last) else { return String::new() };
    let lines = &lines[first..=last];
    let indent = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches([' ', '\t']).len())
        .min()
        .unwrap_or(0);
    lines
        .iter()
        .map(|l| if l.trim().is_empty() { "" } else { l[indent..].trim_end() })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_tags() {
        assert_eq!(extract_code("<code>output = \"x\";</code>").unwrap(), "output = \"x\";");
        assert_eq!(extract_code("Sure.\n<code>\noutput = \"a\";\n</code>\nand <code>other</code>").unwrap(), "output = \"a\";");
        assert_eq!(extract_code("<code>\noutput = \"unclosed\";").unwrap(), "output = \"unclosed\";");
    }

    #[test]
    fn fenced_blocks_are_dedented() {
        let reply = "Here you go:\n```\n    let s = triples[0].subj;\n    if s == \"A\" {\n      output = s;\n    }\n```\n";
        assert_eq!(extract_code(reply).unwrap(), "let s = triples[0].subj;\nif s == \"A\" {\n  output = s;\n}");
        let tagged = "```rules\noutput = \"x\";\n```";
        assert_eq!(extract_code(tagged).unwrap(), "output = \"x\";");
        let nested = "<code>\n```\noutput = \"y\";\n```\n</code>";
        assert_eq!(extract_code(nested).unwrap(), "output = \"y\";");
    }

    #[test]
    fn whole_reply_fallback() {
        assert_eq!(extract_code("\n\n  output = \"z\";\n\n").unwrap(), "output = \"z\";");
    }

    #[test]
    fn scaffold_echo_is_removed() {
        let reply = r#"<code>
triples = [(Aarhus | is part of | Central Denmark Region)]
relations = ["is part of"]
if (relations == ["is part of"]) {
  # your code to generate output
  let subj = triples[0].subj;
  if subj == "x" {
    output = "{subj}!";
  } else {
    output = "{subj} {triples[0].pred} {triples[0].obj}.";
  }
}
</code>"#;
        let want = "# your code to generate output\nlet subj = triples[0].subj;\nif subj == \"x\" {\n  output = \"{subj}!\";\n} else {\n  output = \"{subj} {triples[0].pred} {triples[0].obj}.\";\n}";
        assert_eq!(extract_code(reply).unwrap(), want);
    }

    #[test]
    fn scaffold_without_braces_and_placeholders() {
        let reply = "<code>\nif (relations == ['a']):\n    output = ...\n    output = \"A\";\n    print(output)\n</code>";
        assert_eq!(extract_code(reply).unwrap(), "output = \"A\";");
    }

    #[test]
    fn comparisons_are_not_scaffold() {
        let body = "let relations = 1;\nif relations == 1 { output = \"a\"; }";
        assert_eq!(extract_code(body).unwrap(), body);
        assert_eq!(extract_code("output = triples == 1;").unwrap(), "output = triples == 1;");
    }

    #[test]
    fn empty_extraction_fails() {
        assert_eq!(extract_code("<code>  \n </code>"), Err(ExtractError));
        assert_eq!(extract_code(""), Err(ExtractError));
        assert_eq!(extract_code("<code>triples = [(a | b | c)]</code>"), Err(ExtractError));
    }
}
