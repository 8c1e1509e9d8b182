use std::collections::HashMap;

use super::EvalError;

/// Edit distance over Unicode scalar values with unit-cost insertion,
/// deletion and substitution. Case-sensitive, no normalization.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag } else { 1 + diag.min(up).min(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// BLEU tokens: whitespace-separated words, with every character that is
/// neither alphanumeric nor whitespace split off as its own token.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = None;
        for (i, c) in word.char_indices() {
            if c.is_alphanumeric() {
                start.get_or_insert(i);
            } else {
                if let Some(s) = start.take() {
                    out.push(&word[s..i]);
                }
                out.push(&word[i..i + c.len_utf8()]);
            }
        }
        if let Some(s) = start {
            out.push(&word[s..]);
        }
    }
    out
}

const MAX_ORDER: usize = 4;

/// Corpus BLEU on a 0-100 scale.
///
/// Modified n-gram precisions for n = 1..4 are pooled over the corpus and
/// combined by geometric mean, with a brevity penalty against the closest
/// reference length (the shorter one on ties). No smoothing: any order
/// with zero matches gives 0. Orders for which the hypotheses contain no
/// n-grams at all are left out of the mean.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(hypotheses: &[S], references: &[Vec<R>]) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::Argument(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Argument("empty corpus".into()));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);

    for (hyp, refs) in hypotheses.iter().zip(references) {
        if refs.is_empty() {
            return Err(EvalError::Argument("a hypothesis has no references".into()));
        }
        let h = tokenize(hyp.as_ref());
        let rs: Vec<Vec<&str>> = refs.iter().map(|r| tokenize(r.as_ref())).collect();
        hyp_len += h.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| (len.abs_diff(h.len()), len))
            .expect("references are non-empty");
        for n in 1..=MAX_ORDER {
            let hyp_counts = ngrams(&h, n);
            let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
            for r in &rs {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in hyp_counts {
                totals[n - 1] += c;
                matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
            }
        }
    }

    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        if matches[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
        orders += 1;
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let bp = if hyp_len >= ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok(100.0 * bp * (log_sum / orders as f64).exp())
}

fn ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}
