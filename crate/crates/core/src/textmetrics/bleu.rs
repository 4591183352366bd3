use std::collections::HashMap;

use super::ngrams;
use crate::error::{Error, Result};

fn counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    for g in ngrams(tokens, n) {
        *out.entry(g).or_insert(0) += 1;
    }
    out
}

/// Corpus-level BLEU with uniform weights over orders `1..=n`, clipped
/// n-gram counts and the closest-reference brevity penalty. Unsmoothed, so
/// any order without a single match gives 0.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], n: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Input("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if n == 0 {
        return Err(Error::Input("BLEU order must be positive".into()));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Input("every candidate needs a reference".into()));
        }
        cand_len += cand.len();
        // Closest reference length, shorter wins on ties.
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| ((l as i64 - cand.len() as i64).abs(), l))
            .unwrap();
        for k in 1..=n {
            let c = counts(cand, k);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in refs {
                for (g, cnt) in counts(r, k) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(cnt);
                }
            }
            for (g, cnt) in &c {
                matched[k - 1] += (*cnt).min(max_ref.get(g).copied().unwrap_or(0));
            }
            total[k - 1] += cand.len().saturating_sub(k - 1);
        }
    }
    if matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    Ok(bp * log_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identity_is_one() {
        let c = vec![toks("a man riding a horse on a road")];
        let r = vec![vec![c[0].clone()]];
        assert_eq!(bleu(&c, &r, 4).unwrap(), 1.0);
        assert_eq!(bleu(&c, &r, 1).unwrap(), 1.0);
    }

    #[test]
    fn clipped_unigrams() {
        // One clipped match out of four; the candidate is longer, so no penalty.
        let c = vec![toks("the the the the")];
        let r = vec![vec![toks("the cat sat")]];
        assert!((bleu(&c, &r, 1).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn short_candidate_is_penalized() {
        let c = vec![toks("the cat")];
        let r = vec![vec![toks("the cat sat on it")]];
        let expected = (1.0f64 - 5.0 / 2.0).exp();
        assert!((bleu(&c, &r, 1).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn longer_all_matching_has_no_penalty() {
        let c = vec![toks("a dog a dog a dog")];
        let r = vec![vec![toks("a dog a dog a dog a")]];
        let long = vec![toks("a dog a dog a dog a dog")];
        assert!(bleu(&c, &r, 1).unwrap() < 1.0);
        assert_eq!(bleu(&long, &r, 1).unwrap(), 7.0 / 8.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(bleu(&[], &[], 1).is_err());
    }
}
