use std::collections::{BTreeMap, HashSet};

use super::ngrams;
use crate::error::{Error, Result};

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type Counts<'a> = BTreeMap<Vec<&'a str>, f64>;

struct TfIdf<'a> {
    vec: Vec<Counts<'a>>,
    norm: [f64; MAX_N],
    length: f64,
}

fn tfidf<'a>(tokens: &'a [String], df: &BTreeMap<Vec<&str>, f64>, log_n: f64) -> TfIdf<'a> {
    let mut vec: Vec<Counts<'a>> = vec![BTreeMap::new(); MAX_N];
    for (k, slot) in vec.iter_mut().enumerate() {
        for g in ngrams(tokens, k + 1) {
            *slot.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let mut norm = [0.0; MAX_N];
    let mut length = 0.0;
    for (k, slot) in vec.iter_mut().enumerate() {
        for (g, v) in slot.iter_mut() {
            if k == 1 {
                length += *v;
            }
            let d = df.get(g).copied().unwrap_or(0.0).max(1.0).ln();
            *v *= log_n - d;
            norm[k] += *v * *v;
        }
        norm[k] = norm[k].sqrt();
    }
    TfIdf { vec, norm, length }
}

fn similarity(hyp: &TfIdf, reference: &TfIdf) -> [f64; MAX_N] {
    let delta = hyp.length - reference.length;
    let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
    let mut val = [0.0; MAX_N];
    for k in 0..MAX_N {
        for (g, &h) in &hyp.vec[k] {
            if let Some(&r) = reference.vec[k].get(g) {
                val[k] += h.min(r) * r;
            }
        }
        if hyp.norm[k] != 0.0 && reference.norm[k] != 0.0 {
            val[k] /= hyp.norm[k] * reference.norm[k];
        }
        val[k] *= penalty;
    }
    val
}

/// Corpus CIDEr-D: document frequencies over the reference sets, 1..4-gram
/// tf-idf vectors with clipped candidate weights, a Gaussian length penalty
/// on bigram counts, averaged over orders and references and scaled by 10.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if references.len() < 2 {
        return Err(Error::Input("CIDEr needs at least two reference sets for document frequencies".into()));
    }
    if references.iter().any(Vec::is_empty) {
        return Err(Error::Input("every candidate needs a reference".into()));
    }
    let mut df: BTreeMap<Vec<&str>, f64> = BTreeMap::new();
    for refs in references {
        let mut seen = HashSet::new();
        for r in refs {
            for k in 1..=MAX_N {
                seen.extend(ngrams(r, k));
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let log_n = (references.len() as f64).ln();
    let mut total = 0.0;
    for (cand, refs) in candidates.iter().zip(references) {
        let hyp = tfidf(cand, &df, log_n);
        let mut score = 0.0;
        for r in refs {
            let sim = similarity(&hyp, &tfidf(r, &df, log_n));
            score += sim.iter().sum::<f64>() / MAX_N as f64;
        }
        total += score / refs.len() as f64 * 10.0;
    }
    Ok(total / candidates.len() as f64)
}
