use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tagging::{MergedTag, TaggedCaption};
use crate::textmetrics::{perplexity, NgramLm};
use crate::{Error, Result};

/// Corpus-level caption statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub label: String,
    pub captions: usize,
    pub mean_ppl: f64,
    pub mean_length: f64,
    pub mean_nouns: f64,
    pub mean_distinct_nouns: f64,
}

impl StatsReport {
    pub fn noun_gap(&self) -> f64 {
        self.mean_nouns - self.mean_distinct_nouns
    }
}

/// Per-caption means of perplexity, length (no BOS/EOS), NOUN tokens and
/// distinct NOUN types.
pub fn sentence_stats(captions: &[TaggedCaption], lm: &NgramLm, label: &str) -> Result<StatsReport> {
    if captions.is_empty() {
        return Err(Error::Input("statistics need at least one caption".into()));
    }
    let rows: Vec<[f64; 4]> = captions
        .par_iter()
        .map(|c| {
            [
                perplexity(lm, &c.tokens),
                c.tokens.len() as f64,
                c.noun_count() as f64,
                c.distinct_nouns() as f64,
            ]
        })
        .collect();
    let n = rows.len() as f64;
    let mut sums = [0.0; 4];
    for r in &rows {
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    Ok(StatsReport {
        label: label.to_string(),
        captions: rows.len(),
        mean_ppl: sums[0] / n,
        mean_length: sums[1] / n,
        mean_nouns: sums[2] / n,
        mean_distinct_nouns: sums[3] / n,
    })
}

/// The `k` most frequent tokens not in `exclude`; ties go to the
/// lexicographically smaller token.
pub fn top_unigrams<S: AsRef<str>>(captions: &[Vec<S>], k: usize, exclude: &HashSet<&str>) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in captions.iter().flatten() {
        let w = w.as_ref();
        if !exclude.contains(w) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixRow {
    pub prefix: Vec<MergedTag>,
    pub count: usize,
    pub ratio: f64,
}

impl PrefixRow {
    pub fn rendering(&self) -> String {
        self.prefix.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("+")
    }
}

/// Counts the first `n` merged tags of every caption (shorter captions
/// count as their whole sequence). Rows are sorted by count, then tags.
pub fn mine_prefixes(corpus: &[TaggedCaption], n: usize) -> Vec<PrefixRow> {
    let mut counts: BTreeMap<&[MergedTag], usize> = BTreeMap::new();
    for c in corpus {
        let end = n.min(c.merged.len());
        *counts.entry(&c.merged[..end]).or_insert(0) += 1;
    }
    let total = corpus.len() as f64;
    let mut rows: Vec<PrefixRow> = counts
        .into_iter()
        .map(|(p, count)| PrefixRow { prefix: p.to_vec(), count, ratio: count as f64 / total })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.prefix.cmp(&b.prefix)));
    rows
}
