//! Corpus caption metrics and the trigram language model used for
//! perplexity.

mod bleu;
mod cider;
mod ngram;

pub use bleu::bleu;
pub use cider::cider;
pub use ngram::{perplexity, train_ngram_lm, NgramLm};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// BLEU-1, BLEU-4 and CIDEr of one caption corpus, all on their natural
/// scale (BLEU in `[0, 1]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu4: f64,
    pub cider: f64,
}

impl MetricReport {
    pub fn evaluate(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<Self> {
        Ok(Self {
            bleu1: bleu(candidates, references, 1)?,
            bleu4: bleu(candidates, references, 4)?,
            cider: cider(candidates, references)?,
        })
    }
}

pub(crate) fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> impl Iterator<Item = Vec<&str>> {
    tokens.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect())
}
