//! Cross-modal alignment scorers: the reward `r` of an (image, caption)
//! pair.
//!
//! [`BagMatcher`] sees only the mean of the caption's word embeddings and
//! is blind to word order by construction; [`SeqMatcher`] reads the
//! caption with a recurrent encoder.

mod bag;
mod seq;
mod train;

pub use bag::BagMatcher;
pub use seq::SeqMatcher;
pub use train::{dev_accuracy, train_matcher, MatcherConfig, MatcherTrainLog};

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::captioner::{Caption, Vocabulary};
use crate::checkpoint::{read_header, read_tensors, write_checkpoint, CheckpointHeader};
use crate::corpus::ImageFeature;
use crate::error::{Error, Result};
use crate::nn::ParamTensors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherKind {
    Bag,
    Sequence,
}

impl MatcherKind {
    pub const ALL: [MatcherKind; 2] = [MatcherKind::Bag, MatcherKind::Sequence];

    pub fn as_str(self) -> &'static str {
        match self {
            MatcherKind::Bag => "bag",
            MatcherKind::Sequence => "sequence",
        }
    }

    pub fn score_kind(self) -> ScoreKind {
        match self {
            MatcherKind::Bag => ScoreKind::Probability,
            MatcherKind::Sequence => ScoreKind::Similarity,
        }
    }
}

impl fmt::Display for MatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" => Ok(MatcherKind::Bag),
            "sequence" => Ok(MatcherKind::Sequence),
            _ => Err(Error::Config(format!("unknown matcher kind `{s}`"))),
        }
    }
}

/// Scale of a [`MatchScore`]: probabilities live in `[0, 1]`, cosine
/// similarities in `[-1, 1]`. Scores of different kinds are never compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Probability,
    Similarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub value: f64,
    pub kind: ScoreKind,
    /// The caption had no tokens between BOS and EOS.
    pub empty: bool,
}

/// A read-only alignment scorer.
pub trait Matcher: Send + Sync {
    fn kind(&self) -> MatcherKind;
    fn score(&self, image: &ImageFeature, caption: &Caption) -> MatchScore;
}

/// A trained matcher of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum MatcherParams {
    Bag(BagMatcher),
    Sequence(SeqMatcher),
}

impl MatcherParams {
    pub fn vocab_size(&self) -> usize {
        match self {
            MatcherParams::Bag(m) => m.vocab_size(),
            MatcherParams::Sequence(m) => m.vocab_size(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            MatcherParams::Bag(m) => m.embed_dim(),
            MatcherParams::Sequence(m) => m.embed_dim(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            MatcherParams::Bag(m) => m.feature_dim(),
            MatcherParams::Sequence(m) => m.feature_dim(),
        }
    }

    pub fn eos(&self) -> usize {
        match self {
            MatcherParams::Bag(m) => m.eos,
            MatcherParams::Sequence(m) => m.eos,
        }
    }

    /// Checkpoint text; `metric` is the dev accuracy, when known.
    pub fn to_text(&self, vocab: &Vocabulary, metric: Option<f64>) -> Result<String> {
        let header = CheckpointHeader {
            kind: self.kind().as_str().into(),
            stage: "MATCHER".into(),
            vocab_size: self.vocab_size(),
            hidden: self.embed_dim(),
            feature_dim: self.feature_dim(),
            vocab_hash: vocab.hash(),
            specials: vocab.specials(),
            metric,
        };
        write_checkpoint(&header, self)
    }

    /// Parses a matcher checkpoint and checks it against `vocab`.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<(Self, Option<f64>)> {
        let (h, _) = read_header(text)?;
        let kind: MatcherKind = h.kind.parse()?;
        if h.vocab_hash != vocab.hash() || h.vocab_size != vocab.len() {
            return Err(Error::Config("matcher was trained with a different vocabulary".into()));
        }
        let mut params = MatcherParams::zeros(kind, h.vocab_size, h.hidden, h.feature_dim, h.specials.eos);
        read_tensors(text, &mut params)?;
        Ok((params, h.metric))
    }

    /// Zero tensors of the given shape, for reading checkpoints into.
    pub fn zeros(kind: MatcherKind, vocab_size: usize, embed_dim: usize, feature_dim: usize, eos: usize) -> Self {
        match kind {
            MatcherKind::Bag => MatcherParams::Bag(BagMatcher::zeros(vocab_size, embed_dim, feature_dim, eos)),
            MatcherKind::Sequence => MatcherParams::Sequence(SeqMatcher::zeros(vocab_size, embed_dim, feature_dim, eos)),
        }
    }
}

impl Matcher for MatcherParams {
    fn kind(&self) -> MatcherKind {
        match self {
            MatcherParams::Bag(_) => MatcherKind::Bag,
            MatcherParams::Sequence(_) => MatcherKind::Sequence,
        }
    }

    fn score(&self, image: &ImageFeature, caption: &Caption) -> MatchScore {
        match self {
            MatcherParams::Bag(m) => m.score(image, caption),
            MatcherParams::Sequence(m) => m.score(image, caption),
        }
    }
}

impl ParamTensors for MatcherParams {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        match self {
            MatcherParams::Bag(m) => m.tensors(),
            MatcherParams::Sequence(m) => m.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        match self {
            MatcherParams::Bag(m) => m.tensors_mut(),
            MatcherParams::Sequence(m) => m.tensors_mut(),
        }
    }
}

/// Scores every pair, in order, in parallel.
pub fn score_all<M: Matcher + ?Sized>(matcher: &M, pairs: &[(&ImageFeature, &Caption)]) -> Vec<MatchScore> {
    use rayon::prelude::*;
    pairs.par_iter().map(|(img, cap)| matcher.score(img, cap)).collect()
}
