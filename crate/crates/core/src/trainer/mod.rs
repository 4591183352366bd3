//! The two training stages: maximum likelihood on references, then
//! self-critical policy gradient against a matcher's score, plus an exact
//! enumeration oracle for the policy gradient.

mod ce;
mod oracle;
mod scst;

pub use ce::{evaluate_cider, train_ce, CeOutcome};
pub use oracle::{enumerate_captions, expected_reward, policy_gradient_oracle, policy_gradient_oracle_with};
pub use scst::{mean_greedy_score, scst_item_grad, scst_step, train_scst, ScstOutcome, ScstSession};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::captioner::{CaptionerParams, Vocabulary};
use crate::checkpoint::{read_header, read_tensors, write_checkpoint, CheckpointHeader};
use crate::error::{Error, Result};
use crate::nn::{global_norm, ParamTensors};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub anneal_factor: f64,
    pub anneal_every: usize,
    pub ss_increment: f64,
    pub ss_every: usize,
    pub ss_cap: f64,
    pub ce_epochs: usize,
    pub scst_epochs: usize,
    /// Dev evaluation period in optimizer steps; 0 evaluates at every epoch end.
    pub eval_interval: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            anneal_factor: 0.8,
            anneal_every: 3,
            ss_increment: 0.05,
            ss_every: 5,
            ss_cap: 0.25,
            ce_epochs: 30,
            scst_epochs: 20,
            eval_interval: 0,
            batch_size: 32,
            temperature: 1.0,
            max_len: 16,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return bad("anneal_factor must lie in (0, 1)");
        }
        if self.anneal_every == 0 || self.ss_every == 0 || self.batch_size == 0 || self.max_len == 0 {
            return bad("anneal_every, ss_every, batch_size and max_len must be positive");
        }
        if !(self.ss_increment >= 0.0) || !(0.0..=1.0).contains(&self.ss_cap) {
            return bad("scheduled sampling increment must be non-negative and its cap in [0, 1]");
        }
        if !(self.temperature > 0.0) || !(self.grad_clip > 0.0) {
            return bad("temperature and grad_clip must be positive");
        }
        Ok(())
    }

    /// `lr * factor^floor(epoch / every)`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.anneal_factor.powi((epoch / self.anneal_every) as i32)
    }

    /// `min(cap, increment * floor(epoch / every))`.
    pub fn scheduled_sampling_at(&self, epoch: usize) -> f64 {
        (self.ss_increment * (epoch / self.ss_every) as f64).min(self.ss_cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "SCST")]
    Scst,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ce => "CE",
            Stage::Scst => "SCST",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CE" => Ok(Stage::Ce),
            "SCST" => Ok(Stage::Scst),
            _ => Err(Error::Config(format!("unknown stage `{s}`"))),
        }
    }
}

/// Captioner parameters with their stage and selection metric (dev CIDEr
/// for CE, dev mean score for SCST).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: CaptionerParams,
    pub stage: Stage,
    pub metric: Option<f64>,
}

impl Checkpoint {
    pub fn to_text(&self, vocab: &Vocabulary) -> Result<String> {
        let header = CheckpointHeader {
            kind: "captioner".into(),
            stage: self.stage.as_str().into(),
            vocab_size: self.params.vocab_size(),
            hidden: self.params.hidden(),
            feature_dim: self.params.feature_dim(),
            vocab_hash: vocab.hash(),
            specials: self.params.specials.clone(),
            metric: self.metric,
        };
        write_checkpoint(&header, &self.params)
    }

    /// Parses a captioner checkpoint and checks it against `vocab`.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let (h, _) = read_header(text)?;
        if h.kind != "captioner" {
            return Err(Error::Config(format!("expected a captioner checkpoint, found `{}`", h.kind)));
        }
        if h.vocab_hash != vocab.hash() || h.vocab_size != vocab.len() {
            return Err(Error::Config("checkpoint was trained with a different vocabulary".into()));
        }
        let mut params = CaptionerParams::zeros(h.vocab_size, h.hidden, h.feature_dim, h.specials);
        read_tensors(text, &mut params)?;
        Ok(Self { params, stage: h.stage.parse()?, metric: h.metric })
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_advantage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_metric: Option<f64>,
    pub learning_rate: f64,
}

/// Rescales `grad` so its global norm is at most `max_norm`.
pub(crate) fn clip_gradient<P: ParamTensors>(grad: &mut P, max_norm: f64) {
    let n = global_norm(grad);
    if n > max_norm {
        grad.scale(max_norm / n);
    }
}
