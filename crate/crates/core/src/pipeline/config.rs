use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{ReferenceGrammar, WorldConfig};
use crate::matcher::{MatcherConfig, MatcherKind};
use crate::probes::{Template, K_RANGE};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerConfig {
    pub hidden: usize,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        Self { hidden: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Order of the n-gram model used for perplexity.
    pub lm_order: usize,
    /// Merged tags per mined prefix.
    pub prefix_len: usize,
    pub top_k: usize,
    /// Tokens left out of the unigram tables.
    pub unigram_exclude: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { lm_order: 3, prefix_len: 4, top_k: 10, unigram_exclude: vec!["a".into(), "the".into()] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub replacement: bool,
    pub template: bool,
    pub noun_scaling: bool,
    /// Standard template ids, or `id=notation` for custom ones.
    pub templates: Vec<String>,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            replacement: true,
            template: true,
            noun_scaling: true,
            templates: Template::standard().into_iter().map(|t| t.id).collect(),
            k_min: *K_RANGE.start(),
            k_max: *K_RANGE.end(),
        }
    }
}

impl ProbeConfig {
    pub fn none() -> Self {
        Self { replacement: false, template: false, noun_scaling: false, ..Self::default() }
    }

    pub fn any(&self) -> bool {
        self.replacement || self.template || self.noun_scaling
    }

    pub fn parsed_templates(&self) -> Result<Vec<Template>> {
        self.templates.iter().map(|t| t.parse()).collect()
    }
}

/// Everything a run depends on. Serialized to `config.toml` in the run
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Minimum training-reference count for a word to enter the vocabulary.
    pub vocab_threshold: usize,
    /// Matcher family that rewards the captioner during SCST.
    pub reward: MatcherKind,
    pub world: WorldConfig,
    pub grammar: ReferenceGrammar,
    pub captioner: CaptionerConfig,
    pub matcher: MatcherConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub probes: ProbeConfig,
}

impl Default for ExperimentConfig {
    /// Desk-scale settings: a 2,000-scene world and a small captioner that
    /// trains in a few minutes on one core.
    fn default() -> Self {
        let train = TrainConfig {
            learning_rate: 5e-3,
            batch_size: 16,
            ce_epochs: 15,
            scst_epochs: 15,
            ..TrainConfig::default()
        };
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            vocab_threshold: 1,
            reward: MatcherKind::Bag,
            world: WorldConfig::default(),
            grammar: ReferenceGrammar::default(),
            captioner: CaptionerConfig::default(),
            matcher: MatcherConfig::default(),
            train,
            analysis: AnalysisConfig::default(),
            probes: ProbeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// A 200-scene world with a small captioner, for quick end-to-end runs.
    pub fn smoke() -> Self {
        let mut c = Self::default();
        c.output_dir = PathBuf::from("runs/smoke");
        c.world.num_scenes = 200;
        c.captioner.hidden = 32;
        c.matcher.embed_dim = 16;
        c.matcher.epochs = 10;
        c.matcher.min_accuracy = 0.5;
        c.train.ce_epochs = 12;
        c.train.scst_epochs = 2;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.matcher.validate()?;
        self.train.validate()?;
        if self.captioner.hidden == 0 {
            return Err(Error::Config("captioner.hidden must be positive".into()));
        }
        if self.vocab_threshold == 0 {
            return Err(Error::Config("vocab_threshold must be at least 1".into()));
        }
        if self.analysis.lm_order == 0 || self.analysis.prefix_len == 0 {
            return Err(Error::Config("analysis.lm_order and analysis.prefix_len must be positive".into()));
        }
        if self.probes.k_min == 0 || self.probes.k_min > self.probes.k_max {
            return Err(Error::Config("probes need 1 <= k_min <= k_max".into()));
        }
        if (self.probes.template || self.probes.noun_scaling) && self.probes.templates.is_empty() {
            return Err(Error::Config("template probes need at least one template".into()));
        }
        self.probes.parsed_templates()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }
}
