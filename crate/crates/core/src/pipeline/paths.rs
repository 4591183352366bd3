use std::path::{Path, PathBuf};

use crate::matcher::MatcherKind;
use crate::trainer::Stage;
use crate::{Error, Result};

/// File layout of a run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.at("config.toml")
    }
    pub fn lexicon(&self) -> PathBuf {
        self.at("data/lexicon.tsv")
    }
    pub fn dataset(&self) -> PathBuf {
        self.at("data/dataset.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.at("data/vocab.txt")
    }
    pub fn matcher(&self, kind: MatcherKind) -> PathBuf {
        self.at(&format!("models/matcher-{kind}.ckpt"))
    }
    pub fn matcher_log(&self) -> PathBuf {
        self.at("logs/matchers.json")
    }
    pub fn captioner(&self, stage: Stage) -> PathBuf {
        self.at(&format!("models/captioner-{}.ckpt", stage.as_str().to_lowercase()))
    }
    pub fn train_log(&self, stage: Stage) -> PathBuf {
        self.at(&format!("logs/{}.jsonl", stage.as_str().to_lowercase()))
    }
    pub fn train_summary(&self, stage: Stage) -> PathBuf {
        self.at(&format!("logs/{}-summary.json", stage.as_str().to_lowercase()))
    }
    pub fn captions(&self) -> PathBuf {
        self.at("captions/captions.jsonl")
    }
    pub fn analysis(&self) -> PathBuf {
        self.at("analysis/analysis.json")
    }
    pub fn stats_csv(&self) -> PathBuf {
        self.at("analysis/stats.csv")
    }
    pub fn patterns_md(&self) -> PathBuf {
        self.at("analysis/patterns.md")
    }
    pub fn probe_dump(&self, probe: &str) -> PathBuf {
        self.at(&format!("probes/{probe}.jsonl"))
    }
    pub fn probe_csv(&self, probe: &str) -> PathBuf {
        self.at(&format!("probes/{probe}.csv"))
    }
    pub fn probes_dir(&self) -> PathBuf {
        self.at("probes")
    }
    pub fn report(&self) -> PathBuf {
        self.at("report/report.md")
    }
    pub fn report_csv(&self, name: &str) -> PathBuf {
        self.at(&format!("report/{name}.csv"))
    }
}

/// Writes through a temporary sibling so a crash never leaves a
/// half-written artifact under the final name.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn read_artifact(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })
}
