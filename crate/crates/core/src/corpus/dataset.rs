use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{realize_references, ReferenceGrammar};
use super::lexicon::ConceptLexicon;
use super::scene::{generate_scene, render_features, ImageFeature, Scene, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::{stage_seed, substream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Three disjoint id sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `ids` and cuts them by `ratios`; the test share absorbs rounding.
pub fn split_dataset<R: Rng + ?Sized>(ids: &[usize], ratios: (f64, f64, f64), rng: &mut R) -> Result<DatasetSplit> {
    let (tr, dv, te) = ratios;
    if !(tr > 0.0 && dv > 0.0 && te > 0.0) || ((tr + dv + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::Input(format!("cannot split {n} scenes three ways")));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let n_train = ((tr * n as f64).round() as usize).clamp(1, n - 2);
    let n_dev = ((dv * n as f64).round() as usize).clamp(1, n - n_train - 1);
    let mut rest = shuffled.split_off(n_train);
    let test = rest.split_off(n_dev);
    Ok(DatasetSplit { train: shuffled, dev: rest, test })
}

/// A scene with its rendered feature and references: one dataset-file line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub split: Split,
    #[serde(flatten)]
    pub scene: Scene,
    pub feature: Vec<f64>,
    pub references: Vec<Vec<String>>,
}

impl SceneRecord {
    pub fn image(&self) -> ImageFeature {
        ImageFeature::new(self.scene.id, self.feature.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<SceneRecord>,
}

impl Dataset {
    /// Generates the world: scenes, noisy features, references and the split.
    ///
    /// Scene `i` draws from its own sub-stream, so datasets of different
    /// sizes share their common prefix.
    pub fn generate(config: &WorldConfig, grammar: &ReferenceGrammar, lexicon: &ConceptLexicon, seed: u64) -> Result<Self> {
        config.validate()?;
        let scene_seed = stage_seed(seed, "scene");
        let mut records = Vec::with_capacity(config.num_scenes);
        for id in 0..config.num_scenes {
            let mut rng = substream(scene_seed, id as u64);
            let scene = generate_scene(id, &mut rng, config, lexicon)?;
            let feature = render_features(&scene, &mut rng, config.noise_sigma, lexicon)?;
            let references = realize_references(&scene, grammar, &mut rng, config.references_per_scene)?;
            records.push(SceneRecord { split: Split::Train, scene, feature: feature.vector, references });
        }
        let ids: Vec<usize> = (0..records.len()).collect();
        let split = split_dataset(&ids, config.split, &mut substream(stage_seed(seed, "split"), 0))?;
        for id in split.dev {
            records[id].split = Split::Dev;
        }
        for id in split.test {
            records[id].split = Split::Test;
        }
        Ok(Self { records })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SceneRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn by_id(&self) -> BTreeMap<usize, &SceneRecord> {
        self.records.iter().map(|r| (r.scene.id, r)).collect()
    }

    /// All reference captions of the given split.
    pub fn references(&self, split: Split) -> Vec<&[String]> {
        self.split(split).flat_map(|r| r.references.iter().map(Vec::as_slice)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Input(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::parse("dataset", i + 1, e.to_string()))?;
            rec.scene.validate()?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::collections::HashSet;

    #[test]
    fn ten_way_split() {
        let ids: Vec<usize> = (0..10).collect();
        let s = split_dataset(&ids, (0.8, 0.1, 0.1), &mut rng_from_seed(1)).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
        let again = split_dataset(&ids, (0.8, 0.1, 0.1), &mut rng_from_seed(1)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn uneven_split_is_a_partition() {
        let ids: Vec<usize> = (0..113).collect();
        let s = split_dataset(&ids, (0.7, 0.15, 0.15), &mut rng_from_seed(3)).unwrap();
        let (a, b, c): (HashSet<_>, HashSet<_>, HashSet<_>) =
            (s.train.iter().collect(), s.dev.iter().collect(), s.test.iter().collect());
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(a.len() + b.len() + c.len(), 113);
        for (got, ratio) in [(a.len(), 0.7), (b.len(), 0.15), (c.len(), 0.15)] {
            assert!((got as f64 - ratio * 113.0).abs() <= 1.0);
        }
    }

    #[test]
    fn split_errors() {
        let ids = [0, 1];
        assert!(split_dataset(&ids, (0.8, 0.1, 0.1), &mut rng_from_seed(0)).is_err());
        let ids: Vec<usize> = (0..10).collect();
        assert!(matches!(split_dataset(&ids, (0.5, 0.1, 0.1), &mut rng_from_seed(0)), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_file_round_trip() {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig { num_scenes: 20, ..Default::default() };
        let ds = Dataset::generate(&cfg, &ReferenceGrammar::default(), &lex, 5).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = Dataset::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(ds, back);
        let again = Dataset::generate(&cfg, &ReferenceGrammar::default(), &lex, 5).unwrap();
        assert_eq!(ds, again);
        assert_eq!(ds.split(Split::Train).count(), 16);
    }
}
