use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lexicon::{ConceptLexicon, Pos};
use crate::error::{Error, Result};

/// Parameters of the synthetic visual world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub num_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Probability that an object carries an attribute.
    pub attribute_prob: f64,
    /// Probability that an unordered object pair is linked by a relation.
    pub relation_prob: f64,
    pub noise_sigma: f64,
    pub references_per_scene: usize,
    pub split: (f64, f64, f64),
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_scenes: 2000,
            min_objects: 2,
            max_objects: 5,
            attribute_prob: 0.5,
            relation_prob: 0.35,
            noise_sigma: 0.1,
            references_per_scene: 3,
            split: (0.8, 0.1, 0.1),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.min_objects) || !(2..=5).contains(&self.max_objects) {
            return Err(Error::Config("object bounds must lie within [2, 5]".into()));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::Config("min_objects exceeds max_objects".into()));
        }
        for (name, p) in [("attribute_prob", self.attribute_prob), ("relation_prob", self.relation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be a probability")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if self.references_per_scene < 3 {
            return Err(Error::Config("at least 3 references per scene are required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub noun: String,
    pub attribute: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub subject: usize,
    pub word: String,
    pub object: usize,
}

/// One instance of the synthetic world.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: usize,
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Relation>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.objects.len()) {
            return Err(Error::Input(format!("scene {} has {} objects", self.id, self.objects.len())));
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if r.subject >= self.objects.len() || r.object >= self.objects.len() || r.subject == r.object {
                return Err(Error::Input(format!("scene {} has an invalid relation index", self.id)));
            }
            if !seen.insert((r.subject, &r.word, r.object)) {
                return Err(Error::Input(format!("scene {} repeats a relation", self.id)));
            }
        }
        Ok(())
    }

    /// The relation word linking `subject` to `object`, if any.
    pub fn relation(&self, subject: usize, object: usize) -> Option<&str> {
        self.relations
            .iter()
            .find(|r| r.subject == subject && r.object == object)
            .map(|r| r.word.as_str())
    }

    pub fn nouns(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.noun.as_str())
    }
}

/// Samples a scene: distinct visual nouns, optional attributes, and at most
/// one relation per unordered object pair.
pub fn generate_scene<R: Rng + ?Sized>(id: usize, rng: &mut R, config: &WorldConfig, lexicon: &ConceptLexicon) -> Result<Scene> {
    config.validate()?;
    let nouns: Vec<&str> = lexicon.visual_nouns().collect();
    let attributes: Vec<&str> = lexicon.with_pos(Pos::Adj).filter(|a| lexicon.vector(a).is_some()).collect();
    let relations = lexicon.relation_words();
    for (name, empty) in [("visual noun", nouns.is_empty()), ("attribute", attributes.is_empty()), ("relation", relations.is_empty())] {
        if empty {
            return Err(Error::Config(format!("lexicon has no {name} entries")));
        }
    }
    let count = rng.random_range(config.min_objects..=config.max_objects);
    if count > nouns.len() {
        return Err(Error::Config("not enough visual nouns for the object count".into()));
    }
    let objects: Vec<SceneObject> = rand::seq::index::sample(rng, nouns.len(), count)
        .into_iter()
        .map(|i| nouns[i])
        .collect::<Vec<_>>()
        .into_iter()
        .map(|noun| {
            let attribute = rng
                .random_bool(config.attribute_prob)
                .then(|| attributes.choose(rng).expect("non-empty").to_string());
            SceneObject { noun: noun.to_string(), attribute }
        })
        .collect();
    let mut rels = Vec::new();
    for i in 0..count {
        for j in i + 1..count {
            if rng.random_bool(config.relation_prob) {
                let word = relations.choose(rng).expect("non-empty").to_string();
                let (subject, object) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                rels.push(Relation { subject, word, object });
            }
        }
    }
    let scene = Scene { id, objects, relations: rels };
    scene.validate()?;
    Ok(scene)
}

/// Weight of an attribute vector relative to its object's concept vector.
pub const ATTRIBUTE_WEIGHT: f64 = 0.5;

/// The feature-vector rendering of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFeature {
    pub scene_id: usize,
    pub vector: Vec<f64>,
}

impl ImageFeature {
    pub fn new(scene_id: usize, vector: Vec<f64>) -> Self {
        Self { scene_id, vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn view(&self) -> ndarray::ArrayView1<'_, f64> {
        ndarray::ArrayView1::from(self.vector.as_slice())
    }
}

/// `mean_i(c_i + 0.5 a_i) + N(0, sigma^2 I)` over the scene's objects.
pub fn render_features<R: Rng + ?Sized>(scene: &Scene, rng: &mut R, noise_sigma: f64, lexicon: &ConceptLexicon) -> Result<ImageFeature> {
    let dim = lexicon.dim();
    let mut acc = vec![0.0; dim];
    let mut add = |token: &str, weight: f64| -> Result<()> {
        let v = lexicon
            .vector(token)
            .ok_or_else(|| Error::Config(format!("`{token}` has no concept vector")))?;
        if v.len() != dim {
            return Err(Error::Config(format!("concept vector of `{token}` has the wrong dimension")));
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += weight * x;
        }
        Ok(())
    };
    for obj in &scene.objects {
        add(&obj.noun, 1.0)?;
        if let Some(attr) = &obj.attribute {
            add(attr, ATTRIBUTE_WEIGHT)?;
        }
    }
    let n = scene.objects.len() as f64;
    let mut vector: Vec<f64> = acc.into_iter().map(|x| x / n).collect();
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for x in &mut vector {
            *x += normal.sample(rng);
        }
    }
    Ok(ImageFeature::new(scene.id, vector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn scene_of(nouns: &[&str]) -> Scene {
        Scene {
            id: 0,
            objects: nouns.iter().map(|n| SceneObject { noun: n.to_string(), attribute: None }).collect(),
            relations: vec![],
        }
    }

    #[test]
    fn two_object_bound() {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig { min_objects: 2, max_objects: 2, ..Default::default() };
        let s = generate_scene(0, &mut rng_from_seed(1), &cfg, &lex).unwrap();
        assert_eq!(s.objects.len(), 2);
        s.validate().unwrap();
    }

    #[test]
    fn deterministic_given_seed() {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig::default();
        let a = generate_scene(3, &mut rng_from_seed(9), &cfg, &lex).unwrap();
        let b = generate_scene(3, &mut rng_from_seed(9), &cfg, &lex).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn object_count_histogram_covers_range() {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig::default();
        let mut rng = rng_from_seed(11);
        let mut hist = [0usize; 6];
        for i in 0..10_000 {
            let s = generate_scene(i, &mut rng, &cfg, &lex).unwrap();
            hist[s.objects.len()] += 1;
        }
        assert!(hist[2..=5].iter().all(|&c| c > 0), "{hist:?}");
        assert_eq!(hist[0] + hist[1], 0);
    }

    #[test]
    fn bad_bounds_are_rejected() {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig { min_objects: 1, ..Default::default() };
        assert!(matches!(generate_scene(0, &mut rng_from_seed(1), &cfg, &lex), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_single_concept_equals_vector() {
        let lex = ConceptLexicon::builtin();
        let f = render_features(&scene_of(&["dog", "dog"]), &mut rng_from_seed(0), 0.0, &lex).unwrap();
        assert_eq!(f.vector.as_slice(), lex.vector("dog").unwrap());
    }

    #[test]
    fn noiseless_rendering_is_the_affine_combination() {
        let lex = ConceptLexicon::builtin();
        let mut scene = scene_of(&["man", "horse"]);
        let f = render_features(&scene, &mut rng_from_seed(0), 0.0, &lex).unwrap();
        let (a, b) = (lex.vector("man").unwrap(), lex.vector("horse").unwrap());
        for k in 0..lex.dim() {
            assert!((f.vector[k] - 0.5 * (a[k] + b[k])).abs() < 1e-12);
        }
        scene.objects[1].attribute = Some("red".into());
        let f = render_features(&scene, &mut rng_from_seed(0), 0.0, &lex).unwrap();
        let r = lex.vector("red").unwrap();
        for k in 0..lex.dim() {
            assert!((f.vector[k] - 0.5 * (a[k] + b[k] + 0.5 * r[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_std_matches_sigma() {
        let lex = ConceptLexicon::builtin();
        let scene = scene_of(&["cat", "table", "field"]);
        let clean = render_features(&scene, &mut rng_from_seed(0), 0.0, &lex).unwrap();
        let mut rng = rng_from_seed(5);
        let renders: Vec<ImageFeature> = (0..1000).map(|_| render_features(&scene, &mut rng, 0.1, &lex).unwrap()).collect();
        for k in 0..lex.dim() {
            let var = renders.iter().map(|r| (r.vector[k] - clean.vector[k]).powi(2)).sum::<f64>() / 1000.0;
            assert!((var.sqrt() - 0.1).abs() < 0.01, "coordinate {k}: std {}", var.sqrt());
        }
    }

    #[test]
    fn missing_vector_is_a_config_error() {
        let lex = ConceptLexicon::builtin();
        let err = render_features(&scene_of(&["man", "image"]), &mut rng_from_seed(0), 0.0, &lex).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
