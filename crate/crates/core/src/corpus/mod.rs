//! The synthetic visual world: a closed concept lexicon, scenes, their
//! feature renderings, grammar-generated reference captions, and splits.

mod dataset;
mod grammar;
mod lexicon;
mod scene;

pub use dataset::{split_dataset, Dataset, DatasetSplit, SceneRecord, Split};
pub use grammar::{realize_references, ReferenceGrammar};
pub use lexicon::{ConceptLexicon, LexiconEntry, Pos, BUILTIN_DIM, BUILTIN_SEED, FUNCTION_WORDS, RELATION_WORDS};
pub use scene::{generate_scene, render_features, ImageFeature, Relation, Scene, SceneObject, WorldConfig, ATTRIBUTE_WEIGHT};

