use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::captioner::Vocabulary;
use crate::corpus::{ConceptLexicon, Pos};

/// Candidate replacement words: visual nouns, and non-visual words by POS.
#[derive(Clone, Debug)]
pub struct WordPools {
    visual: Vec<String>,
    other: BTreeMap<Pos, Vec<String>>,
    lexicon: ConceptLexicon,
}

impl WordPools {
    pub fn new(lexicon: &ConceptLexicon) -> Self {
        Self::build(lexicon, |_| true)
    }

    /// Pools limited to words the vocabulary knows, so replacements never
    /// turn into UNK.
    pub fn within(lexicon: &ConceptLexicon, vocab: &Vocabulary) -> Self {
        Self::build(lexicon, |w| vocab.contains(w))
    }

    fn build(lexicon: &ConceptLexicon, keep: impl Fn(&str) -> bool) -> Self {
        let mut visual = Vec::new();
        let mut other: BTreeMap<Pos, Vec<String>> = BTreeMap::new();
        for e in lexicon.entries() {
            if !keep(&e.token) {
                continue;
            }
            if e.visual {
                visual.push(e.token.clone());
            } else {
                other.entry(e.pos).or_default().push(e.token.clone());
            }
        }
        Self { visual, other, lexicon: lexicon.clone() }
    }

    pub fn is_visual(&self, token: &str) -> bool {
        self.lexicon.is_visual(token)
    }
}

/// A replaced caption; `changed` is false when no position qualified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replaced {
    pub caption: Vec<String>,
    pub changed: bool,
}

fn draw_other<R: Rng + ?Sized>(pool: &[String], original: &str, rng: &mut R) -> Option<String> {
    let options: Vec<&String> = pool.iter().filter(|w| *w != original).collect();
    options.choose(rng).map(|w| (*w).clone())
}

/// Replaces every visual noun with a uniformly drawn different visual noun.
pub fn replace_visual_words<S: AsRef<str>, R: Rng + ?Sized>(caption: &[S], pools: &WordPools, rng: &mut R) -> Replaced {
    let mut changed = false;
    let caption = caption
        .iter()
        .map(|w| {
            let w = w.as_ref();
            if pools.is_visual(w) {
                if let Some(r) = draw_other(&pools.visual, w, rng) {
                    changed = true;
                    return r;
                }
            }
            w.to_string()
        })
        .collect();
    Replaced { caption, changed }
}

/// Replaces every non-visual word with a different non-visual word of the
/// same POS; visual nouns stay in place. Out-of-lexicon tokens are kept.
pub fn replace_nonvisual_words<S: AsRef<str>, R: Rng + ?Sized>(caption: &[S], pools: &WordPools, rng: &mut R) -> Replaced {
    let mut changed = false;
    let caption = caption
        .iter()
        .map(|w| {
            let w = w.as_ref();
            if !pools.is_visual(w) {
                let pool = pools.lexicon.pos_of(w).and_then(|p| pools.other.get(&p));
                if let Some(r) = pool.and_then(|p| draw_other(p, w, rng)) {
                    changed = true;
                    return r;
                }
            }
            w.to_string()
        })
        .collect();
    Replaced { caption, changed }
}
