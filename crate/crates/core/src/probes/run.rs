use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::replace::{replace_nonvisual_words, replace_visual_words, WordPools};
use super::report::{ProbeItem, ProbeReport};
use super::template::{build_template_caption, Template};
use crate::captioner::{decode_greedy, CaptionerParams, Vocabulary};
use crate::corpus::{ConceptLexicon, ImageFeature, SceneRecord};
use crate::matcher::{Matcher, MatcherParams};
use crate::rng::{stage_seed, substream};
use crate::{Error, Result};

pub const K_RANGE: RangeInclusive<usize> = 3..=7;

/// A scene image with the caption a probe starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeInput {
    pub scene_id: usize,
    pub image: ImageFeature,
    pub caption: Vec<String>,
}

/// Greedy captions of a checkpoint for each scene.
pub fn ce_inputs(params: &CaptionerParams, vocab: &Vocabulary, scenes: &[&SceneRecord], max_len: usize) -> Result<Vec<ProbeInput>> {
    scenes
        .par_iter()
        .map(|r| {
            let image = r.image();
            let out = decode_greedy(params, &image, max_len)?;
            Ok(ProbeInput { scene_id: r.scene.id, image, caption: vocab.decode(&out.caption) })
        })
        .collect()
}

/// Distinct visual nouns of a caption in first-occurrence order.
pub fn visual_nouns<S: AsRef<str>>(caption: &[S], lexicon: &ConceptLexicon) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in caption {
        let w = w.as_ref();
        if lexicon.is_visual(w) && !out.iter().any(|o| o == w) {
            out.push(w.to_string());
        }
    }
    out
}

fn score(m: &MatcherParams, vocab: &Vocabulary, image: &ImageFeature, words: &[String]) -> f64 {
    m.score(image, &vocab.encode(words)).value
}

fn items_for(
    matchers: &[&MatcherParams],
    vocab: &Vocabulary,
    scene_id: usize,
    image: &ImageFeature,
    condition: &str,
    k: Option<usize>,
    words: &[String],
    unchanged: bool,
) -> Vec<ProbeItem> {
    matchers
        .iter()
        .map(|m| ProbeItem {
            scene_id,
            condition: condition.to_string(),
            k,
            caption: words.join(" "),
            score: score(m, vocab, image, words),
            matcher: m.kind(),
            unchanged,
        })
        .collect()
}

fn check_matchers(matchers: &[&MatcherParams], vocab: &Vocabulary) -> Result<()> {
    if matchers.is_empty() {
        return Err(Error::Config("probes need at least one matcher".into()));
    }
    if let Some(m) = matchers.iter().find(|m| m.vocab_size() != vocab.len()) {
        return Err(Error::Config(format!(
            "{} matcher has {} embeddings for a {}-word vocabulary",
            m.kind(),
            m.vocab_size(),
            vocab.len()
        )));
    }
    Ok(())
}

/// Scores each caption as is, with its visual nouns swapped for wrong
/// ones, and with every other word swapped.
pub fn run_replacement_probe(
    matchers: &[&MatcherParams],
    vocab: &Vocabulary,
    pools: &WordPools,
    inputs: &[ProbeInput],
    seed: u64,
) -> Result<ProbeReport> {
    check_matchers(matchers, vocab)?;
    let base = stage_seed(seed, "probe-replace");
    let items: Vec<ProbeItem> = inputs
        .par_iter()
        .flat_map_iter(|inp| {
            let mut rng = substream(base, inp.scene_id as u64);
            let visual = replace_visual_words(&inp.caption, pools, &mut rng);
            let other = replace_nonvisual_words(&inp.caption, pools, &mut rng);
            let id = inp.scene_id;
            let mut out = items_for(matchers, vocab, id, &inp.image, "original", None, &inp.caption, false);
            out.extend(items_for(matchers, vocab, id, &inp.image, "visual-replaced", None, &visual.caption, !visual.changed));
            out.extend(items_for(matchers, vocab, id, &inp.image, "other-replaced", None, &other.caption, !other.changed));
            out
        })
        .collect();
    let note = "Replacements are drawn within the vocabulary; non-visual words are replaced by words of the same POS.";
    Ok(ProbeReport::from_items("replacement", seed, note, items))
}

/// Scores each caption against its nouns re-injected into every template.
///
/// Only captions with enough distinct visual nouns for every template take
/// part, so all groups cover the same scenes.
pub fn run_template_probe(
    matchers: &[&MatcherParams],
    vocab: &Vocabulary,
    lexicon: &ConceptLexicon,
    inputs: &[ProbeInput],
    templates: &[Template],
) -> Result<ProbeReport> {
    check_matchers(matchers, vocab)?;
    if templates.is_empty() {
        return Err(Error::Config("template probe needs at least one template".into()));
    }
    let need = templates.iter().map(Template::min_nouns).max().unwrap_or(1).max(1);
    let eligible: Vec<(&ProbeInput, Vec<String>)> = inputs
        .iter()
        .map(|i| (i, visual_nouns(&i.caption, lexicon)))
        .filter(|(_, n)| n.len() >= need)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Input(format!("no caption carries {need} distinct visual nouns")));
    }
    let items: Vec<ProbeItem> = eligible
        .par_iter()
        .map(|(inp, nouns)| {
            let mut out = items_for(matchers, vocab, inp.scene_id, &inp.image, "ce", None, &inp.caption, false);
            for t in templates {
                let words = build_template_caption(t, nouns)?;
                out.extend(items_for(matchers, vocab, inp.scene_id, &inp.image, &t.id, None, &words, false));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let note = format!(
        "{} of {} captions carry at least {need} distinct visual nouns; `ce` is the unedited control.",
        eligible.len(),
        inputs.len()
    );
    Ok(ProbeReport::from_items("template", 0, &note, items))
}

/// A scene's noun pool: its reference nouns in seeded random order, padded
/// to `size` with the lexicon nouns most similar to them (taken rank by
/// rank across the scene nouns).
pub fn noun_pool(record: &SceneRecord, lexicon: &ConceptLexicon, size: usize, seed: u64) -> Vec<String> {
    use rand::seq::SliceRandom;
    let mut pool = visual_nouns(&record.references.concat(), lexicon);
    let mut rng = substream(stage_seed(seed, "probe-nouns"), record.scene.id as u64);
    pool.shuffle(&mut rng);
    let neighbours: Vec<Vec<&str>> = pool
        .iter()
        .map(|n| lexicon.nearest_nouns(n).into_iter().map(|(w, _)| w).collect())
        .collect();
    let mut rank = 0;
    while pool.len() < size && neighbours.iter().any(|n| rank < n.len()) {
        for n in &neighbours {
            if pool.len() >= size {
                break;
            }
            if let Some(&w) = n.get(rank) {
                if !pool.iter().any(|p| p == w) {
                    pool.push(w.to_string());
                }
            }
        }
        rank += 1;
    }
    pool
}

/// Scores template captions carrying the first `k` nouns of each scene's
/// pool, for every `k` in range and every template.
pub fn run_noun_scaling_probe(
    matchers: &[&MatcherParams],
    vocab: &Vocabulary,
    lexicon: &ConceptLexicon,
    scenes: &[&SceneRecord],
    templates: &[Template],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<ProbeReport> {
    check_matchers(matchers, vocab)?;
    if templates.is_empty() || k_range.is_empty() {
        return Err(Error::Config("noun scaling needs templates and a non-empty k range".into()));
    }
    let k_max = *k_range.end();
    let items: Vec<ProbeItem> = scenes
        .par_iter()
        .map(|r| {
            let pool = noun_pool(r, lexicon, k_max, seed);
            if pool.len() < k_max {
                return Err(Error::Input(format!("scene {} pools only {} nouns", r.scene.id, pool.len())));
            }
            let image = r.image();
            let mut out = Vec::new();
            for t in templates {
                for k in k_range.clone() {
                    let words = build_template_caption(t, &pool[..k])?;
                    out.extend(items_for(matchers, vocab, r.scene.id, &image, &t.id, Some(k), &words, false));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let note = "Each scene's reference nouns come first in the pool; nearest lexicon nouns pad it to the largest k.";
    Ok(ProbeReport::from_items("noun-scaling", seed, note, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::build_vocabulary;
    use crate::corpus::{Dataset, ReferenceGrammar, Split, WorldConfig};
    use crate::matcher::{BagMatcher, MatcherKind};
    use crate::rng::rng_from_seed;

    fn world() -> (Dataset, Vocabulary, ConceptLexicon) {
        let lex = ConceptLexicon::builtin();
        let cfg = WorldConfig { num_scenes: 40, ..WorldConfig::default() };
        let data = Dataset::generate(&cfg, &ReferenceGrammar::default(), &lex, 5).unwrap();
        let vocab = build_vocabulary(data.records.iter().flat_map(|r| r.references.iter()), 1).unwrap();
        (data, vocab, lex)
    }

    fn inputs(data: &Dataset) -> Vec<ProbeInput> {
        data.split(Split::Test)
            .chain(data.split(Split::Dev))
            .map(|r| ProbeInput { scene_id: r.scene.id, image: r.image(), caption: r.references[0].clone() })
            .collect()
    }

    #[test]
    fn constant_scorer_gives_half() {
        let (data, vocab, lex) = world();
        let zero = MatcherParams::zeros(MatcherKind::Bag, vocab.len(), 8, lex.dim(), Vocabulary::EOS);
        let r = run_replacement_probe(&[&zero], &vocab, &WordPools::within(&lex, &vocab), &inputs(&data), 1).unwrap();
        for c in ["original", "visual-replaced", "other-replaced"] {
            assert_eq!(r.mean(c, MatcherKind::Bag), Some(0.5));
        }
    }

    #[test]
    fn group_sizes_match_and_runs_repeat() {
        let (data, vocab, lex) = world();
        let m = MatcherParams::Bag(BagMatcher::random(vocab.len(), 8, lex.dim(), Vocabulary::EOS, &mut rng_from_seed(3)));
        let inp = inputs(&data);
        let a = run_template_probe(&[&m], &vocab, &lex, &inp, &Template::standard()).unwrap();
        let b = run_template_probe(&[&m], &vocab, &lex, &inp, &Template::standard()).unwrap();
        assert_eq!(a, b);
        let n = a.groups[0].count;
        assert!(a.groups.iter().all(|g| g.count == n));
        assert_eq!(a.groups.len(), 6);
    }

    #[test]
    fn pools_reach_seven_distinct() {
        let (data, _, lex) = world();
        for r in &data.records {
            let pool = noun_pool(r, &lex, 7, 9);
            assert_eq!(pool.len(), 7);
            let scene: Vec<&str> = r.scene.nouns().collect();
            assert!(pool[..scene.len()].iter().all(|n| scene.contains(&n.as_str())));
            let mut d = pool.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 7);
        }
    }
}
