use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BagMatcher, Matcher, MatcherKind, MatcherParams, SeqMatcher};
use crate::captioner::{Caption, Vocabulary};
use crate::corpus::{ImageFeature, SceneRecord};
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamTensors};
use crate::rng::{rng_from_seed, stage_seed, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 penalty `weight_decay / 2 * |theta|^2` added to the mean loss.
    pub weight_decay: f64,
    /// Extra L2 penalty on the word embeddings alone.
    pub embed_decay: f64,
    /// Below this dev accuracy training is reported as diverged.
    pub min_accuracy: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.02,
            weight_decay: 1e-4,
            embed_decay: 3e-3,
            min_accuracy: 0.6,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("matcher embed_dim and batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) || !(self.embed_decay >= 0.0) {
            return Err(Error::Config("matcher learning_rate and decays must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherTrainLog {
    /// Mean pair loss (without the penalty) per epoch.
    pub epoch_losses: Vec<f64>,
    pub dev_accuracy: f64,
}

struct Pair {
    image: ImageFeature,
    tokens: Vec<usize>,
    label: bool,
}

fn content(vocab: &Vocabulary, words: &[String]) -> Vec<usize> {
    vocab.encode(words).content(Vocabulary::EOS).to_vec()
}

/// One positive (own reference) and one negative (a reference of another
/// scene drawn uniformly) per scene.
fn pairs<R: Rng + ?Sized>(scenes: &[&SceneRecord], vocab: &Vocabulary, rng: &mut R, first_reference: bool) -> Vec<Pair> {
    let mut out = Vec::with_capacity(2 * scenes.len());
    for (i, rec) in scenes.iter().enumerate() {
        let pick = |r: &SceneRecord, rng: &mut R| {
            if first_reference {
                r.references[0].clone()
            } else {
                r.references[rng.random_range(0..r.references.len())].clone()
            }
        };
        let pos = pick(rec, rng);
        let mut j = rng.random_range(0..scenes.len() - 1);
        if j >= i {
            j += 1;
        }
        let neg = pick(scenes[j], rng);
        let image = rec.image();
        out.push(Pair { image: image.clone(), tokens: content(vocab, &pos), label: true });
        out.push(Pair { image, tokens: content(vocab, &neg), label: false });
    }
    out
}

fn is_match(m: &MatcherParams, pair: &Pair) -> bool {
    let cap = Caption([vec![Vocabulary::BOS], pair.tokens.clone(), vec![Vocabulary::EOS]].concat());
    let v = m.score(&pair.image, &cap).value;
    match m.kind() {
        MatcherKind::Bag => v > 0.5,
        MatcherKind::Sequence => v > 0.0,
    }
}

/// Pair-classification accuracy on one positive and one fixed negative per
/// scene (bag: score above 1/2, sequence: positive cosine).
pub fn dev_accuracy(matcher: &MatcherParams, dev: &[&SceneRecord], vocab: &Vocabulary, seed: u64) -> Result<f64> {
    if dev.len() < 2 {
        return Err(Error::Input("dev accuracy needs at least two scenes".into()));
    }
    let ps = pairs(dev, vocab, &mut substream(stage_seed(seed, "matcher-dev"), 0), true);
    let correct = ps.iter().filter(|p| is_match(matcher, p) == p.label).count();
    Ok(correct as f64 / ps.len() as f64)
}

fn accumulate(m: &MatcherParams, p: &Pair, w: f64, grad: &mut MatcherParams) -> f64 {
    match (m, grad) {
        (MatcherParams::Bag(m), MatcherParams::Bag(g)) => m.accumulate_bce(&p.image, &p.tokens, p.label, w, g),
        (MatcherParams::Sequence(m), MatcherParams::Sequence(g)) => m.accumulate_bce(&p.image, &p.tokens, p.label, w, g),
        _ => unreachable!("gradient has the parameters' kind"),
    }
}

/// Trains a matcher of `kind` on matched/mismatched pairs of `train` with
/// Adam and an L2 penalty, then measures dev accuracy.
pub fn train_matcher(
    kind: MatcherKind,
    train: &[&SceneRecord],
    dev: &[&SceneRecord],
    vocab: &Vocabulary,
    config: &MatcherConfig,
    seed: u64,
) -> Result<(MatcherParams, MatcherTrainLog)> {
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::Input("matcher training needs at least two scenes".into()));
    }
    let d = train[0].feature.len();
    let mut init = rng_from_seed(stage_seed(seed, "matcher-init"));
    let mut params = match kind {
        MatcherKind::Bag => MatcherParams::Bag(BagMatcher::random(vocab.len(), config.embed_dim, d, Vocabulary::EOS, &mut init)),
        MatcherKind::Sequence => MatcherParams::Sequence(SeqMatcher::random(vocab.len(), config.embed_dim, d, Vocabulary::EOS, &mut init)),
    };
    let mut adam = Adam::new(&params);
    let pair_seed = stage_seed(seed, "matcher-pairs");
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = substream(pair_seed, epoch as u64);
        let mut order: Vec<&SceneRecord> = train.to_vec();
        order.shuffle(&mut rng);
        let all = pairs(&order, vocab, &mut rng, false);
        let mut total = 0.0;
        for batch in all.chunks(2 * config.batch_size) {
            let mut grad = params.zeros_like();
            let w = 1.0 / batch.len() as f64;
            for p in batch {
                total += accumulate(&params, p, w, &mut grad) * batch.len() as f64;
            }
            grad.add_scaled(&params, config.weight_decay);
            match (&mut grad, &params) {
                (MatcherParams::Bag(g), MatcherParams::Bag(p)) => g.embed.scaled_add(config.embed_decay, &p.embed),
                (MatcherParams::Sequence(g), MatcherParams::Sequence(p)) => g.embed.scaled_add(config.embed_decay, &p.embed),
                _ => unreachable!("gradient has the parameters' kind"),
            }
            adam.step(&mut params, &grad, config.learning_rate);
        }
        let mean = total / all.len() as f64;
        if !mean.is_finite() || !params.all_finite() {
            return Err(Error::Numeric { step: epoch, what: "matcher loss".into() });
        }
        epoch_losses.push(mean);
    }
    let eval = if dev.len() >= 2 { dev } else { train };
    let accuracy = dev_accuracy(&params, eval, vocab, seed)?;
    if accuracy < config.min_accuracy {
        return Err(Error::Divergence { accuracy, required: config.min_accuracy, loss_trace: epoch_losses });
    }
    Ok((params, MatcherTrainLog { epoch_losses, dev_accuracy: accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::build_vocabulary;
    use crate::corpus::{ConceptLexicon, Dataset, ReferenceGrammar, Split, WorldConfig};
    use std::collections::BTreeSet;

    fn world(n: usize, seed: u64) -> (Dataset, Vocabulary) {
        let lex = ConceptLexicon::builtin();
        let w = WorldConfig { num_scenes: n, ..WorldConfig::default() };
        let data = Dataset::generate(&w, &ReferenceGrammar::default(), &lex, seed).unwrap();
        let vocab = build_vocabulary(data.references(Split::Train), 1).unwrap();
        (data, vocab)
    }

    fn bag(m: &MatcherParams) -> &BagMatcher {
        match m {
            MatcherParams::Bag(b) => b,
            _ => panic!("expected a bag matcher"),
        }
    }

    #[test]
    fn separable_pair_is_learned_exactly() {
        let (data, _) = world(40, 2);
        let nouns = |r: &SceneRecord| r.scene.nouns().map(String::from).collect::<BTreeSet<_>>();
        let recs: Vec<&SceneRecord> = data.records.iter().collect();
        let (a, b) = recs
            .iter()
            .flat_map(|a| recs.iter().map(move |b| (*a, *b)))
            .find(|(a, b)| nouns(a).is_disjoint(&nouns(b)))
            .unwrap();
        let pair = [a, b];
        let vocab = build_vocabulary(pair.iter().flat_map(|r| r.references.iter()), 0).unwrap();
        let config = MatcherConfig { epochs: 200, ..MatcherConfig::default() };
        for kind in MatcherKind::ALL {
            let (_, log) = train_matcher(kind, &pair, &pair, &vocab, &config, 1).unwrap();
            assert_eq!(log.dev_accuracy, 1.0, "{kind:?}");
        }
    }

    #[test]
    fn positives_outscore_mismatches() {
        let (data, vocab) = world(600, 3);
        let (train, dev): (Vec<_>, Vec<_>) = (data.split(Split::Train).collect(), data.split(Split::Dev).collect());
        let (m, _) = train_matcher(MatcherKind::Bag, &train, &dev, &vocab, &MatcherConfig::default(), 3).unwrap();
        let ps = pairs(&dev, &vocab, &mut rng_from_seed(4), true);
        let mean = |label: bool| {
            let s: Vec<f64> = ps
                .iter()
                .filter(|p| p.label == label)
                .map(|p| m.score(&p.image, &Caption([vec![0], p.tokens.clone(), vec![1]].concat())).value)
                .collect();
            s.iter().sum::<f64>() / s.len() as f64
        };
        let gap = mean(true) - mean(false);
        assert!(gap >= 0.3, "gap {gap}");
    }

    #[test]
    fn training_is_deterministic_and_decay_shrinks_embeddings() {
        let (data, vocab) = world(200, 5);
        let (train, dev): (Vec<_>, Vec<_>) = (data.split(Split::Train).collect(), data.split(Split::Dev).collect());
        let plain = MatcherConfig { embed_decay: 0.0, min_accuracy: 0.0, ..MatcherConfig::default() };
        let decayed = MatcherConfig { embed_decay: 1e-2, min_accuracy: 0.0, ..MatcherConfig::default() };
        let (a, _) = train_matcher(MatcherKind::Bag, &train, &dev, &vocab, &plain, 9).unwrap();
        let (b, _) = train_matcher(MatcherKind::Bag, &train, &dev, &vocab, &plain, 9).unwrap();
        assert_eq!(a, b);
        let (c, _) = train_matcher(MatcherKind::Bag, &train, &dev, &vocab, &decayed, 9).unwrap();
        let norm = |m: &MatcherParams| bag(m).embed.iter().map(|v| v * v).sum::<f64>();
        assert!(norm(&c) < norm(&a));
    }

    #[test]
    fn rejects_negative_decay() {
        let bad = MatcherConfig { embed_decay: -1.0, ..MatcherConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
