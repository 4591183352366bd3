use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{clip_gradient, Checkpoint, LogRecord, Stage, TrainConfig};
use crate::captioner::{ce_loss_and_grad_with_inputs, decode_greedy, sample_index, CaptionerParams, Vocabulary};
use crate::corpus::{ImageFeature, SceneRecord};
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamTensors};
use crate::rng::{stage_seed, substream};
use crate::textmetrics::cider;

#[derive(Clone, Debug)]
pub struct CeOutcome {
    /// The checkpoint with the best dev CIDEr (the last one when the dev
    /// split is too small to evaluate).
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<LogRecord>,
    pub epoch_losses: Vec<f64>,
    /// Whether the epoch-mean loss was non-increasing on at least 80% of
    /// consecutive epoch pairs.
    pub sanity_gate: bool,
}

/// Corpus CIDEr of greedy captions of `scenes` against their references;
/// `None` for fewer than two scenes.
pub fn evaluate_cider(params: &CaptionerParams, scenes: &[&SceneRecord], vocab: &Vocabulary, max_len: usize) -> Result<Option<f64>> {
    if scenes.len() < 2 {
        return Ok(None);
    }
    let cands: Vec<Vec<String>> = scenes
        .par_iter()
        .map(|r| decode_greedy(params, &r.image(), max_len).map(|o| vocab.decode(&o.caption)))
        .collect::<Result<_>>()?;
    let refs: Vec<Vec<Vec<String>>> = scenes.iter().map(|r| r.references.clone()).collect();
    cider(&cands, &refs).map(Some)
}

/// Input sequence with each non-initial position replaced, with probability
/// `p`, by a draw from the model's distribution at that point.
fn scheduled_inputs(params: &CaptionerParams, image: &ImageFeature, gold: &[usize], p: f64, seed: u64, index: u64) -> Vec<usize> {
    if p == 0.0 {
        return gold.to_vec();
    }
    let mut rng = substream(seed, index);
    let mut h = params.image_step(image).h;
    let mut prev_lp = None;
    let mut out = Vec::with_capacity(gold.len());
    for (t, &g) in gold.iter().enumerate() {
        let tok = match &prev_lp {
            Some(lp) if t > 0 && rng.random::<f64>() < p => sample_index(lp, 1.0, &mut rng),
            _ => g,
        };
        let (step, lp) = params.token_step(h, tok);
        h = step.h;
        prev_lp = Some(lp);
        out.push(tok);
    }
    out
}

pub(crate) fn sanity_gate(losses: &[f64]) -> bool {
    let pairs = losses.len().saturating_sub(1);
    if pairs == 0 {
        return true;
    }
    let ok = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    ok as f64 >= 0.8 * pairs as f64
}

/// Cross-entropy training on every (train image, reference) pair with the
/// annealed learning rate, scheduled sampling, gradient clipping and dev
/// CIDEr checkpoint selection.
pub fn train_ce(
    init: CaptionerParams,
    train: &[&SceneRecord],
    dev: &[&SceneRecord],
    vocab: &Vocabulary,
    config: &TrainConfig,
    seed: u64,
) -> Result<CeOutcome> {
    config.validate()?;
    let items: Vec<(ImageFeature, Vec<usize>)> = train
        .iter()
        .flat_map(|r| {
            let image = r.image();
            r.references.iter().map(move |refr| (image.clone(), vocab.encode(refr).0))
        })
        .collect();
    if items.is_empty() {
        return Err(Error::Input("no training captions".into()));
    }
    let shuffle_seed = stage_seed(seed, "ce-shuffle");
    let ss_seed = stage_seed(seed, "ce-scheduled-sampling");
    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.ce_epochs);
    let mut best: Option<Checkpoint> = None;
    let mut step = 0usize;
    let mut item_counter = 0u64;

    let mut last_eval: Option<(usize, f64)> = None;
    let mut evaluate = |params: &CaptionerParams, step: usize, epoch: usize, lr: f64, log: &mut Vec<LogRecord>, best: &mut Option<Checkpoint>| -> Result<()> {
        if let Some(m) = evaluate_cider(params, dev, vocab, config.max_len)? {
            log.push(LogRecord { step, epoch, stage: Stage::Ce, loss: None, mean_advantage: None, dev_metric: Some(m), learning_rate: lr });
            last_eval = Some((step, m));
            if best.as_ref().and_then(|b| b.metric).is_none_or(|b| m > b) {
                *best = Some(Checkpoint { params: params.clone(), stage: Stage::Ce, metric: Some(m) });
            }
        }
        Ok(())
    };

    for epoch in 0..config.ce_epochs {
        let lr = config.learning_rate_at(epoch);
        let p = config.scheduled_sampling_at(epoch);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut substream(shuffle_seed, epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let base = item_counter;
            item_counter += batch.len() as u64;
            let inputs: Vec<Vec<usize>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let (img, ids) = &items[i];
                    scheduled_inputs(&params, img, &ids[..ids.len() - 1], p, ss_seed, base + k as u64)
                })
                .collect();
            let triples: Vec<(&ImageFeature, &[usize], &[usize])> = batch
                .iter()
                .zip(&inputs)
                .map(|(&i, inp)| (&items[i].0, inp.as_slice(), &items[i].1[1..]))
                .collect();
            let last_finite = || Some(Box::new(Checkpoint { params: params.clone(), stage: Stage::Ce, metric: None }));
            let (loss, mut grad) = match ce_loss_and_grad_with_inputs(&params, &triples) {
                Ok(r) => r,
                Err(e @ Error::Numeric { .. }) => {
                    return Err(Error::Aborted { step, reason: e.to_string(), last_finite: last_finite() })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Aborted { step, reason: format!("non-finite loss {loss}"), last_finite: last_finite() });
            }
            total += loss * batch.len() as f64;
            clip_gradient(&mut grad, config.grad_clip);
            adam.step(&mut params, &grad, lr);
            step += 1;
            if config.eval_interval > 0 && step % config.eval_interval == 0 {
                evaluate(&params, step, epoch, lr, &mut log, &mut best)?;
            }
        }
        let mean = total / items.len() as f64;
        epoch_losses.push(mean);
        log.push(LogRecord { step, epoch, stage: Stage::Ce, loss: Some(mean), mean_advantage: None, dev_metric: None, learning_rate: lr });
        if config.eval_interval == 0 {
            evaluate(&params, step, epoch, lr, &mut log, &mut best)?;
        }
    }
    drop(evaluate);
    let metric = last_eval.filter(|&(at, _)| at == step).map(|(_, m)| m);
    let last = Checkpoint { params, stage: Stage::Ce, metric };
    Ok(CeOutcome {
        best: best.unwrap_or_else(|| last.clone()),
        last,
        log,
        sanity_gate: sanity_gate(&epoch_losses),
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_counts_pairs() {
        assert!(sanity_gate(&[3.0, 2.0, 2.0, 1.0, 0.5, 0.6]));
        assert!(!sanity_gate(&[3.0, 2.0, 2.0, 1.0, 1.5]));
        assert!(!sanity_gate(&[3.0, 3.5, 2.0, 2.5, 1.0]));
        assert!(sanity_gate(&[1.0]));
    }

    #[test]
    fn memorizes_a_single_reference() {
        use crate::captioner::{build_vocabulary, decode_greedy};
        use crate::corpus::{ConceptLexicon, Dataset, ReferenceGrammar, Split, WorldConfig};
        use crate::rng::rng_from_seed;

        let lex = ConceptLexicon::builtin();
        let world = WorldConfig { num_scenes: 10, ..WorldConfig::default() };
        let data = Dataset::generate(&world, &ReferenceGrammar::default(), &lex, 4).unwrap();
        let mut rec = data.split(Split::Train).next().unwrap().clone();
        rec.references.truncate(1);
        let vocab = build_vocabulary(rec.references.iter(), 0).unwrap();
        let config = TrainConfig {
            learning_rate: 1e-2,
            anneal_every: 1000,
            ss_increment: 0.0,
            ce_epochs: 200,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let init = CaptionerParams::random(vocab.len(), 16, lex.dim(), vocab.specials(), &mut rng_from_seed(9));
        let out = train_ce(init, &[&rec], &[], &vocab, &config, 1).unwrap();
        let greedy = decode_greedy(&out.best.params, &rec.image(), 16).unwrap().caption;
        assert_eq!(vocab.decode(&greedy), rec.references[0]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        use crate::captioner::build_vocabulary;
        use crate::corpus::{ConceptLexicon, Dataset, ReferenceGrammar, Split, WorldConfig};
        use crate::rng::rng_from_seed;

        let lex = ConceptLexicon::builtin();
        let world = WorldConfig { num_scenes: 30, ..WorldConfig::default() };
        let data = Dataset::generate(&world, &ReferenceGrammar::default(), &lex, 6).unwrap();
        let vocab = build_vocabulary(data.references(Split::Train), 0).unwrap();
        let train: Vec<_> = data.split(Split::Train).collect();
        let config = TrainConfig { learning_rate: 0.0, ce_epochs: 2, ..TrainConfig::default() };
        let init = CaptionerParams::random(vocab.len(), 8, lex.dim(), vocab.specials(), &mut rng_from_seed(1));
        let out = train_ce(init.clone(), &train, &[], &vocab, &config, 1).unwrap();
        assert_eq!(out.last.params, init);
    }
}
