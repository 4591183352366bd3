use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{clip_gradient, Checkpoint, LogRecord, Stage, TrainConfig};
use crate::captioner::{decode_greedy, decode_sample, Caption, CaptionerParams};
use crate::corpus::{ImageFeature, SceneRecord};
use crate::error::{Error, Result};
use crate::matcher::{Matcher, MatcherKind};
use crate::nn::{Adam, ParamTensors};
use crate::rng::{rng_from_seed, stage_seed, substream, Rng};

/// Adds `-advantage * grad log p(sample | image)` to `grad`.
pub fn scst_item_grad(params: &CaptionerParams, image: &ImageFeature, sample: &Caption, advantage: f64, grad: &mut CaptionerParams) -> Result<()> {
    let ids = sample.ids();
    if advantage == 0.0 || ids.len() < 2 {
        return Ok(());
    }
    let n = ids.len() - 1;
    params.accumulate_sequence_grad(image, &ids[..n], &ids[1..], &vec![advantage; n], grad)?;
    Ok(())
}

/// One self-critical step: per image a greedy and a sampled caption, the
/// advantage `r(sample) - r(greedy)`, and the batch-mean gradient of
/// `-A log p(sample)`. Returns the mean advantage and that gradient.
pub fn scst_step<M: Matcher + ?Sized>(
    params: &CaptionerParams,
    matcher: &M,
    batch: &[ImageFeature],
    rng: &mut Rng,
    temperature: f64,
    max_len: usize,
) -> Result<(f64, CaptionerParams)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
    let parts: Vec<Result<(f64, CaptionerParams)>> = batch
        .par_iter()
        .zip(&seeds)
        .map(|(image, &s)| {
            let greedy = decode_greedy(params, image, max_len)?;
            let sample = decode_sample(params, image, max_len, &mut rng_from_seed(s), temperature)?;
            let a = matcher.score(image, &sample.caption).value - matcher.score(image, &greedy.caption).value;
            let mut g = params.zeros_like();
            scst_item_grad(params, image, &sample.caption, a, &mut g)?;
            Ok((a, g))
        })
        .collect();
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for part in parts {
        let (a, g) = part?;
        total += a;
        grad.add_scaled(&g, 1.0);
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    Ok((total / n, grad))
}

/// Pins the reward's matcher family for the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScstSession {
    kind: MatcherKind,
}

impl ScstSession {
    pub fn new(kind: MatcherKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> MatcherKind {
        self.kind
    }

    pub fn step<M: Matcher + ?Sized>(
        &self,
        params: &CaptionerParams,
        matcher: &M,
        batch: &[ImageFeature],
        rng: &mut Rng,
        temperature: f64,
        max_len: usize,
    ) -> Result<(f64, CaptionerParams)> {
        if matcher.kind() != self.kind {
            return Err(Error::Config(format!(
                "run rewards with the {} matcher, got the {} matcher",
                self.kind,
                matcher.kind()
            )));
        }
        scst_step(params, matcher, batch, rng, temperature, max_len)
    }
}

#[derive(Clone, Debug)]
pub struct ScstOutcome {
    pub checkpoint: Checkpoint,
    /// Dev mean score of the initial (CE) parameters.
    pub initial_score: f64,
    /// Dev mean score after each epoch.
    pub epoch_scores: Vec<f64>,
    pub log: Vec<LogRecord>,
}

/// Mean matcher score of greedy captions of `scenes`.
pub fn mean_greedy_score<M: Matcher + ?Sized>(params: &CaptionerParams, matcher: &M, scenes: &[&SceneRecord], max_len: usize) -> Result<f64> {
    if scenes.is_empty() {
        return Err(Error::Input("no scenes to score".into()));
    }
    let scores: Vec<f64> = scenes
        .par_iter()
        .map(|r| {
            let image = r.image();
            decode_greedy(params, &image, max_len).map(|o| matcher.score(&image, &o.caption).value)
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Self-critical training from a CE checkpoint; the learning-rate schedule
/// restarts at epoch 0. Returns the final-epoch checkpoint.
pub fn train_scst<M: Matcher + ?Sized>(
    checkpoint: &Checkpoint,
    matcher: &M,
    train: &[&SceneRecord],
    dev: &[&SceneRecord],
    config: &TrainConfig,
    seed: u64,
) -> Result<ScstOutcome> {
    config.validate()?;
    if checkpoint.stage != Stage::Ce {
        return Err(Error::Config("self-critical training starts from a CE checkpoint".into()));
    }
    if train.is_empty() {
        return Err(Error::Input("no training images".into()));
    }
    let session = ScstSession::new(matcher.kind());
    let images: Vec<ImageFeature> = train.iter().map(|r| r.image()).collect();
    let shuffle_seed = stage_seed(seed, "scst-shuffle");
    let sample_seed = stage_seed(seed, "scst-sample");
    let mut params = checkpoint.params.clone();
    let mut adam = Adam::new(&params);
    let initial_score = mean_greedy_score(&params, matcher, dev, config.max_len)?;
    let mut epoch_scores = Vec::with_capacity(config.scst_epochs);
    let mut log = vec![LogRecord {
        step: 0,
        epoch: 0,
        stage: Stage::Scst,
        loss: None,
        mean_advantage: None,
        dev_metric: Some(initial_score),
        learning_rate: config.learning_rate_at(0),
    }];
    let mut step = 0usize;
    for epoch in 0..config.scst_epochs {
        let lr = config.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut substream(shuffle_seed, epoch as u64));
        let mut adv_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<ImageFeature> = chunk.iter().map(|&i| images[i].clone()).collect();
            let mut rng = substream(sample_seed, step as u64);
            let last_finite = || Some(Box::new(Checkpoint { params: params.clone(), stage: Stage::Scst, metric: None }));
            let (adv, mut grad) = match session.step(&params, matcher, &batch, &mut rng, config.temperature, config.max_len) {
                Ok(r) => r,
                Err(e @ Error::Numeric { .. }) => {
                    return Err(Error::Aborted { step, reason: e.to_string(), last_finite: last_finite() })
                }
                Err(e) => return Err(e),
            };
            if !grad.all_finite() {
                return Err(Error::Aborted { step, reason: "non-finite policy gradient".into(), last_finite: last_finite() });
            }
            adv_total += adv * batch.len() as f64;
            clip_gradient(&mut grad, config.grad_clip);
            adam.step(&mut params, &grad, lr);
            step += 1;
        }
        let score = mean_greedy_score(&params, matcher, dev, config.max_len)?;
        epoch_scores.push(score);
        log.push(LogRecord {
            step,
            epoch,
            stage: Stage::Scst,
            loss: None,
            mean_advantage: Some(adv_total / images.len() as f64),
            dev_metric: Some(score),
            learning_rate: lr,
        });
    }
    let metric = epoch_scores.last().copied().unwrap_or(initial_score);
    Ok(ScstOutcome {
        checkpoint: Checkpoint { params, stage: Stage::Scst, metric: Some(metric) },
        initial_score,
        epoch_scores,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::Specials;
    use crate::matcher::{BagMatcher, SeqMatcher};

    fn setup() -> (CaptionerParams, BagMatcher, Vec<ImageFeature>) {
        let specials = Specials { bos: 0, eos: 1, masked: vec![0] };
        let p = CaptionerParams::random(5, 4, 3, specials, &mut rng_from_seed(1));
        let m = BagMatcher::random(5, 3, 3, 1, &mut rng_from_seed(2));
        let imgs = vec![ImageFeature::new(0, vec![0.5, -0.1, 0.3]), ImageFeature::new(1, vec![-0.2, 0.4, 0.1])];
        (p, m, imgs)
    }

    #[test]
    fn greedy_sample_gives_zero_contribution() {
        let (p, _, imgs) = setup();
        let greedy = decode_greedy(&p, &imgs[0], 3).unwrap();
        let mut g = p.zeros_like();
        scst_item_grad(&p, &imgs[0], &greedy.caption, 0.0, &mut g).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_advantage_step_raises_sample_likelihood() {
        let (p, _, imgs) = setup();
        let sample = decode_sample(&p, &imgs[0], 3, &mut rng_from_seed(5), 1.0).unwrap();
        let before: f64 = crate::captioner::forward_logprobs(&p, &imgs[0], &sample.caption).unwrap().iter().sum();
        let mut g = p.zeros_like();
        scst_item_grad(&p, &imgs[0], &sample.caption, 0.7, &mut g).unwrap();
        let mut q = p.clone();
        q.add_scaled(&g, -1e-3);
        let after: f64 = crate::captioner::forward_logprobs(&q, &imgs[0], &sample.caption).unwrap().iter().sum();
        assert!(after > before);
    }

    #[test]
    fn session_rejects_other_matcher_kind() {
        let (p, _, imgs) = setup();
        let seq = SeqMatcher::random(5, 3, 3, 1, &mut rng_from_seed(3));
        let s = ScstSession::new(MatcherKind::Bag);
        let r = s.step(&p, &seq, &imgs, &mut rng_from_seed(0), 1.0, 3);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn step_is_deterministic() {
        let (p, m, imgs) = setup();
        let a = scst_step(&p, &m, &imgs, &mut rng_from_seed(9), 1.0, 3).unwrap();
        let b = scst_step(&p, &m, &imgs, &mut rng_from_seed(9), 1.0, 3).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
