use ndarray::Array1;
use rand::Rng;

use super::model::CaptionerParams;
use super::vocab::Caption;
use crate::corpus::ImageFeature;
use crate::error::{Error, Result};

/// A decoded caption with the model's log-probabilities of its emitted tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub caption: Caption,
    pub step_logprobs: Vec<f64>,
    pub total_logprob: f64,
}

/// Lowest id among the maximal entries.
pub(crate) fn argmax(lp: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in lp.iter().enumerate() {
        if v > lp[best] {
            best = i;
        }
    }
    best
}

fn decode_with(
    params: &CaptionerParams,
    image: &ImageFeature,
    max_len: usize,
    mut choose: impl FnMut(&Array1<f64>) -> Result<usize>,
) -> Result<DecodeOutput> {
    if max_len == 0 {
        return Err(Error::Input("max_len must be at least 1".into()));
    }
    if image.dim() != params.feature_dim() {
        return Err(Error::Input("image dimension does not match the captioner".into()));
    }
    let bos = params.specials.bos;
    let eos = params.specials.eos;
    let mut h = params.image_step(image).h;
    let mut ids = vec![bos];
    let mut step_logprobs = Vec::new();
    let mut token = bos;
    for t in 0..max_len {
        let (step, lp) = params.token_step(h, token);
        if step.h.iter().any(|v| !v.is_finite()) || lp.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric { step: t + 1, what: "decoder state".into() });
        }
        h = step.h;
        token = choose(&lp)?;
        ids.push(token);
        step_logprobs.push(lp[token]);
        if token == eos {
            break;
        }
    }
    let total_logprob = step_logprobs.iter().sum();
    Ok(DecodeOutput { caption: Caption(ids), step_logprobs, total_logprob })
}

/// Stepwise argmax decoding; ties go to the lowest id.
pub fn decode_greedy(params: &CaptionerParams, image: &ImageFeature, max_len: usize) -> Result<DecodeOutput> {
    decode_with(params, image, max_len, |lp| Ok(argmax(lp)))
}

/// Ancestral sampling from the temperature-scaled step distributions.
///
/// The recorded log-probabilities are those of the unscaled model.
pub fn decode_sample<R: Rng + ?Sized>(
    params: &CaptionerParams,
    image: &ImageFeature,
    max_len: usize,
    rng: &mut R,
    temperature: f64,
) -> Result<DecodeOutput> {
    if !(temperature > 0.0) {
        return Err(Error::Input(format!("temperature must be positive, got {temperature}")));
    }
    decode_with(params, image, max_len, |lp| Ok(sample_index(lp, temperature, rng)))
}

/// Draws from `softmax(lp / temperature)` by inverse CDF.
pub(crate) fn sample_index<R: Rng + ?Sized>(lp: &Array1<f64>, temperature: f64, rng: &mut R) -> usize {
    let scaled = lp.mapv(|v| v / temperature);
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::{forward_logprobs, Specials};
    use crate::nn::ParamTensors;
    use crate::rng::rng_from_seed;

    fn model(v: usize, seed: u64) -> CaptionerParams {
        let specials = Specials { bos: 0, eos: 1, masked: vec![0] };
        CaptionerParams::random(v, 6, 4, specials, &mut rng_from_seed(seed))
    }

    fn img() -> ImageFeature {
        ImageFeature::new(0, vec![0.3, -0.2, 0.5, 0.1])
    }

    #[test]
    fn forced_eos_first() {
        let mut p = model(5, 1);
        p.out_w.fill(0.0);
        p.out_b.fill(0.0);
        p.out_b[1] = 50.0;
        let out = decode_greedy(&p, &img(), 10).unwrap();
        assert_eq!(out.caption, Caption(vec![0, 1]));
    }

    #[test]
    fn greedy_is_deterministic_and_stepwise_maximal() {
        let p = model(8, 2);
        let a = decode_greedy(&p, &img(), 6).unwrap();
        assert_eq!(a, decode_greedy(&p, &img(), 6).unwrap());
        let ids = a.caption.ids();
        let dists = crate::captioner::step_distributions(&p, &img(), &ids[..ids.len() - 1]).unwrap();
        for (lp, &chosen) in dists.iter().zip(&ids[1..]) {
            let best = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lp[chosen], best);
            assert!(lp.iter().take(chosen).all(|&v| v < best));
        }
    }

    #[test]
    fn greedy_matches_stepwise_enumeration() {
        let p = model(6, 3);
        let out = decode_greedy(&p, &img(), 4).unwrap();
        // Oracle: at each prefix, score every one-token extension with the
        // teacher-forced pass and keep the best.
        let mut prefix = vec![0usize];
        for _ in 0..4 {
            let scores: Vec<f64> = (0..6)
                .map(|t| {
                    let mut c = prefix.clone();
                    c.push(t);
                    *forward_logprobs(&p, &img(), &Caption(c)).unwrap().last().unwrap()
                })
                .collect();
            let best = (0..6).fold(0, |b, t| if scores[t] > scores[b] { t } else { b });
            prefix.push(best);
            if best == 1 {
                break;
            }
        }
        assert_eq!(out.caption.ids(), prefix.as_slice());
    }

    #[test]
    fn low_temperature_sampling_is_greedy() {
        let mut p = model(7, 4);
        p.out_w.mapv_inplace(|v| v * 20.0);
        let g = decode_greedy(&p, &img(), 5).unwrap();
        let s = decode_sample(&p, &img(), 5, &mut rng_from_seed(9), 1e-3).unwrap();
        assert_eq!(g.caption, s.caption);
    }

    #[test]
    fn sampled_logprob_matches_forward() {
        let p = model(7, 5);
        let mut rng = rng_from_seed(10);
        for _ in 0..20 {
            let s = decode_sample(&p, &img(), 6, &mut rng, 1.7).unwrap();
            let lp = forward_logprobs(&p, &img(), &s.caption).unwrap();
            assert!((lp.iter().sum::<f64>() - s.total_logprob).abs() < 1e-9);
            assert!((s.step_logprobs.iter().sum::<f64>() - s.total_logprob).abs() < 1e-9);
        }
    }

    #[test]
    fn fair_first_token() {
        let mut p = model(2, 6);
        p.specials.masked.clear();
        p.out_w.fill(0.0);
        p.out_b.fill(0.0);
        let mut rng = rng_from_seed(77);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| decode_sample(&p, &img(), 1, &mut rng, 1.0).unwrap().caption.ids()[1] == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = model(4, 7);
        assert!(decode_greedy(&p, &img(), 0).is_err());
        assert!(decode_sample(&p, &img(), 3, &mut rng_from_seed(0), 0.0).is_err());
        assert!(p.all_finite());
    }
}
