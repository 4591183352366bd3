use crate::captioner::{Caption, CaptionerParams};
use crate::corpus::ImageFeature;
use crate::error::{Error, Result};
use crate::matcher::Matcher;
use crate::nn::ParamTensors;

const MAX_VOCAB: usize = 6;
const MAX_LEN: usize = 3;

fn check_bounds(params: &CaptionerParams, max_len: usize) -> Result<()> {
    if params.vocab_size() > MAX_VOCAB || max_len > MAX_LEN || max_len == 0 {
        return Err(Error::Bound(format!(
            "enumeration needs V <= {MAX_VOCAB} and 1 <= max_len <= {MAX_LEN}, got V={} max_len={max_len}",
            params.vocab_size()
        )));
    }
    Ok(())
}

/// Every caption the decoder can emit within `max_len` steps, with its
/// log-probability. Sequences end at the first EOS; sequences that reach
/// `max_len` without one are included as they are.
pub fn enumerate_captions(params: &CaptionerParams, image: &ImageFeature, max_len: usize) -> Result<Vec<(Caption, f64)>> {
    check_bounds(params, max_len)?;
    let mut out = Vec::new();
    let h = params.image_step(image).h;
    let mut stack = vec![(vec![params.specials.bos], h, 0.0)];
    while let Some((prefix, h, lp_prefix)) = stack.pop() {
        let (step, lp) = params.token_step(h, *prefix.last().unwrap());
        for (tok, &l) in lp.iter().enumerate().rev() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            let mut next = prefix.clone();
            next.push(tok);
            let total = lp_prefix + l;
            if tok == params.specials.eos || next.len() - 1 == max_len {
                out.push((Caption(next), total));
            } else {
                stack.push((next, step.h.clone(), total));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// `E_{S ~ p}[r(S)]` by enumeration.
pub fn expected_reward(params: &CaptionerParams, image: &ImageFeature, max_len: usize, reward: impl Fn(&Caption) -> f64) -> Result<f64> {
    Ok(enumerate_captions(params, image, max_len)?.iter().map(|(c, lp)| lp.exp() * reward(c)).sum())
}

/// Exact `grad E[r] = sum_S r(S) p(S) grad log p(S)` for an arbitrary reward.
pub fn policy_gradient_oracle_with(
    params: &CaptionerParams,
    image: &ImageFeature,
    max_len: usize,
    reward: impl Fn(&Caption) -> f64,
) -> Result<CaptionerParams> {
    let mut grad = params.zeros_like();
    for (caption, lp) in enumerate_captions(params, image, max_len)? {
        let w = -reward(&caption) * lp.exp();
        let ids = caption.ids();
        let n = ids.len() - 1;
        params.accumulate_sequence_grad(image, &ids[..n], &ids[1..], &vec![w; n], &mut grad)?;
    }
    Ok(grad)
}

/// Exact gradient of the expected matcher score of the captioner's samples.
pub fn policy_gradient_oracle<M: Matcher + ?Sized>(params: &CaptionerParams, matcher: &M, image: &ImageFeature, max_len: usize) -> Result<CaptionerParams> {
    policy_gradient_oracle_with(params, image, max_len, |c| matcher.score(image, c).value)
}
