use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rayon::prelude::*;

use super::vocab::{Caption, Specials};
use crate::corpus::ImageFeature;
use crate::error::{Error, Result};
use crate::nn::{add_outer, log_softmax_masked, uniform_matrix, GruCell, GruStep, ParamTensors};

/// Parameters of the FC-style recurrent captioner.
///
/// The projected image is the input of a step before `BOS`; every later
/// step consumes the embedding of the previous token.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionerParams {
    pub specials: Specials,
    /// `V × h` token embeddings.
    pub embed: Array2<f64>,
    /// `h × d` image projection and its bias.
    pub img_w: Array2<f64>,
    pub img_b: Array1<f64>,
    pub gru: GruCell,
    /// `V × h` output projection and its bias.
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl ParamTensors for CaptionerParams {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let mut v = vec![
            ("embed", self.embed.view().into_dyn()),
            ("img_w", self.img_w.view().into_dyn()),
            ("img_b", self.img_b.view().into_dyn()),
        ];
        v.extend(self.gru.tensors());
        v.push(("out_w", self.out_w.view().into_dyn()));
        v.push(("out_b", self.out_b.view().into_dyn()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let mut v = vec![
            ("embed", self.embed.view_mut().into_dyn()),
            ("img_w", self.img_w.view_mut().into_dyn()),
            ("img_b", self.img_b.view_mut().into_dyn()),
        ];
        v.extend(self.gru.tensors_mut());
        v.push(("out_w", self.out_w.view_mut().into_dyn()));
        v.push(("out_b", self.out_b.view_mut().into_dyn()));
        v
    }
}

/// Activations of a teacher-forced pass.
pub(crate) struct Trace {
    image_step: GruStep,
    steps: Vec<GruStep>,
    logprobs: Vec<Array1<f64>>,
}

impl CaptionerParams {
    pub fn zeros(vocab_size: usize, hidden: usize, feature_dim: usize, specials: Specials) -> Self {
        Self {
            specials,
            embed: Array2::zeros((vocab_size, hidden)),
            img_w: Array2::zeros((hidden, feature_dim)),
            img_b: Array1::zeros(hidden),
            gru: GruCell::zeros(hidden, hidden),
            out_w: Array2::zeros((vocab_size, hidden)),
            out_b: Array1::zeros(vocab_size),
        }
    }

    pub fn random<R: Rng + ?Sized>(vocab_size: usize, hidden: usize, feature_dim: usize, specials: Specials, rng: &mut R) -> Self {
        Self {
            specials,
            embed: uniform_matrix(vocab_size, hidden, 0.1, rng),
            img_w: uniform_matrix(hidden, feature_dim, 1.0 / (feature_dim as f64).sqrt(), rng),
            img_b: Array1::zeros(hidden),
            gru: GruCell::random(hidden, hidden, rng),
            out_w: uniform_matrix(vocab_size, hidden, 1.0 / (hidden as f64).sqrt(), rng),
            out_b: Array1::zeros(vocab_size),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.embed.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.img_w.ncols()
    }

    fn check_image(&self, image: &ImageFeature) -> Result<()> {
        if image.dim() != self.feature_dim() {
            return Err(Error::Input(format!(
                "image has dimension {}, captioner expects {}",
                image.dim(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    fn check_tokens(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&t| t >= self.vocab_size()) {
            Some(t) => Err(Error::Input(format!("token id {t} out of range for V={}", self.vocab_size()))),
            None => Ok(()),
        }
    }

    /// Hidden state after consuming the image.
    pub(crate) fn image_step(&self, image: &ImageFeature) -> GruStep {
        let x = self.img_w.dot(&image.view()) + &self.img_b;
        self.gru.forward(x, Array1::zeros(self.hidden()))
    }

    /// One recurrent step on `token`; returns the new state and the masked
    /// log-distribution over the next token.
    pub(crate) fn token_step(&self, h: Array1<f64>, token: usize) -> (GruStep, Array1<f64>) {
        let step = self.gru.forward(self.embed.row(token).to_owned(), h);
        let logits = self.out_w.dot(&step.h) + &self.out_b;
        let lp = log_softmax_masked(logits.view(), &self.specials.masked);
        (step, lp)
    }

    pub(crate) fn trace(&self, image: &ImageFeature, inputs: &[usize]) -> Result<Trace> {
        self.check_image(image)?;
        self.check_tokens(inputs)?;
        let image_step = self.image_step(image);
        if image_step.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: 0, what: "image state".into() });
        }
        let mut h = image_step.h.clone();
        let mut steps = Vec::with_capacity(inputs.len());
        let mut logprobs = Vec::with_capacity(inputs.len());
        for (t, &tok) in inputs.iter().enumerate() {
            let (step, lp) = self.token_step(h, tok);
            if step.h.iter().any(|v| !v.is_finite()) || lp.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::Numeric { step: t + 1, what: "recurrent activation".into() });
            }
            h = step.h.clone();
            steps.push(step);
            logprobs.push(lp);
        }
        Ok(Trace { image_step, steps, logprobs })
    }

    /// Gradient of `-Σ_t w_t log p(targets[t] | image, inputs[..=t])`,
    /// accumulated into `grad`; returns that weighted loss.
    ///
    /// Positions whose target is masked, or whose weight is zero, contribute
    /// nothing.
    pub fn accumulate_sequence_grad(
        &self,
        image: &ImageFeature,
        inputs: &[usize],
        targets: &[usize],
        weights: &[f64],
        grad: &mut CaptionerParams,
    ) -> Result<f64> {
        assert_eq!(inputs.len(), targets.len());
        assert_eq!(inputs.len(), weights.len());
        self.check_tokens(targets)?;
        let tr = self.trace(image, inputs)?;
        let mut loss = 0.0;
        let mut dh_next = Array1::<f64>::zeros(self.hidden());
        for t in (0..inputs.len()).rev() {
            let step = &tr.steps[t];
            let lp = &tr.logprobs[t];
            let (w, target) = (weights[t], targets[t]);
            let mut dh = dh_next;
            if w != 0.0 && lp[target].is_finite() {
                loss -= w * lp[target];
                let mut dlogits = lp.mapv(|v| w * v.exp());
                dlogits[target] -= w;
                add_outer(&mut grad.out_w, &dlogits, step.h.view());
                grad.out_b += &dlogits;
                dh += &self.out_w.t().dot(&dlogits);
            }
            let (dx, dh_prev) = self.gru.backward(step, &dh, &mut grad.gru);
            grad.embed.row_mut(inputs[t]).scaled_add(1.0, &dx);
            dh_next = dh_prev;
        }
        let (dx, _) = self.gru.backward(&tr.image_step, &dh_next, &mut grad.gru);
        add_outer(&mut grad.img_w, &dx, image.view());
        grad.img_b += &dx;
        Ok(loss)
    }
}

/// Per-step `log p(s_t | I, s_<t)` for `t = 1..T`.
pub fn forward_logprobs(params: &CaptionerParams, image: &ImageFeature, caption: &Caption) -> Result<Vec<f64>> {
    let ids = caption.ids();
    if ids.len() < 2 {
        return Ok(Vec::new());
    }
    params.check_tokens(ids)?;
    let tr = params.trace(image, &ids[..ids.len() - 1])?;
    Ok(tr.logprobs.iter().zip(&ids[1..]).map(|(lp, &t)| lp[t]).collect())
}

/// Full per-step log-distributions (for normalization checks and oracles).
pub fn step_distributions(params: &CaptionerParams, image: &ImageFeature, inputs: &[usize]) -> Result<Vec<Array1<f64>>> {
    Ok(params.trace(image, inputs)?.logprobs)
}

/// Mean over the batch of the negative summed log-likelihood, with its
/// exact gradient.
///
/// Items are processed in parallel; their gradients are summed in batch
/// order, so the result does not depend on the thread count.
pub fn ce_loss_and_grad(params: &CaptionerParams, batch: &[(ImageFeature, Caption)]) -> Result<(f64, CaptionerParams)> {
    let items: Vec<(&ImageFeature, Vec<usize>)> = batch.iter().map(|(img, c)| (img, c.ids().to_vec())).collect();
    let inputs: Vec<(&ImageFeature, &[usize], &[usize])> = items
        .iter()
        .map(|(img, ids)| (*img, &ids[..ids.len().saturating_sub(1)], &ids[1.min(ids.len())..]))
        .collect();
    ce_loss_and_grad_with_inputs(params, &inputs)
}

/// As [`ce_loss_and_grad`], but with explicit (possibly scheduled-sampled)
/// input sequences per item.
pub fn ce_loss_and_grad_with_inputs(params: &CaptionerParams, batch: &[(&ImageFeature, &[usize], &[usize])]) -> Result<(f64, CaptionerParams)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let parts: Vec<Result<(f64, CaptionerParams)>> = batch
        .par_iter()
        .map(|(img, inputs, targets)| {
            let mut g = params.zeros_like();
            let w = vec![1.0; inputs.len()];
            let l = params.accumulate_sequence_grad(img, inputs, targets, &w, &mut g)?;
            Ok((l, g))
        })
        .collect();
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grad = params.zeros_like();
    for part in parts {
        let (l, g) = part?;
        total += l;
        grad.add_scaled(&g, 1.0);
    }
    grad.scale(1.0 / n);
    Ok((total / n, grad))
}
