use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::{MatchScore, Matcher, MatcherKind, ScoreKind};
use crate::captioner::Caption;
use crate::corpus::ImageFeature;
use crate::nn::{add_outer, log_sigmoid, sigmoid, uniform_matrix, ParamTensors};

/// `sigmoid(u^T W t)` with `u = P x + b` the projected image and `t` the mean
/// embedding of the caption's content tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct BagMatcher {
    pub eos: usize,
    /// `V × e` word embeddings.
    pub embed: Array2<f64>,
    /// `e × d` image projection and its bias.
    pub img_w: Array2<f64>,
    pub img_b: Array1<f64>,
    /// `e × e` interaction matrix.
    pub bilinear: Array2<f64>,
}

pub(crate) struct BagForward {
    pub u: Array1<f64>,
    pub t: Array1<f64>,
    pub logit: f64,
}

impl BagMatcher {
    pub fn zeros(vocab_size: usize, embed_dim: usize, feature_dim: usize, eos: usize) -> Self {
        Self {
            eos,
            embed: Array2::zeros((vocab_size, embed_dim)),
            img_w: Array2::zeros((embed_dim, feature_dim)),
            img_b: Array1::zeros(embed_dim),
            bilinear: Array2::zeros((embed_dim, embed_dim)),
        }
    }

    pub fn random<R: Rng + ?Sized>(vocab_size: usize, embed_dim: usize, feature_dim: usize, eos: usize, rng: &mut R) -> Self {
        Self {
            eos,
            embed: uniform_matrix(vocab_size, embed_dim, 0.5, rng),
            img_w: uniform_matrix(embed_dim, feature_dim, 1.0 / (feature_dim as f64).sqrt(), rng),
            img_b: Array1::zeros(embed_dim),
            bilinear: uniform_matrix(embed_dim, embed_dim, 1.0 / (embed_dim as f64).sqrt(), rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.img_w.ncols()
    }

    /// Mean embedding of `tokens`, summed in order; zero when empty.
    pub fn text_vector(&self, tokens: &[usize]) -> Array1<f64> {
        let mut t = Array1::zeros(self.embed_dim());
        for &tok in tokens {
            t += &self.embed.row(tok);
        }
        if !tokens.is_empty() {
            t /= tokens.len() as f64;
        }
        t
    }

    pub(crate) fn forward(&self, image: &ImageFeature, tokens: &[usize]) -> BagForward {
        let u = self.img_w.dot(&image.view()) + &self.img_b;
        let t = self.text_vector(tokens);
        let logit = u.dot(&self.bilinear.dot(&t));
        BagForward { u, t, logit }
    }

    /// Binary cross-entropy of one labelled pair; gradient accumulated
    /// into `grad` with weight `w`.
    pub(crate) fn accumulate_bce(&self, image: &ImageFeature, tokens: &[usize], label: bool, w: f64, grad: &mut BagMatcher) -> f64 {
        let f = self.forward(image, tokens);
        let y = if label { 1.0 } else { 0.0 };
        let loss = -(y * log_sigmoid(f.logit) + (1.0 - y) * log_sigmoid(-f.logit));
        let g = w * (sigmoid(f.logit) - y);
        let wt = self.bilinear.dot(&f.t);
        let wtu = self.bilinear.t().dot(&f.u);
        add_outer(&mut grad.bilinear, &(&f.u * g), f.t.view());
        let du = wt * g;
        add_outer(&mut grad.img_w, &du, image.view());
        grad.img_b += &du;
        if !tokens.is_empty() {
            let dt = wtu * (g / tokens.len() as f64);
            for &tok in tokens {
                grad.embed.row_mut(tok).scaled_add(1.0, &dt);
            }
        }
        w * loss
    }
}

impl Matcher for BagMatcher {
    fn kind(&self) -> MatcherKind {
        MatcherKind::Bag
    }

    fn score(&self, image: &ImageFeature, caption: &Caption) -> MatchScore {
        let tokens = caption.content(self.eos);
        MatchScore {
            value: sigmoid(self.forward(image, tokens).logit),
            kind: ScoreKind::Probability,
            empty: tokens.is_empty(),
        }
    }
}

impl ParamTensors for BagMatcher {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("embed", self.embed.view().into_dyn()),
            ("img_w", self.img_w.view().into_dyn()),
            ("img_b", self.img_b.view().into_dyn()),
            ("bilinear", self.bilinear.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            ("embed", self.embed.view_mut().into_dyn()),
            ("img_w", self.img_w.view_mut().into_dyn()),
            ("img_b", self.img_b.view_mut().into_dyn()),
            ("bilinear", self.bilinear.view_mut().into_dyn()),
        ]
    }
}
