use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::{MatchScore, Matcher, MatcherKind, ScoreKind};
use crate::captioner::Caption;
use crate::corpus::ImageFeature;
use crate::nn::{add_outer, log_sigmoid, sigmoid, uniform_matrix, GruCell, GruStep, ParamTensors};

/// Cosine between the projected image and the final state of a recurrent
/// encoder run over the caption's content tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqMatcher {
    pub eos: usize,
    /// `V × e` word embeddings.
    pub embed: Array2<f64>,
    /// `e × d` image projection and its bias.
    pub img_w: Array2<f64>,
    pub img_b: Array1<f64>,
    pub gru: GruCell,
    /// Sharpness of the training logit `kappa * cos`.
    pub kappa: f64,
}

pub const DEFAULT_KAPPA: f64 = 5.0;

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// `cos(a, b)`, defined as 0 when either vector is zero.
pub(crate) fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

impl SeqMatcher {
    pub fn zeros(vocab_size: usize, embed_dim: usize, feature_dim: usize, eos: usize) -> Self {
        Self {
            eos,
            embed: Array2::zeros((vocab_size, embed_dim)),
            img_w: Array2::zeros((embed_dim, feature_dim)),
            img_b: Array1::zeros(embed_dim),
            gru: GruCell::zeros(embed_dim, embed_dim),
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn random<R: Rng + ?Sized>(vocab_size: usize, embed_dim: usize, feature_dim: usize, eos: usize, rng: &mut R) -> Self {
        Self {
            eos,
            embed: uniform_matrix(vocab_size, embed_dim, 0.5, rng),
            img_w: uniform_matrix(embed_dim, feature_dim, 1.0 / (feature_dim as f64).sqrt(), rng),
            img_b: Array1::zeros(embed_dim),
            gru: GruCell::random(embed_dim, embed_dim, rng),
            kappa: DEFAULT_KAPPA,
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

    fn encode(&self, tokens: &[usize]) -> Vec<GruStep> {
        let mut h = Array1::zeros(self.embed_dim());
        let mut steps = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            let step = self.gru.forward(self.embed.row(tok).to_owned(), h);
            h = step.h.clone();
            steps.push(step);
        }
        steps
    }

    /// Final encoder state; zero for an empty caption.
    pub fn text_vector(&self, tokens: &[usize]) -> Array1<f64> {
        self.encode(tokens).pop().map(|s| s.h).unwrap_or_else(|| Array1::zeros(self.embed_dim()))
    }

    pub(crate) fn cos(&self, image: &ImageFeature, tokens: &[usize]) -> f64 {
        cosine(&(self.img_w.dot(&image.view()) + &self.img_b), &self.text_vector(tokens))
    }

    /// Binary cross-entropy of `sigmoid(kappa * cos)` for one labelled pair.
    pub(crate) fn accumulate_bce(&self, image: &ImageFeature, tokens: &[usize], label: bool, w: f64, grad: &mut SeqMatcher) -> f64 {
        let a = self.img_w.dot(&image.view()) + &self.img_b;
        let steps = self.encode(tokens);
        let b = steps.last().map(|s| s.h.clone()).unwrap_or_else(|| Array1::zeros(self.embed_dim()));
        let c = cosine(&a, &b);
        let z = self.kappa * c;
        let y = if label { 1.0 } else { 0.0 };
        let loss = -(y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z));
        let (na, nb) = (norm(&a), norm(&b));
        if na == 0.0 || nb == 0.0 {
            return w * loss;
        }
        let g = w * self.kappa * (sigmoid(z) - y);
        let da = (&b / (na * nb) - &a * (c / (na * na))) * g;
        let db = (&a / (na * nb) - &b * (c / (nb * nb))) * g;
        add_outer(&mut grad.img_w, &da, image.view());
        grad.img_b += &da;
        let mut dh = db;
        for (step, &tok) in steps.iter().zip(tokens).rev() {
            let (dx, dh_prev) = self.gru.backward(step, &dh, &mut grad.gru);
            grad.embed.row_mut(tok).scaled_add(1.0, &dx);
            dh = dh_prev;
        }
        w * loss
    }
}

impl Matcher for SeqMatcher {
    fn kind(&self) -> MatcherKind {
        MatcherKind::Sequence
    }

    fn score(&self, image: &ImageFeature, caption: &Caption) -> MatchScore {
        let tokens = caption.content(self.eos);
        MatchScore { value: self.cos(image, tokens), kind: ScoreKind::Similarity, empty: tokens.is_empty() }
    }
}

impl ParamTensors for SeqMatcher {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let mut v = vec![
            ("embed", self.embed.view().into_dyn()),
            ("img_w", self.img_w.view().into_dyn()),
            ("img_b", self.img_b.view().into_dyn()),
        ];
        v.extend(self.gru.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let mut v = vec![
            ("embed", self.embed.view_mut().into_dyn()),
            ("img_w", self.img_w.view_mut().into_dyn()),
            ("img_b", self.img_b.view_mut().into_dyn()),
        ];
        v.extend(self.gru.tensors_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn img() -> ImageFeature {
        ImageFeature::new(0, vec![0.2, -0.4, 0.1, 0.7])
    }

    #[test]
    fn order_matters_and_range_holds() {
        let m = SeqMatcher::random(9, 5, 4, 1, &mut rng_from_seed(2));
        let a = m.score(&img(), &Caption(vec![0, 3, 4, 5, 1]));
        let b = m.score(&img(), &Caption(vec![0, 5, 4, 3, 1]));
        assert_ne!(a.value, b.value);
        assert!((-1.0..=1.0).contains(&a.value));
        assert_eq!(a.kind, ScoreKind::Similarity);
    }

    #[test]
    fn empty_caption_is_flagged_and_zero() {
        let m = SeqMatcher::random(9, 5, 4, 1, &mut rng_from_seed(3));
        let s = m.score(&img(), &Caption(vec![0, 1]));
        assert!(s.empty);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let m = SeqMatcher::random(6, 3, 4, 1, &mut rng_from_seed(5));
        let tokens = [2, 4, 3];
        for label in [true, false] {
            let mut grad = m.zeros_like();
            m.accumulate_bce(&img(), &tokens, label, 1.0, &mut grad);
            let analytic = grad.flat();
            for i in 0..m.num_params() {
                let eval = |delta: f64| {
                    let mut p = m.clone();
                    p.with_flat_mut(i, |v| *v += delta);
                    p.accumulate_bce(&img(), &tokens, label, 1.0, &mut p.zeros_like())
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert!((fd - analytic[i]).abs() < 1e-7 * (1.0 + fd.abs()), "coord {i}: {fd} vs {}", analytic[i]);
            }
        }
    }
}
