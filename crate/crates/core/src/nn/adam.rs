use ndarray::Zip;

use super::ParamTensors;

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<P> {
    m: P,
    v: P,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<P: ParamTensors> Adam<P> {
    pub fn new(like: &P) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut P, grad: &P, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, mut p), (_, g)), (_, mut m)), (_, mut v)) in tensors {
            Zip::from(&mut p).and(&g).and(&mut m).and(&mut v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}
