//! Small dense building blocks shared by the captioner and the matchers:
//! a named-tensor parameter trait, a gated recurrent cell with an explicit
//! backward pass, and the Adam optimizer.

mod adam;
mod gru;
mod params;

pub use adam::Adam;
pub use gru::{GruCell, GruStep};
pub use params::{global_norm, ParamTensors};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Log-softmax over the entries not listed in `masked`; masked entries get `-inf`.
pub fn log_softmax_masked(logits: ArrayView1<f64>, masked: &[usize]) -> Array1<f64> {
    let mut out = logits.to_owned();
    for &m in masked {
        out[m] = f64::NEG_INFINITY;
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + out.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    out.mapv_inplace(|v| v - lse);
    out
}

/// Uniform init in `[-scale, scale]`.
pub fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-scale, scale).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// `m += a * x^T`, row by row.
pub(crate) fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, x: ArrayView1<f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, &x);
        }
    }
}
