use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::{add_outer, sigmoid, uniform_matrix};

/// Gated recurrent cell:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_n: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_n: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_n: Array1<f64>,
}

/// Activations of one forward step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub z: Array1<f64>,
    pub r: Array1<f64>,
    pub n: Array1<f64>,
    pub rh: Array1<f64>,
    pub h: Array1<f64>,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((hidden, input));
        let u = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        Self {
            w_z: w(),
            w_r: w(),
            w_n: w(),
            u_z: u(),
            u_r: u(),
            u_n: u(),
            b_z: b(),
            b_r: b(),
            b_n: b(),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let sw = 1.0 / (input as f64).sqrt();
        let su = 1.0 / (hidden as f64).sqrt();
        Self {
            w_z: uniform_matrix(hidden, input, sw, rng),
            w_r: uniform_matrix(hidden, input, sw, rng),
            w_n: uniform_matrix(hidden, input, sw, rng),
            u_z: uniform_matrix(hidden, hidden, su, rng),
            u_r: uniform_matrix(hidden, hidden, su, rng),
            u_n: uniform_matrix(hidden, hidden, su, rng),
            b_z: Array1::zeros(hidden),
            b_r: Array1::zeros(hidden),
            b_n: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_z.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn forward(&self, x: Array1<f64>, h_prev: Array1<f64>) -> GruStep {
        let z = (self.w_z.dot(&x) + self.u_z.dot(&h_prev) + &self.b_z).mapv(sigmoid);
        let r = (self.w_r.dot(&x) + self.u_r.dot(&h_prev) + &self.b_r).mapv(sigmoid);
        let rh = &r * &h_prev;
        let n = (self.w_n.dot(&x) + self.u_n.dot(&rh) + &self.b_n).mapv(f64::tanh);
        let h = (1.0 - &z) * &n + &z * &h_prev;
        GruStep { x, h_prev, z, r, n, rh, h }
    }

    /// Accumulates parameter gradients into `grad` and returns `(dx, dh_prev)`
    /// given the gradient `dh` flowing into this step's output.
    pub fn backward(&self, step: &GruStep, dh: &Array1<f64>, grad: &mut GruCell) -> (Array1<f64>, Array1<f64>) {
        let GruStep { x, h_prev, z, r, n, rh, .. } = step;
        let dn = dh * &(1.0 - z);
        let dz = dh * &(h_prev - n);
        let mut dh_prev = dh * z;

        let da_n = dn * &n.mapv(|v| 1.0 - v * v);
        add_outer(&mut grad.w_n, &da_n, x.view());
        add_outer(&mut grad.u_n, &da_n, rh.view());
        grad.b_n += &da_n;
        let mut dx = self.w_n.t().dot(&da_n);
        let drh = self.u_n.t().dot(&da_n);
        let dr = &drh * h_prev;
        dh_prev += &(&drh * r);

        let da_z = dz * &z.mapv(|v| v * (1.0 - v));
        add_outer(&mut grad.w_z, &da_z, x.view());
        add_outer(&mut grad.u_z, &da_z, h_prev.view());
        grad.b_z += &da_z;
        dx += &self.w_z.t().dot(&da_z);
        dh_prev += &self.u_z.t().dot(&da_z);

        let da_r = dr * &r.mapv(|v| v * (1.0 - v));
        add_outer(&mut grad.w_r, &da_r, x.view());
        add_outer(&mut grad.u_r, &da_r, h_prev.view());
        grad.b_r += &da_r;
        dx += &self.w_r.t().dot(&da_r);
        dh_prev += &self.u_r.t().dot(&da_r);

        (dx, dh_prev)
    }

    pub(crate) fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("gru_w_z", self.w_z.view().into_dyn()),
            ("gru_w_r", self.w_r.view().into_dyn()),
            ("gru_w_n", self.w_n.view().into_dyn()),
            ("gru_u_z", self.u_z.view().into_dyn()),
            ("gru_u_r", self.u_r.view().into_dyn()),
            ("gru_u_n", self.u_n.view().into_dyn()),
            ("gru_b_z", self.b_z.view().into_dyn()),
            ("gru_b_r", self.b_r.view().into_dyn()),
            ("gru_b_n", self.b_n.view().into_dyn()),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            ("gru_w_z", self.w_z.view_mut().into_dyn()),
            ("gru_w_r", self.w_r.view_mut().into_dyn()),
            ("gru_w_n", self.w_n.view_mut().into_dyn()),
            ("gru_u_z", self.u_z.view_mut().into_dyn()),
            ("gru_u_r", self.u_r.view_mut().into_dyn()),
            ("gru_u_n", self.u_n.view_mut().into_dyn()),
            ("gru_b_z", self.b_z.view_mut().into_dyn()),
            ("gru_b_r", self.b_r.view_mut().into_dyn()),
            ("gru_b_n", self.b_n.view_mut().into_dyn()),
        ]
    }
}
