use ndarray::{ArrayViewD, ArrayViewMutD, Zip};

/// A record of named real tensors in a fixed order.
///
/// The order returned by [`ParamTensors::tensors`] is the serialization
/// order of checkpoints and the iteration order of every reduction, so it
/// must not depend on anything but the type.
pub trait ParamTensors: Clone + Send + Sync {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, other: &Self, alpha: f64) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(alpha, &b);
        }
    }

    fn scale(&mut self, s: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * s);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All entries flattened in tensor order.
    fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>()).collect()
    }

    /// Mutable access to the `index`-th scalar in flattened order.
    fn with_flat_mut(&mut self, index: usize, f: impl FnOnce(&mut f64)) {
        let mut offset = index;
        for (_, mut t) in self.tensors_mut() {
            if offset < t.len() {
                let slot = t.iter_mut().nth(offset).expect("in range");
                f(slot);
                return;
            }
            offset -= t.len();
        }
        panic!("flat index {index} out of range");
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    fn dot(&self, other: &Self) -> f64 {
        self.tensors()
            .into_iter()
            .zip(other.tensors())
            .map(|((_, a), (_, b))| Zip::from(&a).and(&b).fold(0.0, |acc, &x, &y| acc + x * y))
            .sum()
    }
}

pub fn global_norm<P: ParamTensors>(p: &P) -> f64 {
    p.dot(p).sqrt()
}
