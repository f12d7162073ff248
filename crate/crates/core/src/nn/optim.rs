use ndarray::Array2;

use super::params::{Grads, Mat, ParamStore};

/// Adaptive moment estimation with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Mat> = store.iter().map(|(_, p)| Array2::zeros(p.dim())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_clip(mut self, norm: f64) -> Self {
        self.clip_norm = Some(norm);
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let mut scale = 1.0;
        if let Some(max) = self.clip_norm {
            let norm = grads.global_norm();
            if norm > max {
                scale = max / norm;
            }
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for id in store.ids() {
            let Some(g) = grads.get(id) else { continue };
            let m = &mut self.m[id.index()];
            let v = &mut self.v[id.index()];
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Graph;

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", Array2::from_elem((1, 2), 3.0));
        let mut opt = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let mut grads = Grads::for_store(&store);
            let mut g = Graph::new(&store);
            let v = g.param(x);
            let sq = g.square(v);
            let l = g.sum(sq);
            g.backward(l, &mut grads);
            drop(g);
            opt.step(&mut store, &grads);
        }
        assert!(store.get(x).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn clipping_bounds_the_first_step() {
        let mut store = ParamStore::new();
        let x = store.add("x", Array2::zeros((1, 1)));
        let mut grads = Grads::for_store(&store);
        grads.accumulate(x, &Array2::from_elem((1, 1), 100.0));
        let mut opt = Adam::new(&store, 0.5).with_clip(5.0);
        opt.step(&mut store, &grads);
        // Adam's first step has magnitude lr regardless of scale
        assert!((store.get(x)[[0, 0]] + 0.5).abs() < 1e-6);
    }
}
