use rand::Rng;

use super::params::{glorot, uniform, ParamId, ParamStore};
use super::tape::{Graph, Var};
use ndarray::Array2;

/// `y = x W + b`
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), glorot(rng, input, output)),
            b: store.add(format!("{name}.b"), Array2::zeros((1, output))),
        }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Linear {
            w: store.id(&format!("{name}.w"))?,
            b: store.id(&format!("{name}.b"))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut b = Array2::zeros((1, 4 * hidden));
        // forget gate starts open
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        Lstm {
            w: store.add(format!("{name}.w"), uniform(rng, input, 4 * hidden, bound)),
            u: store.add(format!("{name}.u"), uniform(rng, hidden, 4 * hidden, bound)),
            b: store.add(format!("{name}.b"), b),
            hidden,
        }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        let u = store.id(&format!("{name}.u"))?;
        Some(Lstm {
            w: store.id(&format!("{name}.w"))?,
            u,
            b: store.id(&format!("{name}.b"))?,
            hidden: store.get(u).nrows(),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, reverse: bool) -> Var {
        let (w, u, b) = (g.param(self.w), g.param(self.u), g.param(self.b));
        g.lstm(x, w, u, b, reverse)
    }
}

/// Forward and backward LSTM whose states are concatenated per position.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn from_store(store: &ParamStore, name: &str) -> Option<Self> {
        Some(BiLstm {
            fwd: Lstm::from_store(store, &format!("{name}.fwd"))?,
            bwd: Lstm::from_store(store, &format!("{name}.bwd"))?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let f = self.fwd.forward(g, x, false);
        let b = self.bwd.forward(g, x, true);
        g.concat_cols(&[f, b])
    }
}
