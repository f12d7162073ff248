use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use sha2::{Digest, Sha256};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors. Names are unique and insertion ordered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, v) in self.iter() {
            h.update(name.as_bytes());
            h.update((v.nrows() as u64).to_le_bytes());
            h.update((v.ncols() as u64).to_le_bytes());
            for x in v.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

/// Glorot-uniform initialisation for a `rows x cols` weight.
pub fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, bound)
}

/// Gradients indexed by [`ParamId`]; absent entries are zero.
#[derive(Debug, Clone)]
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn new(n: usize) -> Self {
        Grads { grads: vec![None; n] }
    }

    pub fn for_store(store: &ParamStore) -> Self {
        Self::new(store.len())
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Mat {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0].get_or_insert_with(|| Array2::zeros(shape))
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Mat) {
        let slot = self.slot(id, g.dim());
        *slot += g;
    }

    /// Adds `other` scaled by `scale`.
    pub fn merge(&mut self, other: &Grads, scale: f64) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                let slot = self.slot(ParamId(i), g.dim());
                slot.scaled_add(scale, g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn zero_row(&mut self, id: ParamId, row: usize) {
        if let Some(Some(g)) = self.grads.get_mut(id.0) {
            g.row_mut(row).fill(0.0);
        }
    }
}
