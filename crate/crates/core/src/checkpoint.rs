//! Versioned JSON container for named parameter tensors.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const FORMAT: &str = "robust-intent-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, meta: serde_json::Value, store: &ParamStore) -> Self {
        let tensors = store
            .iter()
            .map(|(name, m)| NamedTensor {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
                data: m.iter().copied().collect(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            meta,
            tensors,
        }
    }

    /// Parameters in their saved order.
    pub fn store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for t in &self.tensors {
            if store.id(&t.name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {:?}", t.name)));
            }
            let m = Array2::from_shape_vec((t.rows, t.cols), t.data.clone())
                .map_err(|_| Error::Checkpoint(format!("tensor {:?} has {} values for shape {}x{}", t.name, t.data.len(), t.rows, t.cols)))?;
            store.add(t.name.clone(), m);
        }
        Ok(store)
    }

    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("metadata field {key:?} missing")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("metadata field {key:?}: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str, expected_kind: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.kind != expected_kind {
            return Err(Error::Checkpoint(format!("expected a {expected_kind} checkpoint, found {}", c.kind)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path, expected_kind: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: format!("no {expected_kind} checkpoint here"),
            },
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text, expected_kind)
    }
}
