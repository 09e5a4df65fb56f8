//! JSON parameter checkpoints keyed by canonical parameter path.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT: &str = "ctt-net-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        let params = store
            .iter()
            .map(|(name, t)| (name.to_owned(), StoredTensor { shape: t.shape().to_vec(), values: t.data().to_vec() }))
            .collect();
        Self { format: FORMAT.into(), version: VERSION, params }
    }

    /// Copies every stored tensor into `store`. The key sets must match
    /// exactly and every shape must agree.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::data(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        if let Some(extra) = self.params.keys().find(|k| store.id(k).is_none()) {
            return Err(Error::data(format!("checkpoint has unknown parameter {extra}")));
        }
        let mut values = Vec::with_capacity(store.len());
        for (name, current) in store.iter() {
            let stored = self
                .params
                .get(name)
                .ok_or_else(|| Error::data(format!("checkpoint is missing parameter {name}")))?;
            if stored.shape != current.shape() {
                return Err(Error::data(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    stored.shape,
                    current.shape()
                )));
            }
            let t = Tensor::new(stored.shape.clone(), stored.values.clone())
                .map_err(|e| Error::data(format!("parameter {name}: {e}")))?;
            if !t.is_finite() {
                return Err(Error::data(format!("parameter {name} has non-finite values")));
            }
            values.push(t);
        }
        store.set_values(&values);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}
