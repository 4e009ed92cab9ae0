//! Named parameter storage, initialization, and JSON checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

struct Slot {
    name: String,
    value: Tensor,
    /// Weight decay applies only to matrix weights, not biases or
    /// normalization scales/offsets.
    decay: bool,
}

/// Registry of trainable tensors. Order of registration is the canonical
/// parameter order everywhere (optimizer state, gradient maps, checkpoints).
#[derive(Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, decay: bool) -> ParamId {
        assert!(
            !self.slots.iter().any(|s| s.name == name),
            "duplicate parameter name: {name}"
        );
        let id = ParamId(self.slots.len());
        self.slots.push(Slot {
            name: name.to_string(),
            value,
            decay,
        });
        id
    }

    /// Xavier-uniform weight matrix: ±√(6 / (fan_in + fan_out)).
    pub fn add_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
        self.add(name, Tensor::matrix(rows, cols, data), true)
    }

    /// Embedding table: uniform ±0.05, no decay.
    pub fn add_embedding(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-0.05, 0.05)).collect();
        self.add(name, Tensor::matrix(rows, cols, data), false)
    }

    /// Bias row: zeros, no decay.
    pub fn add_bias(&mut self, name: &str, cols: usize) -> ParamId {
        self.add(name, Tensor::matrix(1, cols, vec![0.0; cols]), false)
    }

    /// LayerNorm scale (ones) and offset (zeros), no decay.
    pub fn add_layer_norm(&mut self, prefix: &str, cols: usize) -> (ParamId, ParamId) {
        let g = self.add(
            &format!("{prefix}.gamma"),
            Tensor::matrix(1, cols, vec![1.0; cols]),
            false,
        );
        let b = self.add(
            &format!("{prefix}.beta"),
            Tensor::matrix(1, cols, vec![0.0; cols]),
            false,
        );
        (g, b)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.slots[id.0].decay
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.slots
            .iter()
            .position(|s| s.name == name)
            .map(ParamId)
    }

    /// Create a leaf on `tape` for every parameter, in registration order.
    /// Returned vector is indexed by `ParamId.0`.
    pub fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.ids()
            .map(|id| tape.param_leaf(id, self.value(id)))
            .collect()
    }

    pub fn total_values(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| s.value.all_finite())
    }

    // ── Checkpoints ─────────────────────────────────────────────────────

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut params = BTreeMap::new();
        for s in &self.slots {
            params.insert(
                s.name.clone(),
                CheckpointEntry {
                    shape: s.value.shape.clone(),
                    values: s.value.data.clone(),
                },
            );
        }
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            params,
        };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    /// Load values into an already-constructed store. Every parameter must
    /// be present with a matching shape; extra entries are rejected.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} unsupported (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        if file.params.len() != self.slots.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: file has {}, model has {}",
                file.params.len(),
                self.slots.len()
            )));
        }
        for s in &mut self.slots {
            let entry = file.params.get(&s.name).ok_or_else(|| {
                Error::Checkpoint(format!("missing parameter {}", s.name))
            })?;
            if entry.shape != s.value.shape {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {}: file {:?}, model {:?}",
                    s.name, entry.shape, s.value.shape
                )));
            }
            if entry.values.len() != s.value.data.len() {
                return Err(Error::Checkpoint(format!(
                    "value count mismatch for {}",
                    s.name
                )));
            }
            s.value.data.clone_from(&entry.values);
        }
        Ok(())
    }
}

/// Shape of one named parameter in a checkpoint, without loading it.
/// Lets a caller size data-dependent pieces (like a head's output arity)
/// before constructing the store the checkpoint will fill.
pub fn checkpoint_shape(path: &Path, name: &str) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    file.params
        .get(name)
        .map(|e| e.shape.clone())
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    params: BTreeMap<String, CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
}
