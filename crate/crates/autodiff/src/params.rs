use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::{AutodiffError, Gradients, Result};

/// Named parameter tensors. BTreeMap keeps iteration order stable so
/// optimizer sweeps and serialization are deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    /// Zero gradients matching every parameter, for accumulation.
    pub fn zero_grads(&self) -> GradMap {
        self.map
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
            .collect()
    }
}

/// Maps parameter names to the tape leaves they were bound to during one
/// forward pass. Each parameter binds at most once per tape, so gradient
/// accumulation across multiple uses happens on the tape node itself.
#[derive(Debug, Default)]
pub struct ParamBindings {
    map: BTreeMap<String, NodeId>,
}

impl ParamBindings {
    pub fn new() -> Self {
        ParamBindings::default()
    }

    /// The tape leaf for `name`, created on first use.
    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.map.get(name) {
            return Ok(id);
        }
        let id = tape.leaf(store.get(name)?.clone());
        self.map.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.map.get(name).copied()
    }

    /// Gradients for every parameter in `store`; unbound or unreached
    /// parameters get zeros.
    pub fn collect(&self, tape: &Tape, grads: &Gradients, store: &ParamStore) -> GradMap {
        store
            .iter()
            .map(|(name, value)| {
                let g = match self.map.get(name) {
                    Some(&id) => grads.wrt_or_zeros(id, tape),
                    None => Tensor::zeros(value.shape()),
                };
                (name.clone(), g)
            })
            .collect()
    }
}

/// Accumulate `delta` into `into`, scaled by `k`. Missing keys are an error:
/// both maps should come from the same parameter store.
pub fn accumulate_grads(into: &mut GradMap, delta: &GradMap, k: f64) -> Result<()> {
    for (name, g) in delta {
        let slot = into
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.clone()))?;
        slot.add_assign_scaled(g, k)?;
    }
    Ok(())
}

const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamFile {
    format_version: u32,
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    /// Serialize as a JSON map from parameter name to shape + row-major
    /// values, with a format-version field.
    pub fn save_json<W: Write>(&self, w: W) -> Result<()> {
        let file = ParamFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            params: self.map.clone(),
        };
        serde_json::to_writer(w, &file).map_err(|e| AutodiffError::Checkpoint(e.to_string()))
    }

    pub fn load_json<R: Read>(r: R) -> Result<Self> {
        let file: ParamFile =
            serde_json::from_reader(r).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        Ok(ParamStore { map: file.params })
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        self.save_json(std::io::BufWriter::new(f))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::load_json(std::io::BufReader::new(f))
    }
}
