use std::path::Path;

use autodiff::{Adam, ParamStore};
use chem::{AtomType, AtomTypeTable};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::dataset::{PropertyNorm, SizePolicy};
use crate::{ModelError, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to resume training or sample: parameters, optimizer
/// moments, the architecture config, the atom table, the size histogram and
/// property normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub types: Vec<AtomType>,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
    /// Completed training epochs.
    pub epoch: usize,
    pub size_policy: SizePolicy,
    pub property: Option<String>,
    pub property_norm: Option<PropertyNorm>,
}

impl Checkpoint {
    pub fn table(&self) -> Result<AtomTypeTable> {
        Ok(AtomTypeTable::new(self.types.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| ModelError::Io(format!("write checkpoint: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Io(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        let table = AtomTypeTable::qm9();
        let cfg = ModelConfig::new(4, table.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: cfg.clone(),
            types: table.iter().cloned().collect(),
            params: init_params(&cfg, &mut rng),
            optimizer: None,
            epoch: 3,
            size_policy: SizePolicy::fixed(5),
            property: Some("molweight".into()),
            property_norm: Some(PropertyNorm { min: 0.0, max: 1.0 }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.epoch, 3);
        assert_eq!(back.model, cfg);
        assert_eq!(back.params.num_values(), ckpt.params.num_values());
        assert_eq!(
            back.params.get("dec.stop_state").unwrap(),
            ckpt.params.get("dec.stop_state").unwrap()
        );
    }
}
