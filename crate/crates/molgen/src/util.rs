use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chem::AtomTypeTable;

/// A command-line usage problem (bad flag combination, invalid value).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Map an error chain to the documented exit codes.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(m) = cause.downcast_ref::<model::ModelError>() {
            return match m {
                model::ModelError::NonFiniteLoss { .. } => 3,
                model::ModelError::Autodiff(autodiff::AutodiffError::NonFiniteGradient(_)) => 3,
                _ => 2,
            };
        }
        if let Some(a) = cause.downcast_ref::<autodiff::AutodiffError>() {
            return match a {
                autodiff::AutodiffError::NonFiniteGradient(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

/// Resolve an input path, falling back to `MOLGEN_DATA_DIR` for relative
/// paths that do not exist as given.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(base) = std::env::var("MOLGEN_DATA_DIR") {
        let candidate = Path::new(&base).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

pub fn load_table(types: &Option<PathBuf>) -> Result<AtomTypeTable> {
    match types {
        Some(path) => AtomTypeTable::from_file(&resolve_input(path))
            .with_context(|| format!("loading type table {}", path.display())),
        None => Ok(AtomTypeTable::qm9()),
    }
}
