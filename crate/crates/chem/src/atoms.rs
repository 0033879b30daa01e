use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ChemError, Result};

/// Mass of the implicit hydrogens attached at completion time.
pub const HYDROGEN_MASS: f64 = 1.008;

/// One entry of the atom type table. `symbol` is what appears in graph
/// records and SMILES (charge suffix included, e.g. "O-"); `element` is the
/// bare element for donor/acceptor bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomType {
    pub symbol: String,
    pub element: String,
    /// Maximum number of bond units this type can carry (double counts 2,
    /// triple counts 3).
    pub valence: u8,
    pub mass: f64,
    #[serde(default)]
    pub charge: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableFile {
    types: Vec<AtomType>,
}

/// The set of atom types a model run works with. Loaded from a small JSON
/// config; the QM9 table (C, N, O, F plus common charged variants) ships
/// with the crate.
#[derive(Debug, Clone)]
pub struct AtomTypeTable {
    types: Vec<AtomType>,
    by_symbol: HashMap<String, usize>,
}

impl AtomTypeTable {
    pub fn new(types: Vec<AtomType>) -> Result<Self> {
        let mut by_symbol = HashMap::new();
        for (i, t) in types.iter().enumerate() {
            if t.valence == 0 {
                return Err(ChemError::BadTypeTable(format!(
                    "type `{}` has zero valence",
                    t.symbol
                )));
            }
            if by_symbol.insert(t.symbol.clone(), i).is_some() {
                return Err(ChemError::BadTypeTable(format!(
                    "duplicate symbol `{}`",
                    t.symbol
                )));
            }
        }
        Ok(AtomTypeTable { types, by_symbol })
    }

    pub fn qm9() -> Self {
        Self::from_json(include_str!("../data/qm9_types.json")).expect("built-in table is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(json).map_err(|e| ChemError::BadTypeTable(e.to_string()))?;
        Self::new(file.types)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChemError::BadTypeTable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TableFile {
            types: self.types.clone(),
        })
        .expect("table serializes")
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&AtomType> {
        self.types
            .get(index)
            .ok_or(ChemError::UnknownTypeIndex(index))
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.by_symbol
            .get(symbol)
            .copied()
            .ok_or_else(|| ChemError::UnknownSymbol(symbol.to_string()))
    }

    pub fn symbol(&self, index: usize) -> Result<&str> {
        Ok(&self.get(index)?.symbol)
    }

    /// Maximum bond units for a symbol.
    pub fn valence_of(&self, symbol: &str) -> Result<u8> {
        Ok(self.types[self.index_of(symbol)?].valence)
    }

    pub fn valence(&self, index: usize) -> Result<u8> {
        Ok(self.get(index)?.valence)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtomType> {
        self.types.iter()
    }
}
