//! Parser and writer for a restricted, kekulized SMILES subset: atoms from
//! the type table (brackets for charges), bonds `-`/`=`/`#`, branches and
//! ring closures. Used for dataset ingestion and human-readable output;
//! training itself works on graph records.

mod parse;
mod write;

pub use parse::parse;
pub use write::write;
