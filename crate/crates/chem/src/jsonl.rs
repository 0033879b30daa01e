use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::graph::GraphRecord;
use crate::{ChemError, Result};

/// Read a JSONL dataset file, one graph record per line. Blank lines are
/// skipped; malformed lines fail with their line number.
pub fn read_records(path: &Path) -> Result<Vec<GraphRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| {
            ChemError::Io(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[GraphRecord]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| ChemError::Io(format!("serialize record: {e}")))?;
        writeln!(w, "{line}").map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
