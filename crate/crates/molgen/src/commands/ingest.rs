use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::util::{load_table, resolve_input};

#[derive(Args)]
pub struct IngestArgs {
    /// SMILES input, one molecule per line; extra whitespace-separated
    /// numeric columns become properties col1, col2, ...
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Atom type table JSON (default: built-in QM9 table).
    #[arg(long)]
    pub types: Option<PathBuf>,
    /// Also write an ingestion summary (histograms, rejection log) here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary {
    n_input: usize,
    n_ok: usize,
    n_rejected: usize,
    atom_histogram: BTreeMap<String, u64>,
    node_count_histogram: BTreeMap<usize, u64>,
    rejections: Vec<Rejection>,
}

#[derive(Serialize)]
struct Rejection {
    line: usize,
    reason: String,
}

pub fn run(args: IngestArgs) -> Result<()> {
    let table = load_table(&args.types)?;
    let input = resolve_input(&args.input);
    let text = std::fs::read_to_string(&input)
        .with_context(|| format!("reading {}", input.display()))?;

    let mut records = Vec::new();
    let mut summary = Summary {
        n_input: 0,
        n_ok: 0,
        n_rejected: 0,
        atom_histogram: BTreeMap::new(),
        node_count_histogram: BTreeMap::new(),
        rejections: Vec::new(),
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        summary.n_input += 1;
        let mut fields = line.split_whitespace();
        let smiles = fields.next().expect("non-empty line");
        let parsed = chem::smiles::parse(smiles, &table).map_err(|e| e.to_string()).and_then(|graph| {
            let mut props = BTreeMap::new();
            for (i, col) in fields.by_ref().enumerate() {
                let v: f64 = col
                    .parse()
                    .map_err(|_| format!("property column `{col}` is not a number"))?;
                props.insert(format!("col{}", i + 1), v);
            }
            Ok((graph, props))
        });
        match parsed {
            Ok((graph, props)) => {
                let mut rec = chem::GraphRecord::from_graph(&graph, &table)?;
                rec.props = props;
                summary.n_ok += 1;
                for &t in graph.types() {
                    *summary
                        .atom_histogram
                        .entry(table.symbol(t)?.to_string())
                        .or_insert(0) += 1;
                }
                *summary
                    .node_count_histogram
                    .entry(graph.node_count())
                    .or_insert(0) += 1;
                records.push(rec);
            }
            Err(reason) => {
                summary.n_rejected += 1;
                summary.rejections.push(Rejection {
                    line: lineno + 1,
                    reason,
                });
            }
        }
    }

    if summary.n_input == 0 {
        return Err(anyhow::Error::from(chem::ChemError::Io(format!(
            "{}: no molecules in input",
            input.display()
        ))));
    }
    if records.is_empty() {
        return Err(anyhow::Error::from(chem::ChemError::Io(format!(
            "{}: every line was rejected",
            input.display()
        ))));
    }
    if summary.n_rejected * 2 > summary.n_input {
        eprintln!(
            "warning: {} of {} lines rejected",
            summary.n_rejected, summary.n_input
        );
    }

    chem::jsonl::write_records(&args.out, &records)?;
    if let Some(path) = &args.summary {
        let f = std::fs::File::create(path)
            .with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(f, &summary)?;
    }
    for r in summary.rejections.iter().take(10) {
        eprintln!("rejected line {}: {}", r.line, r.reason);
    }
    if summary.rejections.len() > 10 {
        eprintln!("... and {} more rejections", summary.rejections.len() - 10);
    }
    println!(
        "ingested {} molecules ({} rejected) -> {}",
        summary.n_ok,
        summary.n_rejected,
        args.out.display()
    );
    Ok(())
}
