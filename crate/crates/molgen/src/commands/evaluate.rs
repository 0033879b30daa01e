use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use model::dataset::Dataset;
use model::metrics::{compare, distribution_stats, pct_novel, pct_unique, pct_valid};

use crate::util::{load_table, resolve_input};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Sample set (JSONL graph records).
    #[arg(long)]
    pub samples: PathBuf,
    /// Training dataset to compare against.
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV.
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub types: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let table = load_table(&args.types)?;
    let samples = Dataset::load(&resolve_input(&args.samples), &table)?;
    let data = Dataset::load(&resolve_input(&args.data), &table)?;

    let valid = pct_valid(&samples.graphs, &table)?;
    let novel = pct_novel(&samples.graphs, &data.canonical_keys())?;
    let unique = pct_unique(&samples.graphs)?;
    let sample_stats = distribution_stats(&samples.graphs, &table)?;
    let data_stats = distribution_stats(&data.graphs, &table)?;
    let rows = compare(&sample_stats, &data_stats)?;

    let mut f = std::fs::File::create(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    write!(f, "{}", model::metrics::metrics_csv(&rows))?;
    writeln!(f, "pct_valid,{valid:.4},,,,,")?;
    writeln!(f, "pct_novel,{novel:.4},,,,,")?;
    writeln!(f, "pct_unique,{unique:.4},,,,,")?;

    println!(
        "validity {valid:.2}%  novelty {novel:.2}%  uniqueness {unique:.2}%  ({} samples vs {} training molecules)",
        samples.len(),
        data.len()
    );
    let mut worst: Option<&model::metrics::MetricRow> = None;
    for r in &rows {
        if let Some(rel) = r.rel_delta {
            if worst
                .and_then(|w| w.rel_delta)
                .map(|w| rel > w)
                .unwrap_or(true)
            {
                worst = Some(r);
            }
        }
    }
    if let Some(w) = worst {
        println!(
            "largest relative gap: {} ({:.1}% off the dataset mean)",
            w.name,
            100.0 * w.rel_delta.unwrap_or(0.0)
        );
    }
    println!("metrics -> {}", args.out.display());
    Ok(())
}
