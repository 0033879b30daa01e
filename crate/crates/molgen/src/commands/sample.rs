use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use model::decoder::sample_molecules;
use model::Checkpoint;

use crate::util::resolve_input;

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of molecules to sample.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL graph records.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the samples as SMILES, one per line.
    #[arg(long)]
    pub smiles: Option<PathBuf>,
}

pub fn run(args: SampleArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&resolve_input(&args.checkpoint))?;
    let table = ckpt.table()?;
    let samples = sample_molecules(
        &ckpt.params,
        &ckpt.model,
        &table,
        &ckpt.size_policy,
        args.n,
        args.seed,
    )?;

    let records: Vec<chem::GraphRecord> = samples
        .iter()
        .map(|g| chem::GraphRecord::from_graph(g, &table))
        .collect::<chem::Result<_>>()?;
    chem::jsonl::write_records(&args.out, &records)?;

    if let Some(path) = &args.smiles {
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("writing {}", path.display()))?;
        for g in &samples {
            // one-shot ablation samples may be invalid; mark them
            match chem::smiles::write(g, &table) {
                Ok(s) => writeln!(f, "{s}")?,
                Err(_) => writeln!(f, "*invalid*")?,
            }
        }
    }
    let valid = samples.iter().filter(|g| g.is_valid(&table)).count();
    println!(
        "sampled {} molecules ({} valid) -> {}",
        samples.len(),
        valid,
        args.out.display()
    );
    Ok(())
}
