use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use autodiff::{ParamBindings, Tape};
use model::dataset::Dataset;
use model::decoder::{bind_decoder, decode_from_z};
use model::encoder::encode_to_tensors;
use model::{derive_seed, Checkpoint};

use crate::util::resolve_input;

#[derive(Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Molecules to encode and decode.
    #[arg(long)]
    pub data: PathBuf,
    /// How many molecules from the head of the dataset.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file of input/decoded SMILES pairs (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ReconstructArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&resolve_input(&args.checkpoint))?;
    let table = ckpt.table()?;
    let data = Dataset::load(&resolve_input(&args.data), &table)?;

    let mut lines = Vec::new();
    let mut exact = 0usize;
    for (i, g) in data.graphs.iter().take(args.n).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 30, i as u64));
        let z = encode_to_tensors(&ckpt.params, &ckpt.model, g, true, &mut rng)?;
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &ckpt.params)?;
        let z_ids: Vec<autodiff::NodeId> = z.iter().map(|t| tape.leaf(t.clone())).collect();
        let decoded = decode_from_z(
            &mut tape,
            &weights,
            &ckpt.model,
            &table,
            &z_ids,
            &mut rng,
            true,
        )?;
        let input = chem::smiles::write(g, &table)?;
        let output = chem::smiles::write(&decoded, &table)?;
        if chem::canonical_key(g) == chem::canonical_key(&decoded) {
            exact += 1;
        }
        lines.push(format!("{input}\t{output}"));
    }

    match &args.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .with_context(|| format!("writing {}", path.display()))?;
            for l in &lines {
                writeln!(f, "{l}")?;
            }
        }
        None => {
            for l in &lines {
                println!("{l}");
            }
        }
    }
    println!(
        "reconstructed {} molecules, {} exact matches",
        lines.len(),
        exact
    );
    Ok(())
}
