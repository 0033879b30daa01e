use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use autodiff::Tensor;
use model::dataset::Dataset;
use model::encoder::encode_to_tensors;
use model::metrics::spearman;
use model::propopt::{optimize_molecule, AscentConfig};
use model::{derive_seed, Checkpoint};

use crate::util::resolve_input;

#[derive(Args)]
pub struct OptimizeArgs {
    /// Checkpoint with a trained property head.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output trajectory CSV.
    #[arg(long, default_value = "trajectories.csv")]
    pub out: PathBuf,
    /// Number of independent ascent trajectories.
    #[arg(long, default_value_t = 20)]
    pub n_trajectories: usize,
    /// Decoded points per trajectory.
    #[arg(long, default_value_t = 6)]
    pub points: usize,
    /// Ascent step size.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Prior pull weight (L2 penalty toward the origin).
    #[arg(long, default_value_t = 0.02)]
    pub rho: f64,
    #[arg(long, default_value_t = 80)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from encodings of this dataset instead of prior samples.
    #[arg(long)]
    pub from_data: Option<PathBuf>,
}

pub fn run(args: OptimizeArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&resolve_input(&args.checkpoint))?;
    let table = ckpt.table()?;
    let ascent = AscentConfig {
        step_size: args.eta,
        max_iters: args.max_iters,
        prior_weight: args.rho,
        tolerance: args.tolerance,
        max_halvings: 10,
    };

    let starts: Vec<Vec<Tensor>> = match &args.from_data {
        Some(path) => {
            let data = Dataset::load(&resolve_input(path), &table)?;
            data.graphs
                .iter()
                .take(args.n_trajectories)
                .enumerate()
                .map(|(i, g)| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 20, i as u64));
                    Ok(encode_to_tensors(&ckpt.params, &ckpt.model, g, true, &mut rng)?)
                })
                .collect::<Result<_>>()?
        }
        None => (0..args.n_trajectories)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 21, i as u64));
                let n = ckpt.size_policy.sample(&mut rng);
                (0..n)
                    .map(|_| {
                        Tensor::vector(
                            (0..ckpt.model.latent_dim)
                                .map(|_| rng.sample(StandardNormal))
                                .collect(),
                        )
                    })
                    .collect()
            })
            .collect(),
    };

    let mut f = std::fs::File::create(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(f, "trajectory,point,ascent_step,predicted,actual,smiles")?;
    let mut predicted_all = Vec::new();
    let mut actual_all = Vec::new();
    for (t, z0) in starts.iter().enumerate() {
        let rows = optimize_molecule(&ckpt, z0, &ascent, args.points)?;
        for (p, row) in rows.iter().enumerate() {
            writeln!(
                f,
                "{t},{p},{},{:.6},{:.6},{}",
                row.step, row.predicted, row.actual, row.smiles
            )?;
            predicted_all.push(row.predicted);
            actual_all.push(row.actual);
        }
    }
    let corr = spearman(&predicted_all, &actual_all);
    println!(
        "{} trajectories x {} points; Spearman(predicted, actual) = {corr:.3} -> {}",
        starts.len(),
        args.points,
        args.out.display()
    );
    Ok(())
}
