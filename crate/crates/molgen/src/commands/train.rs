use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;

use model::config::{Ablation, ModelConfig};
use model::dataset::Dataset;
use model::training::{train_with_progress, TrainConfig};
use model::Checkpoint;

use crate::util::{load_table, resolve_input, usage};

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset (JSONL graph records).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint, loss log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    /// Atom type table JSON (default: built-in QM9 table).
    #[arg(long)]
    pub types: Option<PathBuf>,
    /// TOML config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Resume from an earlier checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// KL regularizer weight.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Property regression weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Message-passing rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub k_traces: Option<usize>,
    /// Ablation to apply: A (no distance feature), B (independent edges),
    /// C (frozen decoder states).
    #[arg(long)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surrogate property to supervise (molweight or ring56).
    #[arg(long)]
    pub property: Option<String>,
    #[arg(long)]
    pub kl_warmup: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

/// Optional keys of the TOML config file, mirroring the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    latent_dim: Option<usize>,
    rounds: Option<usize>,
    hidden: Option<usize>,
    k_traces: Option<usize>,
    ablation: Option<String>,
    seed: Option<u64>,
    property: Option<String>,
    kl_warmup: Option<f64>,
    checkpoint_every: Option<usize>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let table = load_table(&args.types)?;
    let data_path = resolve_input(&args.data);
    let dataset = Dataset::load(&data_path, &table)?;

    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(resolve_input(path))
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    // precedence: flags > config file > defaults
    let latent_dim = args.latent_dim.or(file.latent_dim).unwrap_or(32);
    let mut model_cfg = ModelConfig::new(latent_dim, table.len());
    if let Some(r) = args.rounds.or(file.rounds) {
        model_cfg.rounds = r;
    }
    if let Some(h) = args.hidden.or(file.hidden) {
        model_cfg.hidden = h;
    }
    let ablation = match (&args.ablation, &file.ablation) {
        (Some(a), _) => *a,
        (None, Some(s)) => s.parse::<Ablation>().map_err(usage)?,
        (None, None) => Ablation::None,
    };
    ablation.apply(&mut model_cfg);

    let mut cfg = TrainConfig::new(model_cfg);
    cfg.epochs = args.epochs.or(file.epochs).unwrap_or(cfg.epochs);
    cfg.batch_size = args.batch.or(file.batch).unwrap_or(cfg.batch_size);
    cfg.lr = args.lr.or(file.lr).unwrap_or(cfg.lr);
    cfg.lambda_latent = args.lambda1.or(file.lambda1).unwrap_or(cfg.lambda_latent);
    cfg.lambda_property = args.lambda2.or(file.lambda2).unwrap_or(cfg.lambda_property);
    cfg.k_traces = args.k_traces.or(file.k_traces).unwrap_or(cfg.k_traces);
    cfg.kl_warmup_frac = args.kl_warmup.or(file.kl_warmup).unwrap_or(cfg.kl_warmup_frac);
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.property = args.property.clone().or(file.property);
    cfg.checkpoint_every = args
        .checkpoint_every
        .or(file.checkpoint_every)
        .unwrap_or(cfg.checkpoint_every);

    if let Some(p) = &cfg.property {
        if !model::dataset::SURROGATE_PROPERTIES.contains(&p.as_str())
            && !dataset.props.iter().any(|m| m.contains_key(p))
        {
            return Err(usage(format!(
                "property `{p}` is neither a surrogate ({:?}) nor a dataset column",
                model::dataset::SURROGATE_PROPERTIES
            )));
        }
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let resolved = serde_json::to_string_pretty(&cfg)?;
    std::fs::write(args.out.join("resolved_config.json"), &resolved)?;

    let resume = match &args.resume {
        Some(path) => Some(Checkpoint::load(&resolve_input(path))?),
        None => None,
    };

    println!(
        "training on {} molecules for {} epochs (latent {}, batch {}, seed {})",
        dataset.len(),
        cfg.epochs,
        cfg.model.latent_dim,
        cfg.batch_size,
        cfg.seed
    );
    let (ckpt, logs) = train_with_progress(&dataset, &table, &cfg, Some(&args.out), resume, |l| {
        println!(
            "epoch {:>3}: total {:.4} (types {:.4}, edges {:.4}, kl {:.4}, prop {:.4}) in {:.1}s",
            l.epoch, l.total, l.node_type, l.edge, l.kl, l.property, l.seconds
        );
    })?;
    println!(
        "finished {} epochs; checkpoint at {}",
        logs.len(),
        args.out.join("checkpoint.json").display()
    );
    let _ = ckpt;
    Ok(())
}
