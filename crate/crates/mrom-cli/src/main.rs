//! Batch driver for the model-reduction toolkit: offline training, online
//! ROM evaluation, parameter sweeps, and artifact inspection.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mrom::config::MethodKind;
use mrom::pipeline::{self, SweepAxis};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mrom",
    about = "Projection-based model reduction on nonlinear trial manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline pipeline: FOM sweeps, snapshot assembly, autoencoder
    /// training, and POD, writing checksummed artifacts.
    Offline {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for independent trajectories and cells.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the online stage against existing offline artifacts.
    Online {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Restrict to a comma-separated list of methods.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
    },
    /// Sweep one axis (dim | ntrain | subset), retraining per point where
    /// required, and emit an aggregated CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Sweep axis: dim, ntrain, or subset.
        #[arg(long)]
        axis: String,
        /// Restrict to a comma-separated list of methods.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Override the reduced dimensions swept by --axis dim.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
    },
    /// Print the header of any artifact file.
    Inspect {
        /// Artifact path (trajectory, snapshots, checkpoint, POD, ROM run).
        file: PathBuf,
    },
}

fn apply_overrides(
    cfg: &mut mrom::config::ExperimentConfig,
    seed: Option<u64>,
    methods: &[String],
    dims: &[usize],
) -> anyhow::Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if !methods.is_empty() {
        cfg.methods = methods
            .iter()
            .map(|m| MethodKind::parse(m))
            .collect::<mrom::Result<_>>()?;
    }
    if !dims.is_empty() {
        cfg.dims = dims.to_vec();
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Offline {
            config,
            out,
            seed,
            threads,
        } => {
            let (mut cfg, text) = pipeline::load_config_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            apply_overrides(&mut cfg, seed, &[], &[])?;
            let out = pipeline::default_out_dir(out.as_deref());
            pipeline::cmd_offline(&cfg, &out, threads, &text)?;
            println!("offline artifacts written to {}", out.display());
            Ok(())
        }
        Command::Online {
            config,
            out,
            seed,
            threads,
            method,
        } => {
            let (mut cfg, _) = pipeline::load_config_file(&config)?;
            apply_overrides(&mut cfg, seed, &method, &[])?;
            let out = pipeline::default_out_dir(out.as_deref());
            let failures = pipeline::cmd_online(&cfg, &out, threads)?;
            println!(
                "online results written to {} ({failures} failed cells)",
                out.join("online").display()
            );
            if failures > 0 {
                bail!("{failures} cells failed");
            }
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            seed,
            threads,
            axis,
            method,
            dims,
        } => {
            let axis = match axis.as_str() {
                "dim" => SweepAxis::Dim,
                "ntrain" => SweepAxis::Ntrain,
                "subset" => SweepAxis::Subset,
                other => bail!("unknown sweep axis {other:?} (expected dim|ntrain|subset)"),
            };
            let (mut cfg, _) = pipeline::load_config_file(&config)?;
            apply_overrides(&mut cfg, seed, &method, &dims)?;
            let out = pipeline::default_out_dir(out.as_deref());
            let failures = pipeline::cmd_sweep(&cfg, axis, &out, threads)?;
            println!(
                "sweep results written to {} ({failures} failed cells)",
                out.join("sweep").display()
            );
            if failures > 0 {
                bail!("{failures} cells failed");
            }
            Ok(())
        }
        Command::Inspect { file } => {
            let bytes = std::fs::read(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            println!("{}", mrom::io::inspect(&bytes)?);
            Ok(())
        }
    }
}
