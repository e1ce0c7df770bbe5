//! Batch experiment driver: the offline pipeline (FOM sweeps, snapshot
//! assembly, training, POD), online ROM runs with metric emission, and
//! sweeps over reduced dimension, training-set size, or snapshot subset.
//!
//! Artifacts are written atomically (a `.partial` file renamed on success,
//! so an aborted stage leaves its partial output visible) and recorded in a
//! checksum manifest that the online stage verifies. Every CSV row carries
//! the configuration hash.

use crate::analysis::{
    error_bound_check, lipschitz_estimate, manifold_projection_error, optimal_basis,
    projection_error, relative_error, ErrorReport,
};
use crate::config::{ExperimentConfig, MethodKind, Problem, SchemeKind};
use crate::error::{Error, Result};
use crate::fom::{
    simulate_fom, BurgersModel, FomModel, LinearMultistepScheme, NewtonConfig, ReactingModel,
    Trajectory,
};
use crate::io;
use crate::net::{AutoencoderSpec, InitScheme};
use crate::offline::{
    collect_snapshots, pod_basis, train_autoencoder, PodBasis, SnapshotMatrix, SubsetRule,
    TrainConfig,
};
use crate::rom::{
    manifold_from_autoencoder, manifold_from_pod, rom_simulate, Manifold, RomMethod, RomSolution,
    SolverConfig,
};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Dim,
    Ntrain,
    Subset,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::Dim => "dim",
            SweepAxis::Ntrain => "ntrain",
            SweepAxis::Subset => "subset",
        }
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

pub fn build_model(cfg: &ExperimentConfig) -> Box<dyn FomModel> {
    match cfg.problem {
        Problem::Burgers => Box::new(BurgersModel::new(cfg.grid[0])),
        Problem::Reacting => Box::new(ReactingModel::new(cfg.grid[0], cfg.grid[1])),
    }
}

pub fn build_scheme(cfg: &ExperimentConfig) -> LinearMultistepScheme {
    match cfg.scheme {
        SchemeKind::Bdf1 => LinearMultistepScheme::backward_euler(cfg.dt),
        SchemeKind::Bdf2 => LinearMultistepScheme::bdf2(cfg.dt),
    }
}

pub fn build_ae_spec(cfg: &ExperimentConfig, latent: usize) -> Result<AutoencoderSpec> {
    match cfg.problem {
        Problem::Burgers => AutoencoderSpec::burgers(cfg.grid[0], 1, latent),
        Problem::Reacting => AutoencoderSpec::reacting(cfg.grid[0], cfg.grid[1], 4, latent),
    }
}

pub fn build_train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        validation_fraction: cfg.validation_fraction,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        init: match cfg.problem {
            Problem::Burgers => InitScheme::Xavier,
            Problem::Reacting => InitScheme::He,
        },
        seed: cfg.seed,
        ..TrainConfig::default()
    }
}

fn solver_config(cfg: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        rel_tol: cfg.tolerance,
        max_iters: cfg.max_iterations,
        ..SolverConfig::default()
    }
}

/// Write bytes atomically and record them in the manifest.
fn write_artifact(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    manifest: &mut io::Manifest,
) -> Result<()> {
    let partial = dir.join(format!("{name}.partial"));
    fs::write(&partial, bytes)?;
    fs::rename(&partial, dir.join(name))?;
    manifest.record(name, bytes);
    Ok(())
}

fn load_verified(dir: &Path, name: &str, manifest: &io::Manifest) -> Result<Vec<u8>> {
    let bytes = fs::read(dir.join(name))?;
    manifest.verify(name, &bytes)?;
    Ok(bytes)
}

fn traj_file_name(i: usize) -> String {
    format!("train_traj_{i:03}.bin")
}

/// Offline stage: FOM sweeps over the training lattice, snapshot assembly
/// with the appended zero column, scaling + autoencoder training, and the
/// POD basis, all checksummed into `manifest.txt`.
pub fn cmd_offline(cfg: &ExperimentConfig, out: &Path, threads: usize, config_text: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut manifest = io::Manifest::default();
    write_artifact(out, "config.txt", config_text.as_bytes(), &mut manifest)?;

    let model = build_model(cfg);
    let scheme = build_scheme(cfg);
    let newton = NewtonConfig::default();
    let points = cfg.training_points();

    let trajectories: Vec<Trajectory> = stage("fom-sweep", || {
        use rayon::prelude::*;
        let results: Vec<Result<Trajectory>> = pool.install(|| {
            points
                .par_iter()
                .map(|mu| simulate_fom(model.as_ref(), &scheme, mu, cfg.steps, &newton))
                .collect()
        });
        results.into_iter().collect()
    })?;
    stage("fom-sweep", || {
        for (i, t) in trajectories.iter().enumerate() {
            let mut buf = Vec::new();
            io::write_trajectory(t, &mut buf)?;
            write_artifact(out, &traj_file_name(i), &buf, &mut manifest)?;
        }
        Ok(())
    })?;

    let snapshots = stage("snapshots", || {
        let mut w = collect_snapshots(&trajectories, cfg.subset)?;
        w.append_zero_column();
        let mut buf = Vec::new();
        io::write_snapshots(&w, &mut buf)?;
        write_artifact(out, "snapshots.bin", &buf, &mut manifest)?;
        Ok(w)
    })?;

    if cfg.methods.iter().any(|m| m.needs_autoencoder()) {
        stage("training", || {
            let spec = build_ae_spec(cfg, cfg.latent_dim)?;
            let trained = train_autoencoder(&snapshots, &spec, &build_train_config(cfg))?;
            let mut buf = Vec::new();
            crate::net::write_checkpoint(&trained.model, &mut buf)?;
            write_artifact(out, "autoencoder.bin", &buf, &mut manifest)?;
            let mut csv = String::from("epoch,train_loss,val_loss\n");
            for r in &trained.history {
                csv.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
            }
            write_artifact(out, "loss_history.csv", csv.as_bytes(), &mut manifest)?;
            Ok(())
        })?;
    }

    stage("pod", || {
        let p = cfg
            .dims
            .iter()
            .copied()
            .chain([cfg.latent_dim])
            .max()
            .unwrap_or(cfg.latent_dim);
        let pod = pod_basis(&snapshots, p)?;
        let mut buf = Vec::new();
        io::write_pod(&pod, &mut buf)?;
        write_artifact(out, "pod.bin", &buf, &mut manifest)?;
        Ok(())
    })?;

    fs::write(out.join("manifest.txt"), manifest.to_text())?;
    Ok(())
}

fn method_to_rom(method: MethodKind) -> RomMethod {
    match method {
        MethodKind::PodGalerkin | MethodKind::ManifoldGalerkin => RomMethod::Galerkin,
        MethodKind::PodLspg | MethodKind::ManifoldLspg => RomMethod::Lspg,
        MethodKind::EncoderGalerkin => RomMethod::EncoderGalerkin,
    }
}

/// One (online mu, method) result row destined for the CSV.
#[derive(Clone, Debug)]
pub struct CellRow {
    pub axis: String,
    pub value: String,
    pub mu: Vec<f64>,
    pub dim: usize,
    pub method: MethodKind,
    pub report: Option<ErrorReport>,
    pub error: Option<String>,
}

pub fn csv_header() -> &'static str {
    "config_hash,axis,value,mu1,mu2,dim,method,relative_error,pod_projection_error,\
     optimal_projection_error,manifold_projection_error,bound_violations,\
     solver_iterations,final_residual_norm,status\n"
}

pub fn csv_row(hash: u64, row: &CellRow) -> String {
    let fmt_opt = |o: Option<f64>| o.map(|v| v.to_string()).unwrap_or_default();
    match &row.report {
        Some(r) => format!(
            "{:016x},{},{},{},{},{},{},{},{},{},{},{},{},{},ok\n",
            hash,
            row.axis,
            row.value,
            row.mu[0],
            row.mu[1],
            row.dim,
            row.method.label(),
            r.relative_error,
            fmt_opt(r.pod_projection_error),
            fmt_opt(r.optimal_projection_error),
            fmt_opt(r.manifold_projection_error),
            r.bound
                .as_ref()
                .map(|b| b.violations().to_string())
                .unwrap_or_default(),
            r.solver_iterations_total,
            r.final_residual_norm,
        ),
        None => format!(
            "{:016x},{},{},{},{},{},{},,,,,,,,error: {}\n",
            hash,
            row.axis,
            row.value,
            row.mu[0],
            row.mu[1],
            row.dim,
            row.method.label(),
            row.error.as_deref().unwrap_or("unknown").replace(',', ";"),
        ),
    }
}

/// Everything needed to run one cell.
struct CellContext<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a dyn FomModel,
    scheme: &'a LinearMultistepScheme,
    pod: &'a PodBasis,
    autoencoder: Option<&'a crate::net::AutoencoderModel>,
    fom_traj: &'a Trajectory,
    dim: usize,
}

fn run_cell(ctx: &CellContext, mu: &[f64], method: MethodKind) -> Result<(ErrorReport, RomSolution)> {
    let x0 = ctx.model.initial_state(mu);
    let manifold: Box<dyn Manifold> = if method.needs_autoencoder() {
        let model = ctx
            .autoencoder
            .ok_or_else(|| Error::Config("method requires a trained autoencoder".into()))?;
        if model.latent_dim() != ctx.dim {
            return Err(Error::Config(format!(
                "checkpoint latent dimension {} does not match requested {}",
                model.latent_dim(),
                ctx.dim
            )));
        }
        Box::new(manifold_from_autoencoder(model.clone(), &x0)?)
    } else {
        if ctx.dim > ctx.pod.dim() {
            return Err(Error::Rank {
                requested: ctx.dim,
                rank: ctx.pod.dim(),
            });
        }
        Box::new(manifold_from_pod(&ctx.pod.truncated(ctx.dim).basis, &x0)?)
    };
    let solver = solver_config(ctx.cfg);
    let sol = rom_simulate(
        manifold.as_ref(),
        ctx.scheme,
        mu,
        ctx.cfg.steps,
        method_to_rom(method),
        ctx.model,
        &solver,
    )?;
    let rel = relative_error(ctx.fom_traj, &sol)?;
    let toggles = &ctx.cfg.metrics;
    let pod_proj = if toggles.pod_projection {
        Some(projection_error(
            ctx.fom_traj,
            &ctx.pod.truncated(ctx.dim).basis,
        )?)
    } else {
        None
    };
    let opt_proj = if toggles.optimal_projection {
        let opt = optimal_basis(ctx.fom_traj, ctx.dim)?;
        Some(projection_error(ctx.fom_traj, &opt.basis)?)
    } else {
        None
    };
    let man_proj = if toggles.manifold_projection {
        Some(manifold_projection_error(ctx.fom_traj, manifold.as_ref())?)
    } else {
        None
    };
    let bound = if toggles.error_bound {
        // kappa from trajectory samples, inflated by a safety factor of two
        let stride = (ctx.fom_traj.states.len() / 8).max(1);
        let samples: Vec<Vec<f64>> = ctx
            .fom_traj
            .states
            .iter()
            .step_by(stride)
            .cloned()
            .collect();
        let t_mid = 0.5 * ctx.cfg.dt * ctx.cfg.steps as f64;
        let kappa = 2.0 * lipschitz_estimate(ctx.model, &samples, t_mid, mu)?;
        Some(error_bound_check(
            ctx.model,
            ctx.fom_traj,
            &sol.states,
            ctx.scheme,
            mu,
            kappa,
        )?)
    } else {
        None
    };
    let report = ErrorReport {
        method: method.label().to_string(),
        mu: mu.to_vec(),
        dim: ctx.dim,
        relative_error: rel,
        pod_projection_error: pod_proj,
        optimal_projection_error: opt_proj,
        manifold_projection_error: man_proj,
        bound,
        solver_iterations_total: sol.diagnostics.iter().map(|d| d.iterations as u64).sum(),
        final_residual_norm: sol
            .diagnostics
            .last()
            .map(|d| d.residual_norm)
            .unwrap_or(0.0),
    };
    Ok((report, sol))
}

fn read_manifest(dir: &Path) -> Result<io::Manifest> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    io::Manifest::from_text(&text)
}

struct OfflineArtifacts {
    pod: PodBasis,
    autoencoder: Option<crate::net::AutoencoderModel>,
    trajectories: Vec<Trajectory>,
}

fn load_offline(cfg: &ExperimentConfig, dir: &Path) -> Result<OfflineArtifacts> {
    let manifest = read_manifest(dir)?;
    let config_bytes = load_verified(dir, "config.txt", &manifest)?;
    if io::fnv1a_64(&config_bytes) != cfg.config_hash {
        return Err(Error::Config(
            "configuration does not match the offline artifacts".into(),
        ));
    }
    let pod = io::read_pod(&mut load_verified(dir, "pod.bin", &manifest)?.as_slice())?;
    let autoencoder = if cfg.methods.iter().any(|m| m.needs_autoencoder()) {
        Some(crate::net::read_checkpoint(
            &mut load_verified(dir, "autoencoder.bin", &manifest)?.as_slice(),
        )?)
    } else {
        None
    };
    let n_traj = cfg.lattice.0 * cfg.lattice.1;
    let mut trajectories = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let bytes = load_verified(dir, &traj_file_name(i), &manifest)?;
        trajectories.push(io::read_trajectory(&mut bytes.as_slice())?);
    }
    Ok(OfflineArtifacts {
        pod,
        autoencoder,
        trajectories,
    })
}

/// Online stage: for each online parameter instance and selected method,
/// run the ROM at the trained latent dimension, compute the enabled
/// metrics, and emit per-cell JSON reports plus an aggregate CSV.
/// Per-cell failures are recorded and the run continues; the number of
/// failed cells is returned.
pub fn cmd_online(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<usize> {
    let artifacts = load_offline(cfg, out)?;
    let online_dir = out.join("online");
    fs::create_dir_all(&online_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let model = build_model(cfg);
    let scheme = build_scheme(cfg);
    let newton = NewtonConfig::default();

    use rayon::prelude::*;
    let fom_trajs: Vec<Trajectory> = pool.install(|| {
        cfg.online
            .par_iter()
            .map(|mu| simulate_fom(model.as_ref(), &scheme, mu, cfg.steps, &newton))
            .collect::<Result<Vec<_>>>()
    })?;
    for (i, t) in fom_trajs.iter().enumerate() {
        let mut buf = Vec::new();
        io::write_trajectory(t, &mut buf)?;
        fs::write(online_dir.join(format!("fom_{i:02}.bin")), &buf)?;
    }

    let cells: Vec<(usize, MethodKind)> = cfg
        .online
        .iter()
        .enumerate()
        .flat_map(|(i, _)| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();
    let rows: Vec<CellRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(mu_idx, method)| {
                let mu = &cfg.online[mu_idx];
                let ctx = CellContext {
                    cfg,
                    model: model.as_ref(),
                    scheme: &scheme,
                    pod: &artifacts.pod,
                    autoencoder: artifacts.autoencoder.as_ref(),
                    fom_traj: &fom_trajs[mu_idx],
                    dim: cfg.latent_dim,
                };
                let outcome = run_cell(&ctx, mu, method);
                let mut row = CellRow {
                    axis: "online".into(),
                    value: String::new(),
                    mu: mu.clone(),
                    dim: cfg.latent_dim,
                    method,
                    report: None,
                    error: None,
                };
                match outcome {
                    Ok((report, sol)) => {
                        let mut buf = Vec::new();
                        if let Err(e) = io::write_rom_solution(&sol, &mut buf) {
                            row.error = Some(e.to_string());
                            return row;
                        }
                        let stem = format!("{mu_idx:02}_{}", method.label());
                        if let Err(e) = fs::write(online_dir.join(format!("rom_{stem}.bin")), &buf)
                        {
                            row.error = Some(e.to_string());
                            return row;
                        }
                        match serde_json::to_vec_pretty(&report) {
                            Ok(json) => {
                                if let Err(e) =
                                    fs::write(online_dir.join(format!("report_{stem}.json")), json)
                                {
                                    row.error = Some(e.to_string());
                                    return row;
                                }
                            }
                            Err(e) => {
                                row.error = Some(e.to_string());
                                return row;
                            }
                        }
                        row.report = Some(report);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            })
            .collect()
    });

    let mut csv = String::from(csv_header());
    let mut failures = 0;
    for row in &rows {
        if row.report.is_none() {
            failures += 1;
            eprintln!(
                "cell failed: mu={:?} method={}: {}",
                row.mu,
                row.method.label(),
                row.error.as_deref().unwrap_or("unknown")
            );
        }
        csv.push_str(&csv_row(cfg.config_hash, row));
    }
    fs::write(online_dir.join("results.csv"), csv)?;
    Ok(failures)
}

/// Sweep stage: re-run the online protocol along one axis. The dimension
/// axis retrains the autoencoder per point (and truncates the POD basis);
/// the training-set-size and subset axes rebuild the snapshot matrix from
/// the cached offline trajectories and retrain per point.
pub fn cmd_sweep(cfg: &ExperimentConfig, axis: SweepAxis, out: &Path, threads: usize) -> Result<usize> {
    let artifacts = load_offline(cfg, out)?;
    let sweep_dir = out.join("sweep");
    fs::create_dir_all(&sweep_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let model = build_model(cfg);
    let scheme = build_scheme(cfg);
    let newton = NewtonConfig::default();
    let needs_ae = cfg.methods.iter().any(|m| m.needs_autoencoder());

    use rayon::prelude::*;
    let fom_trajs: Vec<Trajectory> = pool.install(|| {
        cfg.online
            .par_iter()
            .map(|mu| simulate_fom(model.as_ref(), &scheme, mu, cfg.steps, &newton))
            .collect::<Result<Vec<_>>>()
    })?;

    // sweep points: (value label, dim, trained model, pod basis)
    struct SweepPoint {
        value: String,
        dim: usize,
        autoencoder: Option<crate::net::AutoencoderModel>,
        pod: PodBasis,
    }

    let snapshots_for = |idx: &[usize], rule: SubsetRule| -> Result<SnapshotMatrix> {
        let subset: Vec<Trajectory> = idx.iter().map(|&i| artifacts.trajectories[i].clone()).collect();
        let mut w = collect_snapshots(&subset, rule)?;
        w.append_zero_column();
        Ok(w)
    };
    let retrain = |w: &SnapshotMatrix, latent: usize| -> Result<crate::net::AutoencoderModel> {
        let spec = build_ae_spec(cfg, latent)?;
        Ok(train_autoencoder(w, &spec, &build_train_config(cfg))?.model)
    };

    let mut points: Vec<SweepPoint> = Vec::new();
    match axis {
        SweepAxis::Dim => {
            let dims = if cfg.dims.is_empty() {
                vec![cfg.latent_dim]
            } else {
                cfg.dims.clone()
            };
            let all: Vec<usize> = (0..artifacts.trajectories.len()).collect();
            let w = snapshots_for(&all, cfg.subset)?;
            for &d in &dims {
                let autoencoder = if needs_ae { Some(retrain(&w, d)?) } else { None };
                let pod = if d <= artifacts.pod.dim() {
                    artifacts.pod.truncated(d)
                } else {
                    pod_basis(&w, d)?
                };
                points.push(SweepPoint {
                    value: d.to_string(),
                    dim: d,
                    autoencoder,
                    pod,
                });
            }
        }
        SweepAxis::Ntrain => {
            for &n in &cfg.ntrain_values {
                let idx = cfg.training_subset_indices(n);
                let w = snapshots_for(&idx, cfg.subset)?;
                let autoencoder = if needs_ae { Some(retrain(&w, cfg.latent_dim)?) } else { None };
                let pod = pod_basis(&w, cfg.latent_dim)?;
                points.push(SweepPoint {
                    value: n.to_string(),
                    dim: cfg.latent_dim,
                    autoencoder,
                    pod,
                });
            }
        }
        SweepAxis::Subset => {
            let all: Vec<usize> = (0..artifacts.trajectories.len()).collect();
            for rule in &cfg.subset_values {
                let label = match rule {
                    SubsetRule::All => "all".to_string(),
                    SubsetRule::FirstM(m) => format!("first:{m}"),
                    SubsetRule::EquispacedM(m) => format!("equispaced:{m}"),
                };
                let w = snapshots_for(&all, *rule)?;
                let autoencoder = if needs_ae { Some(retrain(&w, cfg.latent_dim)?) } else { None };
                let pod = pod_basis(&w, cfg.latent_dim)?;
                points.push(SweepPoint {
                    value: label,
                    dim: cfg.latent_dim,
                    autoencoder,
                    pod,
                });
            }
        }
    }

    let mut rows: Vec<CellRow> = Vec::new();
    for point in &points {
        let cells: Vec<(usize, MethodKind)> = cfg
            .online
            .iter()
            .enumerate()
            .flat_map(|(i, _)| cfg.methods.iter().map(move |&m| (i, m)))
            .collect();
        let point_rows: Vec<CellRow> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(mu_idx, method)| {
                    let mu = &cfg.online[mu_idx];
                    let ctx = CellContext {
                        cfg,
                        model: model.as_ref(),
                        scheme: &scheme,
                        pod: &point.pod,
                        autoencoder: point.autoencoder.as_ref(),
                        fom_traj: &fom_trajs[mu_idx],
                        dim: point.dim,
                    };
                    let mut row = CellRow {
                        axis: axis.label().into(),
                        value: point.value.clone(),
                        mu: mu.clone(),
                        dim: point.dim,
                        method,
                        report: None,
                        error: None,
                    };
                    match run_cell(&ctx, mu, method) {
                        Ok((report, _sol)) => row.report = Some(report),
                        Err(e) => row.error = Some(e.to_string()),
                    }
                    row
                })
                .collect()
        });
        rows.extend(point_rows);
    }

    let mut csv = String::from(csv_header());
    let mut failures = 0;
    for row in &rows {
        if row.report.is_none() {
            failures += 1;
            eprintln!(
                "sweep cell failed: {}={} mu={:?} method={}: {}",
                axis.label(),
                row.value,
                row.mu,
                row.method.label(),
                row.error.as_deref().unwrap_or("unknown")
            );
        }
        csv.push_str(&csv_row(cfg.config_hash, row));
    }
    fs::write(sweep_dir.join(format!("sweep_{}.csv", axis.label())), csv)?;
    Ok(failures)
}

/// Read, parse, and hash a configuration file.
pub fn load_config_file(path: &Path) -> Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path)?;
    let cfg = crate::config::parse_config(&text)?;
    Ok((cfg, text))
}

/// Resolve the output directory (the configuration has no output key; the
/// CLI always passes one).
pub fn default_out_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("mrom-out"))
}
