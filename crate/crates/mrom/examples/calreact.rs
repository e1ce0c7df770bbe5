// Calibration for the reduced-grid reacting-flow criterion (not shipped).
use mrom::analysis::{projection_error, relative_error};
use mrom::fom::{simulate_fom, FomModel, LinearMultistepScheme, NewtonConfig, ReactingModel};
use mrom::net::{AutoencoderSpec, InitScheme};
use mrom::offline::{collect_snapshots, pod_basis, train_autoencoder, SubsetRule, TrainConfig};
use mrom::rom::{manifold_from_autoencoder, rom_simulate, RomMethod, SolverConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let (nx, ny) = (32usize, 16usize);
    let model = ReactingModel::new(nx, ny);
    let scheme = LinearMultistepScheme::bdf2(1e-4);
    let steps = 600;
    let newton = NewtonConfig::default();
    let train_mu: Vec<Vec<f64>> = vec![
        vec![2.3375e12, 5.625e3], vec![6.5e12, 5.625e3],
        vec![2.3375e12, 9.0e3], vec![6.5e12, 9.0e3],
    ];
    let t0 = Instant::now();
    let trajs: Vec<_> = train_mu.iter()
        .map(|mu| simulate_fom(&model, &scheme, mu, steps, &newton).unwrap())
        .collect();
    println!("FOM sweep: {:.1?}", t0.elapsed());
    let mut w = collect_snapshots(&trajs, SubsetRule::EquispacedM(150)).unwrap();
    w.append_zero_column();
    println!("snapshots: {} columns, N = {}", w.n_columns(), w.state_dim());

    let mu1 = vec![2.5e12, 5.85e3];
    let t1 = Instant::now();
    let fom_traj = simulate_fom(&model, &scheme, &mu1, steps, &newton).unwrap();
    println!("online FOM: {:.1?}", t1.elapsed());
    // sanity: how hot does the flame get
    let last = fom_traj.states.last().unwrap();
    let field = nx * ny;
    let tmax = last[..field].iter().cloned().fold(0.0f64, f64::max);
    let h2o_max = last[3*field..].iter().cloned().fold(0.0f64, f64::max);
    println!("T_max = {tmax:.1}, H2O_max = {h2o_max:.4}");

    let pod = pod_basis(&w, 3).unwrap();
    let pod_proj = projection_error(&fom_traj, &pod.basis).unwrap();
    println!("POD projection error (p=3): {pod_proj:.4e}");

    let spec = AutoencoderSpec::reacting(nx, ny, 4, 3).unwrap();
    let cfg = TrainConfig {
        validation_fraction: 0.1,
        learning_rate: lr,
        batch_size: 20,
        max_epochs: epochs,
        patience: epochs,
        init: InitScheme::He,
        seed,
        log_every: 20,
        ..TrainConfig::default()
    };
    let t2 = Instant::now();
    let trained = train_autoencoder(&w, &spec, &cfg).unwrap();
    println!("training: {:.1?} (best epoch {} val {:.4e})", t2.elapsed(), trained.best_epoch, trained.best_val_loss);
    let x0 = model.initial_state(&mu1);
    let manifold = manifold_from_autoencoder(trained.model, &x0).unwrap();
    let t3 = Instant::now();
    match rom_simulate(&manifold, &scheme, &mu1, steps, RomMethod::Lspg, &model, &SolverConfig::default()) {
        Ok(sol) => println!("manifold-LSPG rel err {:.4e} ({:.1?})  [target: < {pod_proj:.4e}]",
            relative_error(&fom_traj, &sol).unwrap(), t3.elapsed()),
        Err(e) => println!("manifold-LSPG FAILED: {e}"),
    }
    println!("total {:.1?}", t0.elapsed());
}
