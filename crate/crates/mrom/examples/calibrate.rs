// Calibration driver for the desk-scale reproduction settings (not shipped).
use mrom::analysis::{optimal_basis, projection_error, relative_error};
use mrom::fom::{simulate_fom, BurgersModel, FomModel, LinearMultistepScheme, NewtonConfig};
use mrom::net::{AutoencoderSpec, InitScheme};
use mrom::offline::{collect_snapshots, pod_basis, train_autoencoder, SubsetRule, TrainConfig};
use mrom::rom::{manifold_from_autoencoder, manifold_from_pod, rom_simulate, RomMethod, SolverConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);

    let n = 256;
    let steps = 500;
    let model = BurgersModel::new(n);
    let scheme = LinearMultistepScheme::backward_euler(0.07);
    let newton = NewtonConfig::default();
    // 5 equispaced points of the flattened 10x8 paper lattice
    let train_mu: Vec<Vec<f64>> = [0usize, 19, 39, 59, 79].iter().map(|&idx| {
        let (i, j) = (idx / 8, idx % 8);
        vec![4.25 + 1.25 / 9.0 * i as f64, 0.015 + 0.015 / 7.0 * j as f64]
    }).collect();
    eprintln!("train points: {train_mu:?}");
    let t0 = Instant::now();
    let trajs: Vec<_> = train_mu.iter()
        .map(|mu| simulate_fom(&model, &scheme, mu, steps, &newton).unwrap())
        .collect();
    println!("FOM sweep: {:.1?}", t0.elapsed());

    let mut w = collect_snapshots(&trajs, SubsetRule::All).unwrap();
    w.append_zero_column();
    println!("snapshots: {} columns", w.n_columns());

    let spec = AutoencoderSpec::burgers(n, 1, 5).unwrap();
    let patience: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(epochs);
    let batch: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(20);
    let cfg = TrainConfig {
        validation_fraction: 0.1,
        learning_rate: lr,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        init: InitScheme::Xavier,
        seed,
        log_every: 10,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let trained = train_autoencoder(&w, &spec, &cfg).unwrap();
    let dt_train = t1.elapsed();
    println!("training: {:.1?} ({} epochs done, best epoch {} val {:.4e})",
        dt_train, trained.history.len(), trained.best_epoch, trained.best_val_loss);
    for r in trained.history.iter().step_by(20) {
        println!("  epoch {:4}  train {:.4e}  val {:.4e}", r.epoch, r.train_loss, r.val_loss);
    }

    // persist the trained model for later diagnostics
    {
        let mut buf = Vec::new();
        mrom::net::write_checkpoint(&trained.model, &mut buf).unwrap();
        std::fs::write(format!("/tmp/cal_model_s{seed}_lr{lr:e}.bin"), &buf).unwrap();
    }
    let mu_online = vec![4.3, 0.021];
    let t2 = Instant::now();
    let fom_traj = simulate_fom(&model, &scheme, &mu_online, steps, &newton).unwrap();
    println!("online FOM: {:.1?}", t2.elapsed());
    let x0 = model.initial_state(&mu_online);

    let pod = pod_basis(&w, 5).unwrap();
    let pod_manifold = manifold_from_pod(&pod.basis, &x0).unwrap();
    let solver = SolverConfig::default();

    let t3 = Instant::now();
    let ae_manifold = manifold_from_autoencoder(trained.model.clone(), &x0).unwrap();
    match rom_simulate(&ae_manifold, &scheme, &mu_online, steps, RomMethod::Lspg, &model, &solver) {
        Ok(sol) => println!("manifold-LSPG rel err {:.4e}  ({:.1?})",
            relative_error(&fom_traj, &sol).unwrap(), t3.elapsed()),
        Err(e) => println!("manifold-LSPG FAILED: {e}"),
    }
    let t4 = Instant::now();
    match rom_simulate(&ae_manifold, &scheme, &mu_online, steps, RomMethod::Galerkin, &model, &solver) {
        Ok(sol) => println!("manifold-G    rel err {:.4e}  ({:.1?})",
            relative_error(&fom_traj, &sol).unwrap(), t4.elapsed()),
        Err(e) => println!("manifold-G FAILED: {e}"),
    }
    match rom_simulate(&pod_manifold, &scheme, &mu_online, steps, RomMethod::Lspg, &model, &solver) {
        Ok(sol) => println!("POD-LSPG      rel err {:.4e}", relative_error(&fom_traj, &sol).unwrap()),
        Err(e) => println!("POD-LSPG FAILED: {e}"),
    }
    match rom_simulate(&pod_manifold, &scheme, &mu_online, steps, RomMethod::Galerkin, &model, &solver) {
        Ok(sol) => println!("POD-G         rel err {:.4e}", relative_error(&fom_traj, &sol).unwrap()),
        Err(e) => println!("POD-G FAILED: {e}"),
    }
    // representation quality on the online trajectory
    let mut rec_num = 0.0; let mut rec_den = 0.0;
    for x in fom_traj.states.iter().skip(1) {
        let x0a = &fom_traj.states[0];
        let dev: Vec<f64> = x.iter().zip(x0a.iter()).map(|(a,b)| a-b).collect();
        let rec = trained.model.reconstruct(&dev).unwrap();
        rec_num += dev.iter().zip(rec.iter()).map(|(a,b)| (a-b)*(a-b)).sum::<f64>();
        rec_den += x.iter().map(|v| v*v).sum::<f64>();
    }
    println!("online reconstruction err {:.4e}", (rec_num/rec_den).sqrt());
    match mrom::analysis::manifold_projection_error(&fom_traj, &ae_manifold) {
        Ok(e) => println!("manifold proj err {:.4e}", e),
        Err(e) => println!("manifold proj FAILED: {e}"),
    }
    let opt = optimal_basis(&fom_traj, 5).unwrap();
    println!("optimal proj  err {:.4e}", projection_error(&fom_traj, &opt.basis).unwrap());
    println!("POD proj      err {:.4e}", projection_error(&fom_traj, &pod.basis).unwrap());
    println!("total: {:.1?}", t0.elapsed());
}
