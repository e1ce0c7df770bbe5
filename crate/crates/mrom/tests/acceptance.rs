//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured quantities.
//!
//! The heavyweight criteria share a small trained Burgers fixture (built
//! once per run); the desk-scale reproduction and reacting-flow criteria
//! train their own models and are the long poles of the suite.

use mrom::analysis::{
    equivalence_gap, error_bound_check, gap_ratios, optimal_basis, projection_error,
    relative_error, relative_error_states,
};
use mrom::fom::{
    odelta_residual, simulate_fom, BurgersModel, FomModel, LinearFom, LinearMultistepScheme,
    NewtonConfig, ReactingModel, Trajectory,
};
use mrom::linalg::{
    cholesky, cholesky_solve, lu_factor, max_abs_diff, norm2, qr_factor, DenseMat,
};
use mrom::net::{
    assemble, init_params, AutoencoderSpec, GridInfo, InitScheme,
    ScalingOperator,
};
use mrom::offline::{
    collect_snapshots, pod_basis, train_autoencoder, PodBasis, SubsetRule, TrainConfig,
};
use mrom::rom::{
    galerkin_quasi_newton_solve, gauss_newton_solve_with_guess, lspg_objective_and_test_basis,
    manifold_from_autoencoder, manifold_from_pod, rom_simulate, AutoencoderManifold, Manifold,
    RomMethod, SolverConfig,
};
use mrom::tensor::{ops, ConvSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::Instant;

// ── shared small trained Burgers fixture ─────────────────────────────

struct BurgersFixture {
    model: BurgersModel,
    scheme: LinearMultistepScheme,
    mu: Vec<f64>,
    fom_traj: Trajectory,
    manifold: AutoencoderManifold,
    pod: PodBasis,
    x0: Vec<f64>,
}

const FIXTURE_N: usize = 64;
const FIXTURE_STEPS: usize = 50;
const FIXTURE_DT: f64 = 0.07;
const FIXTURE_P: usize = 4;

fn fixture() -> &'static BurgersFixture {
    static CELL: OnceLock<BurgersFixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = BurgersModel::new(FIXTURE_N);
        let scheme = LinearMultistepScheme::backward_euler(FIXTURE_DT);
        let newton = NewtonConfig::default();
        let train_mu = [vec![4.4, 0.018], vec![5.1, 0.027], vec![4.7, 0.022]];
        let trajs: Vec<Trajectory> = train_mu
            .iter()
            .map(|mu| simulate_fom(&model, &scheme, mu, FIXTURE_STEPS, &newton).unwrap())
            .collect();
        let mut w = collect_snapshots(&trajs, SubsetRule::All).unwrap();
        w.append_zero_column();
        let spec = AutoencoderSpec::burgers(FIXTURE_N, 1, FIXTURE_P).unwrap();
        let config = TrainConfig {
            validation_fraction: 0.1,
            learning_rate: 5e-4,
            batch_size: 20,
            max_epochs: 400,
            patience: 400,
            init: InitScheme::Xavier,
            seed: 7,
            ..TrainConfig::default()
        };
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        let pod = pod_basis(&w, FIXTURE_P).unwrap();
        let mu = vec![4.55, 0.0205];
        let fom_traj = simulate_fom(&model, &scheme, &mu, FIXTURE_STEPS, &newton).unwrap();
        let x0 = model.initial_state(&mu);
        let manifold = manifold_from_autoencoder(trained.model, &x0).unwrap();
        BurgersFixture {
            model,
            scheme,
            mu,
            fom_traj,
            manifold,
            pod,
            x0,
        }
    })
}

// ── criterion 1: affine trial manifold recovers the classical ROMs ───

/// Classical POD-Galerkin: Newton on the projected discrete equations with
/// the exact reduced Jacobian, dense algebra throughout.
fn classical_pod_galerkin(
    model: &dyn FomModel,
    basis: &DenseMat,
    x0: &[f64],
    mu: &[f64],
    dt: f64,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    let p = basis.cols();
    let n = basis.rows();
    let mut xi = vec![0.0; p];
    let mut out = vec![xi.clone()];
    for step in 1..=n_steps {
        let t_n = step as f64 * dt;
        let xi_prev = xi.clone();
        // residual xi - xi_prev - dt Phi^T f(x0 + Phi xi); iterate to
        // machine stagnation so the cross-check is tolerance-free
        let mut prev_rn = f64::INFINITY;
        for _ in 0..200 {
            let mut x = basis.matvec(&xi);
            for (xv, &x0v) in x.iter_mut().zip(x0.iter()) {
                *xv += x0v;
            }
            let f = model.velocity(&x, t_n, mu);
            let pf = basis.matvec_t(&f);
            let r: Vec<f64> = (0..p)
                .map(|i| xi[i] - xi_prev[i] - dt * pf[i])
                .collect();
            let rn = norm2(&r);
            if rn <= 1e-15 * (1.0 + norm2(&xi)) || rn >= prev_rn {
                break;
            }
            prev_rn = rn;
            // Newton matrix I - dt Phi^T J Phi
            let jac = model.jacobian(&x, t_n, mu);
            let mut newton = DenseMat::identity(p);
            for i in 0..p {
                let jphi = jac.matvec(&basis.col(i));
                let pj = basis.matvec_t(&jphi);
                for row in 0..p {
                    newton[(row, i)] -= dt * pj[row];
                }
            }
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let lu = lu_factor(newton).unwrap();
            let dxi = lu.solve(&neg_r);
            for (xv, &d) in xi.iter_mut().zip(dxi.iter()) {
                *xv += d;
            }
        }
        let _ = n;
        out.push(xi.clone());
    }
    out
}

/// Classical POD-LSPG: Gauss-Newton on the full discrete residual with the
/// dense test basis (I - dt J) Phi, full steps.
fn classical_pod_lspg(
    model: &dyn FomModel,
    basis: &DenseMat,
    x0: &[f64],
    mu: &[f64],
    dt: f64,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    let p = basis.cols();
    let mut xi = vec![0.0; p];
    let mut x_prev = x0.to_vec();
    let mut out = vec![xi.clone()];
    for step in 1..=n_steps {
        let t_n = step as f64 * dt;
        let mut prev_gn = f64::INFINITY;
        for _ in 0..200 {
            let mut x = basis.matvec(&xi);
            for (xv, &x0v) in x.iter_mut().zip(x0.iter()) {
                *xv += x0v;
            }
            let f = model.velocity(&x, t_n, mu);
            // r = x - x_prev - dt f
            let r: Vec<f64> = (0..x.len())
                .map(|i| x[i] - x_prev[i] - dt * f[i])
                .collect();
            let jac = model.jacobian(&x, t_n, mu);
            let mut psi = DenseMat::zeros(x.len(), p);
            for i in 0..p {
                let phi_i = basis.col(i);
                let jphi = jac.matvec(&phi_i);
                let col: Vec<f64> = phi_i
                    .iter()
                    .zip(jphi.iter())
                    .map(|(&a, &b)| a - dt * b)
                    .collect();
                psi.set_col(i, &col);
            }
            let grad = psi.matvec_t(&r);
            let gn = norm2(&grad);
            if gn <= 1e-15 * (1.0 + norm2(&r)) || gn >= prev_gn {
                break;
            }
            prev_gn = gn;
            let gram = psi.gram();
            let l = cholesky(&gram).unwrap();
            let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
            let dxi = cholesky_solve(&l, &neg);
            for (xv, &d) in xi.iter_mut().zip(dxi.iter()) {
                *xv += d;
            }
        }
        let mut x = basis.matvec(&xi);
        for (xv, &x0v) in x.iter_mut().zip(x0.iter()) {
            *xv += x0v;
        }
        x_prev = x;
        out.push(xi.clone());
    }
    out
}

#[test]
fn acceptance_01_affine_recovery() {
    let start = Instant::now();
    let n = 64;
    let steps = 50;
    let dt = 0.07;
    let p = 4;
    let model = BurgersModel::new(n);
    let scheme = LinearMultistepScheme::backward_euler(dt);
    let mu = vec![4.3, 0.021];
    let traj = simulate_fom(&model, &scheme, &mu, steps, &NewtonConfig::default()).unwrap();
    let w = collect_snapshots(std::slice::from_ref(&traj), SubsetRule::All).unwrap();
    let pod = pod_basis(&w, p).unwrap();
    let x0 = model.initial_state(&mu);
    let manifold = manifold_from_pod(&pod.basis, &x0).unwrap();
    let solver = SolverConfig {
        rel_tol: 1e-15,
        max_iters: 60,
        ..SolverConfig::default()
    };

    let mg = rom_simulate(&manifold, &scheme, &mu, steps, RomMethod::Galerkin, &model, &solver)
        .unwrap();
    let classical_g = classical_pod_galerkin(&model, &pod.basis, &x0, &mu, dt, steps);
    let mut worst_g = 0.0f64;
    for (a, b) in mg.reduced.iter().zip(classical_g.iter()) {
        worst_g = worst_g.max(max_abs_diff(a, b));
    }

    let ml = rom_simulate(&manifold, &scheme, &mu, steps, RomMethod::Lspg, &model, &solver)
        .unwrap();
    let classical_l = classical_pod_lspg(&model, &pod.basis, &x0, &mu, dt, steps);
    let mut worst_l = 0.0f64;
    for (a, b) in ml.reduced.iter().zip(classical_l.iter()) {
        worst_l = worst_l.max(max_abs_diff(a, b));
    }

    let elapsed = start.elapsed();
    assert!(
        worst_g < 1e-10,
        "manifold vs classical Galerkin max-norm {worst_g:.3e}"
    );
    assert!(
        worst_l < 1e-10,
        "manifold vs classical LSPG max-norm {worst_l:.3e}"
    );
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?}");
    println!(
        "ACCEPTANCE 1 (affine recovery): PASS \
         (galerkin gap {worst_g:.2e}, lspg gap {worst_l:.2e}, {elapsed:.2?})"
    );
}

// ── criterion 2: gradient suite ──────────────────────────────────────

#[test]
fn acceptance_02_gradient_suite() {
    let start = Instant::now();
    let mut worst_overall = 0.0f64;
    let mut checks = 0usize;

    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // rotate through the layer types with per-entry FD oracles
        match seed % 5 {
            0 => {
                // dense
                let w = rand_tensor(vec![3, 5], &mut rng);
                let x = rand_tensor(vec![4], &mut rng);
                let sv: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rel = vjp_vs_fd(
                    |tape, xi, pi| tape.dense(xi, pi).unwrap(),
                    &x,
                    &w,
                    &sv,
                    |x_, w_| ops::dense_forward(x_, w_).unwrap(),
                );
                worst_overall = worst_overall.max(rel);
            }
            1 => {
                // conv 1d
                let spec = ConvSpec::new_1d(2, 2, 5, 2);
                let x = rand_tensor(vec![2, 8], &mut rng);
                let f = rand_tensor(spec.filter_shape(), &mut rng);
                let b = rand_tensor(vec![2], &mut rng);
                let sv: Vec<f64> = (0..2 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rel = conv_vjp_vs_fd(&spec, &x, &f, &b, &sv, false);
                worst_overall = worst_overall.max(rel);
            }
            2 => {
                // tconv 1d
                let spec = ConvSpec::new_1d(2, 3, 5, 2);
                let x = rand_tensor(vec![3, 4], &mut rng);
                let f = rand_tensor(spec.filter_shape(), &mut rng);
                let b = rand_tensor(vec![2], &mut rng);
                let sv: Vec<f64> = (0..2 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rel = conv_vjp_vs_fd(&spec, &x, &f, &b, &sv, true);
                worst_overall = worst_overall.max(rel);
            }
            3 => {
                // conv 2d
                let spec = ConvSpec::new_2d(2, 2, (3, 3), (2, 2));
                let x = rand_tensor(vec![2, 6, 4], &mut rng);
                let f = rand_tensor(spec.filter_shape(), &mut rng);
                let b = rand_tensor(vec![2], &mut rng);
                let sv: Vec<f64> = (0..2 * 3 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rel = conv_vjp_vs_fd(&spec, &x, &f, &b, &sv, false);
                worst_overall = worst_overall.max(rel);
            }
            _ => {
                // elu elementwise
                let x = rand_tensor(vec![9], &mut rng);
                let sv: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut tape = mrom::tensor::tape::Tape::new();
                let xi = tape.input(x.clone());
                let out = tape.elu(xi);
                tape.backward(out, &Tensor::from_vec(sv.clone()).unwrap())
                    .unwrap();
                let grad = tape.grad(xi).unwrap().to_vec();
                let fd = fd_grad_of(&x, &sv, |t| ops::elu(t));
                worst_overall = worst_overall.max(rel_inf(&grad, &fd));
            }
        }
        checks += 1;

        // full autoencoder loss gradient, directional FD
        if seed % 10 == 0 {
            let spec = AutoencoderSpec {
                grid: GridInfo::new_1d(16, 1),
                convs: vec![ConvSpec::new_1d(1, 2, 5, 2), ConvSpec::new_1d(2, 3, 5, 2)],
                dense: vec![(12, 2)],
            };
            let params = init_params(&spec, InitScheme::Xavier, seed);
            let model =
                assemble(spec, params, ScalingOperator::new(vec![-0.5], vec![1.5]).unwrap())
                    .unwrap();
            let xs: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..16).map(|_| rng.gen_range(-0.5..1.5)).collect())
                .collect();
            let batch: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            let (_, grads) = model.batch_loss_and_grad(&batch).unwrap();
            let dir: Vec<Vec<f64>> = model
                .params()
                .tensors()
                .iter()
                .map(|t| (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let analytic: f64 = grads
                .iter()
                .zip(dir.iter())
                .map(|(g, d)| g.iter().zip(d.iter()).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            let h = 1e-6;
            let eval = |sign: f64| -> f64 {
                let mut m = model.clone();
                for (t, d) in m.params_mut().tensors_mut().into_iter().zip(dir.iter()) {
                    for (v, dv) in t.data_mut().iter_mut().zip(d.iter()) {
                        *v += sign * h * dv;
                    }
                }
                xs.iter().map(|x| m.l2_loss(x).unwrap()).sum::<f64>() / xs.len() as f64
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-8);
            worst_overall = worst_overall.max(rel);
            checks += 1;
        }
    }

    let elapsed = start.elapsed();
    assert!(
        worst_overall < 1e-5,
        "worst gradient relative error {worst_overall:.3e}"
    );
    assert!(elapsed.as_secs_f64() < 60.0, "runtime {elapsed:?}");
    println!(
        "ACCEPTANCE 2 (gradient suite): PASS \
         ({checks} checks over 100 seeds, worst rel err {worst_overall:.2e}, {elapsed:.2?})"
    );
}

fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    max_abs_diff(a, b) / scale
}

/// Central FD gradient of `<seed, f(x)>` in x.
fn fd_grad_of<F>(x: &Tensor, seed: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&Tensor) -> Tensor,
{
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x.data()[i].abs());
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let fp: f64 = f(&xp).data().iter().zip(seed).map(|(a, b)| a * b).sum();
        let fm: f64 = f(&xm).data().iter().zip(seed).map(|(a, b)| a * b).sum();
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn vjp_vs_fd<R, F>(record: R, x: &Tensor, w: &Tensor, seed: &[f64], forward: F) -> f64
where
    R: Fn(&mut mrom::tensor::tape::Tape, usize, usize) -> usize,
    F: Fn(&Tensor, &Tensor) -> Tensor,
{
    let mut tape = mrom::tensor::tape::Tape::new();
    let xi = tape.input(x.clone());
    let wi = tape.param(w);
    let out = record(&mut tape, xi, wi);
    tape.backward(out, &Tensor::from_vec(seed.to_vec()).unwrap())
        .unwrap();
    let gx = tape.grad(xi).unwrap().to_vec();
    let gw = tape.grad(wi).unwrap().to_vec();
    let fd_x = fd_grad_of(x, seed, |t| forward(t, w));
    let fd_w = fd_grad_of(w, seed, |t| forward(x, t));
    rel_inf(&gx, &fd_x).max(rel_inf(&gw, &fd_w))
}

fn conv_vjp_vs_fd(
    spec: &ConvSpec,
    x: &Tensor,
    f: &Tensor,
    b: &Tensor,
    seed: &[f64],
    transposed: bool,
) -> f64 {
    let mut tape = mrom::tensor::tape::Tape::new();
    let xi = tape.input(x.clone());
    let fi = tape.param(f);
    let bi = tape.param(b);
    let out = if transposed {
        tape.tconv(spec, xi, fi, bi).unwrap()
    } else {
        tape.conv(spec, xi, fi, bi).unwrap()
    };
    tape.backward(out, &Tensor::from_vec(seed.to_vec()).unwrap())
        .unwrap();
    let gx = tape.grad(xi).unwrap().to_vec();
    let gf = tape.grad(fi).unwrap().to_vec();
    let gb = tape.grad(bi).unwrap().to_vec();
    let fwd = |x_: &Tensor, f_: &Tensor, b_: &Tensor| -> Tensor {
        if transposed {
            ops::tconv_forward(x_, spec, f_, b_).unwrap()
        } else {
            ops::conv_forward(x_, spec, f_, b_).unwrap()
        }
    };
    let fd_x = fd_grad_of(x, seed, |t| fwd(t, f, b));
    let fd_f = fd_grad_of(f, seed, |t| fwd(x, t, b));
    let fd_b = fd_grad_of(b, seed, |t| fwd(x, f, t));
    rel_inf(&gx, &fd_x)
        .max(rel_inf(&gf, &fd_f))
        .max(rel_inf(&gb, &fd_b))
}

// ── criterion 3: convolution arithmetic ──────────────────────────────

#[test]
fn acceptance_03_convolution_arithmetic() {
    let burgers = AutoencoderSpec::burgers(256, 1, 5).unwrap();
    assert_eq!(burgers.flattened_conv_dim(), 128);
    let reacting = AutoencoderSpec::reacting(64, 32, 4, 5).unwrap();
    assert_eq!(reacting.flattened_conv_dim(), 512);
    println!(
        "ACCEPTANCE 3 (convolution arithmetic): PASS \
         (Burgers flattened dim 128, reacting-flow flattened dim 512)"
    );
}

// ── criterion 4: tangent-space optimality of Galerkin steps ──────────

#[test]
fn acceptance_04_tangent_space_optimality() {
    let fx = fixture();
    let solver = SolverConfig::default();
    let sol = rom_simulate(
        &fx.manifold,
        &fx.scheme,
        &fx.mu,
        FIXTURE_STEPS,
        RomMethod::Galerkin,
        &fx.model,
        &solver,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for (n, xi) in sol.reduced.iter().enumerate().skip(1) {
        let t_n = n as f64 * FIXTURE_DT;
        let x = fx.manifold.reconstruct(xi).unwrap();
        let f = fx.model.velocity(&x, t_n, &fx.mu);
        let jac = fx.manifold.jacobian(xi).unwrap();
        let qr = qr_factor(&jac);
        let v = qr.solve_ls(&f).unwrap();
        let jv = jac.matvec(&v);
        let resid: Vec<f64> = jv.iter().zip(f.iter()).map(|(a, b)| a - b).collect();
        let jtr = jac.matvec_t(&resid);
        let measure = norm2(&jtr) / norm2(&f).max(1e-30);
        worst = worst.max(measure);
    }
    assert!(
        worst <= 1e-8,
        "worst tangent-space optimality violation {worst:.3e}"
    );
    println!(
        "ACCEPTANCE 4 (tangent-space optimality): PASS \
         (worst ||J^T(J v - f)|| / ||f|| = {worst:.2e} over {FIXTURE_STEPS} steps)"
    );
}

// ── criterion 5: LSPG per-step optimality dominance ──────────────────

#[test]
fn acceptance_05_lspg_dominance() {
    let fx = fixture();
    let solver = SolverConfig {
        rel_tol: 1e-8,
        max_iters: 50,
        ..SolverConfig::default()
    };
    // march LSPG; at each step also solve the Galerkin equations from the
    // same history and compare the discrete residual norms
    let mut reduced = vec![fx.manifold.initial_coords().to_vec()];
    let mut states = vec![fx.manifold.reconstruct(&reduced[0]).unwrap()];
    let mut worst_violation = f64::NEG_INFINITY;
    for n in 1..=FIXTURE_STEPS {
        let t_n = n as f64 * FIXTURE_DT;
        let state_hist: Vec<&[f64]> = vec![states.last().unwrap().as_slice()];
        let red_hist: Vec<&[f64]> = vec![reduced.last().unwrap().as_slice()];
        let (xi_l, _) = gauss_newton_solve_with_guess(
            &fx.manifold,
            &fx.scheme,
            &state_hist,
            red_hist[0],
            t_n,
            &fx.mu,
            &fx.model,
            &solver,
        )
        .unwrap();
        let (xi_g, _) = galerkin_quasi_newton_solve(
            &fx.manifold,
            &fx.scheme,
            &red_hist,
            t_n,
            &fx.mu,
            &fx.model,
            &solver,
        )
        .unwrap();
        let (r_l, _) = lspg_objective_and_test_basis(
            &fx.manifold,
            &fx.scheme,
            &state_hist,
            &xi_l,
            t_n,
            &fx.mu,
            &fx.model,
        )
        .unwrap();
        let (r_g, _) = lspg_objective_and_test_basis(
            &fx.manifold,
            &fx.scheme,
            &state_hist,
            &xi_g,
            t_n,
            &fx.mu,
            &fx.model,
        )
        .unwrap();
        let violation = norm2(&r_l) - norm2(&r_g);
        worst_violation = worst_violation.max(violation);
        assert!(
            violation <= 1e-12,
            "step {n}: ||r_lspg|| = {} > ||r_galerkin|| = {}",
            norm2(&r_l),
            norm2(&r_g)
        );
        states.push(fx.manifold.reconstruct(&xi_l).unwrap());
        reduced.push(xi_l);
    }
    println!(
        "ACCEPTANCE 5 (LSPG per-step dominance): PASS \
         (worst ||r_lspg|| - ||r_galerkin|| = {worst_violation:.2e} over {FIXTURE_STEPS} steps)"
    );
}

// ── criterion 6: limiting equivalence ────────────────────────────────

#[test]
fn acceptance_06_limiting_equivalence() {
    let fx = fixture();
    let solver = SolverConfig {
        rel_tol: 1e-12,
        max_iters: 60,
        ..SolverConfig::default()
    };
    let make = LinearMultistepScheme::backward_euler;

    // affine manifold: history from projecting a mid-trajectory state
    let affine = manifold_from_pod(&fx.pod.basis, &fx.x0).unwrap();
    let mid = &fx.fom_traj.states[FIXTURE_STEPS / 2];
    let centered: Vec<f64> = mid.iter().zip(fx.x0.iter()).map(|(a, b)| a - b).collect();
    let xi_hist_affine = fx.pod.basis.matvec_t(&centered);
    let gaps_affine = equivalence_gap(
        &affine,
        &fx.model,
        &make,
        0.12,
        2,
        &xi_hist_affine,
        &fx.mu,
        &solver,
    )
    .unwrap();
    let ratios_affine = gap_ratios(&gaps_affine);

    // trained nonlinear manifold: history from a short Galerkin march
    let warm = rom_simulate(
        &fx.manifold,
        &fx.scheme,
        &fx.mu,
        10,
        RomMethod::Galerkin,
        &fx.model,
        &SolverConfig::default(),
    )
    .unwrap();
    let xi_hist_trained = warm.reduced.last().unwrap().clone();
    let gaps_trained = equivalence_gap(
        &fx.manifold,
        &fx.model,
        &make,
        0.12,
        2,
        &xi_hist_trained,
        &fx.mu,
        &solver,
    )
    .unwrap();
    let ratios_trained = gap_ratios(&gaps_trained);

    for (label, ratios, gaps) in [
        ("affine", &ratios_affine, &gaps_affine),
        ("trained", &ratios_trained, &gaps_trained),
    ] {
        for r in ratios.iter() {
            assert!(
                *r >= 1.8,
                "{label} manifold: gap ratios {ratios:?} (gaps {gaps:?})"
            );
        }
    }
    println!(
        "ACCEPTANCE 6 (limiting equivalence): PASS \
         (affine ratios {ratios_affine:?}, trained ratios {ratios_trained:?})"
    );
}

// ── criterion 7: error bound on a linear FOM ─────────────────────────

#[test]
fn acceptance_07_error_bound_linear_fom() {
    let n = 12;
    let diag: Vec<f64> = (0..n).map(|i| -0.25 - 0.125 * i as f64).collect();
    let kappa = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut a = DenseMat::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = diag[i];
    }
    let x0: Vec<f64> = (0..n).map(|i| 1.0 + 0.2 * i as f64).collect();
    let fom = LinearFom::new(a, x0.clone());
    let dt = 0.5 / kappa;
    assert!(dt < 1.0 / kappa);
    let scheme = LinearMultistepScheme::backward_euler(dt);
    let n_t = 30;
    let traj = simulate_fom(
        &fom,
        &scheme,
        &[],
        n_t,
        &NewtonConfig {
            rel_tol: 1e-13,
            max_iter: 60,
        },
    )
    .unwrap();
    let w = collect_snapshots(std::slice::from_ref(&traj), SubsetRule::All).unwrap();
    let pod = pod_basis(&w, 3).unwrap();
    let manifold = manifold_from_pod(&pod.basis, &x0).unwrap();
    let mut reports = Vec::new();
    for method in [RomMethod::Galerkin, RomMethod::Lspg] {
        let sol = rom_simulate(
            &manifold,
            &scheme,
            &[],
            n_t,
            method,
            &fom,
            &SolverConfig::with_tol(1e-12),
        )
        .unwrap();
        let report = error_bound_check(&fom, &traj, &sol.states, &scheme, &[], kappa).unwrap();
        assert!(report.applicable, "{method:?}: bound must be applicable");
        assert_eq!(
            report.violations(),
            0,
            "{method:?}: bound violated at some step"
        );
        reports.push((method, report));
    }
    let tightest: f64 = reports[1]
        .1
        .steps
        .iter()
        .map(|s| s.bound - s.true_error)
        .fold(f64::INFINITY, f64::min);
    println!(
        "ACCEPTANCE 7 (error bound, linear FOM): PASS \
         (kappa = {kappa}, {n_t} steps, both methods zero violations, \
          min bound slack {tightest:.2e})"
    );
}

// ── criterion 8: desk-scale reproduction (Burgers) ───────────────────

const DESK_LR: f64 = 5e-4;
const DESK_EPOCHS: usize = 700;
const DESK_PATIENCE: usize = 700;

#[test]
fn acceptance_08_desk_scale_burgers() {
    let start = Instant::now();
    let n = 256;
    let steps = 500;
    let model = BurgersModel::new(n);
    let scheme = LinearMultistepScheme::backward_euler(0.07);
    let newton = NewtonConfig::default();
    let train_mu: Vec<Vec<f64>> = vec![
        vec![4.25, 0.015],
        vec![5.5, 0.015],
        vec![4.875, 0.0225],
        vec![4.25, 0.03],
        vec![5.5, 0.03],
    ];
    let trajs: Vec<Trajectory> = train_mu
        .iter()
        .map(|mu| simulate_fom(&model, &scheme, mu, steps, &newton).unwrap())
        .collect();
    let mut w = collect_snapshots(&trajs, SubsetRule::All).unwrap();
    w.append_zero_column();
    assert_eq!(w.n_columns(), 5 * 500 + 1);

    let mu_online = vec![4.3, 0.021];
    let fom_traj = simulate_fom(&model, &scheme, &mu_online, steps, &newton).unwrap();
    let x0 = model.initial_state(&mu_online);

    // seed-independent baselines
    let pod = pod_basis(&w, 5).unwrap();
    let pod_manifold = manifold_from_pod(&pod.basis, &x0).unwrap();
    let solver = SolverConfig::default();
    let pod_lspg = relative_error(
        &fom_traj,
        &rom_simulate(&pod_manifold, &scheme, &mu_online, steps, RomMethod::Lspg, &model, &solver)
            .unwrap(),
    )
    .unwrap();
    let pod_galerkin = relative_error(
        &fom_traj,
        &rom_simulate(
            &pod_manifold,
            &scheme,
            &mu_online,
            steps,
            RomMethod::Galerkin,
            &model,
            &solver,
        )
        .unwrap(),
    )
    .unwrap();
    let opt = optimal_basis(&fom_traj, 5).unwrap();
    let opt_proj = projection_error(&fom_traj, &opt.basis).unwrap();

    let spec = AutoencoderSpec::burgers(n, 1, 5).unwrap();
    let mut training_seconds = 0.0;
    let mut passed = None;
    let mut attempts = Vec::new();
    for seed in [1u64, 2, 3] {
        let config = TrainConfig {
            validation_fraction: 0.1,
            learning_rate: DESK_LR,
            batch_size: 20,
            max_epochs: DESK_EPOCHS,
            patience: DESK_PATIENCE,
            init: InitScheme::Xavier,
            seed,
            ..TrainConfig::default()
        };
        let t_train = Instant::now();
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        training_seconds += t_train.elapsed().as_secs_f64();
        let manifold = manifold_from_autoencoder(trained.model, &x0).unwrap();
        let lspg = rom_simulate(
            &manifold,
            &scheme,
            &mu_online,
            steps,
            RomMethod::Lspg,
            &model,
            &solver,
        )
        .and_then(|sol| relative_error(&fom_traj, &sol));
        let galerkin = rom_simulate(
            &manifold,
            &scheme,
            &mu_online,
            steps,
            RomMethod::Galerkin,
            &model,
            &solver,
        )
        .and_then(|sol| relative_error(&fom_traj, &sol));
        let (lspg_err, gal_err) = match (&lspg, &galerkin) {
            (Ok(l), Ok(g)) => (*l, *g),
            _ => {
                attempts.push((seed, f64::NAN, f64::NAN));
                continue;
            }
        };
        attempts.push((seed, lspg_err, gal_err));
        if lspg_err < 0.02 && gal_err < 0.04 && opt_proj > lspg_err {
            passed = Some((seed, lspg_err, gal_err));
            break;
        }
    }

    assert!(
        pod_lspg > 0.05,
        "POD-LSPG at p=5 should exceed 5% (got {pod_lspg:.4})"
    );
    assert!(
        pod_galerkin > 0.05,
        "POD-Galerkin at p=5 should exceed 5% (got {pod_galerkin:.4})"
    );
    assert!(
        training_seconds <= 30.0 * 60.0,
        "training budget exceeded: {training_seconds:.0} s"
    );
    let (seed, lspg_err, gal_err) = passed.unwrap_or_else(|| {
        panic!(
            "no seed met the targets; attempts (seed, lspg, galerkin): {attempts:?}, \
             POD-LSPG {pod_lspg:.4}, POD-G {pod_galerkin:.4}, optimal proj {opt_proj:.4}"
        )
    });
    assert!(opt_proj > lspg_err);
    println!(
        "ACCEPTANCE 8 (desk-scale Burgers): PASS \
         (seed {seed}: manifold-LSPG {lspg_err:.4}, manifold-G {gal_err:.4}; \
          POD-LSPG {pod_lspg:.4}, POD-G {pod_galerkin:.4}, optimal proj {opt_proj:.4}; \
          training {training_seconds:.0} s, total {:.0?})",
        start.elapsed()
    );
}

// ── criterion 9: reacting flow at reduced grid ───────────────────────

const REACT_LR: f64 = 1e-3;
const REACT_EPOCHS: usize = 400;

#[test]
fn acceptance_09_reacting_flow_reduced() {
    let start = Instant::now();
    let (nx, ny) = (32usize, 16usize);
    let model = ReactingModel::new(nx, ny);
    let mu1 = vec![2.5e12, 5.85e3];

    // Jacobian finite-difference check at plausible states
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_fd = 0.0f64;
    for _ in 0..3 {
        let mut x = model.initial_state(&mu1);
        let field = nx * ny;
        for (k, v) in x.iter_mut().enumerate() {
            let c = k / field;
            *v = match c {
                0 => 300.0 + rng.gen_range(0.0..800.0),
                1 => rng.gen_range(0.0..0.03),
                2 => rng.gen_range(0.0..0.25),
                _ => rng.gen_range(0.0..0.02),
            };
        }
        let v: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jv = model.jacobian_apply(&x, 0.0, &mu1, &v);
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a - h * b).collect();
        let fp = model.velocity(&xp, 0.0, &mu1);
        let fm = model.velocity(&xm, 0.0, &mu1);
        let scale = jv.iter().fold(0.0f64, |m, u| m.max(u.abs())).max(1.0);
        for k in 0..x.len() {
            let fd = (fp[k] - fm[k]) / (2.0 * h);
            worst_fd = worst_fd.max((jv[k] - fd).abs() / scale);
        }
    }
    assert!(worst_fd < 1e-4, "Jacobian FD check failed: {worst_fd:.3e}");

    // Arrhenius identity
    for _ in 0..20 {
        let u = [
            rng.gen_range(300.0..2000.0),
            rng.gen_range(0.0..0.05),
            rng.gen_range(0.0..0.3),
            rng.gen_range(0.0..0.05),
        ];
        let q = ReactingModel::reaction_source(&u, &mu1);
        assert!((q[0] - 9800.0 * q[3]).abs() <= 1e-12 * q[0].abs().max(1.0));
    }

    // offline data: 2x2 training lattice, equispaced snapshot subset
    let scheme = LinearMultistepScheme::bdf2(1e-4);
    let steps = 600;
    let newton = NewtonConfig::default();
    let train_mu: Vec<Vec<f64>> = vec![
        vec![2.3375e12, 5.625e3],
        vec![6.5e12, 5.625e3],
        vec![2.3375e12, 9.0e3],
        vec![6.5e12, 9.0e3],
    ];
    let trajs: Vec<Trajectory> = train_mu
        .iter()
        .map(|mu| simulate_fom(&model, &scheme, mu, steps, &newton).unwrap())
        .collect();
    let mut w = collect_snapshots(&trajs, SubsetRule::EquispacedM(150)).unwrap();
    w.append_zero_column();

    let fom_traj = simulate_fom(&model, &scheme, &mu1, steps, &newton).unwrap();
    let x0 = model.initial_state(&mu1);
    let pod = pod_basis(&w, 3).unwrap();
    let pod_proj = projection_error(&fom_traj, &pod.basis).unwrap();

    let spec = AutoencoderSpec::reacting(nx, ny, 4, 3).unwrap();
    let solver = SolverConfig::default();
    let mut passed = None;
    let mut attempts = Vec::new();
    for seed in [1u64, 2, 3] {
        let config = TrainConfig {
            validation_fraction: 0.1,
            learning_rate: REACT_LR,
            batch_size: 20,
            max_epochs: REACT_EPOCHS,
            patience: REACT_EPOCHS,
            init: InitScheme::He,
            seed,
            ..TrainConfig::default()
        };
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        let manifold = manifold_from_autoencoder(trained.model, &x0).unwrap();
        match rom_simulate(
            &manifold,
            &scheme,
            &mu1,
            steps,
            RomMethod::Lspg,
            &model,
            &solver,
        )
        .and_then(|sol| relative_error(&fom_traj, &sol))
        {
            Ok(err) => {
                attempts.push((seed, err));
                if err < pod_proj {
                    passed = Some((seed, err));
                    break;
                }
            }
            Err(e) => {
                attempts.push((seed, f64::NAN));
                eprintln!("seed {seed}: manifold-LSPG failed: {e}");
            }
        }
    }

    let elapsed = start.elapsed();
    let (seed, lspg_err) = passed.unwrap_or_else(|| {
        panic!(
            "manifold-LSPG did not beat the POD projection error {pod_proj:.4}; \
             attempts {attempts:?}"
        )
    });
    assert!(
        elapsed.as_secs_f64() < 20.0 * 60.0,
        "runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "ACCEPTANCE 9 (reacting flow, reduced grid): PASS \
         (FD jacobian {worst_fd:.2e}, seed {seed}: manifold-LSPG {lspg_err:.4} \
          < POD projection {pod_proj:.4}, {elapsed:.0?})"
    );
}

// ── criterion 10: POD properties ─────────────────────────────────────

#[test]
fn acceptance_10_pod_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 20;
    // synthetic rank-3 snapshot set
    let dirs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let cols: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            (0..n)
                .map(|i| c[0] * dirs[0][i] + c[1] * dirs[1][i] + c[2] * dirs[2][i])
                .collect()
        })
        .collect();
    let prov = (0..10)
        .map(|s| mrom::offline::ColumnProvenance::Snapshot {
            mu: vec![],
            step: s + 1,
        })
        .collect();
    let w = mrom::offline::SnapshotMatrix::from_parts(n, cols, prov, false).unwrap();

    let mut last = f64::INFINITY;
    for p in 1..=3 {
        let pod = pod_basis(&w, p).unwrap();
        assert!(pod.orthonormality_defect() < 1e-12, "p={p}");
        let e = mrom::offline::projection_residual_sq(&w, &pod.basis);
        assert!(e <= last + 1e-10, "p={p}: projection error must not grow");
        last = e;
    }
    // exact reconstruction at p = rank
    let pod3 = pod_basis(&w, 3).unwrap();
    let resid = mrom::offline::projection_residual_sq(&w, &pod3.basis);
    assert!(resid < 1e-10, "rank-3 set must project exactly: {resid:.3e}");
    // beyond the numerical rank: rejected
    assert!(matches!(
        pod_basis(&w, 4),
        Err(mrom::Error::Rank { .. })
    ));
    println!(
        "ACCEPTANCE 10 (POD properties): PASS \
         (orthonormality < 1e-12, monotone projection error, rank-3 residual {resid:.2e})"
    );
}

// ── criterion 11: pipeline determinism ───────────────────────────────

#[test]
fn acceptance_11_pipeline_determinism() {
    let text = "\
[experiment]
problem = burgers
seed = 12

[fom]
grid = 32
scheme = bdf1
dt = 0.1
steps = 10

[training]
lattice = 2x1
subset = all
validation_fraction = 0.2
learning_rate = 1e-3
batch_size = 8
max_epochs = 4
patience = 10
latent_dim = 2

[rom]
methods = pod-galerkin,manifold-lspg
online = 4.4,0.02
tolerance = 1e-7
max_iterations = 40

[metrics]
pod_projection = true
optimal_projection = true
manifold_projection = true
error_bound = true
";
    let cfg = mrom::config::parse_config(text).unwrap();
    let run = |dir: &std::path::Path| {
        mrom::pipeline::cmd_offline(&cfg, dir, 2, text).unwrap();
        let failures = mrom::pipeline::cmd_online(&cfg, dir, 2).unwrap();
        assert_eq!(failures, 0);
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());

    fn collect_files(root: &std::path::Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    }
    let files_a = collect_files(dir_a.path());
    let files_b = collect_files(dir_b.path());
    assert_eq!(files_a, files_b, "artifact sets differ");
    assert!(files_a.len() >= 8);
    for rel in &files_a {
        let a = std::fs::read(dir_a.path().join(rel)).unwrap();
        let b = std::fs::read(dir_b.path().join(rel)).unwrap();
        assert_eq!(a, b, "artifact {} differs between runs", rel.display());
    }
    println!(
        "ACCEPTANCE 11 (pipeline determinism): PASS \
         ({} artifacts byte-identical across two offline+online runs)",
        files_a.len()
    );
}

// ── supporting invariant: scheme residual reference values ───────────

#[test]
fn scheme_reference_coefficients() {
    // backward Euler and BDF2 as used throughout the suite
    let be = LinearMultistepScheme::backward_euler(0.07);
    assert_eq!(be.alpha(), &[1.0, -1.0]);
    assert_eq!(be.beta(), &[1.0, 0.0]);
    let bdf2 = LinearMultistepScheme::bdf2(1e-4);
    assert!((bdf2.alpha()[1] + 4.0 / 3.0).abs() < 1e-15);
    assert!((bdf2.beta()[0] - 2.0 / 3.0).abs() < 1e-15);
    // residual evaluation shape check on a tiny linear model
    let a = DenseMat::zeros(2, 2);
    let fom = LinearFom::new(a, vec![1.0, 1.0]);
    let r = odelta_residual(
        &fom,
        &be,
        &[&[1.0, 1.0]],
        &[1.0, 1.0],
        0.07,
        &[],
    )
    .unwrap();
    assert_eq!(r.len(), 2);
    assert!(norm2(&r) < 1e-15);
    // trajectory/time bookkeeping used by the metrics
    let traj = Trajectory {
        states: vec![vec![1.0; 2], vec![2.0; 2], vec![3.0; 2]],
        dt: 0.5,
        mu: vec![],
    };
    assert_eq!(traj.times(), vec![0.0, 0.5, 1.0]);
    assert_eq!(
        relative_error_states(&traj.states, &traj.states).unwrap(),
        0.0
    );
}
