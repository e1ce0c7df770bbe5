//! Error metrics and theorem instrumentation: relative state error,
//! subspace and manifold projection errors, Lipschitz-constant estimation,
//! the a-posteriori discrete-time error bound, and the one-step
//! Galerkin/LSPG equivalence gap.

use crate::error::{Error, Result};
use crate::fom::{residual_with_history, FomModel, LinearMultistepScheme, Trajectory};
use crate::linalg::{cholesky, cholesky_solve, dot, norm2, DenseMat};
use crate::offline::{collect_snapshots, pod_basis, PodBasis, SubsetRule};
use crate::rom::{
    galerkin_quasi_newton_solve, gauss_newton_solve_with_guess, wolfe_line_search, Manifold,
    RomSolution, SolverConfig,
};
use serde::{Deserialize, Serialize};

/// Relative l2 state error over steps 1..n_t:
/// `sqrt(sum_n ||x^n - y^n||^2) / sqrt(sum_n ||x^n||^2)`.
pub fn relative_error_states(fom_states: &[Vec<f64>], approx_states: &[Vec<f64>]) -> Result<f64> {
    if fom_states.len() != approx_states.len() || fom_states.len() < 2 {
        return Err(Error::Dimension(format!(
            "state sequences of lengths {} and {} are not comparable",
            fom_states.len(),
            approx_states.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in fom_states.iter().zip(approx_states.iter()).skip(1) {
        if x.len() != y.len() {
            return Err(Error::Dimension("state dimensions differ".into()));
        }
        num += x
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        den += x.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((num / den).sqrt())
}

/// Relative error of a ROM solution against the FOM trajectory.
pub fn relative_error(fom: &Trajectory, rom: &RomSolution) -> Result<f64> {
    relative_error_states(&fom.states, &rom.states)
}

/// Projection error of the centered trajectory onto an orthonormal basis:
/// `sqrt(sum_n ||(I - Phi Phi^T)(x^n - x^0)||^2) / sqrt(sum_n ||x^n||^2)`.
pub fn projection_error(fom: &Trajectory, basis: &DenseMat) -> Result<f64> {
    let g = basis.gram();
    let mut defect = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let want = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((g[(i, j)] - want).abs());
        }
    }
    if defect > 1e-10 {
        return Err(Error::NotOrthonormal { deviation: defect });
    }
    let x0 = &fom.states[0];
    let mut num = 0.0;
    let mut den = 0.0;
    for x in fom.states.iter().skip(1) {
        let centered: Vec<f64> = x.iter().zip(x0.iter()).map(|(a, b)| a - b).collect();
        let coeff = basis.matvec_t(&centered);
        let rec = basis.matvec(&coeff);
        num += centered
            .iter()
            .zip(rec.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        den += x.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((num / den).sqrt())
}

/// Basis of the trajectory's own leading left singular vectors (the
/// "optimal" linear basis for that online parameter instance).
pub fn optimal_basis(fom: &Trajectory, p: usize) -> Result<PodBasis> {
    let w = collect_snapshots(std::slice::from_ref(fom), SubsetRule::All)?;
    pod_basis(&w, p)
}

/// Nonlinear manifold projection error: per step, Gauss-Newton on
/// `min_xi ||x^n - x_ref - g(xi)||`, seeded by the encoder at the first
/// step and warm-started afterwards, aggregated by the relative-error
/// formula.
pub fn manifold_projection_error(fom: &Trajectory, manifold: &dyn Manifold) -> Result<f64> {
    let cfg = SolverConfig {
        rel_tol: 1e-10,
        max_iters: 100,
        ..SolverConfig::default()
    };
    let x0 = &fom.states[0];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    for (n, x) in fom.states.iter().enumerate().skip(1) {
        let guess = match &warm {
            Some(w) => w.clone(),
            None => {
                let centered: Vec<f64> = x.iter().zip(x0.iter()).map(|(a, b)| a - b).collect();
                manifold
                    .encode(&centered)
                    .unwrap_or_else(|| vec![0.0; manifold.reduced_dim()])
            }
        };
        let xi = fit_state_to_manifold(manifold, x, &guess, &cfg).map_err(|e| match e {
            Error::StepFailure {
                iterations,
                residual_norm,
                ..
            } => Error::StepFailure {
                step: n,
                iterations,
                residual_norm,
            },
            other => other,
        })?;
        let rec = manifold.reconstruct(&xi)?;
        num += x
            .iter()
            .zip(rec.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        den += x.iter().map(|v| v * v).sum::<f64>();
        warm = Some(xi);
    }
    Ok((num / den).sqrt())
}

/// Gauss-Newton fit of one state to the manifold (the per-step inner
/// problem of [`manifold_projection_error`]).
pub fn fit_state_to_manifold(
    manifold: &dyn Manifold,
    target: &[f64],
    guess: &[f64],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let p = manifold.reduced_dim();
    let mut xi = guess.to_vec();
    let scale = 1.0 + norm2(target);
    let residual = |xi_: &[f64]| -> Result<Vec<f64>> {
        let rec = manifold.reconstruct(xi_)?;
        Ok(target
            .iter()
            .zip(rec.iter())
            .map(|(a, b)| a - b)
            .collect())
    };
    let mut r = residual(&xi)?;
    for iter in 0..=config.max_iters {
        let jac = manifold.jacobian(&xi)?;
        let grad = jac.matvec_t(&r); // gradient of -0.5||r||^2 direction
        if norm2(&grad) <= config.rel_tol * scale {
            return Ok(xi);
        }
        if iter == config.max_iters {
            break;
        }
        let gram = jac.gram();
        let l = match cholesky(&gram) {
            Some(l) => l,
            None => {
                let mut reg = gram.clone();
                let bump = 1e-12 * reg.max_abs().max(1.0);
                for i in 0..p {
                    reg[(i, i)] += bump;
                }
                cholesky(&reg).ok_or(Error::CholeskyFailure)?
            }
        };
        let dir = cholesky_solve(&l, &grad);

        // full Gauss-Newton step first (see the ROM solvers): gradient
        // halving with a non-increasing objective needs no line search
        let phi0 = dot(&r, &r);
        let full: Vec<f64> = xi.iter().zip(dir.iter()).map(|(a, b)| a + b).collect();
        if let Ok(r_f) = residual(&full) {
            if let Ok(jac_f) = manifold.jacobian(&full) {
                let g_f = jac_f.matvec_t(&r_f);
                let phi_noise = 1e3 * f64::EPSILON * (1.0 + phi0);
                if norm2(&g_f) <= 0.5 * norm2(&grad) && dot(&r_f, &r_f) <= phi0 + phi_noise {
                    xi = full;
                    r = r_f;
                    continue;
                }
            }
        }

        let phi = |lambda: f64| -> Result<(f64, f64)> {
            let trial: Vec<f64> = xi
                .iter()
                .zip(dir.iter())
                .map(|(a, b)| a + lambda * b)
                .collect();
            let rt = residual(&trial)?;
            let jd = manifold.decode_jvp(&trial, &dir)?;
            // d/d lambda ||target - x_ref - g||^2 = -2 r^T J_g d
            let deriv = -2.0 * dot(&rt, &jd);
            Ok((dot(&rt, &rt), deriv))
        };
        let step = match wolfe_line_search(phi, config.c1, config.c2, config.ls_trials) {
            Ok(s) => s,
            // the merit can no longer be decreased at roundoff level: the
            // current iterate is the numerical minimizer
            Err(Error::LineSearchFailure { .. }) | Err(Error::NotDescentDirection { .. }) => {
                return Ok(xi)
            }
            Err(other) => return Err(other),
        };
        for (xv, &d) in xi.iter_mut().zip(dir.iter()) {
            *xv += step * d;
        }
        r = residual(&xi)?;
    }
    Err(Error::StepFailure {
        step: 0,
        iterations: config.max_iters,
        residual_norm: norm2(&r),
    })
}

/// Sample-based lower bound on the velocity Lipschitz constant: the
/// largest pairwise difference quotient combined with power-iteration
/// estimates of the Jacobian spectral norm at every sample.
pub fn lipschitz_estimate(
    fom: &dyn FomModel,
    samples: &[Vec<f64>],
    t: f64,
    mu: &[f64],
) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Dimension(
            "lipschitz estimation needs at least two sample states".into(),
        ));
    }
    let mut kappa = 0.0f64;
    let velocities: Vec<Vec<f64>> = samples.iter().map(|x| fom.velocity(x, t, mu)).collect();
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let dx = norm2(
                &samples[i]
                    .iter()
                    .zip(samples[j].iter())
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if dx > 1e-14 {
                let df = norm2(
                    &velocities[i]
                        .iter()
                        .zip(velocities[j].iter())
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
                kappa = kappa.max(df / dx);
            }
        }
    }
    // spectral-norm estimates: 50 power iterations on J^T J
    for x in samples {
        let jac = fom.jacobian(x, t, mu);
        let n = x.len();
        let mut v: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -0.5 })
            .collect();
        let nv = norm2(&v);
        for vv in &mut v {
            *vv /= nv;
        }
        let mut sigma = 0.0;
        for _ in 0..50 {
            let w = jac.matvec(&v);
            let mut z = jac.matvec_t(&w);
            let nz = norm2(&z);
            if nz == 0.0 {
                sigma = 0.0;
                break;
            }
            for zv in &mut z {
                *zv /= nz;
            }
            v = z;
            sigma = nz.sqrt();
        }
        kappa = kappa.max(sigma);
    }
    Ok(kappa)
}

/// One step of the error-bound recursion.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundStep {
    pub bound: f64,
    pub true_error: f64,
    pub satisfied: bool,
}

/// Result of checking the a-posteriori error bound along a ROM trajectory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundReport {
    /// False when the time step violates `dt < |alpha_0| / (|beta_0| kappa)`.
    pub applicable: bool,
    /// h = |alpha_0| - |beta_0| kappa dt for the main scheme.
    pub h: f64,
    /// gamma_j = (|alpha_j| + |beta_j| kappa dt) / h for the main scheme.
    pub gamma: Vec<f64>,
    pub kappa: f64,
    pub steps: Vec<BoundStep>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| !s.satisfied).count()
    }
}

/// Scheme constants (h, gamma_j) of the error bound.
pub fn bound_constants(scheme: &LinearMultistepScheme, kappa: f64) -> (f64, Vec<f64>) {
    let h = scheme.alpha()[0].abs() - scheme.beta()[0].abs() * kappa * scheme.dt();
    let gamma: Vec<f64> = (1..=scheme.k())
        .map(|j| (scheme.alpha()[j].abs() + scheme.beta()[j].abs() * kappa * scheme.dt()) / h)
        .collect();
    (h, gamma)
}

/// Evaluate the discrete-time error-bound recursion along a ROM solution:
/// per step, `||r^n(x~^n)|| / h + sum_j gamma_j B^{n-j}` with the residual
/// assembled from the ROM's own history, unrolled from a zero initial
/// error. A violated step is reported as data, not an error; an
/// inapplicable time step yields `applicable: false`.
pub fn error_bound_check(
    fom: &dyn FomModel,
    fom_traj: &Trajectory,
    rom_states: &[Vec<f64>],
    scheme: &LinearMultistepScheme,
    mu: &[f64],
    kappa: f64,
) -> Result<BoundReport> {
    if fom_traj.states.len() != rom_states.len() {
        return Err(Error::Dimension(
            "FOM and ROM trajectories have different lengths".into(),
        ));
    }
    let limit = scheme.alpha()[0].abs() / (scheme.beta()[0].abs() * kappa);
    let (h_main, gamma_main) = bound_constants(scheme, kappa);
    if !(scheme.dt() < limit) || h_main <= 0.0 {
        return Ok(BoundReport {
            applicable: false,
            h: h_main,
            gamma: gamma_main,
            kappa,
            steps: Vec::new(),
        });
    }
    let n_t = fom_traj.states.len() - 1;
    let mut bounds = vec![0.0f64]; // B^0 = 0 (exact initial condition)
    let mut steps = Vec::with_capacity(n_t);
    for n in 1..=n_t {
        let eff = scheme.effective_for_history(n);
        let (h, gamma) = bound_constants(&eff, kappa);
        let history: Vec<&[f64]> = (0..eff.k())
            .map(|j| rom_states[n - 1 - j].as_slice())
            .collect();
        let t_n = n as f64 * scheme.dt();
        let hist = crate::fom::history_contribution(fom, &eff, &history, t_n, mu)?;
        let r = residual_with_history(fom, &eff, &hist, &rom_states[n], t_n, mu);
        let mut bound = norm2(&r) / h;
        for (j, g) in gamma.iter().enumerate() {
            bound += g * bounds[n - 1 - j];
        }
        let true_error = norm2(
            &fom_traj.states[n]
                .iter()
                .zip(rom_states[n].iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let satisfied = true_error <= bound * (1.0 + 1e-12) + 1e-14;
        steps.push(BoundStep {
            bound,
            true_error,
            satisfied,
        });
        bounds.push(bound);
    }
    Ok(BoundReport {
        applicable: true,
        h: h_main,
        gamma: gamma_main,
        kappa,
        steps,
    })
}

/// One-step Galerkin/LSPG gap from a shared fixed history at successively
/// halved time steps. Returns `(dt, gap)` pairs; the gap is the l2 distance
/// between the two one-step solutions in reduced coordinates.
pub fn equivalence_gap(
    manifold: &dyn Manifold,
    fom: &dyn FomModel,
    scheme_for: &dyn Fn(f64) -> LinearMultistepScheme,
    dt0: f64,
    n_halvings: usize,
    xi_history: &[f64],
    mu: &[f64],
    config: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let x_hist = manifold.reconstruct(xi_history)?;
    for level in 0..=n_halvings {
        let dt = dt0 / (1u64 << level) as f64;
        let scheme = scheme_for(dt);
        if scheme.k() != 1 {
            return Err(Error::Dimension(
                "equivalence gap uses one-step schemes".into(),
            ));
        }
        let (xi_g, _) =
            galerkin_quasi_newton_solve(manifold, &scheme, &[xi_history], dt, mu, fom, config)?;
        let (xi_l, _) = gauss_newton_solve_with_guess(
            manifold,
            &scheme,
            &[x_hist.as_slice()],
            xi_history,
            dt,
            mu,
            fom,
            config,
        )?;
        let gap = norm2(
            &xi_g
                .iter()
                .zip(xi_l.iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        out.push((dt, gap));
    }
    Ok(out)
}

/// Successive gap ratios `gap_i / gap_{i+1}` (first-order vanishing gives
/// ratios near 2, second-order near 4).
pub fn gap_ratios(gaps: &[(f64, f64)]) -> Vec<f64> {
    gaps.windows(2)
        .map(|w| {
            if w[1].1 == 0.0 {
                f64::INFINITY
            } else {
                w[0].1 / w[1].1
            }
        })
        .collect()
}

/// Aggregated metrics for one (method, mu, dim) cell, emitted as JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub mu: Vec<f64>,
    pub dim: usize,
    pub relative_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pod_projection_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_projection_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold_projection_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    pub solver_iterations_total: u64,
    pub final_residual_norm: f64,
}
