//! Full-order models and their implicit linear-multistep discretization.
//!
//! A [`FomModel`] exposes the semi-discrete velocity, its Jacobian (as an
//! operator and in factorable form), the parameterized initial state, and
//! grid metadata for restriction. [`fom_step`] solves one implicit step of
//! the discrete residual by Newton's method; [`simulate_fom`] marches a
//! whole trajectory, starting multi-step schemes with backward Euler.

pub mod burgers;
pub mod linear;
pub mod reacting;

pub use burgers::{godunov_flux, BurgersModel};
pub use linear::LinearFom;
pub use reacting::ReactingModel;

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, norm2, BandedLu, BandedMat, DenseMat, LuFactors};
use crate::net::GridInfo;

/// Parameterized dynamical system `x' = f(x, t; mu)`.
pub trait FomModel: Sync {
    /// State dimension N.
    fn dim(&self) -> usize;

    /// Number of parameters.
    fn param_dim(&self) -> usize;

    /// Velocity f(x, t; mu).
    fn velocity(&self, x: &[f64], t: f64, mu: &[f64]) -> Vec<f64>;

    /// Action of the velocity Jacobian: (df/dx) v.
    fn jacobian_apply(&self, x: &[f64], t: f64, mu: &[f64], v: &[f64]) -> Vec<f64> {
        self.jacobian(x, t, mu).matvec(v)
    }

    /// Velocity Jacobian in factorable form.
    fn jacobian(&self, x: &[f64], t: f64, mu: &[f64]) -> FomJacobian;

    /// Initial state x0(mu).
    fn initial_state(&self, mu: &[f64]) -> Vec<f64>;

    /// Grid metadata for the restriction operator.
    fn grid(&self) -> GridInfo;
}

/// Velocity Jacobian, either dense or banded under a fixed index
/// permutation (stencil models interleave channels per grid point to keep
/// the band narrow while the state itself stays channel-major).
pub enum FomJacobian {
    Dense(DenseMat),
    PermutedBanded {
        /// `perm[i]` is the banded row/column of state index i.
        perm: std::sync::Arc<Vec<usize>>,
        banded: BandedMat,
    },
}

impl FomJacobian {
    /// J v.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FomJacobian::Dense(m) => m.matvec(v),
            FomJacobian::PermutedBanded { perm, banded } => {
                let mut vp = vec![0.0; v.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    vp[pi] = v[i];
                }
                let wp = banded.matvec(&vp);
                let mut w = vec![0.0; v.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    w[i] = wp[pi];
                }
                w
            }
        }
    }

    /// J^T v.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FomJacobian::Dense(m) => m.matvec_t(v),
            FomJacobian::PermutedBanded { perm, banded } => {
                let mut vp = vec![0.0; v.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    vp[pi] = v[i];
                }
                let wp = banded.matvec_t(&vp);
                let mut w = vec![0.0; v.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    w[i] = wp[pi];
                }
                w
            }
        }
    }

    /// Factor `a I + g J` for Newton solves.
    pub fn shift_scale_factor(self, a: f64, g: f64) -> Result<FomSolver> {
        match self {
            FomJacobian::Dense(mut m) => {
                let n = m.rows();
                m.scale(g);
                for i in 0..n {
                    m[(i, i)] += a;
                }
                Ok(FomSolver::Dense(lu_factor(m)?))
            }
            FomJacobian::PermutedBanded { perm, mut banded } => {
                let n = banded.n();
                banded.scale(g);
                for i in 0..n {
                    banded.add(i, i, a);
                }
                Ok(FomSolver::PermutedBanded {
                    perm,
                    lu: banded.factor()?,
                })
            }
        }
    }
}

/// Factored Newton matrix.
pub enum FomSolver {
    Dense(LuFactors),
    PermutedBanded {
        perm: std::sync::Arc<Vec<usize>>,
        lu: BandedLu,
    },
}

impl FomSolver {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            FomSolver::Dense(lu) => lu.solve(b),
            FomSolver::PermutedBanded { perm, lu } => {
                let mut bp = vec![0.0; b.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    bp[pi] = b[i];
                }
                let xp = lu.solve(&bp);
                let mut x = vec![0.0; b.len()];
                for (i, &pi) in perm.iter().enumerate() {
                    x[i] = xp[pi];
                }
                x
            }
        }
    }
}

// ── linear multistep schemes ─────────────────────────────────────────

/// Linear k-step scheme with coefficients alpha_0..alpha_k, beta_0..beta_k.
///
/// Construction requires the alpha coefficients to cancel exactly in
/// left-to-right f64 summation; the named constructors produce such sets.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMultistepScheme {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    dt: f64,
}

impl LinearMultistepScheme {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, dt: f64) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.len() < 2 {
            return Err(Error::Dimension(
                "scheme needs matching alpha/beta of length k+1 >= 2".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::Dimension("time step must be positive".into()));
        }
        let sum = alpha.iter().fold(0.0, |s, a| s + a);
        if sum != 0.0 {
            return Err(Error::SchemeCoefficients { sum });
        }
        if alpha[0] == 0.0 {
            return Err(Error::Dimension("alpha_0 must be nonzero".into()));
        }
        Ok(LinearMultistepScheme { alpha, beta, dt })
    }

    /// Backward Euler: k=1, alpha = (1, -1), beta = (1, 0).
    pub fn backward_euler(dt: f64) -> Self {
        LinearMultistepScheme::new(vec![1.0, -1.0], vec![1.0, 0.0], dt).expect("valid scheme")
    }

    /// BDF2: alpha = (1, -4/3, 1/3), beta = (2/3, 0, 0). The alpha_2 entry
    /// is written as `4/3 - 1` so the coefficients cancel exactly in f64.
    pub fn bdf2(dt: f64) -> Self {
        let a1 = -4.0 / 3.0;
        let a2 = 4.0 / 3.0 - 1.0;
        LinearMultistepScheme::new(vec![1.0, a1, a2], vec![2.0 / 3.0, 0.0, 0.0], dt)
            .expect("valid scheme")
    }

    /// Number of steps k.
    pub fn k(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_implicit(&self) -> bool {
        self.beta[0] != 0.0
    }

    /// Scheme with the same dt usable for the step `n` (1-based) given the
    /// available history length: multi-step schemes start with backward
    /// Euler until enough history exists.
    pub fn effective_for_history(&self, available: usize) -> LinearMultistepScheme {
        if available >= self.k() {
            self.clone()
        } else {
            LinearMultistepScheme::backward_euler(self.dt)
        }
    }
}

/// Newton settings for the FOM step solve.
#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    /// Convergence when the residual norm drops below rel_tol times its
    /// initial value.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rel_tol: 1e-6,
            max_iter: 25,
        }
    }
}

/// History term of the discrete residual:
/// `sum_j alpha_j x^{n-j} - dt sum_j beta_j f(x^{n-j}, t^{n-j})`.
///
/// `history[j-1]` is x^{n-j}; t_n is the new time instance.
pub fn history_contribution(
    model: &dyn FomModel,
    scheme: &LinearMultistepScheme,
    history: &[&[f64]],
    t_n: f64,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let k = scheme.k();
    if history.len() != k {
        return Err(Error::Dimension(format!(
            "scheme needs {k} history states, got {}",
            history.len()
        )));
    }
    let n = model.dim();
    let mut acc = vec![0.0; n];
    for j in 1..=k {
        let xj = history[j - 1];
        if xj.len() != n {
            return Err(Error::Dimension("history state dimension mismatch".into()));
        }
        let aj = scheme.alpha()[j];
        for (a, &x) in acc.iter_mut().zip(xj.iter()) {
            *a += aj * x;
        }
        let bj = scheme.beta()[j];
        if bj != 0.0 {
            let tj = t_n - j as f64 * scheme.dt();
            let f = model.velocity(xj, tj, mu);
            let c = scheme.dt() * bj;
            for (a, &fv) in acc.iter_mut().zip(f.iter()) {
                *a -= c * fv;
            }
        }
    }
    Ok(acc)
}

/// Discrete residual of the linear multistep scheme at a candidate state:
/// `alpha_0 xi - dt beta_0 f(xi, t^n) + history terms`.
pub fn odelta_residual(
    model: &dyn FomModel,
    scheme: &LinearMultistepScheme,
    history: &[&[f64]],
    candidate: &[f64],
    t_n: f64,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let hist = history_contribution(model, scheme, history, t_n, mu)?;
    Ok(residual_with_history(
        model, scheme, &hist, candidate, t_n, mu,
    ))
}

/// Residual given a precomputed history contribution.
pub fn residual_with_history(
    model: &dyn FomModel,
    scheme: &LinearMultistepScheme,
    hist: &[f64],
    candidate: &[f64],
    t_n: f64,
    mu: &[f64],
) -> Vec<f64> {
    let a0 = scheme.alpha()[0];
    let b0 = scheme.beta()[0];
    let mut r: Vec<f64> = candidate
        .iter()
        .zip(hist.iter())
        .map(|(&x, &h)| a0 * x + h)
        .collect();
    if b0 != 0.0 {
        let f = model.velocity(candidate, t_n, mu);
        let c = scheme.dt() * b0;
        for (rv, &fv) in r.iter_mut().zip(f.iter()) {
            *rv -= c * fv;
        }
    }
    r
}

/// One implicit step: Newton iterations on the discrete residual with the
/// exact residual Jacobian `alpha_0 I - dt beta_0 df/dx`, initial guess
/// x^{n-1}. Returns the new state and the iteration count.
pub fn fom_step(
    model: &dyn FomModel,
    scheme: &LinearMultistepScheme,
    history: &[&[f64]],
    t_n: f64,
    mu: &[f64],
    config: &NewtonConfig,
) -> Result<(Vec<f64>, usize)> {
    if !scheme.is_implicit() {
        return Err(Error::Dimension(
            "fom_step requires an implicit scheme (beta_0 != 0)".into(),
        ));
    }
    let hist = history_contribution(model, scheme, history, t_n, mu)?;
    let mut x = history[0].to_vec();
    let mut r = residual_with_history(model, scheme, &hist, &x, t_n, mu);
    let r0 = norm2(&r);
    let floor = 1e-14 * (1.0 + norm2(&x));
    if r0 <= floor {
        return Ok((x, 0));
    }
    let a0 = scheme.alpha()[0];
    let g = -scheme.dt() * scheme.beta()[0];
    for iter in 1..=config.max_iter {
        let jac = model.jacobian(&x, t_n, mu);
        let solver = jac.shift_scale_factor(a0, g)?;
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = solver.solve(&neg_r);
        for (xv, &d) in x.iter_mut().zip(dx.iter()) {
            *xv += d;
        }
        r = residual_with_history(model, scheme, &hist, &x, t_n, mu);
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::StepFailure {
                step: 0,
                iterations: iter,
                residual_norm: rn,
            });
        }
        if rn <= config.rel_tol * r0 || rn <= floor {
            return Ok((x, iter));
        }
    }
    Err(Error::StepFailure {
        step: 0,
        iterations: config.max_iter,
        residual_norm: norm2(&r),
    })
}

/// Computed FOM trajectory: states x^0..x^{n_t} at uniform time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub mu: Vec<f64>,
}

impl Trajectory {
    /// Number of time steps n_t (states.len() - 1).
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }
}

/// March `n_t` implicit steps from the parameterized initial condition.
/// Multi-step schemes take lower-order (backward Euler) startup steps.
pub fn simulate_fom(
    model: &dyn FomModel,
    scheme: &LinearMultistepScheme,
    mu: &[f64],
    n_t: usize,
    config: &NewtonConfig,
) -> Result<Trajectory> {
    let mut states = vec![model.initial_state(mu)];
    for n in 1..=n_t {
        let eff = scheme.effective_for_history(states.len());
        let history: Vec<&[f64]> = (0..eff.k())
            .map(|j| states[states.len() - 1 - j].as_slice())
            .collect();
        let t_n = n as f64 * scheme.dt();
        let (x, _iters) = fom_step(model, &eff, &history, t_n, mu, config).map_err(|e| match e {
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
        states.push(x);
    }
    Ok(Trajectory {
        states,
        dt: scheme.dt(),
        mu: mu.to_vec(),
    })
}
