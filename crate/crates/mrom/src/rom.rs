//! Projection of full-order models onto trial manifolds.
//!
//! Two residual-minimizing formulations: manifold Galerkin minimizes the
//! time-continuous residual (the reduced velocity is the pseudoinverse
//! image of the full velocity), manifold LSPG minimizes the time-discrete
//! residual norm per step via Gauss-Newton with the test basis
//! `(alpha_0 I - dt beta_0 df/dx) J_g`. Both use strong-Wolfe line
//! searches; the affine (POD) special case and the velocity-encoding
//! baseline are also provided.

use crate::error::{Error, Result};
use crate::fom::{
    history_contribution, residual_with_history, FomModel, LinearMultistepScheme,
};
use crate::linalg::{
    cholesky, cholesky_solve, dot, norm2, qr_factor, solve_dense, DenseMat, QrFactors,
};
use crate::net::AutoencoderModel;

/// Trial manifold `{ x_ref + g(xi) }` with a differentiable decoder.
pub trait Manifold: Sync {
    fn full_dim(&self) -> usize;
    fn reduced_dim(&self) -> usize;
    fn reference_state(&self) -> &[f64];
    fn initial_coords(&self) -> &[f64];

    /// Decoder g(xi).
    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>>;

    /// J_g(xi) v.
    fn decode_jvp(&self, xi: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    /// Decoder Jacobian J_g(xi), N x p.
    fn jacobian(&self, xi: &[f64]) -> Result<DenseMat> {
        let p = self.reduced_dim();
        let mut jac = DenseMat::zeros(self.full_dim(), p);
        for i in 0..p {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            jac.set_col(i, &self.decode_jvp(xi, &e)?);
        }
        Ok(jac)
    }

    /// Approximate inverse map (the autoencoder encoder, or `Phi^T` for the
    /// affine case); `None` when the manifold carries no encoder.
    fn encode(&self, x: &[f64]) -> Option<Vec<f64>>;

    /// Encoder value and Jacobian-vector product, when an encoder exists.
    fn encode_jvp(&self, x: &[f64], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)>;

    /// Reconstructed state `x_ref + g(xi)`.
    fn reconstruct(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.decode(xi)?;
        for (xv, &r) in x.iter_mut().zip(self.reference_state().iter()) {
            *xv += r;
        }
        Ok(x)
    }
}

// ── affine (POD) manifold ────────────────────────────────────────────

/// Affine trial manifold `x0 + Ran(Phi)` with orthonormal `Phi`: the
/// decoder is `xi -> Phi xi`, the initial coordinates vanish, and the
/// pseudoinverse is `Phi^T`.
pub struct PodManifold {
    basis: DenseMat,
    x_ref: Vec<f64>,
    xi0: Vec<f64>,
}

/// Builds the affine manifold, rejecting a basis whose orthonormality
/// defect exceeds 1e-10.
pub fn manifold_from_pod(basis: &DenseMat, x0: &[f64]) -> Result<PodManifold> {
    if basis.rows() != x0.len() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, initial state {}",
            basis.rows(),
            x0.len()
        )));
    }
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
    Ok(PodManifold {
        basis: basis.clone(),
        x_ref: x0.to_vec(),
        xi0: vec![0.0; basis.cols()],
    })
}

impl PodManifold {
    pub fn basis(&self) -> &DenseMat {
        &self.basis
    }
}

impl Manifold for PodManifold {
    fn full_dim(&self) -> usize {
        self.basis.rows()
    }

    fn reduced_dim(&self) -> usize {
        self.basis.cols()
    }

    fn reference_state(&self) -> &[f64] {
        &self.x_ref
    }

    fn initial_coords(&self) -> &[f64] {
        &self.xi0
    }

    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.basis.matvec(xi))
    }

    fn decode_jvp(&self, _xi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.basis.matvec(v))
    }

    fn jacobian(&self, _xi: &[f64]) -> Result<DenseMat> {
        Ok(self.basis.clone())
    }

    fn encode(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.basis.matvec_t(x))
    }

    fn encode_jvp(&self, x: &[f64], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.basis.matvec_t(x), self.basis.matvec_t(v)))
    }
}

// ── autoencoder manifold ─────────────────────────────────────────────

/// Nonlinear trial manifold whose decoder is a trained autoencoder decoder.
pub struct AutoencoderManifold {
    model: AutoencoderModel,
    x_ref: Vec<f64>,
    xi0: Vec<f64>,
}

/// Initial-condition construction: `xi0 = h_enc(0)` and
/// `x_ref = x0 - g(xi0)`, so the reconstructed initial state matches `x0`
/// exactly.
pub fn manifold_from_autoencoder(
    model: AutoencoderModel,
    x0: &[f64],
) -> Result<AutoencoderManifold> {
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, model expects {}",
            x0.len(),
            model.state_dim()
        )));
    }
    let zero = vec![0.0; model.state_dim()];
    let xi0 = model.encode(&zero)?;
    let g0 = model.decode(&xi0)?;
    let x_ref: Vec<f64> = x0.iter().zip(g0.iter()).map(|(a, b)| a - b).collect();
    Ok(AutoencoderManifold { model, x_ref, xi0 })
}

impl AutoencoderManifold {
    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }
}

impl Manifold for AutoencoderManifold {
    fn full_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn reduced_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn reference_state(&self) -> &[f64] {
        &self.x_ref
    }

    fn initial_coords(&self) -> &[f64] {
        &self.xi0
    }

    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.model.decode(xi)
    }

    fn decode_jvp(&self, xi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.model.decode_with_jvp(xi, v)?.1)
    }

    fn jacobian(&self, xi: &[f64]) -> Result<DenseMat> {
        self.model.decoder_jacobian(xi)
    }

    fn encode(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.model.encode(x).ok()
    }

    fn encode_jvp(&self, x: &[f64], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.model.encode_with_jvp(x, v).ok()
    }
}

// ── solver configuration ─────────────────────────────────────────────

/// Settings for the per-step nonlinear solvers.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Converged when the (reduced or stationarity) residual norm drops
    /// below this fraction of its initial value.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Strong-Wolfe sufficient-decrease constant.
    pub c1: f64,
    /// Strong-Wolfe curvature constant.
    pub c2: f64,
    /// Evaluation budget of one line search.
    pub ls_trials: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-6,
            max_iters: 25,
            c1: 1e-4,
            c2: 0.9,
            ls_trials: 30,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(rel_tol: f64) -> Self {
        SolverConfig {
            rel_tol,
            ..SolverConfig::default()
        }
    }

    fn validate(&self) {
        assert!(
            self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0,
            "need 0 < c1 < c2 < 1"
        );
    }
}

/// Per-step solver record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: u32,
    pub residual_norm: f64,
}

// ── strong-Wolfe line search ─────────────────────────────────────────

/// Bracket-and-zoom line search returning a step length satisfying the
/// strong Wolfe conditions
/// `phi(a) <= phi(0) + c1 a phi'(0)` and `|phi'(a)| <= c2 |phi'(0)|`.
///
/// `phi` returns the merit value and derivative at a step length. The full
/// step `a = 1` is tried first and accepted when admissible.
pub fn wolfe_line_search<F>(mut phi: F, c1: f64, c2: f64, max_trials: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (phi0, dphi0) = phi(0.0)?;
    if dphi0 >= 0.0 {
        return Err(Error::NotDescentDirection { slope: dphi0 });
    }
    let mut trials = 0usize;
    let mut a_prev = 0.0;
    let mut phi_prev = phi0;
    let mut dphi_prev = dphi0;
    let mut a = 1.0;
    let mut first = true;
    loop {
        trials += 1;
        if trials > max_trials {
            return Err(Error::LineSearchFailure { trials });
        }
        let (pa, da) = phi(a)?;
        if pa > phi0 + c1 * a * dphi0 || (!first && pa >= phi_prev) {
            return wolfe_zoom(
                &mut phi, a_prev, phi_prev, dphi_prev, a, phi0, dphi0, c1, c2, max_trials,
                &mut trials,
            );
        }
        if da.abs() <= c2 * dphi0.abs() {
            return Ok(a);
        }
        if da >= 0.0 {
            return wolfe_zoom(
                &mut phi, a, pa, da, a_prev, phi0, dphi0, c1, c2, max_trials, &mut trials,
            );
        }
        a_prev = a;
        phi_prev = pa;
        dphi_prev = da;
        a *= 2.0;
        first = false;
    }
}

#[allow(clippy::too_many_arguments)]
fn wolfe_zoom<F>(
    phi: &mut F,
    mut lo: f64,
    mut phi_lo: f64,
    mut dphi_lo: f64,
    mut hi: f64,
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    max_trials: usize,
    trials: &mut usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    loop {
        *trials += 1;
        if *trials > max_trials {
            return Err(Error::LineSearchFailure { trials: *trials });
        }
        let a = 0.5 * (lo + hi);
        let (pa, da) = phi(a)?;
        if pa > phi0 + c1 * a * dphi0 || pa >= phi_lo {
            hi = a;
        } else {
            if da.abs() <= c2 * dphi0.abs() {
                return Ok(a);
            }
            if da * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = a;
            phi_lo = pa;
            dphi_lo = da;
        }
        if (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            // interval collapsed onto a sufficient-decrease point; accept it
            // when the curvature condition is met to within a factor of two
            if phi_lo <= phi0 + c1 * lo * dphi0 && dphi_lo.abs() <= 2.0 * c2 * dphi0.abs() {
                return Ok(lo);
            }
            return Err(Error::LineSearchFailure { trials: *trials });
        }
    }
}

// ── manifold Galerkin ────────────────────────────────────────────────

fn rank_checked_qr(jac: &DenseMat) -> Result<QrFactors> {
    let qr = qr_factor(jac);
    let ratio = qr.diag_ratio();
    if ratio < 1e-10 {
        return Err(Error::RankDeficientJacobian {
            context: format!("R-diagonal ratio {ratio:.3e}"),
        });
    }
    Ok(qr)
}

/// Reduced velocity `J_g(xi)^+ f(x_ref + g(xi), t; mu)` via thin QR of the
/// decoder Jacobian.
pub fn galerkin_reduced_velocity(
    manifold: &dyn Manifold,
    xi: &[f64],
    t: f64,
    mu: &[f64],
    fom: &dyn FomModel,
) -> Result<Vec<f64>> {
    let x = manifold.reconstruct(xi)?;
    let f = fom.velocity(&x, t, mu);
    let jac = manifold.jacobian(xi)?;
    let qr = rank_checked_qr(&jac)?;
    qr.solve_ls(&f)
}

/// Pullback terms `J_g^+ f` at the history points, one per step j >= 1
/// with beta_j != 0 (empty vectors elsewhere).
pub fn galerkin_history_terms(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    reduced_history: &[&[f64]],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
) -> Result<Vec<Vec<f64>>> {
    let mut terms = Vec::with_capacity(reduced_history.len());
    for (j, xi) in reduced_history.iter().enumerate() {
        if scheme.beta()[j + 1] != 0.0 {
            let tj = t_n - (j + 1) as f64 * scheme.dt();
            terms.push(galerkin_reduced_velocity(manifold, xi, tj, mu, fom)?);
        } else {
            terms.push(Vec::new());
        }
    }
    Ok(terms)
}

/// Manifold Galerkin discrete residual
/// `alpha_0 xi - dt beta_0 J^+ f + sum_j (alpha_j xi^{n-j} - dt beta_j [J^+ f]_j)`,
/// with the history pullbacks supplied by [`galerkin_history_terms`].
pub fn galerkin_odelta_residual(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    reduced_history: &[&[f64]],
    candidate: &[f64],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
    history_terms: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let p = manifold.reduced_dim();
    if reduced_history.len() != scheme.k() || history_terms.len() != scheme.k() {
        return Err(Error::Dimension(format!(
            "scheme needs {} history entries",
            scheme.k()
        )));
    }
    let mut r: Vec<f64> = candidate.iter().map(|&v| scheme.alpha()[0] * v).collect();
    if scheme.beta()[0] != 0.0 {
        let v = galerkin_reduced_velocity(manifold, candidate, t_n, mu, fom)?;
        let c = scheme.dt() * scheme.beta()[0];
        for (rv, &vv) in r.iter_mut().zip(v.iter()) {
            *rv -= c * vv;
        }
    }
    for j in 1..=scheme.k() {
        let aj = scheme.alpha()[j];
        for (rv, &xv) in r.iter_mut().zip(reduced_history[j - 1].iter()) {
            *rv += aj * xv;
        }
        let bj = scheme.beta()[j];
        if bj != 0.0 {
            let term = &history_terms[j - 1];
            if term.len() != p {
                return Err(Error::Dimension(
                    "history pullback term has wrong dimension".into(),
                ));
            }
            let c = scheme.dt() * bj;
            for (rv, &tv) in r.iter_mut().zip(term.iter()) {
                *rv -= c * tv;
            }
        }
    }
    Ok(r)
}

/// Quasi-Newton solve of the Galerkin discrete equations with the
/// approximate residual Jacobian
/// `alpha_0 I - dt beta_0 J_g^+ (df/dx) J_g` and a strong-Wolfe line search
/// on the squared residual norm (derivative by central differences).
pub fn galerkin_quasi_newton_solve(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    reduced_history: &[&[f64]],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
    config: &SolverConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    config.validate();
    let p = manifold.reduced_dim();
    let hist_terms = galerkin_history_terms(manifold, scheme, reduced_history, t_n, mu, fom)?;
    let residual = |xi: &[f64]| -> Result<Vec<f64>> {
        galerkin_odelta_residual(
            manifold,
            scheme,
            reduced_history,
            xi,
            t_n,
            mu,
            fom,
            &hist_terms,
        )
    };
    let mut xi = reduced_history[0].to_vec();
    let mut r = residual(&xi)?;
    let r0 = norm2(&r);
    let floor = 1e-14 * (1.0 + norm2(&xi));
    if r0 <= floor {
        return Ok((
            xi,
            StepDiagnostics {
                iterations: 0,
                residual_norm: r0,
            },
        ));
    }
    let a0 = scheme.alpha()[0];
    let b0 = scheme.beta()[0];
    for iter in 1..=config.max_iters {
        // approximate Jacobian: alpha_0 I - dt beta_0 J^+ (df/dx) J
        let x = manifold.reconstruct(&xi)?;
        let jac = manifold.jacobian(&xi)?;
        let qr = rank_checked_qr(&jac)?;
        let jf = fom.jacobian(&x, t_n, mu);
        let mut approx = DenseMat::zeros(p, p);
        for i in 0..p {
            let ji = jac.col(i);
            let w = jf.matvec(&ji);
            let pull = qr.solve_ls(&w)?;
            for row in 0..p {
                let mut v = -scheme.dt() * b0 * pull[row];
                if row == i {
                    v += a0;
                }
                approx[(row, i)] = v;
            }
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let dir = solve_dense(approx, &neg_r)?;

        // full quasi-Newton step first: a residual contraction of 1/2 or
        // better satisfies the strong Wolfe conditions analytically, and
        // near the root it keeps converging where a finite-difference merit
        // derivative would be round-off noise
        let full: Vec<f64> = xi.iter().zip(dir.iter()).map(|(a, b)| a + b).collect();
        if let Ok(r_full) = residual(&full) {
            if norm2(&r_full) <= 0.5 * norm2(&r) {
                xi = full;
                r = r_full;
                let rn = norm2(&r);
                if rn <= config.rel_tol * r0 || rn <= floor {
                    return Ok((
                        xi,
                        StepDiagnostics {
                            iterations: iter as u32,
                            residual_norm: rn,
                        },
                    ));
                }
                continue;
            }
        }

        let merit = |lambda: f64| -> Result<f64> {
            let trial: Vec<f64> = xi
                .iter()
                .zip(dir.iter())
                .map(|(a, b)| a + lambda * b)
                .collect();
            let rt = residual(&trial)?;
            Ok(dot(&rt, &rt))
        };
        let phi = |lambda: f64| -> Result<(f64, f64)> {
            let v = merit(lambda)?;
            let h = 1e-7 * (1.0 + lambda.abs());
            let d = (merit(lambda + h)? - merit(lambda - h)?) / (2.0 * h);
            Ok((v, d))
        };
        // a stalled line search at an already well-reduced residual means
        // the merit hit its f64 resolution floor
        let step = match wolfe_line_search(phi, config.c1, config.c2, config.ls_trials) {
            Ok(s) => s,
            Err(Error::LineSearchFailure { .. }) | Err(Error::NotDescentDirection { .. })
                if norm2(&r) <= config.rel_tol.sqrt() * r0 =>
            {
                return Ok((
                    xi,
                    StepDiagnostics {
                        iterations: iter as u32 - 1,
                        residual_norm: norm2(&r),
                    },
                ));
            }
            Err(other) => return Err(other),
        };
        for (xv, &d) in xi.iter_mut().zip(dir.iter()) {
            *xv += step * d;
        }
        r = residual(&xi)?;
        let rn = norm2(&r);
        if rn <= config.rel_tol * r0 || rn <= floor {
            return Ok((
                xi,
                StepDiagnostics {
                    iterations: iter as u32,
                    residual_norm: rn,
                },
            ));
        }
    }
    Err(Error::StepFailure {
        step: 0,
        iterations: config.max_iters,
        residual_norm: norm2(&r),
    })
}

// ── manifold LSPG ────────────────────────────────────────────────────

/// Discrete FOM residual at the reconstructed candidate together with the
/// LSPG test basis `Psi = (alpha_0 I - dt beta_0 df/dx) J_g`, built from
/// Jacobian actions on the decoder Jacobian columns.
pub fn lspg_objective_and_test_basis(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    state_history: &[&[f64]],
    candidate: &[f64],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
) -> Result<(Vec<f64>, DenseMat)> {
    let hist = history_contribution(fom, scheme, state_history, t_n, mu)?;
    let x = manifold.reconstruct(candidate)?;
    let r = residual_with_history(fom, scheme, &hist, &x, t_n, mu);
    let psi = lspg_test_basis(manifold, scheme, candidate, &x, t_n, mu, fom)?;
    Ok((r, psi))
}

fn lspg_test_basis(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    xi: &[f64],
    x: &[f64],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
) -> Result<DenseMat> {
    let p = manifold.reduced_dim();
    let n = manifold.full_dim();
    let jac = manifold.jacobian(xi)?;
    let a0 = scheme.alpha()[0];
    let b0 = scheme.beta()[0];
    let mut psi = DenseMat::zeros(n, p);
    if b0 != 0.0 {
        let jf = fom.jacobian(x, t_n, mu);
        for i in 0..p {
            let ji = jac.col(i);
            let w = jf.matvec(&ji);
            let col: Vec<f64> = ji
                .iter()
                .zip(w.iter())
                .map(|(&jv, &wv)| a0 * jv - scheme.dt() * b0 * wv)
                .collect();
            psi.set_col(i, &col);
        }
    } else {
        for i in 0..p {
            let col: Vec<f64> = jac.col(i).iter().map(|&jv| a0 * jv).collect();
            psi.set_col(i, &col);
        }
    }
    Ok(psi)
}

/// Gauss-Newton solve of the per-step LSPG minimization
/// `min_xi || r^n(x_ref + g(xi)) ||^2`: normal-equations steps
/// `(Psi^T Psi) d = -Psi^T r` by Cholesky (with a tiny diagonal
/// regularization fallback), strong-Wolfe step lengths with the exact merit
/// derivative, stationarity `||Psi^T r|| <= tol * initial` at exit.
#[allow(clippy::too_many_arguments)]
pub fn gauss_newton_solve_with_guess(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    state_history: &[&[f64]],
    guess: &[f64],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
    config: &SolverConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    config.validate();
    let hist = history_contribution(fom, scheme, state_history, t_n, mu)?;
    gauss_newton_solve_from(manifold, scheme, &hist, Some(guess), t_n, mu, fom, config)
}

#[allow(clippy::too_many_arguments)]
fn gauss_newton_solve_from(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    hist: &[f64],
    guess: Option<&[f64]>,
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
    config: &SolverConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    let p = manifold.reduced_dim();
    let mut xi = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; p],
    };
    let eval_r = |xi_: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let x = manifold.reconstruct(xi_)?;
        let r = residual_with_history(fom, scheme, hist, &x, t_n, mu);
        Ok((x, r))
    };
    let (x0, mut r) = eval_r(&xi)?;
    let mut psi = lspg_test_basis(manifold, scheme, &xi, &x0, t_n, mu, fom)?;
    let mut grad = psi.matvec_t(&r);
    let g0 = norm2(&grad);
    let floor = 1e-14 * (1.0 + norm2(&r));
    if g0 <= floor {
        return Ok((
            xi,
            StepDiagnostics {
                iterations: 0,
                residual_norm: norm2(&r),
            },
        ));
    }
    for iter in 1..=config.max_iters {
        // normal equations with Cholesky, regularized retry on failure
        let gram = psi.gram();
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
        let neg_g: Vec<f64> = grad.iter().map(|v| -v).collect();
        let dir = cholesky_solve(&l, &neg_g);

        // full step first: halving the stationarity measure without
        // increasing the objective satisfies the strong Wolfe conditions
        // analytically in the contraction regime, and keeps converging
        // where the merit value can no longer resolve descent in f64
        let phi0 = dot(&r, &r);
        let full: Vec<f64> = xi.iter().zip(dir.iter()).map(|(a, b)| a + b).collect();
        let mut full_step_taken = false;
        if let Ok((x_full, r_f)) = eval_r(&full) {
            if let Ok(psi_f) = lspg_test_basis(manifold, scheme, &full, &x_full, t_n, mu, fom) {
                let g_f = psi_f.matvec_t(&r_f);
                let phi_noise = 1e3 * f64::EPSILON * (1.0 + phi0);
                if norm2(&g_f) <= 0.5 * norm2(&grad) && dot(&r_f, &r_f) <= phi0 + phi_noise {
                    xi = full;
                    r = r_f;
                    psi = psi_f;
                    grad = g_f;
                    full_step_taken = true;
                }
            }
        }
        if full_step_taken {
            let gn = norm2(&grad);
            if gn <= config.rel_tol * g0 || gn <= floor {
                return Ok((
                    xi,
                    StepDiagnostics {
                        iterations: iter as u32,
                        residual_norm: norm2(&r),
                    },
                ));
            }
            continue;
        }

        // Gauss-Newton converges only linearly on large-residual problems
        // and can stall where the merit no longer resolves the descent in
        // f64; accept the iterate once the predicted decrease is below
        // machine resolution and the stationarity measure has genuinely
        // dropped.
        let dphi0 = 2.0 * dot(&grad, &dir);
        let at_floor = dphi0.abs() <= 1e3 * f64::EPSILON * (1.0 + phi0);
        if at_floor && norm2(&grad) <= config.rel_tol.sqrt() * g0 {
            return Ok((
                xi,
                StepDiagnostics {
                    iterations: iter as u32 - 1,
                    residual_norm: norm2(&r),
                },
            ));
        }

        let phi = |lambda: f64| -> Result<(f64, f64)> {
            let trial: Vec<f64> = xi
                .iter()
                .zip(dir.iter())
                .map(|(a, b)| a + lambda * b)
                .collect();
            let xt = manifold.reconstruct(&trial)?;
            let rt = residual_with_history(fom, scheme, hist, &xt, t_n, mu);
            // d/d lambda ||r||^2 = 2 r^T (alpha_0 I - dt beta_0 J_f) J_g d
            let jd = manifold.decode_jvp(&trial, &dir)?;
            let a0 = scheme.alpha()[0];
            let b0 = scheme.beta()[0];
            let mut deriv = 0.0;
            if b0 != 0.0 {
                let jf = fom.jacobian(&xt, t_n, mu);
                let w = jf.matvec(&jd);
                for ((&rv, &jv), &wv) in rt.iter().zip(jd.iter()).zip(w.iter()) {
                    deriv += rv * (a0 * jv - scheme.dt() * b0 * wv);
                }
            } else {
                for (&rv, &jv) in rt.iter().zip(jd.iter()) {
                    deriv += rv * a0 * jv;
                }
            }
            Ok((dot(&rt, &rt), 2.0 * deriv))
        };
        let step = match wolfe_line_search(phi, config.c1, config.c2, config.ls_trials) {
            Ok(s) => s,
            Err(Error::LineSearchFailure { .. }) | Err(Error::NotDescentDirection { .. })
                if norm2(&grad) <= config.rel_tol.sqrt() * g0 =>
            {
                return Ok((
                    xi,
                    StepDiagnostics {
                        iterations: iter as u32 - 1,
                        residual_norm: norm2(&r),
                    },
                ));
            }
            Err(other) => return Err(other),
        };
        for (xv, &d) in xi.iter_mut().zip(dir.iter()) {
            *xv += step * d;
        }
        let (xn, rn) = eval_r(&xi)?;
        r = rn;
        psi = lspg_test_basis(manifold, scheme, &xi, &xn, t_n, mu, fom)?;
        grad = psi.matvec_t(&r);
        let gn = norm2(&grad);
        if gn <= config.rel_tol * g0 || gn <= floor {
            return Ok((
                xi,
                StepDiagnostics {
                    iterations: iter as u32,
                    residual_norm: norm2(&r),
                },
            ));
        }
    }
    Err(Error::StepFailure {
        step: 0,
        iterations: config.max_iters,
        residual_norm: norm2(&grad),
    })
}

// ── encoder-Galerkin baseline ────────────────────────────────────────

/// Plain Newton on the discrete equations of the velocity-encoding
/// baseline `xi' = h_enc(f(x_ref + g(xi), t))`. Kinematically inconsistent
/// by construction; kept for comparison studies.
fn encoder_galerkin_step(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    reduced_history: &[&[f64]],
    t_n: f64,
    mu: &[f64],
    fom: &dyn FomModel,
    config: &SolverConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    let p = manifold.reduced_dim();
    let encoded_velocity = |xi: &[f64], t: f64| -> Result<Vec<f64>> {
        let x = manifold.reconstruct(xi)?;
        let f = fom.velocity(&x, t, mu);
        manifold
            .encode(&f)
            .ok_or_else(|| Error::Dimension("manifold has no encoder".into()))
    };
    // history encoded velocities for beta_j != 0
    let mut hist_terms: Vec<Vec<f64>> = Vec::new();
    for (j, xi) in reduced_history.iter().enumerate() {
        if scheme.beta()[j + 1] != 0.0 {
            let tj = t_n - (j + 1) as f64 * scheme.dt();
            hist_terms.push(encoded_velocity(xi, tj)?);
        } else {
            hist_terms.push(Vec::new());
        }
    }
    let residual = |xi: &[f64]| -> Result<Vec<f64>> {
        let mut r: Vec<f64> = xi.iter().map(|&v| scheme.alpha()[0] * v).collect();
        if scheme.beta()[0] != 0.0 {
            let h = encoded_velocity(xi, t_n)?;
            let c = scheme.dt() * scheme.beta()[0];
            for (rv, &hv) in r.iter_mut().zip(h.iter()) {
                *rv -= c * hv;
            }
        }
        for j in 1..=scheme.k() {
            let aj = scheme.alpha()[j];
            for (rv, &xv) in r.iter_mut().zip(reduced_history[j - 1].iter()) {
                *rv += aj * xv;
            }
            let bj = scheme.beta()[j];
            if bj != 0.0 {
                let c = scheme.dt() * bj;
                for (rv, &tv) in r.iter_mut().zip(hist_terms[j - 1].iter()) {
                    *rv -= c * tv;
                }
            }
        }
        Ok(r)
    };

    let mut xi = reduced_history[0].to_vec();
    let mut r = residual(&xi)?;
    let r0 = norm2(&r);
    let floor = 1e-14 * (1.0 + norm2(&xi));
    if r0 <= floor {
        return Ok((
            xi,
            StepDiagnostics {
                iterations: 0,
                residual_norm: r0,
            },
        ));
    }
    for iter in 1..=config.max_iters {
        // Newton matrix alpha_0 I - dt beta_0 J_enc J_f J_g, column by column
        let x = manifold.reconstruct(&xi)?;
        let f = fom.velocity(&x, t_n, mu);
        let jf = fom.jacobian(&x, t_n, mu);
        let mut newton = DenseMat::zeros(p, p);
        for i in 0..p {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            let u = manifold.decode_jvp(&xi, &e)?;
            let w = jf.matvec(&u);
            let (_, z) = manifold
                .encode_jvp(&f, &w)
                .ok_or_else(|| Error::Dimension("manifold has no encoder".into()))?;
            for row in 0..p {
                let mut v = -scheme.dt() * scheme.beta()[0] * z[row];
                if row == i {
                    v += scheme.alpha()[0];
                }
                newton[(row, i)] = v;
            }
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = solve_dense(newton, &neg_r)?;
        for (xv, &d) in xi.iter_mut().zip(dx.iter()) {
            *xv += d;
        }
        r = residual(&xi)?;
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::StepFailure {
                step: 0,
                iterations: iter,
                residual_norm: rn,
            });
        }
        if rn <= config.rel_tol * r0 || rn <= floor {
            return Ok((
                xi,
                StepDiagnostics {
                    iterations: iter as u32,
                    residual_norm: rn,
                },
            ));
        }
    }
    Err(Error::StepFailure {
        step: 0,
        iterations: config.max_iters,
        residual_norm: norm2(&r),
    })
}

// ── trajectory driver ────────────────────────────────────────────────

/// Projection flavor for a reduced-order simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RomMethod {
    Galerkin,
    Lspg,
    EncoderGalerkin,
}

impl RomMethod {
    pub fn label(&self) -> &'static str {
        match self {
            RomMethod::Galerkin => "manifold-galerkin",
            RomMethod::Lspg => "manifold-lspg",
            RomMethod::EncoderGalerkin => "encoder-galerkin",
        }
    }
}

/// Reduced trajectory plus reconstructed states and solver diagnostics.
#[derive(Clone, Debug)]
pub struct RomSolution {
    pub reduced: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub dt: f64,
    pub mu: Vec<f64>,
    pub method: RomMethod,
}

impl RomSolution {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// March the reduced-order model: sequential per-step solves with the
/// previous solution as initial guess, backward-Euler startup for
/// multi-step schemes, reconstruction through the manifold.
pub fn rom_simulate(
    manifold: &dyn Manifold,
    scheme: &LinearMultistepScheme,
    mu: &[f64],
    n_t: usize,
    method: RomMethod,
    fom: &dyn FomModel,
    config: &SolverConfig,
) -> Result<RomSolution> {
    let mut reduced = vec![manifold.initial_coords().to_vec()];
    let mut states = vec![manifold.reconstruct(&reduced[0])?];
    let mut diagnostics = Vec::new();
    for n in 1..=n_t {
        let eff = scheme.effective_for_history(reduced.len());
        let t_n = n as f64 * scheme.dt();
        let red_hist: Vec<&[f64]> = (0..eff.k())
            .map(|j| reduced[reduced.len() - 1 - j].as_slice())
            .collect();
        let result = match method {
            RomMethod::Galerkin => {
                galerkin_quasi_newton_solve(manifold, &eff, &red_hist, t_n, mu, fom, config)
            }
            RomMethod::Lspg => {
                let state_hist: Vec<&[f64]> = (0..eff.k())
                    .map(|j| states[states.len() - 1 - j].as_slice())
                    .collect();
                gauss_newton_solve_with_guess(
                    manifold,
                    &eff,
                    &state_hist,
                    red_hist[0],
                    t_n,
                    mu,
                    fom,
                    config,
                )
            }
            RomMethod::EncoderGalerkin => {
                encoder_galerkin_step(manifold, &eff, &red_hist, t_n, mu, fom, config)
            }
        };
        let (xi, diag) = result.map_err(|e| match e {
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
        states.push(manifold.reconstruct(&xi)?);
        reduced.push(xi);
        diagnostics.push(diag);
    }
    Ok(RomSolution {
        reduced,
        states,
        diagnostics,
        dt: scheme.dt(),
        mu: mu.to_vec(),
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{simulate_fom, LinearFom, NewtonConfig};
    use crate::linalg::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthonormal_basis(n: usize, p: usize, seed: u64) -> DenseMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < p {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for c in &cols {
                let proj = dot(c, &v);
                for (vv, &cv) in v.iter_mut().zip(c.iter()) {
                    *vv -= proj * cv;
                }
            }
            // second pass for numerical cleanliness
            for c in &cols {
                let proj = dot(c, &v);
                for (vv, &cv) in v.iter_mut().zip(c.iter()) {
                    *vv -= proj * cv;
                }
            }
            let nv = norm2(&v);
            if nv > 1e-8 {
                for vv in &mut v {
                    *vv /= nv;
                }
                cols.push(v);
            }
        }
        let mut m = DenseMat::zeros(n, p);
        for (j, c) in cols.iter().enumerate() {
            m.set_col(j, c);
        }
        m
    }

    fn random_linear_fom(n: usize, seed: u64, x0: Vec<f64>) -> LinearFom {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.gen_range(-0.5..0.5);
            }
            a[(i, i)] -= 1.5;
        }
        LinearFom::new(a, x0)
    }

    #[test]
    fn wolfe_quadratic_accepts_near_optimum() {
        // phi(a) = (a - 1)^2
        let phi = |a: f64| Ok(((a - 1.0) * (a - 1.0), 2.0 * (a - 1.0)));
        let step = wolfe_line_search(phi, 1e-4, 0.9, 30).unwrap();
        let (v, d) = phi(step).unwrap();
        assert!(v <= 1.0 + 1e-4 * step * (-2.0));
        assert!(d.abs() <= 0.9 * 2.0);
        assert!((step - 1.0).abs() < 0.6);
    }

    #[test]
    fn wolfe_accepts_full_step_when_admissible() {
        // minimum exactly at 1: full step satisfies both conditions
        let phi = |a: f64| Ok(((a - 1.0) * (a - 1.0), 2.0 * (a - 1.0)));
        assert_eq!(wolfe_line_search(phi, 1e-4, 0.9, 30).unwrap(), 1.0);
    }

    #[test]
    fn wolfe_rejects_ascent() {
        let phi = |a: f64| Ok((a * a, 2.0 * a));
        assert!(matches!(
            wolfe_line_search(phi, 1e-4, 0.9, 30),
            Err(Error::NotDescentDirection { .. })
        ));
    }

    #[test]
    fn pod_manifold_invariants() {
        let basis = orthonormal_basis(10, 3, 1);
        let x0: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = manifold_from_pod(&basis, &x0).unwrap();
        assert_eq!(m.decode(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 10]);
        let rec = m.reconstruct(m.initial_coords()).unwrap();
        assert!(max_abs_diff(&rec, &x0) < 1e-12);
        // constant Jacobian
        let j1 = m.jacobian(&[0.0, 0.0, 0.0]).unwrap();
        let j2 = m.jacobian(&[5.0, -2.0, 1.0]).unwrap();
        assert_eq!(j1, j2);
        // non-orthonormal basis rejected
        let mut bad = basis.clone();
        bad[(0, 0)] += 1e-3;
        assert!(matches!(
            manifold_from_pod(&bad, &x0),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn galerkin_velocity_is_phi_t_f_on_affine_manifold() {
        let n = 12;
        let basis = orthonormal_basis(n, 4, 3);
        let x0 = vec![0.5; n];
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let fom = random_linear_fom(n, 7, x0.clone());
        let xi = vec![0.3, -0.2, 0.1, 0.05];
        let v = galerkin_reduced_velocity(&m, &xi, 0.0, &[], &fom).unwrap();
        let x = m.reconstruct(&xi).unwrap();
        let f = fom.velocity(&x, 0.0, &[]);
        let want = basis.matvec_t(&f);
        assert!(max_abs_diff(&v, &want) < 1e-12);
    }

    #[test]
    fn galerkin_velocity_least_squares_properties() {
        let n = 15;
        let basis = orthonormal_basis(n, 4, 9);
        let x0 = vec![1.0; n];
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let fom = random_linear_fom(n, 11, x0.clone());
        let xi = vec![0.1, 0.2, -0.3, 0.4];
        let v = galerkin_reduced_velocity(&m, &xi, 0.0, &[], &fom).unwrap();
        let x = m.reconstruct(&xi).unwrap();
        let f = fom.velocity(&x, 0.0, &[]);
        // residual f - J v orthogonal to the tangent space
        let jv = basis.matvec(&v);
        let resid: Vec<f64> = f.iter().zip(jv.iter()).map(|(a, b)| a - b).collect();
        let jtr = basis.matvec_t(&resid);
        assert!(norm2(&jtr) < 1e-9 * norm2(&f).max(1.0));
        // when f lies in the range, reconstruction is exact
        let f_in_range = basis.matvec(&[1.0, -2.0, 0.5, 0.25]);
        let qr = qr_factor(&basis);
        let v2 = qr.solve_ls(&f_in_range).unwrap();
        let back = basis.matvec(&v2);
        assert!(max_abs_diff(&back, &f_in_range) < 1e-10);
    }

    #[test]
    fn galerkin_residual_commutes_with_projection_on_affine_manifold() {
        // Phi^T r^n(x_ref + Phi xi) equals the Galerkin discrete residual
        let n = 10;
        let p = 3;
        let basis = orthonormal_basis(n, p, 5);
        let x0 = vec![0.2; n];
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let fom = random_linear_fom(n, 13, x0.clone());
        let scheme = LinearMultistepScheme::backward_euler(0.05);
        let xi_prev = vec![0.1, -0.2, 0.3];
        let candidate = vec![0.15, -0.1, 0.25];
        let hist_terms =
            galerkin_history_terms(&m, &scheme, &[&xi_prev], 0.05, &[], &fom).unwrap();
        let r_gal = galerkin_odelta_residual(
            &m,
            &scheme,
            &[&xi_prev],
            &candidate,
            0.05,
            &[],
            &fom,
            &hist_terms,
        )
        .unwrap();
        // discretize-then-project route
        let x_prev = m.reconstruct(&xi_prev).unwrap();
        let r_fom = crate::fom::odelta_residual(
            &fom,
            &scheme,
            &[&x_prev],
            &m.reconstruct(&candidate).unwrap(),
            0.05,
            &[],
        )
        .unwrap();
        let want = basis.matvec_t(&r_fom);
        assert!(max_abs_diff(&r_gal, &want) < 1e-12);
    }

    #[test]
    fn galerkin_residual_zero_velocity_case() {
        let n = 8;
        let p = 2;
        let basis = orthonormal_basis(n, p, 21);
        let x0 = vec![0.0; n];
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let fom = LinearFom::new(DenseMat::zeros(n, n), x0);
        let scheme = LinearMultistepScheme::backward_euler(0.1);
        let xi_prev = vec![1.0, 2.0];
        let candidate = vec![0.5, -0.5];
        let hist_terms =
            galerkin_history_terms(&m, &scheme, &[&xi_prev], 0.1, &[], &fom).unwrap();
        let r = galerkin_odelta_residual(
            &m,
            &scheme,
            &[&xi_prev],
            &candidate,
            0.1,
            &[],
            &fom,
            &hist_terms,
        )
        .unwrap();
        // alpha_0 xi + alpha_1 xi_prev
        let want: Vec<f64> = candidate
            .iter()
            .zip(xi_prev.iter())
            .map(|(&c, &h)| c - h)
            .collect();
        assert!(max_abs_diff(&r, &want) < 1e-14);
    }

    #[test]
    fn quasi_newton_one_iteration_on_affine_linear_case() {
        // affine manifold + linear FOM: the neglected curvature term
        // vanishes, so the approximate Jacobian is exact
        let n = 12;
        let p = 3;
        let basis = orthonormal_basis(n, p, 31);
        let x0 = vec![1.0; n];
        let fom = random_linear_fom(n, 33, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let scheme = LinearMultistepScheme::backward_euler(0.05);
        let xi_prev = vec![0.0; p];
        let (xi, diag) = galerkin_quasi_newton_solve(
            &m,
            &scheme,
            &[&xi_prev],
            0.05,
            &[],
            &fom,
            &SolverConfig::with_tol(1e-10),
        )
        .unwrap();
        assert_eq!(diag.iterations, 1);
        // verify it actually solves the projected linear system
        let hist_terms =
            galerkin_history_terms(&m, &scheme, &[&xi_prev], 0.05, &[], &fom).unwrap();
        let r = galerkin_odelta_residual(
            &m,
            &scheme,
            &[&xi_prev],
            &xi,
            0.05,
            &[],
            &fom,
            &hist_terms,
        )
        .unwrap();
        assert!(norm2(&r) < 1e-10);
    }

    #[test]
    fn explicit_scheme_test_basis_is_alpha_jacobian() {
        let n = 9;
        let p = 2;
        let basis = orthonormal_basis(n, p, 41);
        let x0 = vec![0.3; n];
        let fom = random_linear_fom(n, 43, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        // forward Euler: alpha = (1, -1), beta = (0, 1)
        let scheme = LinearMultistepScheme::new(vec![1.0, -1.0], vec![0.0, 1.0], 0.1).unwrap();
        let xi = vec![0.2, -0.1];
        let x_prev = m.reconstruct(&[0.0, 0.0]).unwrap();
        let (_, psi) =
            lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &xi, 0.1, &[], &fom).unwrap();
        for i in 0..n {
            for j in 0..p {
                assert!((psi[(i, j)] - basis[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn test_basis_matches_finite_differences_of_residual() {
        // Psi columns equal d(residual o reconstruct)/d xi since the
        // residual's state Jacobian is exactly alpha_0 I - dt beta_0 df/dx
        let n = 10;
        let p = 3;
        let basis = orthonormal_basis(n, p, 51);
        let x0 = vec![0.4; n];
        let fom = random_linear_fom(n, 53, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let scheme = LinearMultistepScheme::backward_euler(0.08);
        let xi = vec![0.1, 0.3, -0.2];
        let x_prev = m.reconstruct(&[0.0, 0.0, 0.0]).unwrap();
        let (_, psi) =
            lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &xi, 0.08, &[], &fom).unwrap();
        let h = 1e-6;
        for col in 0..p {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[col] += h;
            xm[col] -= h;
            let (rp, _) =
                lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &xp, 0.08, &[], &fom)
                    .unwrap();
            let (rm, _) =
                lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &xm, 0.08, &[], &fom)
                    .unwrap();
            for row in 0..n {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let scale = psi[(row, col)].abs().max(1e-6);
                assert!(
                    (psi[(row, col)] - fd).abs() / scale < 1e-5,
                    "entry ({row},{col})"
                );
            }
        }
    }

    #[test]
    fn gauss_newton_exact_for_linear_residual() {
        let n = 14;
        let p = 4;
        let basis = orthonormal_basis(n, p, 61);
        let x0 = vec![0.7; n];
        let fom = random_linear_fom(n, 63, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let scheme = LinearMultistepScheme::backward_euler(0.05);
        let x_prev = x0.clone();
        let (xi, diag) = gauss_newton_solve_with_guess(
            &m,
            &scheme,
            &[&x_prev],
            &vec![0.0; p],
            0.05,
            &[],
            &fom,
            &SolverConfig::with_tol(1e-10),
        )
        .unwrap();
        assert_eq!(diag.iterations, 1);
        // stationarity + local-minimum probe
        let (r, psi) =
            lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &xi, 0.05, &[], &fom).unwrap();
        let grad = psi.matvec_t(&r);
        assert!(norm2(&grad) < 1e-9);
        let base = dot(&r, &r).sqrt();
        for i in 0..p {
            for sign in [-1.0, 1.0] {
                let mut probe = xi.clone();
                probe[i] += sign * 1e-4;
                let (rp, _) =
                    lspg_objective_and_test_basis(&m, &scheme, &[&x_prev], &probe, 0.05, &[], &fom)
                        .unwrap();
                assert!(dot(&rp, &rp).sqrt() >= base - 1e-10);
            }
        }
    }

    #[test]
    fn rom_simulate_initial_condition_exact() {
        let n = 10;
        let p = 3;
        let basis = orthonormal_basis(n, p, 71);
        let x0: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let fom = random_linear_fom(n, 73, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let scheme = LinearMultistepScheme::backward_euler(0.02);
        for method in [RomMethod::Galerkin, RomMethod::Lspg, RomMethod::EncoderGalerkin] {
            let sol = rom_simulate(&m, &scheme, &[], 5, method, &fom, &SolverConfig::default())
                .unwrap();
            assert!(
                max_abs_diff(&sol.states[0], &x0) < 1e-12,
                "{method:?} initial condition"
            );
            assert_eq!(sol.states.len(), 6);
            assert_eq!(sol.diagnostics.len(), 5);
        }
    }

    #[test]
    fn full_rank_manifold_rom_matches_fom() {
        // with p = N and an identity basis every method reproduces the FOM
        let n = 6;
        let basis = DenseMat::identity(n);
        let x0 = vec![1.0, 0.5, -0.25, 2.0, 0.0, -1.0];
        let fom = random_linear_fom(n, 83, x0.clone());
        let m = manifold_from_pod(&basis, &x0).unwrap();
        let scheme = LinearMultistepScheme::backward_euler(0.05);
        let fom_traj = simulate_fom(&fom, &scheme, &[], 10, &NewtonConfig {
            rel_tol: 1e-12,
            max_iter: 50,
        })
        .unwrap();
        for method in [RomMethod::Galerkin, RomMethod::Lspg] {
            let sol = rom_simulate(
                &m,
                &scheme,
                &[],
                10,
                method,
                &fom,
                &SolverConfig {
                    rel_tol: 1e-12,
                    max_iters: 50,
                    ..SolverConfig::default()
                },
            )
            .unwrap();
            for (a, b) in sol.states.iter().zip(fom_traj.states.iter()) {
                assert!(max_abs_diff(a, b) < 1e-8, "{method:?}");
            }
        }
    }
}
