//! Parameterized 1D inviscid Burgers benchmark: Godunov finite volumes on
//! [0, 100] with inflow value mu_1 at the left boundary, zero-gradient
//! extrapolation at the right boundary, source term `0.02 exp(mu_2 x)`,
//! and unit initial state.

use super::{FomJacobian, FomModel};
use crate::linalg::DenseMat;
use crate::net::GridInfo;
use std::sync::atomic::{AtomicBool, Ordering};

/// Exact Godunov numerical flux for the convex flux f(w) = w^2 / 2:
/// the minimum of f over [w_l, w_r] when w_l <= w_r, the maximum over
/// [w_r, w_l] otherwise.
pub fn godunov_flux(w_l: f64, w_r: f64) -> f64 {
    let f = |w: f64| 0.5 * w * w;
    if w_l <= w_r {
        if w_l <= 0.0 && 0.0 <= w_r {
            0.0
        } else {
            f(w_l).min(f(w_r))
        }
    } else {
        f(w_l).max(f(w_r))
    }
}

/// One-sided derivatives (d/dw_l, d/dw_r) of the Godunov flux; at kinks the
/// active branch is differentiated.
pub fn godunov_flux_grad(w_l: f64, w_r: f64) -> (f64, f64) {
    if w_l <= w_r {
        if w_l <= 0.0 && 0.0 <= w_r {
            (0.0, 0.0)
        } else if w_l > 0.0 {
            (w_l, 0.0)
        } else {
            (0.0, w_r)
        }
    } else if 0.5 * w_l * w_l >= 0.5 * w_r * w_r {
        (w_l, 0.0)
    } else {
        (0.0, w_r)
    }
}

const PARAM_LO: [f64; 2] = [4.25, 0.015];
const PARAM_HI: [f64; 2] = [5.5, 0.03];

/// 1D Burgers finite-volume model with `n` control volumes.
pub struct BurgersModel {
    n: usize,
    length: f64,
    source_coeff: f64,
    warned: AtomicBool,
}

impl BurgersModel {
    pub fn new(n: usize) -> Self {
        BurgersModel {
            n,
            length: 100.0,
            source_coeff: 0.02,
            warned: AtomicBool::new(false),
        }
    }

    /// Variant with an overridden source coefficient (0 disables the source).
    pub fn with_source_coeff(n: usize, coeff: f64) -> Self {
        BurgersModel {
            n,
            length: 100.0,
            source_coeff: coeff,
            warned: AtomicBool::new(false),
        }
    }

    fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    fn check_params(&self, mu: &[f64]) {
        let inside = mu.len() == 2
            && (PARAM_LO[0]..=PARAM_HI[0]).contains(&mu[0])
            && (PARAM_LO[1]..=PARAM_HI[1]).contains(&mu[1]);
        if !inside && !self.warned.swap(true, Ordering::Relaxed) {
            eprintln!(
                "warning: Burgers parameters {mu:?} outside [{},{}]x[{},{}]",
                PARAM_LO[0], PARAM_HI[0], PARAM_LO[1], PARAM_HI[1]
            );
        }
    }

    /// Interface fluxes F_{i+1/2}, i = 0..n (index 0 is the inflow face).
    fn interface_fluxes(&self, w: &[f64], mu: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut flux = vec![0.0; n + 1];
        flux[0] = godunov_flux(mu[0], w[0]);
        for i in 1..n {
            flux[i] = godunov_flux(w[i - 1], w[i]);
        }
        // zero-gradient ghost cell on the outflow side
        flux[n] = godunov_flux(w[n - 1], w[n - 1]);
        flux
    }
}

impl FomModel for BurgersModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn velocity(&self, x: &[f64], _t: f64, mu: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.check_params(mu);
        let dx = self.dx();
        let flux = self.interface_fluxes(x, mu);
        (0..self.n)
            .map(|i| {
                -(flux[i + 1] - flux[i]) / dx
                    + self.source_coeff * (mu[1] * self.cell_center(i)).exp()
            })
            .collect()
    }

    fn jacobian(&self, x: &[f64], _t: f64, mu: &[f64]) -> FomJacobian {
        let n = self.n;
        let dx = self.dx();
        let mut jac = DenseMat::zeros(n, n);
        // dF_{i+1/2}/d(w_l, w_r) for every interface
        let mut dl = vec![0.0; n + 1];
        let mut dr = vec![0.0; n + 1];
        let (a, b) = godunov_flux_grad(mu[0], x[0]);
        dl[0] = a;
        dr[0] = b;
        for i in 1..n {
            let (a, b) = godunov_flux_grad(x[i - 1], x[i]);
            dl[i] = a;
            dr[i] = b;
        }
        let (a, b) = godunov_flux_grad(x[n - 1], x[n - 1]);
        // the ghost cell copies w_{n-1}, so both arguments vary with it
        dl[n] = a + b;
        dr[n] = 0.0;
        for i in 0..n {
            // v_i = -(F_{i+1} - F_i)/dx
            if i > 0 {
                jac[(i, i - 1)] += dl[i] / dx;
            }
            jac[(i, i)] += dr[i] / dx;
            jac[(i, i)] -= dl[i + 1] / dx;
            if i + 1 < n {
                jac[(i, i + 1)] -= dr[i + 1] / dx;
            }
        }
        FomJacobian::Dense(jac)
    }

    fn initial_state(&self, _mu: &[f64]) -> Vec<f64> {
        vec![1.0; self.n]
    }

    fn grid(&self) -> GridInfo {
        GridInfo::new_1d(self.n, 1)
    }
}
