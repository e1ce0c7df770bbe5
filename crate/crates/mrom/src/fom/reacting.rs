//! Premixed H2-air flame: nonlinear convection-diffusion-reaction system on
//! a 2D rectangle with an Arrhenius source, discretized by second-order
//! central differences for diffusion and first-order upwinding for
//! convection.
//!
//! Channels are ordered (T, H2, O2, H2O), each stored as a contiguous
//! `nx x ny` field (channel-major state layout). The Dirichlet column at
//! the left edge is eliminated: the state holds the `nx` interior-plus-right
//! node columns, with the inflow profile entering through the boundary
//! closure. Top, bottom, and right boundaries are homogeneous Neumann
//! (mirror ghosts).

use super::{FomJacobian, FomModel};
use crate::linalg::BandedMat;
use crate::net::GridInfo;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

const N_CHAN: usize = 4;
const Q_HEAT: f64 = 9800.0;
const STOICH: [f64; 3] = [2.0, 1.0, -2.0]; // nu_H2, nu_O2, nu_H2O
const MOL_WEIGHT: [f64; 3] = [2.016, 31.9, 18.0]; // W_H2, W_O2, W_H2O (g/mol)
const DENSITY: f64 = 1.39e-3; // g/cm^3
const GAS_CONST: f64 = 8.314; // J/(mol K)
const DIFFUSIVITY: f64 = 2.0; // cm^2/s
const VEL_X: f64 = 50.0; // cm/s
const DOMAIN_X: f64 = 1.8; // cm
const DOMAIN_Y: f64 = 0.9; // cm

const PARAM_LO: [f64; 2] = [2.3375e12, 5.625e3];
const PARAM_HI: [f64; 2] = [6.5e12, 9.0e3];

// inflow (Gamma_2) values for (T, H2, O2, H2O); elsewhere on the left edge
// the temperature is 300 K and the mass fractions vanish
const INFLOW: [f64; 4] = [950.0, 0.0282, 0.2259, 0.0];
const AMBIENT: [f64; 4] = [300.0, 0.0, 0.0, 0.0];

/// Reacting-flow model with `nx` unknown columns and `ny` rows per channel
/// (the paper's full grid is nx = 64, ny = 32, N = 8192).
pub struct ReactingModel {
    nx: usize,
    ny: usize,
    perm: Arc<Vec<usize>>,
    warned: AtomicBool,
}

impl ReactingModel {
    pub fn new(nx: usize, ny: usize) -> Self {
        // banded ordering interleaves the four channels at each grid point
        let n = N_CHAN * nx * ny;
        let mut perm = vec![0usize; n];
        for c in 0..N_CHAN {
            for g in 0..nx * ny {
                perm[c * nx * ny + g] = g * N_CHAN + c;
            }
        }
        ReactingModel {
            nx,
            ny,
            perm: Arc::new(perm),
            warned: AtomicBool::new(false),
        }
    }

    fn hx(&self) -> f64 {
        // nodes x_i = i hx for i = 0..nx, column 0 eliminated as Dirichlet
        DOMAIN_X / self.nx as f64
    }

    fn hy(&self) -> f64 {
        DOMAIN_Y / (self.ny - 1) as f64
    }

    fn field(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    fn idx(&self, c: usize, i: usize, j: usize) -> usize {
        c * self.field() + i * self.ny + j
    }

    /// Left-edge Dirichlet value for channel `c` at row `j`: the inflow
    /// profile on the middle third (Gamma_2), ambient elsewhere.
    fn boundary_value(&self, c: usize, j: usize) -> f64 {
        let y = j as f64 * self.hy();
        if (DOMAIN_Y / 3.0..=2.0 * DOMAIN_Y / 3.0).contains(&y) {
            INFLOW[c]
        } else {
            AMBIENT[c]
        }
    }

    fn check_params(&self, mu: &[f64]) {
        let inside = mu.len() == 2
            && (PARAM_LO[0]..=PARAM_HI[0]).contains(&mu[0])
            && (PARAM_LO[1]..=PARAM_HI[1]).contains(&mu[1]);
        if !inside && !self.warned.swap(true, Ordering::Relaxed) {
            eprintln!("warning: reacting-flow parameters {mu:?} outside the declared domain");
        }
    }

    /// Arrhenius rate G(u) with mass fractions clamped at zero inside the
    /// powers only; zero below absolute-zero temperatures.
    fn rate(u: &[f64; 4], mu: &[f64]) -> f64 {
        let (a_pre, e_act) = (mu[0], mu[1]);
        let t = u[0];
        if t <= 0.0 {
            return 0.0;
        }
        let c_h2 = (DENSITY * u[1].max(0.0) / MOL_WEIGHT[0]).powi(2);
        let c_o2 = DENSITY * u[2].max(0.0) / MOL_WEIGHT[1];
        a_pre * c_h2 * c_o2 * (-e_act / (GAS_CONST * t)).exp()
    }

    /// d(rate)/d(T, H2, O2, H2O).
    fn rate_grad(u: &[f64; 4], mu: &[f64]) -> [f64; 4] {
        let (a_pre, e_act) = (mu[0], mu[1]);
        let t = u[0];
        if t <= 0.0 {
            return [0.0; 4];
        }
        let h2 = u[1].max(0.0);
        let o2 = u[2].max(0.0);
        let c_h2 = DENSITY * h2 / MOL_WEIGHT[0];
        let c_o2 = DENSITY * o2 / MOL_WEIGHT[1];
        let arr = (-e_act / (GAS_CONST * t)).exp();
        let g = a_pre * c_h2 * c_h2 * c_o2 * arr;
        let dg_dt = g * e_act / (GAS_CONST * t * t);
        let dg_dh2 = if u[1] > 0.0 {
            a_pre * 2.0 * c_h2 * (DENSITY / MOL_WEIGHT[0]) * c_o2 * arr
        } else {
            0.0
        };
        let dg_do2 = if u[2] > 0.0 {
            a_pre * c_h2 * c_h2 * (DENSITY / MOL_WEIGHT[1]) * arr
        } else {
            0.0
        };
        [dg_dt, dg_dh2, dg_do2, 0.0]
    }

    /// Channel coefficients turning the rate G into the source q: q_c =
    /// source_coeff[c] * G.
    fn source_coeff() -> [f64; 4] {
        let q_h2o = -STOICH[2] * MOL_WEIGHT[2] / DENSITY; // +2 W_H2O / rho
        [
            Q_HEAT * q_h2o,
            -STOICH[0] * MOL_WEIGHT[0] / DENSITY,
            -STOICH[1] * MOL_WEIGHT[1] / DENSITY,
            q_h2o,
        ]
    }

    /// Arrhenius source q(u; mu) at a single grid point.
    pub fn reaction_source(u: &[f64; 4], mu: &[f64]) -> [f64; 4] {
        let g = Self::rate(u, mu);
        let coeff = Self::source_coeff();
        [coeff[0] * g, coeff[1] * g, coeff[2] * g, coeff[3] * g]
    }

    fn point_state(&self, x: &[f64], i: usize, j: usize) -> [f64; 4] {
        [
            x[self.idx(0, i, j)],
            x[self.idx(1, i, j)],
            x[self.idx(2, i, j)],
            x[self.idx(3, i, j)],
        ]
    }
}

impl FomModel for ReactingModel {
    fn dim(&self) -> usize {
        N_CHAN * self.field()
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn velocity(&self, x: &[f64], _t: f64, mu: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        self.check_params(mu);
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (self.hx(), self.hy());
        let ihx2 = 1.0 / (hx * hx);
        let ihy2 = 1.0 / (hy * hy);
        let mut out = vec![0.0; self.dim()];
        for c in 0..N_CHAN {
            for i in 0..nx {
                for j in 0..ny {
                    let u = x[self.idx(c, i, j)];
                    // left neighbor: Dirichlet column at i = 0
                    let u_w = if i == 0 {
                        self.boundary_value(c, j)
                    } else {
                        x[self.idx(c, i - 1, j)]
                    };
                    // right neighbor: mirror ghost at the outflow node
                    let u_e = if i + 1 == nx {
                        x[self.idx(c, i - 1, j)]
                    } else {
                        x[self.idx(c, i + 1, j)]
                    };
                    let u_s = if j == 0 {
                        x[self.idx(c, i, 1)]
                    } else {
                        x[self.idx(c, i, j - 1)]
                    };
                    let u_n = if j + 1 == ny {
                        x[self.idx(c, i, ny - 2)]
                    } else {
                        x[self.idx(c, i, j + 1)]
                    };
                    let diff =
                        DIFFUSIVITY * ((u_w - 2.0 * u + u_e) * ihx2 + (u_s - 2.0 * u + u_n) * ihy2);
                    // upwind convection, v = (VEL_X, 0) with VEL_X > 0
                    let conv = VEL_X * (u - u_w) / hx;
                    out[self.idx(c, i, j)] = diff - conv;
                }
            }
        }
        let coeff = Self::source_coeff();
        for i in 0..nx {
            for j in 0..ny {
                let u = self.point_state(x, i, j);
                let g = Self::rate(&u, mu);
                for c in 0..N_CHAN {
                    out[self.idx(c, i, j)] += coeff[c] * g;
                }
            }
        }
        out
    }

    fn jacobian(&self, x: &[f64], _t: f64, mu: &[f64]) -> FomJacobian {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (self.hx(), self.hy());
        let ihx2 = 1.0 / (hx * hx);
        let ihy2 = 1.0 / (hy * hy);
        let bw = N_CHAN * ny;
        let mut banded = BandedMat::zeros(self.dim(), bw, bw);
        let pidx = |i: usize, j: usize, c: usize| (i * ny + j) * N_CHAN + c;
        for c in 0..N_CHAN {
            for i in 0..nx {
                for j in 0..ny {
                    let row = pidx(i, j, c);
                    let diag = -2.0 * DIFFUSIVITY * (ihx2 + ihy2) - VEL_X / hx;
                    // west neighbor (Dirichlet at i = 0 contributes nothing)
                    if i > 0 {
                        banded.add(row, pidx(i - 1, j, c), DIFFUSIVITY * ihx2 + VEL_X / hx);
                    }
                    // east neighbor with outflow mirror
                    if i + 1 == nx {
                        banded.add(row, pidx(i - 1, j, c), DIFFUSIVITY * ihx2);
                    } else {
                        banded.add(row, pidx(i + 1, j, c), DIFFUSIVITY * ihx2);
                    }
                    // south/north with wall mirrors
                    if j == 0 {
                        banded.add(row, pidx(i, 1, c), DIFFUSIVITY * ihy2);
                    } else {
                        banded.add(row, pidx(i, j - 1, c), DIFFUSIVITY * ihy2);
                    }
                    if j + 1 == ny {
                        banded.add(row, pidx(i, ny - 2, c), DIFFUSIVITY * ihy2);
                    } else {
                        banded.add(row, pidx(i, j + 1, c), DIFFUSIVITY * ihy2);
                    }
                    banded.add(row, row, diag);
                }
            }
        }
        let coeff = Self::source_coeff();
        for i in 0..nx {
            for j in 0..ny {
                let u = self.point_state(x, i, j);
                let dg = Self::rate_grad(&u, mu);
                for c in 0..N_CHAN {
                    for (cc, &dgc) in dg.iter().enumerate() {
                        if dgc != 0.0 {
                            banded.add(pidx(i, j, c), pidx(i, j, cc), coeff[c] * dgc);
                        }
                    }
                }
            }
        }
        FomJacobian::PermutedBanded {
            perm: Arc::clone(&self.perm),
            banded,
        }
    }

    fn initial_state(&self, _mu: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for v in x.iter_mut().take(self.field()) {
            *v = AMBIENT[0];
        }
        x
    }

    fn grid(&self) -> GridInfo {
        GridInfo::new_2d(self.nx, self.ny, N_CHAN)
    }
}
