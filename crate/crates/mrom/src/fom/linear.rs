//! Linear velocity model `x' = A x`, used for validation studies where the
//! Lipschitz constant and solution are known in closed form.

use super::{FomJacobian, FomModel};
use crate::linalg::DenseMat;
use crate::net::GridInfo;

pub struct LinearFom {
    a: DenseMat,
    x0: Vec<f64>,
}

impl LinearFom {
    pub fn new(a: DenseMat, x0: Vec<f64>) -> Self {
        assert_eq!(a.rows(), a.cols());
        assert_eq!(a.rows(), x0.len());
        LinearFom { a, x0 }
    }

    pub fn matrix(&self) -> &DenseMat {
        &self.a
    }
}

impl FomModel for LinearFom {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn velocity(&self, x: &[f64], _t: f64, _mu: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }

    fn jacobian(&self, _x: &[f64], _t: f64, _mu: &[f64]) -> FomJacobian {
        FomJacobian::Dense(self.a.clone())
    }

    fn initial_state(&self, _mu: &[f64]) -> Vec<f64> {
        self.x0.clone()
    }

    fn grid(&self) -> GridInfo {
        GridInfo::new_1d(self.x0.len(), 1)
    }
}
