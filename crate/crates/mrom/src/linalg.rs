//! Dense and banded linear algebra kernels used by the solvers.
//!
//! Everything operates on `f64` in row-major order. The routines are sized
//! for desk-scale problems: dense factorizations up to a few hundred
//! unknowns, banded factorizations for stencil Jacobians, thin QR for tall
//! decoder Jacobians, and a cyclic Jacobi eigensolver for the Gram matrices
//! arising in the method of snapshots.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMat { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> DenseMat {
        let mut t = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for (yj, a) in y.iter_mut().zip(row.iter()) {
                *yj += a * xi;
            }
        }
        y
    }

    /// C = A B
    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows);
        let mut c = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let crow = &mut c.data[i * other.cols..(i + 1) * other.cols];
                for (cj, bj) in crow.iter_mut().zip(brow.iter()) {
                    *cj += aik * bj;
                }
            }
        }
        c
    }

    /// A^T A (for an m x n matrix, returns n x n).
    pub fn gram(&self) -> DenseMat {
        let n = self.cols;
        let mut g = DenseMat::zeros(n, n);
        for i in 0..self.rows {
            let row = self.row(i);
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..n {
                    g[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ── vector helpers ───────────────────────────────────────────────────

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

// ── dense LU with partial pivoting ───────────────────────────────────

/// LU factorization of a square matrix, overwriting `a`.
pub struct LuFactors {
    lu: DenseMat,
    piv: Vec<usize>,
}

pub fn lu_factor(mut a: DenseMat) -> Result<LuFactors> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut piv = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        let mut maxv = a[(k, k)].abs();
        for i in (k + 1)..n {
            let v = a[(i, k)].abs();
            if v > maxv {
                maxv = v;
                p = i;
            }
        }
        if maxv == 0.0 {
            return Err(Error::SingularMatrix { pivot: k });
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
        }
        let pivot = a[(k, k)];
        for i in (k + 1)..n {
            let l = a[(i, k)] / pivot;
            a[(i, k)] = l;
            if l != 0.0 {
                let (top, bottom) = a.data.split_at_mut(i * n);
                let krow = &top[k * n + k + 1..k * n + n];
                let irow = &mut bottom[k + 1..n];
                for (iv, kv) in irow.iter_mut().zip(krow.iter()) {
                    *iv -= l * kv;
                }
            }
        }
    }
    Ok(LuFactors { lu: a, piv })
}

impl LuFactors {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for i in 1..n {
            let mut acc = x[i];
            let row = self.lu.row(i);
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        x
    }
}

pub fn solve_dense(a: DenseMat, b: &[f64]) -> Result<Vec<f64>> {
    Ok(lu_factor(a)?.solve(b))
}

// ── banded LU with partial pivoting (LAPACK gbtrf layout) ────────────

/// Band matrix with `kl` sub- and `ku` super-diagonals, stored with
/// `kl` extra super-diagonal rows for pivoting fill-in.
///
/// Storage row `ku + kl + i - j` holds element (i, j); valid columns of the
/// factorization satisfy `max(0, j-ku-kl) <= i <= min(n-1, j+kl)`.
#[derive(Clone, Debug)]
pub struct BandedMat {
    n: usize,
    kl: usize,
    ku: usize,
    /// (2*kl + ku + 1) x n, column j in `data[.. * n + j]`.
    data: Vec<f64>,
}

impl BandedMat {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMat {
            n,
            kl,
            ku,
            data: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (self.ku + self.kl + i - j) * self.n + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i + self.ku || i > j + self.kl {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j <= i + self.ku && i <= j + self.kl,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let idx = self.idx(i, j);
        self.data[idx] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx(i, j);
        self.data[idx] += v;
    }

    /// y = A x using only the declared band.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku + 1).min(self.n);
            let mut acc = 0.0;
            for j in j0..j1 {
                acc += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// y = A^T x using only the declared band.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku + 1).min(self.n);
            let xi = x[i];
            for j in j0..j1 {
                y[j] += self.data[self.idx(i, j)] * xi;
            }
        }
        y
    }

    /// In-place banded LU with partial pivoting; fill-in expands the upper
    /// bandwidth to `kl + ku`.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku_eff = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut maxv = self.get(k, k).abs();
            for i in (k + 1)..=imax {
                let v = self.data[self.idx_fact(i, k, ku_eff)].abs();
                if v > maxv {
                    maxv = v;
                    p = i;
                }
            }
            if maxv == 0.0 {
                return Err(Error::SingularMatrix { pivot: k });
            }
            piv[k] = p;
            let jmax = (k + ku_eff).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx_fact(k, j, ku_eff);
                    let b = self.idx_fact(p, j, ku_eff);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx_fact(k, k, ku_eff)];
            for i in (k + 1)..=imax {
                let li = self.idx_fact(i, k, ku_eff);
                let l = self.data[li] / pivot;
                self.data[li] = l;
                if l != 0.0 {
                    for j in (k + 1)..=jmax {
                        let a = self.idx_fact(k, j, ku_eff);
                        let b = self.idx_fact(i, j, ku_eff);
                        self.data[b] -= l * self.data[a];
                    }
                }
            }
        }
        Ok(BandedLu { mat: self, piv })
    }

    /// Index valid for factorization entries with effective upper bandwidth.
    #[inline]
    fn idx_fact(&self, i: usize, j: usize, ku_eff: usize) -> usize {
        debug_assert!(j <= i + ku_eff && i <= j + self.kl);
        (self.ku + self.kl + i - j) * self.n + j
    }
}

pub struct BandedLu {
    mat: BandedMat,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku_eff = self.mat.kl + self.mat.ku;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let imax = (k + kl).min(n - 1);
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..=imax {
                    x[i] -= self.mat.data[self.mat.idx_fact(i, k, ku_eff)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let jmax = (i + ku_eff).min(n - 1);
            let mut acc = x[i];
            for j in (i + 1)..=jmax {
                acc -= self.mat.data[self.mat.idx_fact(i, j, ku_eff)] * x[j];
            }
            x[i] = acc / self.mat.data[self.mat.idx_fact(i, i, ku_eff)];
        }
        x
    }
}

// ── thin Householder QR ──────────────────────────────────────────────

/// Thin QR of an m x n matrix (m >= n) via Householder reflections.
/// Stores the reflectors in-place; `r` is the upper-triangular n x n factor.
pub struct QrFactors {
    m: usize,
    n: usize,
    /// Householder vectors stored below the diagonal of the working copy.
    v: DenseMat,
    tau: Vec<f64>,
    r_diag: Vec<f64>,
}

pub fn qr_factor(a: &DenseMat) -> QrFactors {
    let m = a.rows();
    let n = a.cols();
    assert!(m >= n, "thin QR requires rows >= cols");
    let mut w = a.clone();
    let mut tau = vec![0.0; n];
    let mut r_diag = vec![0.0; n];
    for k in 0..n {
        let mut normx = 0.0;
        for i in k..m {
            normx += w[(i, k)] * w[(i, k)];
        }
        let normx = normx.sqrt();
        if normx == 0.0 {
            tau[k] = 0.0;
            r_diag[k] = 0.0;
            continue;
        }
        let alpha = if w[(k, k)] >= 0.0 { -normx } else { normx };
        let v0 = w[(k, k)] - alpha;
        w[(k, k)] = v0;
        // normalize so v[k] = 1
        if v0 != 0.0 {
            for i in (k + 1)..m {
                w[(i, k)] /= v0;
            }
        }
        tau[k] = -v0 / alpha;
        r_diag[k] = alpha;
        // apply reflector to trailing columns
        for j in (k + 1)..n {
            let mut s = w[(k, j)];
            for i in (k + 1)..m {
                s += w[(i, k)] * w[(i, j)];
            }
            s *= tau[k];
            w[(k, j)] -= s;
            for i in (k + 1)..m {
                let vik = w[(i, k)];
                w[(i, j)] -= s * vik;
            }
        }
    }
    QrFactors { m, n, v: w, tau, r_diag }
}

impl QrFactors {
    /// R[i][j] for i <= j.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j);
        if i == j {
            self.r_diag[i]
        } else {
            self.v[(i, j)]
        }
    }

    /// min |R_ii| / max |R_ii|, a cheap conditioning proxy for rank checks.
    pub fn diag_ratio(&self) -> f64 {
        let mut mn = f64::INFINITY;
        let mut mx = 0.0f64;
        for &d in &self.r_diag {
            mn = mn.min(d.abs());
            mx = mx.max(d.abs());
        }
        if mx == 0.0 {
            0.0
        } else {
            mn / mx
        }
    }

    /// Q^T b (first n entries are the least-squares RHS).
    pub fn qt_mul(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.m);
        let mut x = b.to_vec();
        for k in 0..self.n {
            if self.tau[k] == 0.0 {
                continue;
            }
            let mut s = x[k];
            for i in (k + 1)..self.m {
                s += self.v[(i, k)] * x[i];
            }
            s *= self.tau[k];
            x[k] -= s;
            for i in (k + 1)..self.m {
                x[i] -= s * self.v[(i, k)];
            }
        }
        x
    }

    /// Least-squares solve min ||A x - b||: x = R^{-1} (Q^T b)[..n].
    pub fn solve_ls(&self, b: &[f64]) -> Result<Vec<f64>> {
        let qtb = self.qt_mul(b);
        let mut x = qtb[..self.n].to_vec();
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..self.n {
                acc -= self.r(i, j) * x[j];
            }
            let d = self.r_diag[i];
            if d == 0.0 {
                return Err(Error::SingularMatrix { pivot: i });
            }
            x[i] = acc / d;
        }
        Ok(x)
    }
}

// ── Cholesky ─────────────────────────────────────────────────────────

/// Cholesky factorization A = L L^T of a symmetric positive-definite matrix.
pub fn cholesky(a: &DenseMat) -> Option<DenseMat> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

pub fn cholesky_solve(l: &DenseMat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= l[(i, j)] * x[j];
        }
        x[i] = acc / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= l[(j, i)] * x[j];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

// ── cyclic Jacobi eigensolver ────────────────────────────────────────

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (descending) and the matching orthonormal
/// eigenvectors as columns. Sweeps run until every off-diagonal entry falls
/// below `1e-14` times the largest diagonal magnitude.
pub fn jacobi_eigh(a: &DenseMat) -> (Vec<f64>, DenseMat) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = DenseMat::identity(n);
    let max_sweeps = 50;
    for _ in 0..max_sweeps {
        let mut diag_scale = 0.0f64;
        for i in 0..n {
            diag_scale = diag_scale.max(m[(i, i)].abs());
        }
        let thresh = 1e-14 * diag_scale.max(f64::MIN_POSITIVE);
        let mut converged = true;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= thresh {
                    continue;
                }
                converged = false;
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    m[(i, p)] = c * aip - s * aiq;
                    m[(i, q)] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = m[(p, j)];
                    let aqj = m[(q, j)];
                    m[(p, j)] = c * apj - s * aqj;
                    m[(q, j)] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if converged {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a_, &b_| m[(b_, b_)].partial_cmp(&m[(a_, a_)]).unwrap());
    let evals: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut evecs = DenseMat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            evecs[(i, new_j)] = v[(i, old_j)];
        }
    }
    (evals, evecs)
}
