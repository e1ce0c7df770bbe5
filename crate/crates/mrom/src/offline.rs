//! Offline stage: snapshot collection, POD by the method of snapshots,
//! and autoencoder training (Adam with minibatching and early stopping).

use crate::error::{Error, Result};
use crate::fom::Trajectory;
use crate::linalg::DenseMat;
use crate::net::{
    assemble, init_params, restrict, AutoencoderModel, AutoencoderSpec, InitScheme, ParamGrads,
    ParameterSet, ScalingOperator,
};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── snapshot collection ──────────────────────────────────────────────

/// Which time instances of each trajectory enter the snapshot matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsetRule {
    /// Every step 1..=n_t.
    All,
    /// The first m steps (time extrapolation studies).
    FirstM(usize),
    /// m equispaced steps ending at the final instance (interpolation
    /// studies): step indices floor(i n_t / m), i = 1..=m.
    EquispacedM(usize),
}

impl SubsetRule {
    pub fn step_indices(&self, n_t: usize) -> Vec<usize> {
        match *self {
            SubsetRule::All => (1..=n_t).collect(),
            SubsetRule::FirstM(m) => (1..=m.min(n_t)).collect(),
            SubsetRule::EquispacedM(m) => {
                let m = m.min(n_t).max(1);
                (1..=m).map(|i| i * n_t / m).collect()
            }
        }
    }
}

/// Where a snapshot column came from.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnProvenance {
    Snapshot { mu: Vec<f64>, step: usize },
    AppendedZero,
}

/// Column-stacked centered snapshots `x^n(mu) - x^0(mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    n: usize,
    columns: Vec<Vec<f64>>,
    provenance: Vec<ColumnProvenance>,
    zero_column_appended: bool,
}

impl SnapshotMatrix {
    pub fn from_parts(
        n: usize,
        columns: Vec<Vec<f64>>,
        provenance: Vec<ColumnProvenance>,
        zero_column_appended: bool,
    ) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n) || columns.len() != provenance.len() {
            return Err(Error::Dimension(
                "snapshot columns and provenance are inconsistent".into(),
            ));
        }
        Ok(SnapshotMatrix {
            n,
            columns,
            provenance,
            zero_column_appended,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn provenance(&self) -> &[ColumnProvenance] {
        &self.provenance
    }

    pub fn zero_column_appended(&self) -> bool {
        self.zero_column_appended
    }

    /// Append one all-zeros column (the initial-condition anchor used when
    /// training the autoencoder).
    pub fn append_zero_column(&mut self) {
        if !self.zero_column_appended {
            self.columns.push(vec![0.0; self.n]);
            self.provenance.push(ColumnProvenance::AppendedZero);
            self.zero_column_appended = true;
        }
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Assemble centered snapshots from trajectories, in trajectory order,
/// selecting time instances per the subset rule.
pub fn collect_snapshots(trajectories: &[Trajectory], rule: SubsetRule) -> Result<SnapshotMatrix> {
    let n = trajectories
        .first()
        .map(|t| t.state_dim())
        .ok_or_else(|| Error::Dimension("no trajectories given".into()))?;
    let mut columns = Vec::new();
    let mut provenance = Vec::new();
    for traj in trajectories {
        if traj.state_dim() != n {
            return Err(Error::Dimension(
                "trajectories have inconsistent state dimensions".into(),
            ));
        }
        let x0 = &traj.states[0];
        for step in rule.step_indices(traj.n_steps()) {
            let col: Vec<f64> = traj.states[step]
                .iter()
                .zip(x0.iter())
                .map(|(a, b)| a - b)
                .collect();
            columns.push(col);
            provenance.push(ColumnProvenance::Snapshot {
                mu: traj.mu.clone(),
                step,
            });
        }
    }
    SnapshotMatrix::from_parts(n, columns, provenance, false)
}

// ── POD ──────────────────────────────────────────────────────────────

/// Truncated POD basis: the first p left singular vectors of the snapshot
/// matrix with their singular values (nonincreasing).
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    pub basis: DenseMat,
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// Truncation to the leading q modes.
    pub fn truncated(&self, q: usize) -> PodBasis {
        assert!(q <= self.dim());
        let n = self.basis.rows();
        let mut b = DenseMat::zeros(n, q);
        for j in 0..q {
            b.set_col(j, &self.basis.col(j));
        }
        PodBasis {
            basis: b,
            singular_values: self.singular_values[..q].to_vec(),
        }
    }

    /// max |Phi^T Phi - I|.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.basis.gram();
        let mut worst = 0.0f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - want).abs());
            }
        }
        worst
    }
}

/// POD by the method of snapshots: eigendecomposition of the smaller Gram
/// matrix (W^T W when n_s <= N, W W^T otherwise) by cyclic Jacobi.
///
/// Fails when p exceeds the numerical rank (sigma_p / sigma_1 < 1e-12).
pub fn pod_basis(w: &SnapshotMatrix, p: usize) -> Result<PodBasis> {
    let n = w.state_dim();
    let n_s = w.n_columns();
    if p == 0 || p > n.min(n_s) {
        return Err(Error::Rank {
            requested: p,
            rank: n.min(n_s),
        });
    }
    let (evals, evecs, snapshots_side) = if n_s <= n {
        // G = W^T W, n_s x n_s
        let mut g = DenseMat::zeros(n_s, n_s);
        for a in 0..n_s {
            for b in a..n_s {
                let d = crate::linalg::dot(w.column(a), w.column(b));
                g[(a, b)] = d;
                g[(b, a)] = d;
            }
        }
        let (vals, vecs) = crate::linalg::jacobi_eigh(&g);
        (vals, vecs, true)
    } else {
        // G = W W^T, N x N
        let mut g = DenseMat::zeros(n, n);
        for col in w.columns() {
            for i in 0..n {
                let ci = col[i];
                if ci == 0.0 {
                    continue;
                }
                let row = &mut g.data_mut()[i * n..(i + 1) * n];
                for (gv, &cj) in row.iter_mut().zip(col.iter()) {
                    *gv += ci * cj;
                }
            }
        }
        let (vals, vecs) = crate::linalg::jacobi_eigh(&g);
        (vals, vecs, false)
    };
    // eigenvalues at the Gram-matrix round-off floor are numerical zeros
    let floor = 64.0 * f64::EPSILON * evals.first().copied().unwrap_or(0.0).max(0.0);
    let sigma: Vec<f64> = evals
        .iter()
        .map(|&l| if l <= floor { 0.0 } else { l.sqrt() })
        .collect();
    if sigma[0] == 0.0 || sigma[p - 1] / sigma[0] < 1e-12 {
        let rank = sigma
            .iter()
            .take_while(|&&s| sigma[0] > 0.0 && s / sigma[0] >= 1e-12)
            .count();
        return Err(Error::Rank { requested: p, rank });
    }
    let mut basis = DenseMat::zeros(n, p);
    if snapshots_side {
        // u_i = W v_i / sigma_i
        for j in 0..p {
            let mut u = vec![0.0; n];
            for (idx, col) in w.columns().iter().enumerate() {
                let vij = evecs[(idx, j)];
                if vij != 0.0 {
                    for (uv, &cv) in u.iter_mut().zip(col.iter()) {
                        *uv += vij * cv;
                    }
                }
            }
            let inv = 1.0 / sigma[j];
            for uv in &mut u {
                *uv *= inv;
            }
            basis.set_col(j, &u);
        }
        // Gram products amplify eigenvector round-off; two Gram-Schmidt
        // passes restore orthonormality without leaving the span
        for _ in 0..2 {
            for j in 0..p {
                let mut col = basis.col(j);
                for i in 0..j {
                    let qi = basis.col(i);
                    let proj = crate::linalg::dot(&qi, &col);
                    for (cv, &qv) in col.iter_mut().zip(qi.iter()) {
                        *cv -= proj * qv;
                    }
                }
                let nrm = crate::linalg::norm2(&col);
                for cv in &mut col {
                    *cv /= nrm;
                }
                basis.set_col(j, &col);
            }
        }
    } else {
        for j in 0..p {
            basis.set_col(j, &evecs.col(j));
        }
    }
    Ok(PodBasis {
        basis,
        singular_values: sigma[..p].to_vec(),
    })
}

// ── Adam ─────────────────────────────────────────────────────────────

/// First/second moment accumulators, aligned with
/// `ParameterSet::tensors()`.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_update(
    params: &mut ParameterSet,
    grads: &ParamGrads,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for ((tensor, g), (m, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, &gi), mi), vi) in tensor
            .data_mut()
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

// ── training loop ────────────────────────────────────────────────────

/// Hyperparameters for SGD/Adam training with early stopping.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Fraction of snapshots held out for validation (0 <= w < 1).
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop when the validation loss has not improved for this many epochs.
    pub patience: usize,
    pub init: InitScheme,
    pub seed: u64,
    /// Print epoch losses to stderr every this many epochs (0: silent).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            validation_fraction: 0.1,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 20,
            max_epochs: 1000,
            patience: 100,
            init: InitScheme::Xavier,
            seed: 0,
            log_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainedAutoencoder {
    pub model: AutoencoderModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Train the autoencoder on a snapshot matrix.
///
/// The columns are shuffled by a seeded permutation; the last
/// ceil(w n_s) shuffled columns form the validation set. Scaling statistics
/// come from the training columns only. Minibatch gradients are the mean of
/// per-sample loss gradients; parameters are snapshotted each epoch and the
/// returned model carries the best-validation epoch.
pub fn train_autoencoder(
    w: &SnapshotMatrix,
    spec: &AutoencoderSpec,
    config: &TrainConfig,
) -> Result<TrainedAutoencoder> {
    if w.n_columns() == 0 {
        return Err(Error::Dimension("snapshot matrix is empty".into()));
    }
    if w.state_dim() != spec.state_dim() {
        return Err(Error::Dimension(format!(
            "snapshots have dimension {}, architecture expects {}",
            w.state_dim(),
            spec.state_dim()
        )));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::Dimension(
            "validation fraction must lie in [0, 1)".into(),
        ));
    }
    let n_s = w.n_columns();
    let mut order: Vec<usize> = (0..n_s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let n_val = ((config.validation_fraction * n_s as f64).ceil() as usize).min(n_s - 1);
    let (train_idx, val_idx) = order.split_at(n_s - n_val);

    let grid = &spec.grid;
    let scaling = ScalingOperator::from_tensors(
        train_idx
            .iter()
            .map(|&j| restrict(w.column(j), grid).expect("snapshot dims validated"))
            .collect::<Vec<_>>()
            .iter(),
    )?;

    let params = init_params(spec, config.init, config.seed.wrapping_add(1));
    let mut model = assemble(spec.clone(), params, scaling)?;

    // one shuffle into minibatches, reused across epochs
    let mut batch_order = train_idx.to_vec();
    batch_order.shuffle(&mut rng);
    let batch_size = config.batch_size.max(1);
    let batches: Vec<Vec<usize>> = batch_order
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect();

    let val_loss_of = |m: &AutoencoderModel| -> Result<f64> {
        if val_idx.is_empty() {
            return Ok(f64::NAN);
        }
        let mut acc = 0.0;
        for &j in val_idx {
            acc += m.l2_loss(w.column(j))?;
        }
        Ok(acc / val_idx.len() as f64)
    };
    let train_loss_of = |m: &AutoencoderModel| -> Result<f64> {
        let mut acc = 0.0;
        for &j in train_idx {
            acc += m.l2_loss(w.column(j))?;
        }
        Ok(acc / train_idx.len() as f64)
    };

    let initial_val = if val_idx.is_empty() {
        train_loss_of(&model)?
    } else {
        val_loss_of(&model)?
    };
    let mut best_val = initial_val;
    let mut best_params = model.params().clone();
    let mut best_epoch = 0usize;
    let mut stale_epochs = 0usize;
    let mut state = AdamState::new(model.params());
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        let mut train_acc = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let samples: Vec<&[f64]> = batch.iter().map(|&j| w.column(j)).collect();
            let (loss, grads) = model.batch_loss_and_grad(&samples)?;
            train_acc += loss * samples.len() as f64;
            count += samples.len();
            adam_update(
                model.params_mut(),
                &grads,
                &mut state,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon,
            );
        }
        let train_loss = train_acc / count as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            val_loss_of(&model)?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if config.log_every > 0 && epoch % config.log_every == 0 {
            eprintln!("epoch {epoch:5}  train {train_loss:.6e}  val {val_loss:.6e}");
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = model.params().clone();
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        if stale_epochs >= config.patience {
            break;
        }
    }

    model.set_params(best_params)?;
    Ok(TrainedAutoencoder {
        model,
        history,
        best_epoch,
        best_val_loss: best_val,
    })
}

/// Residual of projecting columns onto a basis:
/// `sum_j ||w_j - Phi Phi^T w_j||^2`.
pub fn projection_residual_sq(w: &SnapshotMatrix, basis: &DenseMat) -> f64 {
    let mut acc = 0.0;
    for col in w.columns() {
        let coeff = basis.matvec_t(col);
        let rec = basis.matvec(&coeff);
        acc += col
            .iter()
            .zip(rec.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::Trajectory;
    use crate::net::GridInfo;
    use crate::tensor::ConvSpec;
    use rand::Rng;

    fn toy_trajectory(n: usize, steps: usize, mu: Vec<f64>) -> Trajectory {
        let states = (0..=steps)
            .map(|s| {
                (0..n)
                    .map(|i| (i as f64 + 1.0) * (s as f64) * 0.1 + 1.0)
                    .collect()
            })
            .collect();
        Trajectory {
            states,
            dt: 0.1,
            mu,
        }
    }

    #[test]
    fn collect_all_centers_columns() {
        let traj = toy_trajectory(4, 3, vec![1.0]);
        let w = collect_snapshots(std::slice::from_ref(&traj), SubsetRule::All).unwrap();
        assert_eq!(w.n_columns(), 3);
        for (j, col) in w.columns().iter().enumerate() {
            let expect: Vec<f64> = traj.states[j + 1]
                .iter()
                .zip(traj.states[0].iter())
                .map(|(a, b)| a - b)
                .collect();
            assert_eq!(col, &expect);
        }
    }

    #[test]
    fn equispaced_rule_hits_final_step() {
        assert_eq!(
            SubsetRule::EquispacedM(5).step_indices(10),
            vec![2, 4, 6, 8, 10]
        );
        assert_eq!(SubsetRule::FirstM(3).step_indices(10), vec![1, 2, 3]);
        assert_eq!(SubsetRule::All.step_indices(4), vec![1, 2, 3, 4]);
    }

    #[test]
    fn snapshot_count_scales_with_trajectories() {
        let trajs: Vec<Trajectory> = (0..8)
            .map(|i| toy_trajectory(4, 500, vec![i as f64]))
            .collect();
        let w = collect_snapshots(&trajs, SubsetRule::All).unwrap();
        assert_eq!(w.n_columns(), 8 * 500);
    }

    #[test]
    fn pod_rank_one_case() {
        let wvec = vec![3.0, 0.0, 4.0];
        let cols = vec![wvec.clone(), wvec.iter().map(|v| 2.0 * v).collect()];
        let prov = vec![
            ColumnProvenance::Snapshot {
                mu: vec![],
                step: 1,
            },
            ColumnProvenance::Snapshot {
                mu: vec![],
                step: 2,
            },
        ];
        let w = SnapshotMatrix::from_parts(3, cols, prov, false).unwrap();
        let pod = pod_basis(&w, 1).unwrap();
        let phi = pod.basis.col(0);
        let unit: Vec<f64> = wvec.iter().map(|v| v / 5.0).collect();
        let align = crate::linalg::dot(&phi, &unit).abs();
        assert!((align - 1.0).abs() < 1e-12);
        assert!(projection_residual_sq(&w, &pod.basis) < 1e-20);
        // rank-deficient request fails
        assert!(matches!(pod_basis(&w, 2), Err(Error::Rank { .. })));
    }

    fn random_snapshots(n: usize, n_s: usize, seed: u64) -> SnapshotMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..n_s)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let prov = (0..n_s)
            .map(|s| ColumnProvenance::Snapshot {
                mu: vec![],
                step: s + 1,
            })
            .collect();
        SnapshotMatrix::from_parts(n, cols, prov, false).unwrap()
    }

    #[test]
    fn pod_orthonormal_and_reconstruction_identity() {
        // both Gram-side branches
        for (n, n_s) in [(12usize, 30usize), (30, 12)] {
            let w = random_snapshots(n, n_s, 5);
            let p = 6;
            let pod = pod_basis(&w, p).unwrap();
            assert!(pod.orthonormality_defect() < 1e-12);
            for win in pod.singular_values.windows(2) {
                assert!(win[0] >= win[1]);
            }
            // sum_i ||w_i - Phi Phi^T w_i||^2 == sum_{j>p} sigma_j^2
            let total = w.frobenius_sq();
            let captured: f64 = pod.singular_values.iter().map(|s| s * s).sum();
            let residual = projection_residual_sq(&w, &pod.basis);
            let expect = total - captured;
            assert!(
                (residual - expect).abs() / expect.abs().max(1e-12) < 1e-8,
                "{residual} vs {expect}"
            );
        }
    }

    #[test]
    fn pod_projection_error_nonincreasing_in_p() {
        let w = random_snapshots(16, 10, 9);
        let mut last = f64::INFINITY;
        for p in 1..=8 {
            let pod = pod_basis(&w, p).unwrap();
            let e = projection_residual_sq(&w, &pod.basis);
            assert!(e <= last + 1e-10);
            last = e;
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let spec = tiny_spec();
        let mut params = init_params(&spec, InitScheme::Xavier, 1);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let grads: ParamGrads = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        adam_update(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_unit_step_property() {
        // constant gradient: per-parameter update magnitude tends to lr
        let spec = tiny_spec();
        let mut params = init_params(&spec, InitScheme::Xavier, 2);
        let mut state = AdamState::new(&params);
        let grads: ParamGrads = params
            .tensors()
            .iter()
            .map(|t| vec![0.37; t.len()])
            .collect();
        let lr = 1e-3;
        let mut prev = params.tensors()[0].data()[1];
        for step in 0..200 {
            adam_update(&mut params, &grads, &mut state, lr, 0.9, 0.999, 1e-8);
            let cur = params.tensors()[0].data()[1];
            if step > 50 {
                let delta = (prev - cur).abs();
                assert!(
                    (delta - lr).abs() < 0.05 * lr,
                    "step {step}: delta {delta} vs lr {lr}"
                );
            }
            prev = cur;
        }
    }

    fn tiny_spec() -> AutoencoderSpec {
        AutoencoderSpec {
            grid: GridInfo::new_1d(8, 1),
            convs: vec![ConvSpec::new_1d(1, 2, 3, 2)],
            dense: vec![(8, 2)],
        }
    }

    fn tiny_snapshots(seed: u64) -> SnapshotMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let prov = (0..20)
            .map(|s| ColumnProvenance::Snapshot {
                mu: vec![0.0],
                step: s + 1,
            })
            .collect();
        SnapshotMatrix::from_parts(8, cols, prov, false).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let w = tiny_snapshots(3);
        let spec = tiny_spec();
        let config = TrainConfig {
            max_epochs: 0,
            patience: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        let expect = init_params(&spec, InitScheme::Xavier, config.seed.wrapping_add(1));
        assert_eq!(trained.model.params(), &expect);
        assert!(trained.history.is_empty());
        assert_eq!(trained.best_epoch, 0);
    }

    #[test]
    fn training_loss_decreases_on_tiny_dataset() {
        let w = tiny_snapshots(7);
        let spec = tiny_spec();
        let config = TrainConfig {
            learning_rate: 1e-4,
            batch_size: 5,
            max_epochs: 5,
            patience: 100,
            validation_fraction: 0.2,
            seed: 42,
            ..TrainConfig::default()
        };
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        assert_eq!(trained.history.len(), 5);
        for win in trained.history.windows(2) {
            assert!(
                win[1].train_loss < win[0].train_loss,
                "loss must decrease: {:?}",
                trained.history
            );
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let w = tiny_snapshots(13);
        let spec = tiny_spec();
        let config = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            max_epochs: 8,
            patience: 100,
            seed: 99,
            ..TrainConfig::default()
        };
        let a = train_autoencoder(&w, &spec, &config).unwrap();
        let b = train_autoencoder(&w, &spec, &config).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn early_stopping_returns_best_epoch_params() {
        let w = tiny_snapshots(17);
        let spec = tiny_spec();
        let config = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 4,
            max_epochs: 40,
            patience: 5,
            validation_fraction: 0.25,
            seed: 5,
            ..TrainConfig::default()
        };
        let trained = train_autoencoder(&w, &spec, &config).unwrap();
        let best_recorded = trained
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(trained.best_val_loss <= best_recorded + 1e-15);
        // the returned parameters actually achieve that loss
        let mut acc = 0.0;
        let mut cnt = 0;
        // recompute on the same validation split
        let mut order: Vec<usize> = (0..w.n_columns()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        order.shuffle(&mut rng);
        let n_val = (config.validation_fraction * w.n_columns() as f64).ceil() as usize;
        for &j in &order[w.n_columns() - n_val..] {
            acc += trained.model.l2_loss(w.column(j)).unwrap();
            cnt += 1;
        }
        let recomputed = acc / cnt as f64;
        assert!(
            (recomputed - trained.best_val_loss).abs() < 1e-12 * (1.0 + recomputed),
            "{recomputed} vs {}",
            trained.best_val_loss
        );
    }

    #[test]
    fn minibatch_gradient_linearity() {
        // the full-batch gradient equals the sample-weighted mean of
        // minibatch gradients
        let spec = tiny_spec();
        let params = init_params(&spec, InitScheme::Xavier, 4);
        let model = assemble(spec, params, ScalingOperator::identity(1)).unwrap();
        let w = tiny_snapshots(21);
        let all: Vec<&[f64]> = (0..6).map(|j| w.column(j)).collect();
        let (_, g_full) = model.batch_loss_and_grad(&all).unwrap();
        let (_, g_a) = model.batch_loss_and_grad(&all[..2]).unwrap();
        let (_, g_b) = model.batch_loss_and_grad(&all[2..]).unwrap();
        for ((gf, ga), gb) in g_full.iter().zip(g_a.iter()).zip(g_b.iter()) {
            for i in 0..gf.len() {
                let combined = (2.0 * ga[i] + 4.0 * gb[i]) / 6.0;
                assert!(
                    (gf[i] - combined).abs() < 1e-12 * (1.0 + gf[i].abs()),
                    "{} vs {combined}",
                    gf[i]
                );
            }
        }
    }
}
