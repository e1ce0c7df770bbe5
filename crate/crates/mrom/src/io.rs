//! Binary artifact formats and the checksum manifest.
//!
//! All integers are little-endian u64 unless stated otherwise; all floats
//! are little-endian f64. Every format opens with an 8-byte magic string.

use crate::error::{Error, Result};
use crate::fom::Trajectory;
use crate::linalg::DenseMat;
use crate::offline::{ColumnProvenance, PodBasis, SnapshotMatrix};
use crate::rom::{RomMethod, RomSolution, StepDiagnostics};
use crate::tensor::Tensor;
use std::io::{Read, Write};

/// 64-bit FNV-1a over a byte stream.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for &v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for v in &mut out {
        *v = read_f64(r)?;
    }
    Ok(out)
}

pub(crate) fn check_magic<R: Read>(r: &mut R, magic: &[u8; 8], what: &str) -> Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!("not a {what} file")));
    }
    Ok(())
}

/// Tensor record: u64 rank, u64 extents, f64 payload.
pub(crate) fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    write_u64(w, t.shape().len() as u64)?;
    for &e in t.shape() {
        write_u64(w, e as u64)?;
    }
    write_f64s(w, t.data())
}

pub(crate) fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let rank = read_u64(r)? as usize;
    if rank > 8 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let len: usize = shape.iter().product();
    let data = read_f64s(r, len)?;
    Tensor::new(shape, data)
}

// ── trajectory files ─────────────────────────────────────────────────
//
// Layout: magic "MROM-TRJ", u64 N, u64 number of states (n_t + 1), f64 dt,
// u64 n_mu, the mu values, then the states as consecutive little-endian
// f64 columns of length N (column-major).

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"MROM-TRJ";

pub fn write_trajectory<W: Write>(traj: &Trajectory, w: &mut W) -> Result<()> {
    w.write_all(TRAJECTORY_MAGIC)?;
    write_u64(w, traj.state_dim() as u64)?;
    write_u64(w, traj.states.len() as u64)?;
    write_f64(w, traj.dt)?;
    write_u64(w, traj.mu.len() as u64)?;
    write_f64s(w, &traj.mu)?;
    for s in &traj.states {
        write_f64s(w, s)?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    check_magic(r, TRAJECTORY_MAGIC, "trajectory")?;
    let n = read_u64(r)? as usize;
    let n_states = read_u64(r)? as usize;
    let dt = read_f64(r)?;
    let n_mu = read_u64(r)? as usize;
    let mu = read_f64s(r, n_mu)?;
    let mut states = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        states.push(read_f64s(r, n)?);
    }
    Ok(Trajectory { states, dt, mu })
}

// ── snapshot-matrix files ────────────────────────────────────────────
//
// Layout: magic "MROM-SNP", u64 N, u64 n_s, u64 n_mu, u8 zero-column flag,
// then a provenance record per column (n_mu f64 parameters and a u64 step
// index, with all-zero parameters and step u64::MAX for the appended zero
// column), then the columns as little-endian f64, column-major.

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"MROM-SNP";

pub fn write_snapshots<W: Write>(w_mat: &SnapshotMatrix, w: &mut W) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    write_u64(w, w_mat.state_dim() as u64)?;
    write_u64(w, w_mat.n_columns() as u64)?;
    let n_mu = w_mat
        .provenance()
        .iter()
        .find_map(|p| match p {
            ColumnProvenance::Snapshot { mu, .. } => Some(mu.len()),
            ColumnProvenance::AppendedZero => None,
        })
        .unwrap_or(0);
    write_u64(w, n_mu as u64)?;
    w.write_all(&[u8::from(w_mat.zero_column_appended())])?;
    for p in w_mat.provenance() {
        match p {
            ColumnProvenance::Snapshot { mu, step } => {
                if mu.len() != n_mu {
                    return Err(Error::Format(
                        "inconsistent parameter dimensions across columns".into(),
                    ));
                }
                write_f64s(w, mu)?;
                write_u64(w, *step as u64)?;
            }
            ColumnProvenance::AppendedZero => {
                write_f64s(w, &vec![0.0; n_mu])?;
                write_u64(w, u64::MAX)?;
            }
        }
    }
    for col in w_mat.columns() {
        write_f64s(w, col)?;
    }
    Ok(())
}

pub fn read_snapshots<R: Read>(r: &mut R) -> Result<SnapshotMatrix> {
    check_magic(r, SNAPSHOT_MAGIC, "snapshot matrix")?;
    let n = read_u64(r)? as usize;
    let n_s = read_u64(r)? as usize;
    let n_mu = read_u64(r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let mut provenance = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let mu = read_f64s(r, n_mu)?;
        let step = read_u64(r)?;
        provenance.push(if step == u64::MAX {
            ColumnProvenance::AppendedZero
        } else {
            ColumnProvenance::Snapshot {
                mu,
                step: step as usize,
            }
        });
    }
    let mut columns = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        columns.push(read_f64s(r, n)?);
    }
    SnapshotMatrix::from_parts(n, columns, provenance, flag[0] != 0)
}

// ── ROM solution files ───────────────────────────────────────────────
//
// Same container as a trajectory plus the reduced coordinates and a
// per-step diagnostics block: magic "MROM-ROM", u64 N, u64 n_states,
// f64 dt, u64 n_mu, mu, u64 p, u8 method tag, reduced coordinates
// (n_states rows of p f64), reconstructed states (n_states rows of N f64),
// then per step a u32 iteration count and f64 final residual norm.

pub const ROM_SOLUTION_MAGIC: &[u8; 8] = b"MROM-ROM";

fn method_tag(m: RomMethod) -> u8 {
    match m {
        RomMethod::Galerkin => 0,
        RomMethod::Lspg => 1,
        RomMethod::EncoderGalerkin => 2,
    }
}

fn method_from_tag(t: u8) -> Result<RomMethod> {
    match t {
        0 => Ok(RomMethod::Galerkin),
        1 => Ok(RomMethod::Lspg),
        2 => Ok(RomMethod::EncoderGalerkin),
        other => Err(Error::Format(format!("unknown ROM method tag {other}"))),
    }
}

pub fn write_rom_solution<W: Write>(sol: &RomSolution, w: &mut W) -> Result<()> {
    w.write_all(ROM_SOLUTION_MAGIC)?;
    let n = sol.states.first().map(|s| s.len()).unwrap_or(0);
    let p = sol.reduced.first().map(|s| s.len()).unwrap_or(0);
    write_u64(w, n as u64)?;
    write_u64(w, sol.states.len() as u64)?;
    write_f64(w, sol.dt)?;
    write_u64(w, sol.mu.len() as u64)?;
    write_f64s(w, &sol.mu)?;
    write_u64(w, p as u64)?;
    w.write_all(&[method_tag(sol.method)])?;
    for xi in &sol.reduced {
        write_f64s(w, xi)?;
    }
    for s in &sol.states {
        write_f64s(w, s)?;
    }
    write_u64(w, sol.diagnostics.len() as u64)?;
    for d in &sol.diagnostics {
        w.write_all(&d.iterations.to_le_bytes())?;
        write_f64(w, d.residual_norm)?;
    }
    Ok(())
}

pub fn read_rom_solution<R: Read>(r: &mut R) -> Result<RomSolution> {
    check_magic(r, ROM_SOLUTION_MAGIC, "ROM solution")?;
    let n = read_u64(r)? as usize;
    let n_states = read_u64(r)? as usize;
    let dt = read_f64(r)?;
    let n_mu = read_u64(r)? as usize;
    let mu = read_f64s(r, n_mu)?;
    let p = read_u64(r)? as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let method = method_from_tag(tag[0])?;
    let mut reduced = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        reduced.push(read_f64s(r, p)?);
    }
    let mut states = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        states.push(read_f64s(r, n)?);
    }
    let n_diag = read_u64(r)? as usize;
    let mut diagnostics = Vec::with_capacity(n_diag);
    for _ in 0..n_diag {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let iterations = u32::from_le_bytes(b4);
        let residual_norm = read_f64(r)?;
        diagnostics.push(StepDiagnostics {
            iterations,
            residual_norm,
        });
    }
    Ok(RomSolution {
        reduced,
        states,
        diagnostics,
        dt,
        mu,
        method,
    })
}

// ── POD basis files ──────────────────────────────────────────────────
//
// Layout: magic "MROM-POD", u64 N, u64 p, f64 singular values, then the
// basis columns as consecutive little-endian f64 vectors of length N.

pub const POD_MAGIC: &[u8; 8] = b"MROM-POD";

pub fn write_pod<W: Write>(pod: &PodBasis, w: &mut W) -> Result<()> {
    w.write_all(POD_MAGIC)?;
    let n = pod.basis.rows();
    let p = pod.basis.cols();
    write_u64(w, n as u64)?;
    write_u64(w, p as u64)?;
    write_f64s(w, &pod.singular_values)?;
    for j in 0..p {
        write_f64s(w, &pod.basis.col(j))?;
    }
    Ok(())
}

pub fn read_pod<R: Read>(r: &mut R) -> Result<PodBasis> {
    check_magic(r, POD_MAGIC, "POD basis")?;
    let n = read_u64(r)? as usize;
    let p = read_u64(r)? as usize;
    let singular_values = read_f64s(r, p)?;
    let mut basis = DenseMat::zeros(n, p);
    for j in 0..p {
        let col = read_f64s(r, n)?;
        basis.set_col(j, &col);
    }
    Ok(PodBasis {
        basis,
        singular_values,
    })
}

// ── header inspection ────────────────────────────────────────────────

/// Human-readable header summary of any artifact file.
pub fn inspect(bytes: &[u8]) -> Result<String> {
    if bytes.len() < 8 {
        return Err(Error::Format("file too short for a magic header".into()));
    }
    let magic: [u8; 8] = bytes[..8].try_into().unwrap();
    let mut r = bytes;
    match &magic {
        m if m == TRAJECTORY_MAGIC => {
            let t = read_trajectory(&mut r)?;
            Ok(format!(
                "trajectory: N={} states={} dt={} mu={:?}",
                t.state_dim(),
                t.states.len(),
                t.dt,
                t.mu
            ))
        }
        m if m == SNAPSHOT_MAGIC => {
            let s = read_snapshots(&mut r)?;
            Ok(format!(
                "snapshot matrix: N={} columns={} zero_column={}",
                s.state_dim(),
                s.n_columns(),
                s.zero_column_appended()
            ))
        }
        m if m == ROM_SOLUTION_MAGIC => {
            let s = read_rom_solution(&mut r)?;
            Ok(format!(
                "ROM solution: method={} N={} states={} p={} dt={} mu={:?}",
                s.method.label(),
                s.states.first().map(|v| v.len()).unwrap_or(0),
                s.states.len(),
                s.reduced.first().map(|v| v.len()).unwrap_or(0),
                s.dt,
                s.mu
            ))
        }
        m if m == POD_MAGIC => {
            let p = read_pod(&mut r)?;
            Ok(format!(
                "POD basis: N={} p={} sigma_1={:.6e} sigma_p={:.6e}",
                p.basis.rows(),
                p.dim(),
                p.singular_values.first().copied().unwrap_or(0.0),
                p.singular_values.last().copied().unwrap_or(0.0)
            ))
        }
        m if m == crate::net::CHECKPOINT_MAGIC => {
            let model = crate::net::read_checkpoint(&mut r)?;
            Ok(format!(
                "autoencoder checkpoint: N={} p={} parameters={}",
                model.state_dim(),
                model.latent_dim(),
                model.params().num_scalars()
            ))
        }
        _ => Err(Error::Format(format!(
            "unknown magic {:?}",
            String::from_utf8_lossy(&magic)
        ))),
    }
}

// ── checksum manifest ────────────────────────────────────────────────

/// File-name to FNV-1a checksum pairs recorded by the offline stage and
/// verified by the online stage. Serialized as `<16-hex-digits> <name>`
/// lines, sorted by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, u64)>,
}

impl Manifest {
    pub fn record(&mut self, name: &str, payload: &[u8]) {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), fnv1a_64(payload)));
        self.entries.sort_by(|a, b| a.0.cmp(&b.0));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, sum) in &self.entries {
            s.push_str(&format!("{sum:016x} {name}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (sum, name) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad manifest line {line:?}")))?;
            let sum = u64::from_str_radix(sum, 16)
                .map_err(|_| Error::Format(format!("bad manifest checksum {sum:?}")))?;
            entries.push((name.to_string(), sum));
        }
        Ok(Manifest { entries })
    }

    /// Verify one payload against its recorded checksum.
    pub fn verify(&self, name: &str, payload: &[u8]) -> Result<()> {
        let expected = self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::Format(format!("{name} missing from manifest")))?;
        let actual = fnv1a_64(payload);
        if actual != expected {
            return Err(Error::ChecksumMismatch {
                name: name.to_string(),
                expected,
                actual,
            });
        }
        Ok(())
    }
}
