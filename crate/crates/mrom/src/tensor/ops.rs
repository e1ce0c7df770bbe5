//! Forward kernels and their adjoint / tangent counterparts.
//!
//! Naming: `*_forward` computes the primitive, `*_vjp_*` the reverse-mode
//! pullbacks, `*_jvp` the forward-mode pushforward. The transposed
//! convolution is defined strictly as the adjoint of [`conv_forward`] with
//! the same [`ConvSpec`], so `conv_adj_input` doubles as its linear part.

use super::{conv_output_shape, tconv_output_shape, ConvSpec, Tensor};
use crate::error::{Error, Result};

#[inline]
fn check_finite(t: &Tensor, what: &'static str) {
    debug_assert!(t.all_finite(), "non-finite values entering {what}");
}

/// Dot product with eight independent accumulators so the reduction
/// pipelines instead of serializing on one register.
#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 8;
    let mut s = [0.0f64; 8];
    for c in 0..chunks {
        let i = 8 * c;
        let av = &a[i..i + 8];
        let bv = &b[i..i + 8];
        for t in 0..8 {
            s[t] += av[t] * bv[t];
        }
    }
    let mut tail = 0.0;
    for i in 8 * chunks..n {
        tail += a[i] * b[i];
    }
    ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7])) + tail
}

std::thread_local! {
    // scratch for im2col patch gathers, grown on demand
    static PATCH_SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// y += s * x.
#[inline]
fn axpy_slice(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += s * xv;
    }
}

// ── fully-connected layer ────────────────────────────────────────────

/// `out = W [1; x]` with the bias stored in column 0 of `W`.
pub fn dense_forward(input: &Tensor, weights: &Tensor) -> Result<Tensor> {
    check_finite(input, "dense_forward");
    let n_in = input.len();
    if weights.shape().len() != 2 || weights.shape()[1] != n_in + 1 {
        return Err(Error::ShapeMismatch {
            context: "dense_forward",
            expected: vec![weights.shape().first().copied().unwrap_or(0), n_in + 1],
            got: weights.shape().to_vec(),
        });
    }
    let n_out = weights.shape()[0];
    let w = weights.data();
    let x = input.data();
    let mut out = vec![0.0; n_out];
    for i in 0..n_out {
        let row = &w[i * (n_in + 1)..(i + 1) * (n_in + 1)];
        out[i] = row[0] + dot_unrolled(&row[1..], x);
    }
    Ok(Tensor {
        shape: vec![n_out],
        data: out,
    })
}

pub fn dense_vjp_input(weights: &Tensor, d_out: &[f64]) -> Vec<f64> {
    let n_out = weights.shape()[0];
    let n_in = weights.shape()[1] - 1;
    let w = weights.data();
    let mut dx = vec![0.0; n_in];
    for i in 0..n_out {
        let row = &w[i * (n_in + 1) + 1..(i + 1) * (n_in + 1)];
        let di = d_out[i];
        for (dxj, wj) in dx.iter_mut().zip(row.iter()) {
            *dxj += wj * di;
        }
    }
    dx
}

pub fn dense_vjp_weights(input: &Tensor, d_out: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    let x = input.data();
    let mut dw = vec![0.0; d_out.len() * (n_in + 1)];
    for (i, &di) in d_out.iter().enumerate() {
        let row = &mut dw[i * (n_in + 1)..(i + 1) * (n_in + 1)];
        row[0] = di;
        for (r, xj) in row[1..].iter_mut().zip(x.iter()) {
            *r = di * xj;
        }
    }
    dw
}

/// Tangent of the dense layer: `dy = W[:, 1..] dx` (bias drops out).
pub fn dense_jvp(weights: &Tensor, d_input: &[f64]) -> Vec<f64> {
    let n_out = weights.shape()[0];
    let n_in = weights.shape()[1] - 1;
    let w = weights.data();
    let mut dy = vec![0.0; n_out];
    for i in 0..n_out {
        let row = &w[i * (n_in + 1) + 1..(i + 1) * (n_in + 1)];
        let mut acc = 0.0;
        for (wj, dxj) in row.iter().zip(d_input.iter()) {
            acc += wj * dxj;
        }
        dy[i] = acc;
    }
    dy
}

// ── strided convolution, half padding ────────────────────────────────

fn check_conv_shapes(input: &Tensor, spec: &ConvSpec, filters: &Tensor) -> Result<()> {
    if input.shape().len() != spec.spatial_rank + 1 {
        return Err(Error::Dimension(format!(
            "conv input must have rank {} (channels + spatial), got shape {:?}",
            spec.spatial_rank + 1,
            input.shape()
        )));
    }
    if filters.shape() != spec.filter_shape().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "conv filters",
            expected: spec.filter_shape(),
            got: filters.shape().to_vec(),
        });
    }
    Ok(())
}

/// `out[i,j,..] = bias[i] + sum_{r,m,..} in[r, j*s + m - pad, ..] W[i,r,m,..]`
/// with zero extension outside the input extents.
pub fn conv_forward(
    input: &Tensor,
    spec: &ConvSpec,
    filters: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    check_finite(input, "conv_forward");
    check_conv_shapes(input, spec, filters)?;
    if input.shape()[0] != spec.in_channels {
        return Err(Error::Dimension(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels,
            input.shape()[0]
        )));
    }
    if bias.len() != spec.out_channels {
        return Err(Error::Dimension(format!(
            "conv bias must have {} entries, got {}",
            spec.out_channels,
            bias.len()
        )));
    }
    let in_extents = &input.shape()[1..];
    let out_extents = conv_output_shape(spec, in_extents);
    match spec.spatial_rank {
        1 => Ok(conv1d_fwd(input, spec, filters, Some(bias), out_extents[0])),
        2 => Ok(conv2d_fwd(input, spec, filters, Some(bias), &out_extents)),
        r => Err(Error::Dimension(format!("unsupported spatial rank {r}"))),
    }
}

fn conv1d_fwd(
    input: &Tensor,
    spec: &ConvSpec,
    filters: &Tensor,
    bias: Option<&Tensor>,
    m: usize,
) -> Tensor {
    let n = input.shape()[1];
    let (cin, cout, k, s) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel[0],
        spec.stride[0],
    );
    let pad = spec.pad_left(0) as isize;
    let x = input.data();
    let f = filters.data();
    let mut out = vec![0.0; cout * m];

    // gather zero-padded patches so every output is one long contiguous dot
    let patch = cin * k;
    PATCH_SCRATCH.with(|cell| {
        let mut patches = cell.borrow_mut();
        patches.clear();
        patches.resize(m * patch, 0.0);
        for j in 0..m {
            let base = (j * s) as isize - pad;
            let lo = (-base).max(0) as usize;
            let hi = ((n as isize - base).clamp(0, k as isize)) as usize;
            let len = hi.saturating_sub(lo);
            if len == 0 {
                continue;
            }
            let off = (base + lo as isize) as usize;
            let row = &mut patches[j * patch..(j + 1) * patch];
            for ci in 0..cin {
                row[ci * k + lo..ci * k + lo + len]
                    .copy_from_slice(&x[ci * n + off..ci * n + off + len]);
            }
        }
        for j in 0..m {
            let prow = &patches[j * patch..(j + 1) * patch];
            for co in 0..cout {
                let b = bias.map_or(0.0, |t| t.data()[co]);
                let frow = &f[co * patch..(co + 1) * patch];
                out[co * m + j] = b + dot_unrolled(frow, prow);
            }
        }
    });
    Tensor {
        shape: vec![cout, m],
        data: out,
    }
}

fn conv2d_fwd(
    input: &Tensor,
    spec: &ConvSpec,
    filters: &Tensor,
    bias: Option<&Tensor>,
    out_extents: &[usize],
) -> Tensor {
    let (n1, n2) = (input.shape()[1], input.shape()[2]);
    let (m1, m2) = (out_extents[0], out_extents[1]);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (k1, k2) = (spec.kernel[0], spec.kernel[1]);
    let (s1, s2) = (spec.stride[0], spec.stride[1]);
    let (p1, p2) = (spec.pad_left(0) as isize, spec.pad_left(1) as isize);
    let x = input.data();
    let f = filters.data();
    let mut out = vec![0.0; cout * m1 * m2];

    // zero-padded patch rows, one per output position
    let patch = cin * k1 * k2;
    PATCH_SCRATCH.with(|cell| {
        let mut patches = cell.borrow_mut();
        patches.clear();
        patches.resize(m1 * m2 * patch, 0.0);
        for j1 in 0..m1 {
            let base1 = (j1 * s1) as isize - p1;
            let lo1 = (-base1).max(0) as usize;
            let hi1 = ((n1 as isize - base1).clamp(0, k1 as isize)) as usize;
            for j2 in 0..m2 {
                let base2 = (j2 * s2) as isize - p2;
                let lo2 = (-base2).max(0) as usize;
                let hi2 = ((n2 as isize - base2).clamp(0, k2 as isize)) as usize;
                let len = hi2.saturating_sub(lo2);
                if len == 0 {
                    continue;
                }
                let off = (base2 + lo2 as isize) as usize;
                let row = &mut patches[(j1 * m2 + j2) * patch..(j1 * m2 + j2 + 1) * patch];
                for ci in 0..cin {
                    for mm1 in lo1..hi1.max(lo1) {
                        let xi = (base1 + mm1 as isize) as usize;
                        let dst = (ci * k1 + mm1) * k2 + lo2;
                        row[dst..dst + len].copy_from_slice(
                            &x[(ci * n1 + xi) * n2 + off..(ci * n1 + xi) * n2 + off + len],
                        );
                    }
                }
            }
        }
        for j in 0..m1 * m2 {
            let prow = &patches[j * patch..(j + 1) * patch];
            for co in 0..cout {
                let b = bias.map_or(0.0, |t| t.data()[co]);
                let frow = &f[co * patch..(co + 1) * patch];
                out[co * m1 * m2 + j] = b + dot_unrolled(frow, prow);
            }
        }
    });
    Tensor {
        shape: vec![cout, m1, m2],
        data: out,
    }
}

/// Adjoint of the conv linear map: maps a `[out_c, m..]` cotangent back to
/// the `[in_c, n..]` input space (`n..` given explicitly). Also the linear
/// part of the transposed convolution.
pub fn conv_adj_input(
    d_out: &Tensor,
    spec: &ConvSpec,
    filters: &Tensor,
    in_extents: &[usize],
) -> Tensor {
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let g = d_out.data();
    let f = filters.data();
    match spec.spatial_rank {
        1 => {
            let n = in_extents[0];
            let m = d_out.shape()[1];
            let (k, s) = (spec.kernel[0], spec.stride[0]);
            let pad = spec.pad_left(0) as isize;
            let mut dx = vec![0.0; cin * n];
            for co in 0..cout {
                for j in 0..m {
                    let base = (j * s) as isize - pad;
                    let lo = (-base).max(0) as usize;
                    let hi = ((n as isize - base).clamp(0, k as isize)) as usize;
                    let gj = g[co * m + j];
                    if gj == 0.0 {
                        continue;
                    }
                    let off = (base + lo as isize) as usize;
                    let len = hi.saturating_sub(lo);
                    for ci in 0..cin {
                        let frow = &f[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                        axpy_slice(
                            gj,
                            &frow[lo..lo + len],
                            &mut dx[ci * n + off..ci * n + off + len],
                        );
                    }
                }
            }
            Tensor {
                shape: vec![cin, n],
                data: dx,
            }
        }
        2 => {
            let (n1, n2) = (in_extents[0], in_extents[1]);
            let (m1, m2) = (d_out.shape()[1], d_out.shape()[2]);
            let (k1, k2) = (spec.kernel[0], spec.kernel[1]);
            let (s1, s2) = (spec.stride[0], spec.stride[1]);
            let (p1, p2) = (spec.pad_left(0) as isize, spec.pad_left(1) as isize);
            let mut dx = vec![0.0; cin * n1 * n2];
            for co in 0..cout {
                for j1 in 0..m1 {
                    let base1 = (j1 * s1) as isize - p1;
                    let lo1 = (-base1).max(0) as usize;
                    let hi1 = ((n1 as isize - base1).clamp(0, k1 as isize)) as usize;
                    for j2 in 0..m2 {
                        let base2 = (j2 * s2) as isize - p2;
                        let lo2 = (-base2).max(0) as usize;
                        let hi2 = ((n2 as isize - base2).clamp(0, k2 as isize)) as usize;
                        let gj = g[(co * m1 + j1) * m2 + j2];
                        if gj == 0.0 {
                            continue;
                        }
                        for ci in 0..cin {
                            let fch =
                                &f[((co * cin + ci) * k1) * k2..((co * cin + ci + 1) * k1) * k2];
                            for mm1 in lo1..hi1.max(lo1) {
                                let xi = (base1 + mm1 as isize) as usize;
                                let off = (base2 + lo2 as isize) as usize;
                                let len = hi2.saturating_sub(lo2);
                                let xrow = &mut dx[(ci * n1 + xi) * n2 + off
                                    ..(ci * n1 + xi) * n2 + off + len];
                                let frow = &fch[mm1 * k2 + lo2..mm1 * k2 + lo2 + len];
                                for (xv, fv) in xrow.iter_mut().zip(frow.iter()) {
                                    *xv += gj * fv;
                                }
                            }
                        }
                    }
                }
            }
            Tensor {
                shape: vec![cin, n1, n2],
                data: dx,
            }
        }
        _ => unreachable!(),
    }
}

/// Filter cotangent: `dW[co,ci,m..] = sum_j d_out[co,j..] in[ci, j*s+m-pad, ..]`.
pub fn conv_grad_filters(d_out: &Tensor, input: &Tensor, spec: &ConvSpec) -> Tensor {
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let x = input.data();
    let g = d_out.data();
    let mut dw = vec![0.0; spec.filter_shape().iter().product()];
    match spec.spatial_rank {
        1 => {
            let n = input.shape()[1];
            let m = d_out.shape()[1];
            let (k, s) = (spec.kernel[0], spec.stride[0]);
            let pad = spec.pad_left(0) as isize;
            for co in 0..cout {
                for j in 0..m {
                    let base = (j * s) as isize - pad;
                    let lo = (-base).max(0) as usize;
                    let hi = ((n as isize - base).clamp(0, k as isize)) as usize;
                    let gj = g[co * m + j];
                    if gj == 0.0 {
                        continue;
                    }
                    let off = (base + lo as isize) as usize;
                    let len = hi.saturating_sub(lo);
                    for ci in 0..cin {
                        let xrow = &x[ci * n + off..ci * n + off + len];
                        axpy_slice(
                            gj,
                            xrow,
                            &mut dw[(co * cin + ci) * k + lo..(co * cin + ci) * k + lo + len],
                        );
                    }
                }
            }
        }
        2 => {
            let (n1, n2) = (input.shape()[1], input.shape()[2]);
            let (m1, m2) = (d_out.shape()[1], d_out.shape()[2]);
            let (k1, k2) = (spec.kernel[0], spec.kernel[1]);
            let (s1, s2) = (spec.stride[0], spec.stride[1]);
            let (p1, p2) = (spec.pad_left(0) as isize, spec.pad_left(1) as isize);
            for co in 0..cout {
                for j1 in 0..m1 {
                    let base1 = (j1 * s1) as isize - p1;
                    let lo1 = (-base1).max(0) as usize;
                    let hi1 = ((n1 as isize - base1).clamp(0, k1 as isize)) as usize;
                    for j2 in 0..m2 {
                        let base2 = (j2 * s2) as isize - p2;
                        let lo2 = (-base2).max(0) as usize;
                        let hi2 = ((n2 as isize - base2).clamp(0, k2 as isize)) as usize;
                        let gj = g[(co * m1 + j1) * m2 + j2];
                        if gj == 0.0 {
                            continue;
                        }
                        for ci in 0..cin {
                            for mm1 in lo1..hi1.max(lo1) {
                                let xi = (base1 + mm1 as isize) as usize;
                                let off = (base2 + lo2 as isize) as usize;
                                let len = hi2.saturating_sub(lo2);
                                let widx = ((co * cin + ci) * k1 + mm1) * k2 + lo2;
                                let wrow = &mut dw[widx..widx + len];
                                let xrow =
                                    &x[(ci * n1 + xi) * n2 + off..(ci * n1 + xi) * n2 + off + len];
                                for (wv, xv) in wrow.iter_mut().zip(xrow.iter()) {
                                    *wv += gj * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Tensor {
        shape: spec.filter_shape(),
        data: dw,
    }
}

/// Bias cotangent for a conv output: per-channel sum.
pub fn conv_grad_bias(d_out: &Tensor) -> Tensor {
    let c = d_out.shape()[0];
    let spatial: usize = d_out.shape()[1..].iter().product();
    let g = d_out.data();
    let mut db = vec![0.0; c];
    for (ch, dbc) in db.iter_mut().enumerate() {
        *dbc = g[ch * spatial..(ch + 1) * spatial].iter().sum();
    }
    Tensor {
        shape: vec![c],
        data: db,
    }
}

// ── transposed convolution ───────────────────────────────────────────

/// Adjoint of the matching convolution plus a per-output-channel bias.
///
/// `spec` is the mirrored conv orientation: the input here has
/// `spec.out_channels` channels and extents `m..`; the output has
/// `spec.in_channels` channels and extents `m*s` per dimension.
pub fn tconv_forward(
    input: &Tensor,
    spec: &ConvSpec,
    filters: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    check_finite(input, "tconv_forward");
    if input.shape().len() != spec.spatial_rank + 1 || input.shape()[0] != spec.out_channels {
        return Err(Error::Dimension(format!(
            "tconv expects {} input channels, got shape {:?}",
            spec.out_channels,
            input.shape()
        )));
    }
    if filters.shape() != spec.filter_shape().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "tconv filters",
            expected: spec.filter_shape(),
            got: filters.shape().to_vec(),
        });
    }
    if bias.len() != spec.in_channels {
        return Err(Error::Dimension(format!(
            "tconv bias must have {} entries, got {}",
            spec.in_channels,
            bias.len()
        )));
    }
    let out_extents = tconv_output_shape(spec, &input.shape()[1..]);
    let mut out = conv_adj_input(input, spec, filters, &out_extents);
    let spatial: usize = out_extents.iter().product();
    for ch in 0..spec.in_channels {
        let b = bias.data()[ch];
        for v in &mut out.data[ch * spatial..(ch + 1) * spatial] {
            *v += b;
        }
    }
    Ok(out)
}

/// VJP of the transposed convolution with respect to its input: the forward
/// convolution with the same filters and no bias.
pub fn tconv_vjp_input(d_out: &Tensor, spec: &ConvSpec, filters: &Tensor) -> Tensor {
    let out_extents = conv_output_shape(spec, &d_out.shape()[1..]);
    match spec.spatial_rank {
        1 => conv1d_fwd(d_out, spec, filters, None, out_extents[0]),
        2 => conv2d_fwd(d_out, spec, filters, None, &out_extents),
        _ => unreachable!(),
    }
}

/// VJP of the transposed convolution with respect to the filters: the conv
/// filter gradient with the roles of input and cotangent swapped.
pub fn tconv_vjp_filters(d_out: &Tensor, input: &Tensor, spec: &ConvSpec) -> Tensor {
    conv_grad_filters(input, d_out, spec)
}

// ── ELU ──────────────────────────────────────────────────────────────

/// Elementwise `x` if `x >= 0`, else `exp(x) - 1`.
pub fn elu(input: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { x.exp() - 1.0 })
        .collect();
    Tensor {
        shape: input.shape().to_vec(),
        data,
    }
}

/// ELU derivative at the forward input: 1 for `x >= 0`, `exp(x)` otherwise.
pub fn elu_deriv(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn elu_vjp(input: &Tensor, d_out: &[f64]) -> Vec<f64> {
    input
        .data()
        .iter()
        .zip(d_out.iter())
        .map(|(&x, &g)| g * elu_deriv(x))
        .collect()
}

// ── fixed per-channel affine map (scaling / unscaling) ──────────────

/// `out[c, ..] = gain[c] * in[c, ..] + offset[c]`; the coefficients are
/// fixed (not trainable).
pub fn channel_affine(input: &Tensor, gain: &[f64], offset: &[f64]) -> Result<Tensor> {
    let c = input.shape()[0];
    if gain.len() != c || offset.len() != c {
        return Err(Error::Dimension(format!(
            "channel_affine expects {c} channels, got {} gains",
            gain.len()
        )));
    }
    let spatial: usize = input.shape()[1..].iter().product();
    let mut data = input.data().to_vec();
    for ch in 0..c {
        let (g, o) = (gain[ch], offset[ch]);
        for v in &mut data[ch * spatial..(ch + 1) * spatial] {
            *v = g * *v + o;
        }
    }
    Ok(Tensor {
        shape: input.shape().to_vec(),
        data,
    })
}

pub fn channel_affine_vjp(shape: &[usize], gain: &[f64], d_out: &[f64]) -> Vec<f64> {
    let c = shape[0];
    let spatial: usize = shape[1..].iter().product();
    let mut dx = d_out.to_vec();
    for ch in 0..c {
        let g = gain[ch];
        for v in &mut dx[ch * spatial..(ch + 1) * spatial] {
            *v *= g;
        }
    }
    dx
}
