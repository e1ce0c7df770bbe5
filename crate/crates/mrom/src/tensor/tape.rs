//! Recording tape for reverse-mode differentiation.
//!
//! Operations are recorded at primitive granularity during the forward pass
//! and replayed in reverse by [`Tape::backward`], accumulating cotangents
//! for every leaf buffer. A tape is confined to one logical thread.

use super::{ops, ConvSpec, Tensor};
use crate::error::{Error, Result};

pub type BufId = usize;

#[derive(Debug, Clone)]
enum TapeOp {
    Dense {
        w: BufId,
        x: BufId,
        out: BufId,
    },
    Conv {
        spec: ConvSpec,
        f: BufId,
        b: BufId,
        x: BufId,
        out: BufId,
    },
    TConv {
        spec: ConvSpec,
        f: BufId,
        b: BufId,
        x: BufId,
        out: BufId,
    },
    Elu {
        x: BufId,
        out: BufId,
    },
    ChannelAffine {
        gain: Vec<f64>,
        x: BufId,
        out: BufId,
    },
    Reshape {
        x: BufId,
        out: BufId,
    },
    /// out = a - b
    Sub {
        a: BufId,
        b: BufId,
        out: BufId,
    },
    /// out = sum(x_i^2), scalar
    SqNorm {
        x: BufId,
        out: BufId,
    },
    /// out = sum of scalar buffers
    SumScalars {
        xs: Vec<BufId>,
        out: BufId,
    },
}

/// Wengert-style tape: an arena of tensors plus the recorded primitives.
pub struct Tape {
    bufs: Vec<Tensor>,
    is_param: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<TapeOp>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            bufs: Vec::new(),
            is_param: Vec::new(),
            grads: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn alloc(&mut self, t: Tensor, param: bool) -> BufId {
        self.bufs.push(t);
        self.is_param.push(param);
        self.grads.push(None);
        self.bufs.len() - 1
    }

    /// Register a non-parameter leaf (e.g. the network input).
    pub fn input(&mut self, t: Tensor) -> BufId {
        self.alloc(t, false)
    }

    /// Register a parameter leaf; the tensor is snapshotted.
    pub fn param(&mut self, t: &Tensor) -> BufId {
        self.alloc(t.clone(), true)
    }

    pub fn value(&self, id: BufId) -> &Tensor {
        &self.bufs[id]
    }

    pub fn dense(&mut self, x: BufId, w: BufId) -> Result<BufId> {
        let out = ops::dense_forward(&self.bufs[x], &self.bufs[w])?;
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::Dense { w, x, out });
        Ok(out)
    }

    pub fn conv(&mut self, spec: &ConvSpec, x: BufId, f: BufId, b: BufId) -> Result<BufId> {
        let out = ops::conv_forward(&self.bufs[x], spec, &self.bufs[f], &self.bufs[b])?;
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::Conv {
            spec: spec.clone(),
            f,
            b,
            x,
            out,
        });
        Ok(out)
    }

    pub fn tconv(&mut self, spec: &ConvSpec, x: BufId, f: BufId, b: BufId) -> Result<BufId> {
        let out = ops::tconv_forward(&self.bufs[x], spec, &self.bufs[f], &self.bufs[b])?;
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::TConv {
            spec: spec.clone(),
            f,
            b,
            x,
            out,
        });
        Ok(out)
    }

    pub fn elu(&mut self, x: BufId) -> BufId {
        let out = ops::elu(&self.bufs[x]);
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::Elu { x, out });
        out
    }

    pub fn channel_affine(&mut self, x: BufId, gain: &[f64], offset: &[f64]) -> Result<BufId> {
        let out = ops::channel_affine(&self.bufs[x], gain, offset)?;
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::ChannelAffine {
            gain: gain.to_vec(),
            x,
            out,
        });
        Ok(out)
    }

    pub fn reshape(&mut self, x: BufId, shape: Vec<usize>) -> Result<BufId> {
        let out = self.bufs[x].reshaped(shape)?;
        let out = self.alloc(out, false);
        self.ops.push(TapeOp::Reshape { x, out });
        Ok(out)
    }

    pub fn sub(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        if self.bufs[a].len() != self.bufs[b].len() {
            return Err(Error::ShapeMismatch {
                context: "tape sub",
                expected: self.bufs[a].shape().to_vec(),
                got: self.bufs[b].shape().to_vec(),
            });
        }
        let data = self.bufs[a]
            .data()
            .iter()
            .zip(self.bufs[b].data().iter())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.bufs[a].shape().to_vec();
        let out = self.alloc(Tensor { shape, data }, false);
        self.ops.push(TapeOp::Sub { a, b, out });
        Ok(out)
    }

    pub fn sq_norm(&mut self, x: BufId) -> BufId {
        let v: f64 = self.bufs[x].data().iter().map(|v| v * v).sum();
        let out = self.alloc(Tensor::scalar(v), false);
        self.ops.push(TapeOp::SqNorm { x, out });
        out
    }

    /// Sum of scalar buffers, left to right.
    pub fn add_scalars(&mut self, xs: &[BufId]) -> BufId {
        debug_assert!(xs.iter().all(|&id| self.bufs[id].len() == 1));
        let v: f64 = xs.iter().map(|&id| self.bufs[id].data()[0]).sum();
        let out = self.alloc(Tensor::scalar(v), false);
        self.ops.push(TapeOp::SumScalars {
            xs: xs.to_vec(),
            out,
        });
        out
    }

    fn accumulate(&mut self, id: BufId, g: &[f64]) {
        match &mut self.grads[id] {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(g.iter()) {
                    *e += v;
                }
            }
            None => self.grads[id] = Some(g.to_vec()),
        }
    }

    /// Replay the tape in reverse, seeding `output` with `seed`.
    ///
    /// Computes the gradient of `seed . output` with respect to every leaf;
    /// linear in the seed.
    pub fn backward(&mut self, output: BufId, seed: &Tensor) -> Result<()> {
        if seed.len() != self.bufs[output].len() {
            return Err(Error::ShapeMismatch {
                context: "vjp seed",
                expected: self.bufs[output].shape().to_vec(),
                got: seed.shape().to_vec(),
            });
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[output] = Some(seed.data().to_vec());
        for idx in (0..self.ops.len()).rev() {
            let op = self.ops[idx].clone();
            match op {
                TapeOp::Dense { w, x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let dx = ops::dense_vjp_input(&self.bufs[w], &g);
                        self.accumulate(x, &dx);
                        let dw = ops::dense_vjp_weights(&self.bufs[x], &g);
                        self.accumulate(w, &dw);
                    }
                }
                TapeOp::Conv { spec, f, b, x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let gt = Tensor {
                            shape: self.bufs[out].shape().to_vec(),
                            data: g,
                        };
                        let dx =
                            ops::conv_adj_input(&gt, &spec, &self.bufs[f], &self.bufs[x].shape()[1..]);
                        self.accumulate(x, dx.data());
                        let df = ops::conv_grad_filters(&gt, &self.bufs[x], &spec);
                        self.accumulate(f, df.data());
                        let db = ops::conv_grad_bias(&gt);
                        self.accumulate(b, db.data());
                    }
                }
                TapeOp::TConv { spec, f, b, x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let gt = Tensor {
                            shape: self.bufs[out].shape().to_vec(),
                            data: g,
                        };
                        let dx = ops::tconv_vjp_input(&gt, &spec, &self.bufs[f]);
                        self.accumulate(x, dx.data());
                        let df = ops::tconv_vjp_filters(&gt, &self.bufs[x], &spec);
                        self.accumulate(f, df.data());
                        let db = ops::conv_grad_bias(&gt);
                        self.accumulate(b, db.data());
                    }
                }
                TapeOp::Elu { x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let dx = ops::elu_vjp(&self.bufs[x], &g);
                        self.accumulate(x, &dx);
                    }
                }
                TapeOp::ChannelAffine { gain, x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let dx = ops::channel_affine_vjp(self.bufs[x].shape(), &gain, &g);
                        self.accumulate(x, &dx);
                    }
                }
                TapeOp::Reshape { x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        self.accumulate(x, &g);
                    }
                }
                TapeOp::Sub { a, b, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        self.accumulate(a, &g);
                        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                        self.accumulate(b, &neg);
                    }
                }
                TapeOp::SqNorm { x, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        let s = 2.0 * g[0];
                        let dx: Vec<f64> = self.bufs[x].data().iter().map(|v| s * v).collect();
                        self.accumulate(x, &dx);
                    }
                }
                TapeOp::SumScalars { xs, out } => {
                    if let Some(g) = self.grads[out].clone() {
                        for id in xs {
                            self.accumulate(id, &g);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient accumulated for a leaf, if any flow reached it.
    pub fn grad(&self, id: BufId) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    /// Gradient for a parameter leaf, zeros if nothing flowed to it.
    pub fn param_grad(&self, id: BufId) -> Vec<f64> {
        debug_assert!(self.is_param[id]);
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => vec![0.0; self.bufs[id].len()],
        }
    }
}
