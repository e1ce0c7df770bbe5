//! Forward-mode differentiation by dual-number propagation.
//!
//! A [`Dual`] carries a primal tensor and its directional derivative; each
//! primitive pushes both through exactly, so composing them yields the
//! Jacobian–vector product of the composition with no truncation error.

use super::{ops, ConvSpec, Tensor};
use crate::error::Result;

/// Primal value paired with its tangent (same shape).
#[derive(Clone, Debug)]
pub struct Dual {
    pub val: Tensor,
    pub tan: Tensor,
}

impl Dual {
    /// Seed a forward-mode pass: `d/d eps (input + eps * direction)`.
    pub fn seed(input: Tensor, direction: Tensor) -> Result<Self> {
        if input.shape() != direction.shape() {
            return Err(crate::error::Error::ShapeMismatch {
                context: "Dual::seed",
                expected: input.shape().to_vec(),
                got: direction.shape().to_vec(),
            });
        }
        Ok(Dual {
            val: input,
            tan: direction,
        })
    }

    /// Constant input: zero tangent.
    pub fn constant(input: Tensor) -> Self {
        let tan = Tensor::zeros(input.shape().to_vec());
        Dual { val: input, tan }
    }
}

pub fn dense(x: &Dual, weights: &Tensor) -> Result<Dual> {
    let val = ops::dense_forward(&x.val, weights)?;
    let tan_data = ops::dense_jvp(weights, x.tan.data());
    let tan = Tensor::new(val.shape().to_vec(), tan_data)?;
    Ok(Dual { val, tan })
}

pub fn conv(x: &Dual, spec: &ConvSpec, filters: &Tensor, bias: &Tensor) -> Result<Dual> {
    let val = ops::conv_forward(&x.val, spec, filters, bias)?;
    let zero_bias = Tensor::zeros(vec![spec.out_channels]);
    let tan = ops::conv_forward(&x.tan, spec, filters, &zero_bias)?;
    Ok(Dual { val, tan })
}

pub fn tconv(x: &Dual, spec: &ConvSpec, filters: &Tensor, bias: &Tensor) -> Result<Dual> {
    let val = ops::tconv_forward(&x.val, spec, filters, bias)?;
    let zero_bias = Tensor::zeros(vec![spec.in_channels]);
    let tan = ops::tconv_forward(&x.tan, spec, filters, &zero_bias)?;
    Ok(Dual { val, tan })
}

pub fn elu(x: &Dual) -> Dual {
    let val = ops::elu(&x.val);
    let tan_data: Vec<f64> = x
        .val
        .data()
        .iter()
        .zip(x.tan.data().iter())
        .map(|(&v, &t)| t * ops::elu_deriv(v))
        .collect();
    let tan = Tensor {
        shape: val.shape().to_vec(),
        data: tan_data,
    };
    Dual { val, tan }
}

pub fn channel_affine(x: &Dual, gain: &[f64], offset: &[f64]) -> Result<Dual> {
    let val = ops::channel_affine(&x.val, gain, offset)?;
    let zero_off = vec![0.0; gain.len()];
    let tan = ops::channel_affine(&x.tan, gain, &zero_off)?;
    Ok(Dual { val, tan })
}

pub fn reshape(x: &Dual, shape: Vec<usize>) -> Result<Dual> {
    Ok(Dual {
        val: x.val.reshaped(shape.clone())?,
        tan: x.tan.reshaped(shape)?,
    })
}
