//! Dense `f64` tensors and the differentiable primitives the autoencoder is
//! built from: fully-connected layers, strided (transposed) convolutions
//! with half padding, and the ELU activation.
//!
//! Reverse-mode derivatives go through [`tape::Tape`]; forward-mode
//! (Jacobian–vector) derivatives go through [`dual::Dual`].

pub mod dual;
pub mod ops;
pub mod tape;

use crate::error::{Error, Result};

/// Dense multi-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Construct from shape and data; rejects shape/length mismatch and
    /// non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new",
                expected: shape,
                got: vec![data.len()],
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same data, new shape (element counts must agree).
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::reshaped",
                expected: shape,
                got: self.shape.clone(),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Specification of a strided convolution with half padding.
///
/// The spec always describes the *convolution* orientation
/// (`in_channels -> out_channels`, spatial extent `n -> ceil(n/s)`);
/// [`ops::tconv_forward`] applies its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub spatial_rank: usize,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new_1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            spatial_rank: 1,
            kernel: vec![kernel],
            stride: vec![stride],
            in_channels,
            out_channels,
        }
    }

    pub fn new_2d(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        ConvSpec {
            spatial_rank: 2,
            kernel: vec![kernel.0, kernel.1],
            stride: vec![stride.0, stride.1],
            in_channels,
            out_channels,
        }
    }

    /// Half padding keeps the window for output position `j` anchored at
    /// `j*s`; the left pad is `floor((k-1)/2)`.
    pub fn pad_left(&self, dim: usize) -> usize {
        (self.kernel[dim] - 1) / 2
    }

    /// Expected filter tensor shape: `[out_c, in_c, k1(, k2)]`.
    pub fn filter_shape(&self) -> Vec<usize> {
        let mut s = vec![self.out_channels, self.in_channels];
        s.extend_from_slice(&self.kernel);
        s
    }
}

/// Output spatial extents: `ceil(n/s)` per dimension (half padding).
pub fn conv_output_shape(spec: &ConvSpec, in_extents: &[usize]) -> Vec<usize> {
    assert_eq!(in_extents.len(), spec.spatial_rank);
    in_extents
        .iter()
        .zip(spec.stride.iter())
        .map(|(n, s)| n.div_ceil(*s))
        .collect()
}

/// Transposed-convolution output extents: `n * s` per dimension.
pub fn tconv_output_shape(spec: &ConvSpec, in_extents: &[usize]) -> Vec<usize> {
    assert_eq!(in_extents.len(), spec.spatial_rank);
    in_extents
        .iter()
        .zip(spec.stride.iter())
        .map(|(n, s)| n * s)
        .collect()
}
