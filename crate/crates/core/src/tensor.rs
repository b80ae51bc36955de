//! Dense row-major tensors and the kernel-tensor views.
//!
//! A convolution kernel is held 4-way as `[ci, co, k, k]` and viewed 3-way as
//! `[ci, co, k²]` with spatial index `j = ky·k + kx`. Fixing one axis of the
//! 3-way tensor yields a slice:
//!
//! | axis      | name       | matrix      |
//! |-----------|------------|-------------|
//! | `Input`   | frontal    | `co × k²`   |
//! | `Output`  | horizontal | `ci × k²`   |
//! | `Spatial` | lateral    | `ci × co`   |

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::shape("tensor needs at least one axis"));
        }
        if dims.contains(&0) {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Tensor::new(dims, vec![0.0; len])
    }

    /// Fills a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Tensor::zeros(dims)?;
        let mut idx = vec![0usize; t.dims.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for axis in (0..idx.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < t.dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
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

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Same values under new extents.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Tensor> {
        Tensor::new(dims, self.data.clone())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Tensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// `[ci, co, k, k]` → `[ci, co, k²]`; spatial index `j = ky·k + kx`.
    pub fn reshape_4to3(&self) -> Result<Tensor> {
        match self.dims[..] {
            [ci, co, kh, kw] if kh == kw => self.reshape(vec![ci, co, kh * kw]),
            [_, _, kh, kw] => Err(Error::shape(format!(
                "kernel window {kh}x{kw} is not square"
            ))),
            _ => Err(Error::shape(format!(
                "expected a 4-way kernel, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// `[ci, co, k²]` → `[ci, co, k, k]`.
    pub fn reshape_3to4(&self) -> Result<Tensor> {
        let [ci, co, kk] = self.dims3()?;
        let k = spatial_extent(kk)?;
        self.reshape(vec![ci, co, k, k])
    }

    pub(crate) fn dims3(&self) -> Result<[usize; 3]> {
        match self.dims[..] {
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::shape(format!(
                "expected a 3-way tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// Extracts one slice of a 3-way `[ci, co, k²]` tensor.
    pub fn slice(&self, axis: SliceAxis, index: usize) -> Result<Matrix> {
        let [ci, co, kk] = self.dims3()?;
        let extent = self.dims[axis.position()];
        if index >= extent {
            return Err(Error::IndexOutOfRange { index, extent });
        }
        let m = match axis {
            SliceAxis::Input => Matrix::from_fn(co, kk, |o, j| self.get(&[index, o, j])),
            SliceAxis::Output => Matrix::from_fn(ci, kk, |i, j| self.get(&[i, index, j])),
            SliceAxis::Spatial => Matrix::from_fn(ci, co, |i, o| self.get(&[i, o, index])),
        };
        Ok(m)
    }

    /// Inverse of taking every slice along `axis`.
    pub fn from_slices(axis: SliceAxis, slices: &[Matrix]) -> Result<Tensor> {
        let first = slices
            .first()
            .ok_or_else(|| Error::shape("no slices to assemble"))?;
        if slices.iter().any(|s| s.shape() != first.shape()) {
            return Err(Error::shape("slices differ in shape"));
        }
        let (r, c) = first.shape();
        let n = slices.len();
        let dims = match axis {
            SliceAxis::Input => vec![n, r, c],
            SliceAxis::Output => vec![r, n, c],
            SliceAxis::Spatial => vec![r, c, n],
        };
        Tensor::from_fn(dims, |idx| {
            let (i, o, j) = (idx[0], idx[1], idx[2]);
            match axis {
                SliceAxis::Input => slices[i][(o, j)],
                SliceAxis::Output => slices[o][(i, j)],
                SliceAxis::Spatial => slices[j][(i, o)],
            }
        })
    }

    /// Mode-n unfolding of a 3-way tensor. The chosen axis indexes rows; the
    /// two remaining axes, in their natural order, index columns with the
    /// earlier one running fastest. For `[I, J, K]`:
    /// mode 1 → column `j + J·k`, mode 2 → column `i + I·k`,
    /// mode 3 → column `i + I·j`.
    pub fn matricize(&self, mode: Mode) -> Result<Matrix> {
        let dims = self.dims3()?;
        let (row_axis, fast, slow) = mode.axes();
        let mut m = Matrix::zeros(dims[row_axis], dims[fast] * dims[slow]);
        let mut idx = [0usize; 3];
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    idx[0] = a;
                    idx[1] = b;
                    idx[2] = c;
                    let col = idx[fast] + dims[fast] * idx[slow];
                    m[(idx[row_axis], col)] = self.data[(a * dims[1] + b) * dims[2] + c];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`Tensor::matricize`].
    pub fn refold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor> {
        let (row_axis, fast, slow) = mode.axes();
        if m.shape() != (dims[row_axis], dims[fast] * dims[slow]) {
            return Err(Error::shape(format!(
                "{:?} unfolding of {dims:?} cannot come from a {:?} matrix",
                mode,
                m.shape()
            )));
        }
        Tensor::from_fn(dims.to_vec(), |idx| {
            m[(idx[row_axis], idx[fast] + dims[fast] * idx[slow])]
        })
    }
}

/// `k` such that `k·k == kk`, for odd or even windows.
pub(crate) fn spatial_extent(kk: usize) -> Result<usize> {
    let k = (kk as f64).sqrt().round() as usize;
    if k * k != kk {
        return Err(Error::shape(format!(
            "spatial extent {kk} is not a perfect square"
        )));
    }
    Ok(k)
}

/// Axis of the 3-way kernel tensor held fixed when slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    /// Fix `ci`: frontal slice, `co × k²`.
    Input,
    /// Fix `co`: horizontal slice, `ci × k²`.
    Output,
    /// Fix the spatial index: lateral slice, `ci × co`.
    Spatial,
}

impl SliceAxis {
    fn position(self) -> usize {
        match self {
            SliceAxis::Input => 0,
            SliceAxis::Output => 1,
            SliceAxis::Spatial => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub fn from_index(mode: usize) -> Result<Mode> {
        match mode {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::invalid(format!(
                "mode must be 1, 2 or 3, got {mode}"
            ))),
        }
    }

    /// (row axis, fast column axis, slow column axis)
    fn axes(self) -> (usize, usize, usize) {
        match self {
            Mode::One => (0, 1, 2),
            Mode::Two => (1, 0, 2),
            Mode::Three => (2, 0, 1),
        }
    }
}
