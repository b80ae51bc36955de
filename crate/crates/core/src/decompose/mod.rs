//! Factorized forms of a 3-way kernel tensor `[ci, co, k²]`.
//!
//! Each form maps one-to-one onto a stack of depthwise (DW), pointwise (PW)
//! and shift layers:
//!
//! * [`DpFactors`]: rank-1 approximation of every frontal slice, DW then PW.
//! * [`PdFactors`]: rank-1 approximation of every horizontal slice, PW then DW.
//! * [`CpdFactors`]: rank-`r` CP decomposition, PW then DW then PW.
//! * [`ShiftLayerFactors`]: rank-1 terms of lateral slices sitting on one-hot
//!   spatial vectors, PW then shift then PW.

mod cpd;
mod shift;
mod slices;

pub use cpd::{cpd_als, AlsOptions, CpdFit};
pub use shift::shift_extract;
pub use slices::{dp_decompose, pd_decompose};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{spatial_extent, Tensor};

/// Depthwise kernels per input channel followed by a pointwise mix.
/// Approximates `kernel[i, o, :] ≈ mix[o, i] · spatial[i, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpFactors {
    /// `ci × k²`, row `i` is the DW kernel of input channel `i`.
    pub spatial: Matrix,
    /// `co × ci` PW weights.
    pub mix: Matrix,
}

/// Pointwise mix followed by depthwise kernels per output channel.
/// Approximates `kernel[i, o, :] ≈ mix[o, i] · spatial[o, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdFactors {
    /// `co × ci` PW weights.
    pub mix: Matrix,
    /// `co × k²`, row `o` is the DW kernel of output channel `o`.
    pub spatial: Matrix,
}

/// `kernel[i, o, j] ≈ Σ_t a[i, t] · b[o, t] · c[j, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors {
    /// `ci × r`
    pub a: Matrix,
    /// `co × r`
    pub b: Matrix,
    /// `k² × r`
    pub c: Matrix,
}

/// One 3-way rank-1 term `v ⊗ u ⊗ e_shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTerm {
    /// Exit PW filter, length `co`.
    pub u: Vec<f64>,
    /// Entry PW filter, length `ci`.
    pub v: Vec<f64>,
    /// Spatial index in `[0, k²)`.
    pub shift: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftLayerFactors {
    pub terms: Vec<ShiftTerm>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_extent: usize,
}

impl DpFactors {
    pub fn in_channels(&self) -> usize {
        self.spatial.rows()
    }

    pub fn out_channels(&self) -> usize {
        self.mix.rows()
    }

    pub fn window(&self) -> usize {
        self.spatial.cols()
    }

    pub fn param_count(&self) -> usize {
        (self.out_channels() + self.window()) * self.in_channels()
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        let (ci, co, kk) = (self.in_channels(), self.out_channels(), self.window());
        if self.mix.cols() != ci {
            return Err(Error::shape(format!(
                "mix has {} columns for {ci} input channels",
                self.mix.cols()
            )));
        }
        Tensor::from_fn(vec![ci, co, kk], |ix| {
            self.mix[(ix[1], ix[0])] * self.spatial[(ix[0], ix[2])]
        })
    }
}

impl PdFactors {
    pub fn in_channels(&self) -> usize {
        self.mix.cols()
    }

    pub fn out_channels(&self) -> usize {
        self.mix.rows()
    }

    pub fn window(&self) -> usize {
        self.spatial.cols()
    }

    pub fn param_count(&self) -> usize {
        (self.in_channels() + self.window()) * self.out_channels()
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        let (ci, co, kk) = (self.in_channels(), self.out_channels(), self.window());
        if self.spatial.rows() != co {
            return Err(Error::shape(format!(
                "{} spatial kernels for {co} output channels",
                self.spatial.rows()
            )));
        }
        Tensor::from_fn(vec![ci, co, kk], |ix| {
            self.mix[(ix[1], ix[0])] * self.spatial[(ix[1], ix[2])]
        })
    }
}

impl CpdFactors {
    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn param_count(&self) -> usize {
        (self.a.rows() + self.b.rows() + self.c.rows()) * self.rank()
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        let r = self.rank();
        if self.b.cols() != r || self.c.cols() != r {
            return Err(Error::shape(format!(
                "factor ranks differ: {}, {}, {}",
                r,
                self.b.cols(),
                self.c.cols()
            )));
        }
        let (ci, co, kk) = (self.a.rows(), self.b.rows(), self.c.rows());
        let mut out = Tensor::zeros(vec![ci, co, kk])?;
        let data = out.data_mut();
        for i in 0..ci {
            for o in 0..co {
                let base = (i * co + o) * kk;
                for t in 0..r {
                    let ab = self.a[(i, t)] * self.b[(o, t)];
                    if ab == 0.0 {
                        continue;
                    }
                    for j in 0..kk {
                        data[base + j] += ab * self.c[(j, t)];
                    }
                }
            }
        }
        Ok(out)
    }
}

impl ShiftLayerFactors {
    pub fn window(&self) -> usize {
        self.kernel_extent * self.kernel_extent
    }

    pub fn param_count(&self) -> usize {
        (self.in_channels + self.out_channels) * self.terms.len()
    }

    /// Entry PW weights, `terms × ci`.
    pub fn entry_weights(&self) -> Matrix {
        Matrix::from_fn(self.terms.len(), self.in_channels, |t, i| {
            self.terms[t].v[i]
        })
    }

    /// Exit PW weights, `co × terms`.
    pub fn exit_weights(&self) -> Matrix {
        Matrix::from_fn(self.out_channels, self.terms.len(), |o, t| {
            self.terms[t].u[o]
        })
    }

    pub fn shifts(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.shift).collect()
    }

    /// Builds factors from PW weight matrices and a per-channel shift list.
    pub fn from_weights(
        entry: &Matrix,
        shifts: &[usize],
        exit: &Matrix,
        kernel_extent: usize,
    ) -> Result<Self> {
        let m = shifts.len();
        if entry.rows() != m || exit.cols() != m {
            return Err(Error::shape(format!(
                "entry {:?} and exit {:?} disagree with {m} shifts",
                entry.shape(),
                exit.shape()
            )));
        }
        let terms = shifts
            .iter()
            .enumerate()
            .map(|(t, &shift)| ShiftTerm {
                u: exit.column(t),
                v: entry.row(t).to_vec(),
                shift,
            })
            .collect();
        let f = ShiftLayerFactors {
            terms,
            in_channels: entry.cols(),
            out_channels: exit.rows(),
            kernel_extent,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let kk = self.window();
        for (n, t) in self.terms.iter().enumerate() {
            if t.shift >= kk {
                return Err(Error::IndexOutOfRange {
                    index: t.shift,
                    extent: kk,
                });
            }
            if t.u.len() != self.out_channels || t.v.len() != self.in_channels {
                return Err(Error::shape(format!(
                    "term {n} has |u|={} |v|={}, expected {} and {}",
                    t.u.len(),
                    t.v.len(),
                    self.out_channels,
                    self.in_channels
                )));
            }
        }
        Ok(())
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        self.validate()?;
        let kk = self.window();
        let mut out = Tensor::zeros(vec![self.in_channels, self.out_channels, kk])?;
        for t in &self.terms {
            for (i, &vi) in t.v.iter().enumerate() {
                for (o, &uo) in t.u.iter().enumerate() {
                    let idx = [i, o, t.shift];
                    out.set(&idx, out.get(&idx) + vi * uo);
                }
            }
        }
        Ok(out)
    }
}

/// Any of the four factor forms.
#[derive(Debug, Clone, PartialEq)]
pub enum Factors {
    Dp(DpFactors),
    Pd(PdFactors),
    Cpd(CpdFactors),
    Shift(ShiftLayerFactors),
}

impl Factors {
    pub fn scheme(&self) -> &'static str {
        match self {
            Factors::Dp(_) => "dp",
            Factors::Pd(_) => "pd",
            Factors::Cpd(_) => "pdp",
            Factors::Shift(_) => "shift",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Factors::Dp(f) => f.param_count(),
            Factors::Pd(f) => f.param_count(),
            Factors::Cpd(f) => f.param_count(),
            Factors::Shift(f) => f.param_count(),
        }
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        match self {
            Factors::Dp(f) => f.reconstruct(),
            Factors::Pd(f) => f.reconstruct(),
            Factors::Cpd(f) => f.reconstruct(),
            Factors::Shift(f) => f.reconstruct(),
        }
    }

    /// `[ci, co, k]` of the dense kernel these factors describe.
    pub fn kernel_dims(&self) -> Result<[usize; 3]> {
        let (ci, co, kk) = match self {
            Factors::Dp(f) => (f.in_channels(), f.out_channels(), f.window()),
            Factors::Pd(f) => (f.in_channels(), f.out_channels(), f.window()),
            Factors::Cpd(f) => (f.a.rows(), f.b.rows(), f.c.rows()),
            Factors::Shift(f) => return Ok([f.in_channels, f.out_channels, f.kernel_extent]),
        };
        Ok([ci, co, spatial_extent(kk)?])
    }

    /// Number of rank-1 terms (CPD rank or shift budget), if the form has one.
    pub fn rank(&self) -> Option<usize> {
        match self {
            Factors::Cpd(f) => Some(f.rank()),
            Factors::Shift(f) => Some(f.terms.len()),
            _ => None,
        }
    }
}

pub(crate) fn require_3way(g: &Tensor) -> Result<[usize; 3]> {
    g.dims3()
}
