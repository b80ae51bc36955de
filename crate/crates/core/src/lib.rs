//! Kernel tensor views of convolution layers.
//!
//! A `[ci, co, k, k]` convolution kernel reshaped to `[ci, co, k²]` can be
//! approximated slice by slice or term by term, and each approximation is a
//! stack of cheap layers:
//!
//! | view                       | factors               | layers            |
//! |----------------------------|-----------------------|-------------------|
//! | frontal slices, rank 1     | [`DpFactors`]         | DW → PW           |
//! | horizontal slices, rank 1  | [`PdFactors`]         | PW → DW           |
//! | CP decomposition, rank `r` | [`CpdFactors`]        | PW → DW → PW      |
//! | lateral slices, one-hot    | [`ShiftLayerFactors`] | PW → shift → PW   |
//!
//! [`convref`] runs each stack against a direct convolution, [`prune`]
//! shrinks PW–shift–PW modules, and [`accounting`] counts parameters.

pub mod accounting;
pub mod convref;
pub mod decompose;
pub mod error;
pub mod kt31;
pub mod matrix;
pub mod prune;
pub mod store;
pub mod svd;
pub mod tensor;

pub use decompose::{
    cpd_als, dp_decompose, pd_decompose, shift_extract, AlsOptions, CpdFactors, CpdFit, DpFactors,
    Factors, PdFactors, ShiftLayerFactors, ShiftTerm,
};
pub use error::{Error, Result};
pub use matrix::{khatri_rao, Matrix};
pub use svd::{svd, SvdResult};
pub use tensor::{Mode, SliceAxis, Tensor};
