use crate::error::Result;
use crate::matrix::Matrix;
use crate::svd::svd;
use crate::tensor::{SliceAxis, Tensor};

use super::{require_3way, DpFactors, PdFactors};

/// Top singular triplet with `sqrt(s₁)` folded into each side.
fn balanced_rank_one(m: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = svd(m)?;
    let root = d.s[0].sqrt();
    let left = d.left_vector(0).iter().map(|x| x * root).collect();
    let right = d.right_vector(0).iter().map(|x| x * root).collect();
    Ok((left, right))
}

/// Rank-1 approximation of every frontal (`ci`-fixed, `co × k²`) slice.
pub fn dp_decompose(g: &Tensor) -> Result<DpFactors> {
    let [ci, co, kk] = require_3way(g)?;
    let mut spatial = Vec::with_capacity(ci);
    let mut mix_cols = Vec::with_capacity(ci);
    for i in 0..ci {
        let (left, right) = balanced_rank_one(&g.slice(SliceAxis::Input, i)?)?;
        mix_cols.push(left);
        spatial.push(right);
    }
    Ok(DpFactors {
        spatial: Matrix::from_rows(kk, &spatial)?,
        mix: Matrix::from_columns(co, &mix_cols)?,
    })
}

/// Rank-1 approximation of every horizontal (`co`-fixed, `ci × k²`) slice.
pub fn pd_decompose(g: &Tensor) -> Result<PdFactors> {
    let [ci, co, kk] = require_3way(g)?;
    let mut spatial = Vec::with_capacity(co);
    let mut mix_rows = Vec::with_capacity(co);
    for o in 0..co {
        let (left, right) = balanced_rank_one(&g.slice(SliceAxis::Output, o)?)?;
        mix_rows.push(left);
        spatial.push(right);
    }
    Ok(PdFactors {
        mix: Matrix::from_rows(ci, &mix_rows)?,
        spatial: Matrix::from_rows(kk, &spatial)?,
    })
}
