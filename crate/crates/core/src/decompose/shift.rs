use crate::error::{Error, Result};
use crate::svd::svd;
use crate::tensor::{spatial_extent, SliceAxis, Tensor};

use super::{require_3way, ShiftLayerFactors, ShiftTerm};

/// Pools the singular triplets of every lateral slice and keeps the `budget`
/// largest as rank-1 terms on one-hot spatial vectors.
///
/// Each lateral slice `M_j` (`ci × co`) is decomposed as `M_jᵀ = Σ s·u·vᵀ`
/// so that `u` lives on output channels and `v` on input channels. Selection
/// is global across slices; ties go to the lower slice index, then the lower
/// within-slice rank. Terms come out in selection order. A budget larger than
/// the pool keeps the whole pool, which reconstructs `g` exactly.
pub fn shift_extract(g: &Tensor, budget: usize) -> Result<ShiftLayerFactors> {
    let [ci, co, kk] = require_3way(g)?;
    if budget < 1 {
        return Err(Error::invalid("shift budget must be at least 1"));
    }
    let k = spatial_extent(kk)?;

    let mut pool = Vec::new();
    for j in 0..kk {
        let d = svd(&g.slice(SliceAxis::Spatial, j)?.transpose())?;
        for (t, &s) in d.s.iter().enumerate() {
            let root = s.sqrt();
            pool.push((
                s,
                ShiftTerm {
                    u: d.left_vector(t).iter().map(|x| x * root).collect(),
                    v: d.right_vector(t).iter().map(|x| x * root).collect(),
                    shift: j,
                },
            ));
        }
    }
    // Stable sort keeps (slice, rank) order among equal values.
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(budget);

    Ok(ShiftLayerFactors {
        terms: pool.into_iter().map(|(_, term)| term).collect(),
        in_channels: ci,
        out_channels: co,
        kernel_extent: k,
    })
}
