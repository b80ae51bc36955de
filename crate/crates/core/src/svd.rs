//! Thin SVD by one-sided Jacobi rotations.
//!
//! Output is deterministic: singular values are sorted descending (stable on
//! ties) and every left singular vector is signed so that its
//! largest-magnitude entry is positive, ties going to the lowest index. The
//! matching row of `vt` is flipped along with it.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × p`, orthonormal columns.
    pub u: Matrix,
    /// Length `p`, non-negative, descending.
    pub s: Vec<f64>,
    /// `p × n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    /// Rank-`p'` reconstruction `u[:, :p'] · diag(s[:p']) · vt[:p', :]`.
    pub fn truncated(&self, keep: usize) -> Matrix {
        let keep = keep.min(self.s.len());
        let (m, n) = (self.u.rows(), self.vt.cols());
        let mut out = Matrix::zeros(m, n);
        for t in 0..keep {
            let s = self.s[t];
            for i in 0..m {
                let us = self.u[(i, t)] * s;
                for j in 0..n {
                    out[(i, j)] += us * self.vt[(t, j)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.truncated(self.s.len())
    }

    pub fn left_vector(&self, t: usize) -> Vec<f64> {
        self.u.column(t)
    }

    pub fn right_vector(&self, t: usize) -> Vec<f64> {
        self.vt.row(t).to_vec()
    }

    /// Number of singular values above `max(m, n) · ε · s[0]`.
    pub fn numerical_rank(&self) -> usize {
        let Some(&top) = self.s.first() else {
            return 0;
        };
        if top == 0.0 {
            return 0;
        }
        let tol = self.u.rows().max(self.vt.cols()) as f64 * f64::EPSILON * top;
        self.s.iter().filter(|&&s| s > tol).count()
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::Numeric("svd input has non-finite entries".into()));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        // Mᵀ = U S Vᵀ  ⇒  M = V S Uᵀ
        let mut out = SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        };
        fix_signs(&mut out);
        Ok(out)
    }
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
fn jacobi_tall(m: &Matrix) -> Result<SvdResult> {
    let (rows, n) = m.shape();
    // Work column-major for cheap column access.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    // A computed dot product of length `rows` carries rounding of order
    // `rows · ε`; demanding more than that can rotate forever.
    let tol = rows as f64 * f64::EPSILON;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "jacobi svd did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let top = norms.iter().cloned().fold(0.0, f64::max);
    let tiny = rows.max(n) as f64 * f64::EPSILON * top;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut vt_rows = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        if sigma > tiny && sigma > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / sigma).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            deficient.push(slot);
        }
        s.push(sigma);
        vt_rows.push(v[j].clone());
    }
    complete_basis(&mut u_cols, &deficient);

    let mut out = SvdResult {
        u: Matrix::from_columns(rows, &u_cols)?,
        s,
        vt: Matrix::from_rows(n, &vt_rows)?,
    };
    fix_signs(&mut out);
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(vecs: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = vecs.split_at_mut(q);
    let (vp, vq) = (&mut head[p], &mut tail[0]);
    for (a, b) in vp.iter_mut().zip(vq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Replaces the columns listed in `slots` with unit vectors orthogonal to
/// every other column, drawn from the standard basis by Gram-Schmidt.
fn complete_basis(cols: &mut [Vec<f64>], slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let rows = cols[0].len();
    let mut filled: Vec<bool> = (0..cols.len()).map(|j| !slots.contains(&j)).collect();
    for &slot in slots {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..rows {
            let mut cand = vec![0.0; rows];
            cand[e] = 1.0;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if filled[j] {
                        let proj = dot(&cand, c);
                        for (x, y) in cand.iter_mut().zip(c) {
                            *x -= proj * y;
                        }
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, cand));
            }
        }
        if let Some((norm, cand)) = best {
            cols[slot] = cand.iter().map(|x| x / norm).collect();
        }
        filled[slot] = true;
    }
}

fn fix_signs(svd: &mut SvdResult) {
    let (rows, p) = (svd.u.rows(), svd.u.cols());
    for t in 0..p {
        let mut pivot = 0;
        for i in 1..rows {
            if svd.u[(i, t)].abs() > svd.u[(pivot, t)].abs() {
                pivot = i;
            }
        }
        if svd.u[(pivot, t)] < 0.0 {
            for i in 0..rows {
                svd.u[(i, t)] = -svd.u[(i, t)];
            }
            for j in 0..svd.vt.cols() {
                svd.vt[(t, j)] = -svd.vt[(t, j)];
            }
        }
    }
}
