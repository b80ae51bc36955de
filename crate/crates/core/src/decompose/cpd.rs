use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{khatri_rao, solve_gram_right, Matrix};
use crate::tensor::{Mode, Tensor};

use super::{require_3way, CpdFactors};

/// Relative error below which a restart is considered solved.
const EXACT_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Stop once `|e_prev − e| ≤ tol · e_prev` between sweeps.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions {
            max_iters: 500,
            tol: 1e-10,
            seed: 0,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CpdFit {
    pub factors: CpdFactors,
    /// `‖g − reconstruct(factors)‖_F / ‖g‖_F` of the returned factors.
    pub rel_error: f64,
    /// Index of the restart that produced `factors`.
    pub best_restart: usize,
    /// Per restart: relative error at initialization and after every sweep.
    pub traces: Vec<Vec<f64>>,
}

/// Rank-`rank` CP decomposition by alternating least squares.
///
/// Each sweep solves for `a`, `b` and `c` in turn against the matching mode
/// unfolding and the Khatri-Rao product of the other two factors. Every
/// restart starts from factors drawn uniformly from `[-1, 1]` with a seed
/// derived from `opts.seed` and the restart index; the lowest-error restart
/// wins, earliest index on ties.
pub fn cpd_als(g: &Tensor, rank: usize, opts: &AlsOptions) -> Result<CpdFit> {
    let dims = require_3way(g)?;
    if rank < 1 {
        return Err(Error::invalid("cpd rank must be at least 1"));
    }
    if opts.restarts < 1 {
        return Err(Error::invalid("at least one restart is required"));
    }
    if !g.is_finite() {
        return Err(Error::Numeric("tensor has non-finite entries".into()));
    }

    let unfold = [
        g.matricize(Mode::One)?,
        g.matricize(Mode::Two)?,
        g.matricize(Mode::Three)?,
    ];
    let norm = g.frobenius_norm();

    let mut best: Option<(f64, usize, CpdFactors)> = None;
    let mut traces = Vec::with_capacity(opts.restarts);
    for restart in 0..opts.restarts {
        let seed = opts
            .seed
            .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (factors, trace) = run_restart(g, &unfold, dims, norm, rank, opts, seed)?;
        let err = *trace.last().expect("trace holds the initial error");
        traces.push(trace);
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, restart, factors));
        }
    }
    let (rel_error, best_restart, factors) = best.expect("restarts >= 1");
    Ok(CpdFit {
        factors,
        rel_error,
        best_restart,
        traces,
    })
}

fn run_restart(
    g: &Tensor,
    unfold: &[Matrix; 3],
    [ci, co, kk]: [usize; 3],
    norm: f64,
    rank: usize,
    opts: &AlsOptions,
    seed: u64,
) -> Result<(CpdFactors, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform =
        |rows: usize| Matrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..=1.0));
    let mut f = CpdFactors {
        a: uniform(ci),
        b: uniform(co),
        c: uniform(kk),
    };

    let rel_error = |f: &CpdFactors| -> Result<f64> {
        let abs = g.distance(&f.reconstruct()?)?;
        Ok(if norm > 0.0 { abs / norm } else { abs })
    };

    let mut trace = vec![rel_error(&f)?];
    for _ in 0..opts.max_iters {
        let (gb, gc) = (f.b.gram(), f.c.gram());
        f.a = solve_gram_right(
            &unfold[0].matmul(&khatri_rao(&f.c, &f.b)?)?,
            &gc.hadamard(&gb)?,
        )?;
        let ga_new = f.a.gram();
        f.b = solve_gram_right(
            &unfold[1].matmul(&khatri_rao(&f.c, &f.a)?)?,
            &gc.hadamard(&ga_new)?,
        )?;
        let gb_new = f.b.gram();
        f.c = solve_gram_right(
            &unfold[2].matmul(&khatri_rao(&f.b, &f.a)?)?,
            &gb_new.hadamard(&ga_new)?,
        )?;
        balance_columns(&mut f);

        let prev = *trace.last().unwrap();
        let err = rel_error(&f)?;
        trace.push(err);
        if err <= EXACT_FLOOR || (prev - err).abs() <= opts.tol * prev {
            break;
        }
    }
    Ok((f, trace))
}

/// Rescales each rank-1 term so its three factor columns share one norm.
/// The reconstruction is unchanged.
fn balance_columns(f: &mut CpdFactors) {
    for t in 0..f.a.cols() {
        let norms =
            [&f.a, &f.b, &f.c].map(|m| m.column(t).iter().map(|x| x * x).sum::<f64>().sqrt());
        let weight = norms[0] * norms[1] * norms[2];
        if weight == 0.0 || !weight.is_finite() {
            continue;
        }
        let target = weight.cbrt();
        for (m, n) in [&mut f.a, &mut f.b, &mut f.c].into_iter().zip(norms) {
            let scale = target / n;
            for i in 0..m.rows() {
                m[(i, t)] *= scale;
            }
        }
    }
}
