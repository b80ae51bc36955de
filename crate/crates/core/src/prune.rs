//! Channel pruning for PW–shift–PW modules.
//!
//! Every intermediate channel `t` of a shift module contributes the rank-1
//! term `w_out[:, t] · w_in[t, :]` at spatial position `shifts[t]`. Terms that
//! share a shift are summed into one `co × ci` matrix per shift group; the
//! SVD of each group matrix yields principal filter pairs, and the dominant
//! ones become the channels of the pruned module.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::convref::{shift_forward, FeatureMap};
use crate::decompose::ShiftLayerFactors;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::svd::{svd, SvdResult};

pub type Rational = Ratio<u64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftModule {
    /// Entry PW weights, `m × ci`.
    pub w_in: Matrix,
    /// Shift index per intermediate channel, each in `[0, k²)`.
    pub shifts: Vec<usize>,
    /// Exit PW weights, `co × m`.
    pub w_out: Matrix,
    /// Shift kernel extent.
    pub k: usize,
}

impl ShiftModule {
    pub fn new(w_in: Matrix, shifts: Vec<usize>, w_out: Matrix, k: usize) -> Result<Self> {
        let m = shifts.len();
        if m == 0 {
            return Err(Error::shape("shift module has no intermediate channels"));
        }
        if w_in.rows() != m || w_out.cols() != m {
            return Err(Error::shape(format!(
                "w_in {:?} and w_out {:?} disagree with {m} shifts",
                w_in.shape(),
                w_out.shape()
            )));
        }
        if k == 0 {
            return Err(Error::shape("kernel extent must be positive"));
        }
        if let Some(&bad) = shifts.iter().find(|&&s| s >= k * k) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                extent: k * k,
            });
        }
        Ok(ShiftModule {
            w_in,
            shifts,
            w_out,
            k,
        })
    }

    pub fn channels(&self) -> usize {
        self.shifts.len()
    }

    pub fn in_channels(&self) -> usize {
        self.w_in.cols()
    }

    pub fn out_channels(&self) -> usize {
        self.w_out.rows()
    }

    pub fn groups(&self) -> usize {
        self.k * self.k
    }

    /// Expansion ratio `m / co`.
    pub fn epsilon(&self) -> Rational {
        Rational::new(self.channels() as u64, self.out_channels() as u64)
    }

    pub fn param_count(&self) -> usize {
        (self.in_channels() + self.out_channels()) * self.channels()
    }

    pub fn to_factors(&self) -> ShiftLayerFactors {
        ShiftLayerFactors::from_weights(&self.w_in, &self.shifts, &self.w_out, self.k)
            .expect("module invariants match factor invariants")
    }

    pub fn from_factors(f: &ShiftLayerFactors) -> Result<Self> {
        ShiftModule::new(
            f.entry_weights(),
            f.shifts(),
            f.exit_weights(),
            f.kernel_extent,
        )
    }

    /// PW → shift → PW with no nonlinearity.
    pub fn forward(&self, x: &FeatureMap, stride: usize) -> Result<FeatureMap> {
        shift_forward(x, &self.to_factors(), stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Same number of principal filters in every shift group.
    Even,
    /// Global top singular values across all groups.
    Uneven,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Even => "even",
            Strategy::Uneven => "uneven",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Strategy::Even),
            "uneven" => Ok(Strategy::Uneven),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneSpec {
    /// `ε_new / ε_old`, in `(0, 1]`.
    pub phi: Rational,
    pub strategy: Strategy,
}

impl PruneSpec {
    pub fn new(phi: Rational, strategy: Strategy) -> Result<Self> {
        if *phi.numer() == 0 || phi > Rational::from_integer(1) {
            return Err(Error::invalid(format!(
                "pruning ratio {phi} outside (0, 1]"
            )));
        }
        Ok(PruneSpec { phi, strategy })
    }

    /// `round(φ · m)`, halves rounded up.
    pub fn retained_channels(&self, m: usize) -> usize {
        retained_channels(self.phi, m)
    }
}

pub(crate) fn retained_channels(phi: Rational, m: usize) -> usize {
    let (p, q) = (*phi.numer() as u128, *phi.denom() as u128);
    ((2 * p * m as u128 + q) / (2 * q)) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub strategy: Strategy,
    pub phi: Rational,
    pub channels_before: usize,
    pub channels_after: usize,
    /// Channels kept per shift group, length `k²`. Sums to `channels_after`.
    pub kept: Vec<usize>,
    /// Singular values behind the kept channels, per group, descending.
    pub retained: Vec<Vec<f64>>,
    /// Per-group retained singular-value sum normalized to 1 over the layer.
    pub importance: Vec<f64>,
}

impl PruneReport {
    pub fn group_energy(&self, g: usize) -> f64 {
        self.retained[g].iter().fold(0.0, |acc, s| acc + s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "strategy={}", self.strategy.name());
        let _ = writeln!(out, "phi={}", self.phi);
        let _ = writeln!(out, "m={}", self.channels_before);
        let _ = writeln!(out, "m_new={}", self.channels_after);
        for (g, kept) in self.kept.iter().enumerate() {
            let _ = writeln!(out, "group={g} kept={kept} energy={}", self.group_energy(g));
        }
        for (g, imp) in self.importance.iter().enumerate() {
            let _ = writeln!(out, "importance={g}:{imp}");
        }
        out
    }
}

/// Sum of all retained singular values.
pub fn retained_energy(report: &PruneReport) -> f64 {
    (0..report.retained.len()).fold(0.0, |acc, g| acc + report.group_energy(g))
}

/// Sums the rank-1 terms of each shift group: `M_g = Σ_{t: shifts[t] = g}
/// w_out[:, t] · w_in[t, :]`. Empty groups give zero matrices.
pub fn group_sum(module: &ShiftModule) -> Vec<Matrix> {
    let (ci, co) = (module.in_channels(), module.out_channels());
    let mut groups = vec![Matrix::zeros(co, ci); module.groups()];
    for (t, &g) in module.shifts.iter().enumerate() {
        let v = module.w_in.row(t);
        let m = &mut groups[g];
        for o in 0..co {
            let u = module.w_out[(o, t)];
            for (i, &vi) in v.iter().enumerate() {
                m[(o, i)] += u * vi;
            }
        }
    }
    groups
}

/// Replaces the module's intermediate channels with the dominant principal
/// filter pairs of its shift-group matrices.
///
/// `m_new = round(φ·m)`. Even: each group first keeps
/// `min(⌊m_new / k²⌋, rank(M_g))` triplets; remaining slots go one per group
/// per round to the groups whose best unkept singular value is largest.
/// Uneven: the global top `m_new` singular values. Ties resolve by group
/// index, then within-group rank. Only numerically nonzero triplets are
/// eligible; if they run out, the remainder becomes zero-weight channels on
/// the centre shift.
pub fn prune(module: &ShiftModule, spec: &PruneSpec) -> Result<(ShiftModule, PruneReport)> {
    let m = module.channels();
    let m_new = spec.retained_channels(m);
    if m_new < 1 {
        return Err(Error::invalid(format!(
            "pruning ratio {} leaves no channels out of {m}",
            spec.phi
        )));
    }
    let groups = group_sum(module);
    let decomps = groups.iter().map(svd).collect::<Result<Vec<_>>>()?;
    let ranks: Vec<usize> = decomps.iter().map(SvdResult::numerical_rank).collect();

    let mut kept = match spec.strategy {
        Strategy::Even => select_even(&decomps, &ranks, m_new),
        Strategy::Uneven => select_uneven(&decomps, &ranks, m_new),
    };
    let padding = m_new - kept.iter().sum::<usize>();
    let center = (module.groups() - 1) / 2;

    let (ci, co) = (module.in_channels(), module.out_channels());
    let mut rows_in = Vec::with_capacity(m_new);
    let mut cols_out = Vec::with_capacity(m_new);
    let mut shifts = Vec::with_capacity(m_new);
    let mut retained = Vec::with_capacity(kept.len());
    for (g, d) in decomps.iter().enumerate() {
        let mut values = Vec::with_capacity(kept[g]);
        for t in 0..kept[g] {
            let s = d.s[t];
            let root = s.sqrt();
            rows_in.push(
                d.right_vector(t)
                    .iter()
                    .map(|x| x * root)
                    .collect::<Vec<_>>(),
            );
            cols_out.push(
                d.left_vector(t)
                    .iter()
                    .map(|x| x * root)
                    .collect::<Vec<_>>(),
            );
            shifts.push(g);
            values.push(s);
        }
        if g == center {
            for _ in 0..padding {
                rows_in.push(vec![0.0; ci]);
                cols_out.push(vec![0.0; co]);
                shifts.push(g);
            }
        }
        retained.push(values);
    }
    kept[center] += padding;

    let pruned = ShiftModule::new(
        Matrix::from_rows(ci, &rows_in)?,
        shifts,
        Matrix::from_columns(co, &cols_out)?,
        module.k,
    )?;

    let energies: Vec<f64> = retained
        .iter()
        .map(|v| v.iter().fold(0.0, |acc, s| acc + s))
        .collect();
    let total = energies.iter().fold(0.0, |acc, e| acc + e);
    let importance = if total > 0.0 {
        energies.iter().map(|e| e / total).collect()
    } else {
        vec![1.0 / module.groups() as f64; module.groups()]
    };

    let report = PruneReport {
        strategy: spec.strategy,
        phi: spec.phi,
        channels_before: m,
        channels_after: m_new,
        kept,
        retained,
        importance,
    };
    Ok((pruned, report))
}

fn select_even(decomps: &[SvdResult], ranks: &[usize], m_new: usize) -> Vec<usize> {
    let per_group = m_new / decomps.len();
    let mut kept: Vec<usize> = ranks.iter().map(|&r| r.min(per_group)).collect();
    let mut slots = m_new - kept.iter().sum::<usize>();
    while slots > 0 {
        let mut candidates: Vec<usize> =
            (0..decomps.len()).filter(|&g| kept[g] < ranks[g]).collect();
        if candidates.is_empty() {
            break;
        }
        // Stable: equal values stay in group order.
        candidates.sort_by(|&a, &b| decomps[b].s[kept[b]].total_cmp(&decomps[a].s[kept[a]]));
        for g in candidates.into_iter().take(slots) {
            kept[g] += 1;
            slots -= 1;
        }
    }
    kept
}

fn select_uneven(decomps: &[SvdResult], ranks: &[usize], m_new: usize) -> Vec<usize> {
    let mut pool: Vec<(f64, usize)> = decomps
        .iter()
        .zip(ranks)
        .enumerate()
        .flat_map(|(g, (d, &r))| d.s[..r].iter().map(move |&s| (s, g)))
        .collect();
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept = vec![0; decomps.len()];
    for &(_, g) in pool.iter().take(m_new) {
        kept[g] += 1;
    }
    kept
}
