use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{search, HalfBallSample, SymmetryOptions};
use crate::error::{Error, Result};
use crate::extension::HalfField;
use crate::fields::Ball;
use crate::scalar::Real;

/// Scales `2^{-j}` in `[r, 1/2]`, largest first.
///
/// The ladder is global rather than anchored at `r`, so the schedule for a
/// smaller `r` always contains the schedule for a larger one.
pub fn dyadic_schedule<T: Real>(r: T) -> Result<Vec<T>> {
    if !(r > T::zero()) {
        return Err(Error::Precondition(format!("scale must be positive, got {r}")));
    }
    let mut s = T::lit(0.5);
    let mut out = Vec::new();
    while s >= r {
        out.push(s);
        s *= T::lit(0.5);
    }
    Ok(out)
}

/// A node of a quantitative stratum with its witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumNode<T> {
    /// Flat index into the half-field's boundary grid.
    pub node: usize,
    pub coords: Vec<T>,
    /// Scale at which the smallest defect was found.
    pub witness_scale: T,
    /// Smallest `(k+1)`-symmetry defect over the schedule; exceeds `ε`.
    pub defect: T,
}

/// `S^k_{ε,r}`: nodes that are not `(k+1, ε)`-symmetric at any scale of the
/// schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum<T> {
    pub k: usize,
    pub eps: T,
    pub r: T,
    pub schedule: Vec<T>,
    pub nodes: Vec<StratumNode<T>>,
    /// Number of candidate nodes examined.
    pub examined: usize,
}

impl<T: Real> Stratum<T> {
    pub fn node_set(&self) -> std::collections::BTreeSet<usize> {
        self.nodes.iter().map(|s| s.node).collect()
    }
}

/// Which boundary nodes a stratum examines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumOptions<T> {
    /// Only nodes in this ball (all nodes whose largest half-ball fits when `None`).
    pub window: Option<Ball<T>>,
    /// Examine every `stride`-th node along each axis, counted from the node
    /// nearest the window centre.
    pub stride: usize,
    pub symmetry: SymmetryOptions,
}

impl<T: Real> Default for StratumOptions<T> {
    fn default() -> Self {
        Self { window: None, stride: 1, symmetry: SymmetryOptions::default() }
    }
}

/// Quantitative stratum over the boundary nodes of `ue`.
///
/// A node is kept iff for every scale `s` of the schedule the defect
/// `min_{j ≥ k+1} search_j(x, s)` exceeds `ε`. The subspace search visits the
/// same frames for every `ε` and only stops early once the answer is known,
/// so strata are exactly nested in `k`, `ε`, and `r`.
pub fn quantitative_stratum<T: Real>(
    ue: &HalfField<T>,
    k: usize,
    eps: T,
    r: T,
    schedule: Option<&[T]>,
    opts: &StratumOptions<T>,
) -> Result<Stratum<T>> {
    let b = &ue.spec.boundary;
    let n = b.n;
    if k >= n {
        return Err(Error::Precondition(format!("stratum index k = {k} must be below n = {n}")));
    }
    if opts.stride == 0 {
        return Err(Error::Precondition("stride must be positive".into()));
    }
    let schedule: Vec<T> = match schedule {
        Some(s) => s.to_vec(),
        None => dyadic_schedule(r)?,
    };
    if schedule.is_empty() || schedule.iter().any(|&s| s < r) {
        return Err(Error::Precondition("schedule must be nonempty and lie in [r, 1)".into()));
    }
    let s_max = schedule.iter().copied().fold(T::zero(), T::max);
    let lo = b.cell_lo();
    let hi = b.cell_hi();
    let z_top = ue.spec.z_edges()[ue.spec.levels()];
    if z_top < s_max {
        return Err(Error::Precondition(format!("half-grid height {z_top} below the largest scale {s_max}")));
    }
    // the strided lattice passes through the node nearest the window centre
    let anchor = match &opts.window {
        Some(w) => b.nearest(&w.center),
        None => vec![0; n],
    };
    let candidates: Vec<usize> = (0..b.len())
        .filter(|&i| {
            let idx = b.multi(i);
            if idx.iter().zip(&anchor).any(|(&v, &a)| (v as isize - a as isize).rem_euclid(opts.stride as isize) != 0) {
                return false;
            }
            let x = b.coord(&idx);
            let fits = (0..n).all(|a| x[a] - s_max >= lo[a] && x[a] + s_max <= hi[a]);
            fits && opts.window.as_ref().is_none_or(|w| w.contains(&x))
        })
        .collect();
    let examined = candidates.len();
    let flagged: Vec<Option<StratumNode<T>>> = candidates
        .par_iter()
        .map(|&i| -> Result<Option<StratumNode<T>>> {
            let x = b.coord_flat(i);
            let mut best: Option<(T, T)> = None;
            for &s in &schedule {
                let sample = HalfBallSample::new(ue, &x, s)?;
                let bins = opts.symmetry.bins.unwrap_or(sample.default_bins).max(1);
                for j in k + 1..=n {
                    let (v, _) = search(ue, &sample, j, bins, &opts.symmetry, Some(eps))?;
                    if v <= eps {
                        return Ok(None);
                    }
                    if best.is_none_or(|(bv, _)| v < bv) {
                        best = Some((v, s));
                    }
                }
            }
            let (defect, witness_scale) = best.expect("nonempty schedule");
            Ok(Some(StratumNode { node: i, coords: x, witness_scale, defect }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Stratum { k, eps, r, schedule, nodes: flagged.into_iter().flatten().collect(), examined })
}
