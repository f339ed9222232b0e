use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{theta_density, HalfField};
use crate::fields::{gradient_norms, AnalyticKind, Ball, Exterior, GridSpec, VectorField};
use crate::linalg::dist2_to_affine;
use crate::scalar::{dist2, Real};

/// Node offsets within distance `reach`, sorted by distance (ties in
/// lexicographic offset order).
fn sorted_offsets<T: Real>(spec: &GridSpec<T>, reach: T) -> Vec<(Vec<isize>, T)> {
    let n = spec.n;
    let m = (reach / spec.h).floor().to_isize().unwrap_or(0);
    let side = (2 * m + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::new();
    for f in 0..total {
        let mut rest = f;
        let mut o = vec![0isize; n];
        for a in (0..n).rev() {
            o[a] = (rest % side) as isize - m;
            rest /= side;
        }
        let d2: isize = o.iter().map(|v| v * v).sum();
        let dist = T::lit((d2 as f64).sqrt()) * spec.h;
        if dist <= reach {
            out.push((o, dist));
        }
    }
    out.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
    out
}

/// Largest `r ≤ 1` allowed by the exterior part of `D_r(x)`.
fn exterior_limit<T: Real>(u: &VectorField<T>, x: &[T]) -> Result<T> {
    let lo = u.spec.node_lo();
    let hi = u.spec.node_hi();
    // distance from x to the complement of the node box
    let inside = (0..u.spec.n).map(|a| (x[a] - lo[a]).min(hi[a] - x[a])).fold(T::infinity(), T::min);
    let e = inside.max(T::zero());
    match &u.exterior {
        Exterior::Constant(_) => Ok(T::infinity()),
        Exterior::Analytic(map) => match map.kind {
            AnalyticKind::Vortex => {
                let p = map.singular_point().expect("vortex has a singular point");
                let dist = dist2(x, &p).sqrt();
                let c = T::of(u.spec.n - 1).sqrt();
                // r·c/(|x−p| − r) ≤ 1 on the exterior part
                Ok(e.max(dist / (T::one() + c)))
            }
            AnalyticKind::Wave => Ok(e.max(T::one() / map.scale.abs())),
        },
        Exterior::None => {
            if e >= T::one() {
                Ok(T::infinity())
            } else {
                Err(Error::MissingExterior(format!(
                    "D_1({x:?}) leaves the grid and there is no exterior data"
                )))
            }
        }
    }
}

/// Walk `(distance, |∇u|)` pairs in increasing distance and return
/// `sup{r ≤ 1 : r · max_{dist ≤ r} |∇u| ≤ 1}`.
fn scale_from_sorted<T: Real, I: Iterator<Item = (T, Option<T>)>>(pairs: I) -> T {
    let mut pairs = pairs.peekable();
    let mut m = T::zero();
    while let Some((d, g)) = pairs.next() {
        if d > T::one() {
            return T::one();
        }
        if let Some(g) = g {
            m = m.max(g);
        }
        // only test at the end of a group of equal distances
        if pairs.peek().is_some_and(|(dn, _)| *dn == d) {
            continue;
        }
        if m == T::zero() {
            continue;
        }
        let next = pairs.peek().map_or(T::infinity(), |p| p.0);
        let lim = T::one() / m;
        if lim < d {
            return d.min(T::one());
        }
        if lim < next {
            return lim.min(T::one());
        }
    }
    T::one()
}

/// Regularity scale `r_u(x) = max{0 ≤ r ≤ 1 : r·sup_{D_r(x)} |∇u| ≤ 1}`.
///
/// The supremum runs over non-flagged nodes with finite-difference
/// gradients; where `D_r(x)` leaves the grid the exterior descriptor
/// supplies an analytic bound.
pub fn regularity_scale<T: Real>(u: &VectorField<T>, x: &[T]) -> Result<T> {
    if x.len() != u.spec.n {
        return Err(Error::Precondition("point dimension mismatch".into()));
    }
    let norms = gradient_norms(u);
    regularity_scale_with(u, &norms, x)
}

fn regularity_scale_with<T: Real>(u: &VectorField<T>, norms: &[T], x: &[T]) -> Result<T> {
    let ext = exterior_limit(u, x)?;
    let s = &u.spec;
    let mut pairs: Vec<(T, Option<T>)> = Vec::new();
    // bounding box of D_1(x) in node indices
    let mut ranges = Vec::with_capacity(s.n);
    for a in 0..s.n {
        let lo = ((x[a] - T::one() - s.origin[a]) / s.h).floor().max(T::zero());
        let hi = ((x[a] + T::one() - s.origin[a]) / s.h).ceil().min(T::of(s.counts[a] - 1));
        if hi < lo {
            return Ok(ext.min(T::one()));
        }
        ranges.push((lo.to_usize().unwrap_or(0), hi.to_usize().unwrap_or(0)));
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        let f = s.flat(&idx);
        let d = dist2(&s.coord(&idx), x).sqrt();
        if d <= T::one() {
            pairs.push((d, (!u.flags[f]).then_some(norms[f])));
        }
        for a in (0..s.n).rev() {
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                continue 'outer;
            }
            idx[a] = ranges[a].0;
        }
        break;
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    Ok(scale_from_sorted(pairs.into_iter()).min(ext))
}

/// `r_u` at every node inside `window`, returned as `(flat index, r_u)`.
pub fn regularity_scales<T: Real>(u: &VectorField<T>, window: &Ball<T>) -> Result<Vec<(usize, T)>> {
    let s = &u.spec;
    let norms = gradient_norms(u);
    let offsets = sorted_offsets(s, T::one());
    let nodes: Vec<usize> = (0..s.len()).filter(|&i| window.contains(&s.coord_flat(i))).collect();
    nodes
        .par_iter()
        .map(|&i| {
            let x = s.coord_flat(i);
            let ext = exterior_limit(u, &x)?;
            let idx = s.multi(i);
            let pairs = offsets.iter().filter_map(|(o, d)| {
                let mut j = Vec::with_capacity(s.n);
                for a in 0..s.n {
                    let v = idx[a] as isize + o[a];
                    if v < 0 || v >= s.counts[a] as isize {
                        return None;
                    }
                    j.push(v as usize);
                }
                let f = s.flat(&j);
                Some((*d, (!u.flags[f]).then_some(norms[f])))
            });
            Ok((i, scale_from_sorted(pairs).min(ext)))
        })
        .collect()
}

/// `Vol({x ∈ window : r_u(x) < r})`, counting nodes.
pub fn small_scale_volume<T: Real>(u: &VectorField<T>, r: T, window: &Ball<T>) -> Result<T> {
    let scales = regularity_scales(u, window)?;
    Ok(T::of(scales.iter().filter(|(_, s)| *s < r).count()) * u.spec.cell_volume())
}

/// `Vol(D_r(S) ∩ window)` for a node set `S` of `spec`, by counting nodes
/// within distance `r` of `S`.
pub fn tube_volume<T: Real>(spec: &GridSpec<T>, set: &[usize], r: T, window: &Ball<T>) -> Result<T> {
    if r < spec.h {
        return Err(Error::Resolution(format!("tube radius {r} below the grid spacing {}", spec.h)));
    }
    let offsets = sorted_offsets(spec, r);
    let mut marked = vec![false; spec.len()];
    for &i in set {
        if i >= spec.len() {
            return Err(Error::Precondition(format!("node {i} outside the grid")));
        }
        let idx = spec.multi(i);
        'off: for (o, _) in &offsets {
            let mut j = Vec::with_capacity(spec.n);
            for a in 0..spec.n {
                let v = idx[a] as isize + o[a];
                if v < 0 || v >= spec.counts[a] as isize {
                    continue 'off;
                }
                j.push(v as usize);
            }
            marked[spec.flat(&j)] = true;
        }
    }
    let count = (0..spec.len()).filter(|&i| marked[i] && window.contains(&spec.coord_flat(i))).count();
    Ok(T::of(count) * spec.cell_volume())
}

/// `Vol({x ∈ window : |∇u(x)| > 1/r})` over non-flagged nodes.
pub fn gradient_superlevel_volume<T: Real>(u: &VectorField<T>, r: T, window: &Ball<T>) -> Result<T> {
    if r < u.spec.h {
        return Err(Error::Resolution(format!("radius {r} below the grid spacing {}", u.spec.h)));
    }
    let norms = gradient_norms(u);
    let thr = T::one() / r;
    let count = (0..u.spec.len())
        .filter(|&i| !u.flags[i] && norms[i] > thr && window.contains(&u.spec.coord_flat(i)))
        .count();
    Ok(T::of(count) * u.spec.cell_volume())
}

/// Boundary nodes of `ue` where `Θ(u^e, B_r⁺(x)) > ε₁`: candidates for the
/// singular set by the contrapositive of ε-regularity. Nodes whose half-ball
/// does not fit in the half-grid are skipped.
pub fn singular_candidates<T: Real>(ue: &HalfField<T>, eps1: T, r: T) -> Result<Vec<usize>> {
    if !(eps1 > T::zero()) {
        return Err(Error::Precondition("ε₁ must be positive".into()));
    }
    let b = &ue.spec.boundary;
    let lo = b.cell_lo();
    let hi = b.cell_hi();
    let nodes: Vec<usize> = (0..b.len())
        .filter(|&i| {
            let x = b.coord_flat(i);
            (0..b.n).all(|a| x[a] - r >= lo[a] && x[a] + r <= hi[a])
        })
        .collect();
    let flags = nodes
        .par_iter()
        .map(|&i| Ok((i, theta_density(ue, &b.coord_flat(i), r)? > eps1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(flags.into_iter().filter(|f| f.1).map(|f| f.0).collect())
}

/// Outcome of the greedy effective-span test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSpan<T> {
    pub dim: usize,
    pub base: Vec<T>,
    /// Orthonormal directions of the spanned affine subspace.
    pub frame: Vec<Vec<T>>,
    /// Indices of `y₀, y₁, …` in the input.
    pub chosen: Vec<usize>,
}

/// Greedy effective span: starting from the first point, repeatedly add the
/// point farthest from the current affine span while that distance is at
/// least `2ρ`. Ties go to the lowest index.
pub fn effective_span<T: Real>(points: &[Vec<T>], rho: T) -> Result<EffectiveSpan<T>> {
    let first = points.first().ok_or_else(|| Error::Empty("no points".into()))?;
    if !(rho > T::zero()) {
        return Err(Error::Precondition("ρ must be positive".into()));
    }
    let n = first.len();
    let base = first.clone();
    let mut frame: Vec<Vec<T>> = Vec::new();
    let mut chosen = vec![0];
    let thr = T::lit(4.0) * rho * rho;
    while frame.len() < n {
        let mut best: Option<(usize, T)> = None;
        for (i, p) in points.iter().enumerate() {
            let d = dist2_to_affine(p, &base, &frame);
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
        let (i, d) = best.expect("nonempty");
        if d < thr {
            break;
        }
        let mut w: Vec<T> = points[i].iter().zip(&base).map(|(&a, &b)| a - b).collect();
        for q in &frame {
            let c: T = w.iter().zip(q).map(|(&a, &b)| a * b).sum();
            w.iter_mut().zip(q).for_each(|(x, &y)| *x -= c * y);
        }
        let nw = w.iter().map(|&v| v * v).sum::<T>().sqrt();
        w.iter_mut().for_each(|v| *v /= nw);
        frame.push(w);
        chosen.push(i);
    }
    Ok(EffectiveSpan { dim: frame.len(), base, frame, chosen })
}
