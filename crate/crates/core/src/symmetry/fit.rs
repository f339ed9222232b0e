//! Best boundary-k-symmetric approximants of an extension on a half-ball.
//!
//! A function on the upper half-space is boundary k-symmetric about
//! `𝐱 = (x, 0)` along a k-dimensional `V ⊂ ℝⁿ` when it is invariant under
//! dilations about `𝐱` and translations along `V`. Such a function only
//! depends on the link point `ω = (w, z)/|(w, z)|` of the upper half-sphere in
//! `V^⊥ × ℝ₊`, where `w` is the component of `y − x` orthogonal to `V`. The
//! L²-best approximant is therefore the weighted mean of `u^e` over each fibre
//! of `ω`, which is computed on bins of the stereographic coordinate
//! `q = ω_w / (1 + ω_z)` in the unit ball of `V^⊥`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{directional_energy_matrix, visit_shell, HalfField};
use crate::linalg::orthonormalize;
use crate::scalar::{dot, norm2, Real};

/// Tuning of the symmetry search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryOptions {
    /// Bins per link coordinate; `None` picks `2r/h` clamped to `[8, 64]`.
    pub bins: Option<usize>,
    /// Resolution of the coarse global search over subspaces (n ≤ 3).
    pub angle_grid: usize,
    /// Number of halvings of the rotation step in the local refinement.
    pub refine_steps: usize,
    /// First rotation step (radians).
    pub initial_rotation: f64,
}

impl Default for SymmetryOptions {
    fn default() -> Self {
        Self { bins: None, angle_grid: 12, refine_steps: 6, initial_rotation: 0.2 }
    }
}

/// Result of fitting a boundary k-symmetric function on `B_r⁺((x, 0))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryFit<T> {
    pub k: usize,
    pub center: Vec<T>,
    pub radius: T,
    /// Orthonormal basis of `V` (k vectors of ℝⁿ).
    pub frame: Vec<Vec<T>>,
    /// `⨍_{B_r⁺} |u^e − h|²`.
    pub defect: T,
    /// `defect` divided by the mean-square oscillation of `u^e` on the half-ball.
    pub normalized_defect: T,
    pub oscillation: T,
    /// Defect a perfectly symmetric field of the same gradient size would
    /// show from binning alone: `(Δq)²/12 · ⨍ J² |(w,z)|² |∇u^e|²` with `J`
    /// the stereographic stretch factor.
    pub floor: T,
    pub bins: usize,
    /// Dimension of the symmetry actually achieving `defect` (≥ `k`): a
    /// boundary-(k+1)-symmetric competitor is also boundary-k-symmetric.
    pub achieved_by: usize,
    /// Bin means, layout `[bin][component]`, bins row-major over the
    /// `n − achieved_by` link coordinates. Empty bins hold zeros.
    pub table: Vec<T>,
}

/// Cells of a half-ball with weights, relative coordinates, and values.
pub(crate) struct HalfBallSample<T> {
    pub n: usize,
    pub d: usize,
    pub center: Vec<T>,
    pub radius: T,
    pub rel: Vec<T>,
    pub weight: Vec<T>,
    pub values: Vec<T>,
    pub grad2: Vec<T>,
    pub cells: Vec<(usize, usize)>,
    pub total_weight: T,
    pub default_bins: usize,
}

impl<T: Real> HalfBallSample<T> {
    pub fn new(ue: &HalfField<T>, x: &[T], r: T) -> Result<Self> {
        let n = ue.spec.boundary.n;
        let d = ue.d;
        let mut s = Self {
            n,
            d,
            center: x.to_vec(),
            radius: r,
            rel: Vec::new(),
            weight: Vec::new(),
            values: Vec::new(),
            grad2: Vec::new(),
            cells: Vec::new(),
            total_weight: T::zero(),
            default_bins: (T::lit(2.0) * r / ue.spec.boundary.h).round().to_usize().unwrap_or(8).clamp(8, 64),
        };
        visit_shell(ue, x, T::zero(), r, |k, i, y, w| {
            s.rel.extend_from_slice(y);
            s.weight.push(w);
            s.values.extend_from_slice(ue.value(k, i));
            s.grad2.push(norm2(ue.gradient(k, i)));
            s.cells.push((k, i));
            s.total_weight += w;
        })?;
        if s.cells.is_empty() {
            return Err(Error::Resolution("half-ball contains no grid cells".into()));
        }
        Ok(s)
    }

    fn len(&self) -> usize {
        self.weight.len()
    }

    fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.d];
        for i in 0..self.len() {
            for c in 0..self.d {
                m[c] += self.weight[i] * self.values[i * self.d + c];
            }
        }
        m.iter_mut().for_each(|v| *v /= self.total_weight);
        m
    }

    pub fn oscillation(&self) -> T {
        let m = self.mean();
        let mut s = T::zero();
        for i in 0..self.len() {
            let v = &self.values[i * self.d..(i + 1) * self.d];
            s += self.weight[i] * v.iter().zip(&m).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
        }
        s / self.total_weight
    }

    /// Bin index of every cell for the link of `V^⊥ × ℝ₊` spanned by `perp`.
    fn bin_of(&self, perp: &[Vec<T>], bins: usize) -> (Vec<usize>, Vec<T>) {
        let m = perp.len();
        let n = self.n;
        let mut idx = Vec::with_capacity(self.len());
        let mut stretch = Vec::with_capacity(self.len());
        let mut q = vec![T::zero(); m];
        for i in 0..self.len() {
            let y = &self.rel[i * (n + 1)..(i + 1) * (n + 1)];
            let z = y[n];
            let mut rho2 = z * z;
            for (a, p) in perp.iter().enumerate() {
                q[a] = dot(&y[..n], p);
                rho2 += q[a] * q[a];
            }
            let rho = rho2.sqrt();
            let wz = z / rho;
            let mut flat = 0usize;
            let mut q2 = T::zero();
            for qa in q.iter_mut() {
                *qa = *qa / rho / (T::one() + wz);
                q2 += *qa * *qa;
                let b = ((*qa + T::one()) * T::lit(0.5) * T::of(bins)).floor().to_usize().unwrap_or(0).min(bins - 1);
                flat = flat * bins + b;
            }
            idx.push(flat);
            let j = T::lit(2.0) / (T::one() + q2);
            stretch.push(j * j * rho2);
        }
        (idx, stretch)
    }

    /// Orbit average for the symmetry along `frame`, returning
    /// `(defect, floor, table)`.
    pub fn evaluate(&self, frame: &[Vec<T>], bins: usize) -> (T, T, Vec<T>) {
        let perp = complement(frame, self.n);
        let m = perp.len();
        let d = self.d;
        let nb = bins.pow(m as u32);
        let (idx, stretch) = self.bin_of(&perp, bins);
        let mut sums = vec![T::zero(); nb * d];
        let mut mass = vec![T::zero(); nb];
        for i in 0..self.len() {
            let b = idx[i];
            mass[b] += self.weight[i];
            for c in 0..d {
                sums[b * d + c] += self.weight[i] * self.values[i * d + c];
            }
        }
        for b in 0..nb {
            if mass[b] > T::zero() {
                for c in 0..d {
                    sums[b * d + c] /= mass[b];
                }
            }
        }
        let mut defect = T::zero();
        let mut floor = T::zero();
        for i in 0..self.len() {
            let b = idx[i];
            let mut e = T::zero();
            for c in 0..d {
                let diff = self.values[i * d + c] - sums[b * d + c];
                e += diff * diff;
            }
            defect += self.weight[i] * e;
            floor += self.weight[i] * stretch[i] * self.grad2[i];
        }
        let dq = T::lit(2.0) / T::of(bins);
        let floor = if m == 0 { T::zero() } else { floor / self.total_weight * dq * dq / T::lit(12.0) };
        (defect / self.total_weight, floor, sums)
    }

    /// Bin index of every cell for the symmetry along `frame`.
    pub(crate) fn cell_bins(&self, frame: &[Vec<T>], bins: usize) -> Vec<usize> {
        self.bin_of(&complement(frame, self.n), bins).0
    }
}

/// Orthonormal basis of the orthogonal complement of an orthonormal frame,
/// obtained deterministically by Gram–Schmidt on the standard basis.
pub(crate) fn complement<T: Real>(frame: &[Vec<T>], n: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = frame.to_vec();
    let mut out = Vec::with_capacity(n - frame.len());
    for a in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![T::zero(); n];
        e[a] = T::one();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&e, q);
                e.iter_mut().zip(q).for_each(|(x, &y)| *x -= c * y);
            }
        }
        let ne = norm2(&e).sqrt();
        if ne > T::lit(1e-6) {
            e.iter_mut().for_each(|x| *x /= ne);
            basis.push(e.clone());
            out.push(e);
        }
    }
    out
}

fn check_center<T: Real>(ue: &HalfField<T>, x: &[T]) -> Result<()> {
    if x.len() != ue.spec.boundary.n {
        return Err(Error::Precondition("centre dimension mismatch".into()));
    }
    Ok(())
}

fn resolve_bins<T: Real>(sample: &HalfBallSample<T>, opts: &SymmetryOptions) -> Result<usize> {
    match opts.bins {
        Some(0) => Err(Error::Precondition("need at least one bin".into())),
        Some(b) => Ok(b),
        None => Ok(sample.default_bins),
    }
}

fn fit_from<T: Real>(
    sample: &HalfBallSample<T>,
    k: usize,
    frame: Vec<Vec<T>>,
    achieved_by: usize,
    bins: usize,
) -> SymmetryFit<T> {
    let (defect, floor, table) = sample.evaluate(&frame, bins);
    let oscillation = sample.oscillation();
    let normalized_defect = if oscillation > T::zero() { defect / oscillation } else { T::zero() };
    let shown: Vec<Vec<T>> = frame.iter().take(k).cloned().collect();
    SymmetryFit {
        k,
        center: sample.center.clone(),
        radius: sample.radius,
        frame: shown,
        defect,
        normalized_defect,
        oscillation,
        floor,
        bins,
        achieved_by,
        table,
    }
}

/// Orbit average of `u^e` on `B_r⁺((x, 0))` for the symmetry group generated
/// by dilations about `(x, 0)` and translations along `span(frame)`.
pub fn symmetrize<T: Real>(
    ue: &HalfField<T>,
    x: &[T],
    r: T,
    frame: &[Vec<T>],
    opts: &SymmetryOptions,
) -> Result<SymmetryFit<T>> {
    check_center(ue, x)?;
    let n = ue.spec.boundary.n;
    if frame.len() > n || frame.iter().any(|v| v.len() != n) {
        return Err(Error::DegenerateFrame(format!("frame must consist of at most {n} vectors of ℝ^{n}")));
    }
    let frame = orthonormalize(frame)
        .ok_or_else(|| Error::DegenerateFrame("frame vectors are linearly dependent".into()))?;
    let sample = HalfBallSample::new(ue, x, r)?;
    let bins = resolve_bins(&sample, opts)?;
    let k = frame.len();
    Ok(fit_from(&sample, k, frame, k, bins))
}

/// Replace `u^e` on the cells of the fitted half-ball by the approximant.
/// Symmetrizing the result along the same frame returns a zero defect.
pub fn approximant_field<T: Real>(ue: &HalfField<T>, fit: &SymmetryFit<T>) -> Result<HalfField<T>> {
    if fit.achieved_by != fit.k {
        return Err(Error::Precondition(
            "approximant tables are only stored for fits achieved at their own dimension".into(),
        ));
    }
    let sample = HalfBallSample::new(ue, &fit.center, fit.radius)?;
    let bins_of = sample.cell_bins(&fit.frame, fit.bins);
    let d = ue.d;
    let m = ue.spec.boundary.len();
    let mut values = ue.values.clone();
    for (c, &(k, i)) in sample.cells.iter().enumerate() {
        let b = bins_of[c];
        let at = (k * m + i) * d;
        values[at..at + d].copy_from_slice(&fit.table[b * d..(b + 1) * d]);
    }
    HalfField::new(ue.spec.clone(), values, ue.trace.clone())
}

/// Candidate `j`-frames for the coarse global search, in lexicographic
/// order of their defining angles.
fn grid_frames<T: Real>(n: usize, j: usize, g: usize) -> Vec<Vec<Vec<T>>> {
    let pi = std::f64::consts::PI;
    let mut out = Vec::new();
    match n {
        2 => {
            for i in 0..g {
                let t = pi * i as f64 / g as f64;
                out.push(vec![vec![T::lit(t.cos()), T::lit(t.sin())]]);
            }
        }
        3 => {
            let half = (g / 2).max(1);
            for a in 0..=half {
                let alpha = 0.5 * pi * a as f64 / half as f64;
                let steps = if a == 0 { 1 } else { g };
                for b in 0..steps {
                    let phi = 2.0 * pi * b as f64 / g as f64;
                    if a == half && phi >= pi {
                        continue;
                    }
                    let dir = vec![
                        T::lit(alpha.sin() * phi.cos()),
                        T::lit(alpha.sin() * phi.sin()),
                        T::lit(alpha.cos()),
                    ];
                    if j == 1 {
                        out.push(vec![dir]);
                    } else {
                        out.push(complement(&[dir], 3));
                    }
                }
            }
        }
        _ => {}
    }
    out
}

fn rotate<T: Real>(frame: &[Vec<T>], a: usize, b: usize, t: T) -> Vec<Vec<T>> {
    let (c, s) = (t.cos(), t.sin());
    frame
        .iter()
        .map(|v| {
            let mut w = v.clone();
            w[a] = c * v[a] - s * v[b];
            w[b] = s * v[a] + c * v[b];
            w
        })
        .collect()
}

/// Smallest defect over `j`-frames found by the search, stopping as soon as
/// the defect drops to `target`. The visited sequence of frames does not
/// depend on `target`.
pub(crate) fn search<T: Real>(
    ue: &HalfField<T>,
    sample: &HalfBallSample<T>,
    j: usize,
    bins: usize,
    opts: &SymmetryOptions,
    target: Option<T>,
) -> Result<(T, Vec<Vec<T>>)> {
    let n = sample.n;
    let hit = |v: T| target.is_some_and(|t| v <= t);
    if j == 0 || j == n {
        let frame: Vec<Vec<T>> = (0..j)
            .map(|a| (0..n).map(|b| if a == b { T::one() } else { T::zero() }).collect())
            .collect();
        let (dft, _, _) = sample.evaluate(&frame, bins);
        return Ok((dft, frame));
    }
    let mut best: Option<(T, Vec<Vec<T>>)> = None;
    let consider = |frame: Vec<Vec<T>>, best: &mut Option<(T, Vec<Vec<T>>)>| -> bool {
        let (dft, _, _) = sample.evaluate(&frame, bins);
        if best.as_ref().is_none_or(|(b, _)| dft < *b) {
            *best = Some((dft, frame));
        }
        hit(dft)
    };
    for frame in grid_frames::<T>(n, j, opts.angle_grid.max(1)) {
        if consider(frame, &mut best) {
            return Ok(best.expect("candidate evaluated"));
        }
    }
    let eig = directional_energy_matrix(ue, &sample.center, sample.radius)?.eigen;
    let seed: Vec<Vec<T>> = eig.vectors[n - j..].to_vec();
    if let Some(seed) = orthonormalize(&seed) {
        if consider(seed, &mut best) {
            return Ok(best.expect("candidate evaluated"));
        }
    }
    let (mut value, mut frame) = best.expect("at least the seed was evaluated");
    let mut step = opts.initial_rotation;
    for _ in 0..opts.refine_steps {
        for _pass in 0..16 {
            let mut improved = false;
            for a in 0..n {
                for b in a + 1..n {
                    for sign in [1.0, -1.0] {
                        let cand = rotate(&frame, a, b, T::lit(sign * step));
                        let (dft, _, _) = sample.evaluate(&cand, bins);
                        if dft < value {
                            value = dft;
                            frame = cand;
                            improved = true;
                            if hit(value) {
                                return Ok((value, frame));
                            }
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        step *= 0.5;
    }
    let frame = orthonormalize(&frame).unwrap_or(frame);
    Ok((value, frame))
}

/// `(k, ε*)`: the smallest defect over boundary-k-symmetric competitors.
///
/// Competitors symmetric along larger subspaces are included (they are
/// boundary-k-symmetric too), so the result is nondecreasing in `k`:
/// `ε*_k = min_{j ≥ k} search_j`.
pub fn symmetry_defect<T: Real>(
    ue: &HalfField<T>,
    x: &[T],
    r: T,
    k: usize,
    opts: &SymmetryOptions,
) -> Result<SymmetryFit<T>> {
    check_center(ue, x)?;
    let n = ue.spec.boundary.n;
    if k > n {
        return Err(Error::Precondition(format!("symmetry dimension {k} exceeds n = {n}")));
    }
    let sample = HalfBallSample::new(ue, x, r)?;
    let bins = resolve_bins(&sample, opts)?;
    let mut best: Option<(T, Vec<Vec<T>>, usize)> = None;
    for j in k..=n {
        let (v, frame) = search(ue, &sample, j, bins, opts, None)?;
        if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            best = Some((v, frame, j));
        }
    }
    let (_, frame, j) = best.expect("k ≤ n gives at least one search");
    Ok(fit_from(&sample, k, frame, j, bins))
}
