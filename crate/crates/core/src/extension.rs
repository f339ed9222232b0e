//! Poisson (Caffarelli–Silvestre) extension of boundary maps to the upper
//! half-space, half-ball Dirichlet energies, the density `Θ`, its limit `Ξ`,
//! the monotonicity identity, pinching, and directional energy matrices.
//!
//! The extension integrates the Poisson kernel exactly over each source
//! cell (closed forms for n ≤ 2), with the source data piecewise constant on
//! cells. Data beyond the sampled lattice enters either through its known
//! far-field mean or through the transformed exterior rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{gamma_n, half_energy};
use crate::error::{Error, Result};
use crate::fields::{Ball, Exterior, FarField, GridSpec, VectorField};
use crate::linalg::{Eigen, SymMatrix};
use crate::quadrature::{ExteriorRule, LatticeFft};
use crate::scalar::{norm2, Real};

/// Boundary grid times a strictly increasing list of heights `z > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfGridSpec<T> {
    pub boundary: GridSpec<T>,
    pub z_levels: Vec<T>,
}

impl<T: Real> HalfGridSpec<T> {
    pub fn new(boundary: GridSpec<T>, z_levels: Vec<T>) -> Result<Self> {
        if z_levels.is_empty() {
            return Err(Error::InvalidGrid("need at least one z-level".into()));
        }
        if !(z_levels[0] > T::zero()) || z_levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("z-levels must be positive and strictly increasing".into()));
        }
        if z_levels[0] > boundary.h {
            return Err(Error::InvalidGrid(format!(
                "lowest z-level {} exceeds the boundary spacing {}",
                z_levels[0], boundary.h
            )));
        }
        Ok(Self { boundary, z_levels })
    }

    /// Levels starting at `h/2` and growing by a factor 1.25, up to the
    /// first level `≥ z_max`. The grid is self-similar under dilations by
    /// powers of 1.25, which keeps homogeneous extensions homogeneous.
    pub fn geometric(boundary: GridSpec<T>, z_max: T) -> Result<Self> {
        Self::graded(boundary, z_max, T::lit(1.25), None)
    }

    /// Levels starting at `h/2`, growing by `ratio`, with spacing optionally
    /// capped at `max_spacing`.
    pub fn graded(boundary: GridSpec<T>, z_max: T, ratio: T, max_spacing: Option<T>) -> Result<Self> {
        if !(ratio > T::one()) {
            return Err(Error::InvalidGrid(format!("z ratio must exceed 1, got {ratio}")));
        }
        let cap = max_spacing.unwrap_or(T::infinity());
        if !(cap > T::zero()) {
            return Err(Error::InvalidGrid("z spacing cap must be positive".into()));
        }
        let mut z = boundary.h * T::lit(0.5);
        let mut levels = vec![z];
        while z < z_max {
            z += (z * (ratio - T::one())).min(cap);
            levels.push(z);
        }
        Self::new(boundary, levels)
    }

    /// Half-grid whose boundary grid is aligned with `lattice`, covers the
    /// cube of half-width `half_width` around `x0`, and reaches height `z_max`.
    pub fn around(lattice: &GridSpec<T>, x0: &[T], half_width: T, z_max: T) -> Result<Self> {
        let h = lattice.h;
        let mut origin = Vec::with_capacity(lattice.n);
        let mut counts = Vec::with_capacity(lattice.n);
        for a in 0..lattice.n {
            let lo = ((x0[a] - half_width - lattice.origin[a]) / h).floor();
            let hi = ((x0[a] + half_width - lattice.origin[a]) / h).ceil();
            origin.push(lattice.origin[a] + lo * h);
            counts.push((hi - lo).to_usize().unwrap_or(0) + 1);
        }
        let boundary = GridSpec::new(lattice.d, origin, h, counts)?;
        Self::geometric(boundary, z_max)
    }

    pub fn levels(&self) -> usize {
        self.z_levels.len()
    }

    /// Number of half-grid nodes.
    pub fn len(&self) -> usize {
        self.levels() * self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell edges in `z`: `0`, midpoints between levels, and a top edge
    /// mirroring the last spacing.
    pub fn z_edges(&self) -> Vec<T> {
        let z = &self.z_levels;
        let half = T::lit(0.5);
        let mut e = Vec::with_capacity(z.len() + 1);
        e.push(T::zero());
        for w in z.windows(2) {
            e.push(half * (w[0] + w[1]));
        }
        let last = z[z.len() - 1];
        let top = if z.len() > 1 { last + half * (last - z[z.len() - 2]) } else { last * T::lit(2.0) };
        e.push(top);
        e
    }
}

/// Values of `u^e` on a half-grid together with the boundary trace and the
/// finite-difference gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfField<T> {
    pub spec: HalfGridSpec<T>,
    pub d: usize,
    /// Layout `[level][boundary node][component]`.
    pub values: Vec<T>,
    /// Boundary values at `z = 0`, layout `[node][component]`.
    pub trace: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> HalfField<T> {
    pub fn new(spec: HalfGridSpec<T>, values: Vec<T>, trace: Vec<T>) -> Result<Self> {
        let d = spec.boundary.d;
        let m = spec.boundary.len();
        if values.len() != spec.len() * d || trace.len() != m * d {
            return Err(Error::InvalidGrid("half-field value count does not match its grid".into()));
        }
        if values.iter().chain(&trace).any(|v| !v.is_finite()) {
            return Err(Error::Domain("half-field values must be finite".into()));
        }
        let grad = half_gradient(&spec, d, &values, &trace);
        Ok(Self { spec, d, values, trace, grad })
    }

    pub fn value(&self, level: usize, node: usize) -> &[T] {
        let k = level * self.spec.boundary.len() + node;
        &self.values[k * self.d..(k + 1) * self.d]
    }

    /// Jacobian at a half-grid node, layout `[axis][component]` with the
    /// `z` axis last.
    pub fn gradient(&self, level: usize, node: usize) -> &[T] {
        let m = (self.spec.boundary.n + 1) * self.d;
        let k = level * self.spec.boundary.len() + node;
        &self.grad[k * m..(k + 1) * m]
    }

    /// Largest deviation from `c` over all half-grid nodes.
    pub fn max_deviation_from(&self, c: &[T]) -> T {
        self.values
            .chunks(self.d)
            .map(|v| v.iter().zip(c).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max))
            .fold(T::zero(), T::max)
    }
}

fn half_gradient<T: Real>(spec: &HalfGridSpec<T>, d: usize, values: &[T], trace: &[T]) -> Vec<T> {
    let b = &spec.boundary;
    let n = b.n;
    let m = b.len();
    let levels = spec.levels();
    let strides = crate::fields::strides(&b.counts);
    let z = &spec.z_levels;
    let at = |level: isize, node: usize, c: usize| -> T {
        if level < 0 {
            trace[node * d + c]
        } else {
            values[(level as usize * m + node) * d + c]
        }
    };
    let inv_h = T::one() / b.h;
    let mut grad = vec![T::zero(); levels * m * (n + 1) * d];
    for k in 0..levels {
        let zk = z[k];
        for i in 0..m {
            let idx = b.multi(i);
            let base = (k * m + i) * (n + 1) * d;
            for a in 0..n {
                let (lo, hi, scale) = if idx[a] == 0 {
                    (i, i + strides[a], inv_h)
                } else if idx[a] == b.counts[a] - 1 {
                    (i - strides[a], i, inv_h)
                } else {
                    (i - strides[a], i + strides[a], T::lit(0.5) * inv_h)
                };
                for c in 0..d {
                    grad[base + a * d + c] = (at(k as isize, hi, c) - at(k as isize, lo, c)) * scale;
                }
            }
            let below = if k == 0 { T::zero() } else { z[k - 1] };
            let h1 = zk - below;
            for c in 0..d {
                let f0 = at(k as isize - 1, i, c);
                let f1 = at(k as isize, i, c);
                let dz = if k + 1 < levels {
                    let h2 = z[k + 1] - zk;
                    let f2 = at(k as isize + 1, i, c);
                    -h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1 + h1 / (h2 * (h1 + h2)) * f2
                } else {
                    (f1 - f0) / h1
                };
                grad[base + n * d + c] = dz;
            }
        }
    }
    grad
}

/// Knobs for [`poisson_extend_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonOptions<T> {
    /// How far beyond the half-grid's boundary box the source lattice is
    /// sampled (from the exterior descriptor where the field has no
    /// samples). `None` picks a default from the exterior kind.
    pub margin: Option<T>,
    pub far_radial_order: usize,
    pub far_angular_order: usize,
    /// Far-field quadrature runs on every `far_stride`-th boundary node (n ≥ 2)
    /// and is interpolated with cubic Lagrange polynomials in between.
    pub far_stride: usize,
}

impl<T: Real> Default for PoissonOptions<T> {
    fn default() -> Self {
        Self { margin: None, far_radial_order: 24, far_angular_order: 24, far_stride: 4 }
    }
}

/// Poisson-kernel mass of `[a, b]` at height `z` (n = 1).
fn interval_mass(a: f64, b: f64, z: f64) -> f64 {
    // atan(b/z) − atan(a/z) without cancellation
    (z * (b - a)).atan2(z * z + a * b) / std::f64::consts::PI
}

/// Poisson-kernel mass of `[a₁,b₁]×[a₂,b₂]` at height `z` (n = 2).
fn rectangle_mass(a: [f64; 2], b: [f64; 2], z: f64) -> f64 {
    let g = |s: f64, t: f64| (s * t / (z * (s * s + t * t + z * z).sqrt())).atan();
    (g(b[0], b[1]) - g(a[0], b[1]) - g(b[0], a[1]) + g(a[0], a[1])) / (2.0 * std::f64::consts::PI)
}

/// Poisson mass of the box `[lo, hi]` (relative coordinates) at height `z`.
fn box_mass(lo: &[f64], hi: &[f64], z: f64) -> f64 {
    match lo.len() {
        1 => interval_mass(lo[0], hi[0], z),
        _ => rectangle_mass([lo[0], lo[1]], [hi[0], hi[1]], z),
    }
}

fn default_margin<T: Real>(exterior: &Exterior<T>, n: usize, z_max: T) -> T {
    let reach = z_max.max(T::one());
    match exterior.far_field() {
        Some(FarField::Quadrature) => reach * T::lit(2.0),
        Some(FarField::Mean(_)) => match exterior {
            Exterior::Constant(_) => T::zero(),
            // Oscillatory data: push the mean-value approximation far out.
            _ => reach * T::lit(if n == 1 { 128.0 } else { 8.0 }),
        },
        None => T::zero(),
    }
}

/// `u^e(x, z) = γₙ ∫ z u(y) / (|x − y|² + z²)^{(n+1)/2} dy` with default options.
pub fn poisson_extend<T: Real>(u: &VectorField<T>, hspec: &HalfGridSpec<T>) -> Result<HalfField<T>> {
    poisson_extend_with(u, hspec, &PoissonOptions::default())
}

pub fn poisson_extend_with<T: Real>(
    u: &VectorField<T>,
    hspec: &HalfGridSpec<T>,
    opts: &PoissonOptions<T>,
) -> Result<HalfField<T>> {
    let far = u
        .exterior
        .far_field()
        .ok_or_else(|| Error::MissingExterior("the Poisson integral runs over all of ℝⁿ".into()))?;
    let us = &u.spec;
    let b = &hspec.boundary;
    let (n, d) = (us.n, us.d);
    if n > 2 {
        return Err(Error::Precondition(format!("Poisson extension implemented for n ≤ 2, got n = {n}")));
    }
    if b.n != n || b.d != d || (b.h - us.h).abs() > us.h * T::lit(1e-9) {
        return Err(Error::Precondition("half-grid must share dimension and spacing with the field".into()));
    }
    let h = us.h;
    let offset_of = |o: T, base: T| -> Result<isize> {
        let s = (o - base) / h;
        if (s - s.round()).abs() > T::lit(1e-6) {
            return Err(Error::Precondition("half-grid boundary nodes must be field lattice nodes".into()));
        }
        Ok(s.round().to_isize().unwrap_or(0))
    };
    let z_max = hspec.z_levels[hspec.levels() - 1];
    let margin = opts.margin.unwrap_or_else(|| default_margin(&u.exterior, n, z_max));
    let steps = (margin / h).ceil().to_isize().unwrap_or(0);

    // Source lattice in units of field nodes (field node 0 ↦ index 0).
    let mut lo = vec![0isize; n];
    let mut hi = vec![0isize; n];
    let mut b_off = vec![0isize; n];
    for a in 0..n {
        b_off[a] = offset_of(b.origin[a], us.origin[a])?;
        lo[a] = (b_off[a] - steps).min(0);
        hi[a] = (b_off[a] + b.counts[a] as isize - 1 + steps).max(us.counts[a] as isize - 1);
    }
    let counts: Vec<usize> = (0..n).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let lattice = GridSpec::new(d, (0..n).map(|a| us.origin[a] + h * T::lit(lo[a] as f64)).collect(), h, counts)?;
    let field_vals = u.cell_average_values();
    let mut source = vec![T::zero(); lattice.len() * d];
    for i in 0..lattice.len() {
        let idx = lattice.multi(i);
        let inside: Option<Vec<usize>> = (0..n)
            .map(|a| {
                let j = idx[a] as isize + lo[a];
                (j >= 0 && j < us.counts[a] as isize).then_some(j as usize)
            })
            .collect();
        let v = match inside {
            Some(fi) => {
                let f = us.flat(&fi);
                field_vals[f * d..(f + 1) * d].to_vec()
            }
            None => u.exterior.eval(&lattice.coord(&idx)).expect("exterior present"),
        };
        source[i * d..(i + 1) * d].copy_from_slice(&v);
    }

    let fft = LatticeFft::new(&lattice.counts);
    let spectra: Vec<_> = (0..d)
        .map(|c| {
            let ch: Vec<T> = (0..lattice.len()).map(|i| source[i * d + c]).collect();
            fft.spectrum(&ch)
        })
        .collect();

    let cell_lo: Vec<f64> = lattice.cell_lo().iter().map(|v| v.as_f64()).collect();
    let cell_hi: Vec<f64> = lattice.cell_hi().iter().map(|v| v.as_f64()).collect();
    let hf = h.as_f64();
    let gamma = gamma_n::<f64>(n);

    let far_setup = match &far {
        FarField::Quadrature => {
            let rule = ExteriorRule::<f64>::new(&cell_lo, &cell_hi, opts.far_radial_order, opts.far_angular_order, None)?;
            let vals: Vec<Vec<f64>> = rule
                .points
                .iter()
                .map(|p| {
                    let pt: Vec<T> = p.iter().map(|&v| T::lit(v)).collect();
                    u.exterior.eval(&pt).expect("exterior present").iter().map(|v| v.as_f64()).collect()
                })
                .collect();
            Some((rule, vals, CoarseGrid::new(b, if n == 1 { 1 } else { opts.far_stride.max(1) })))
        }
        FarField::Mean(_) => None,
    };

    let m = b.len();
    let b_nodes: Vec<Vec<f64>> = b.nodes().map(|x| x.iter().map(|v| v.as_f64()).collect()).collect();
    let b_lattice_index: Vec<usize> = (0..m)
        .map(|i| {
            let idx = b.multi(i);
            let li: Vec<usize> = (0..n).map(|a| (idx[a] as isize + b_off[a] - lo[a]) as usize).collect();
            lattice.flat(&li)
        })
        .collect();

    let mut values = vec![T::zero(); hspec.len() * d];
    for (k, &zt) in hspec.z_levels.iter().enumerate() {
        let z = zt.as_f64();
        let kernel = fft.kernel_spectrum(|o| {
            let lo: Vec<f64> = o.iter().map(|&v| (v as f64 - 0.5) * hf).collect();
            let hi: Vec<f64> = o.iter().map(|&v| (v as f64 + 0.5) * hf).collect();
            T::lit(box_mass(&lo, &hi, z))
        });
        let conv: Vec<Vec<T>> = spectra.iter().map(|s| fft.convolve(s, &kernel)).collect();

        let far_values = far_setup.as_ref().map(|(rule, vals, coarse)| {
            let samples: Vec<Vec<f64>> = coarse
                .points
                .par_iter()
                .map(|x| {
                    let mut acc = vec![0.0; d + 1];
                    for (p, (&w, v)) in rule.points.iter().zip(rule.weights.iter().zip(vals)) {
                        let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + z * z;
                        let k = w * gamma * z * r2.powf(-0.5 * (n as f64 + 1.0));
                        acc[0] += k;
                        for c in 0..d {
                            acc[c + 1] += k * v[c];
                        }
                    }
                    acc
                })
                .collect();
            (0..m).map(|i| coarse.interpolate(&samples, &b.multi(i))).collect::<Vec<_>>()
        });

        for i in 0..m {
            let x = &b_nodes[i];
            let rel_lo: Vec<f64> = cell_lo.iter().zip(x).map(|(l, xv)| l - xv).collect();
            let rel_hi: Vec<f64> = cell_hi.iter().zip(x).map(|(l, xv)| l - xv).collect();
            let inner = box_mass(&rel_lo, &rel_hi, z);
            let (tail_mass, tail): (f64, Vec<f64>) = match (&far, &far_values) {
                (FarField::Mean(c), _) => (1.0 - inner, c.iter().map(|v| v.as_f64() * (1.0 - inner)).collect()),
                (FarField::Quadrature, Some(fv)) => (fv[i][0], fv[i][1..].to_vec()),
                (FarField::Quadrature, None) => unreachable!("far-field samples computed for quadrature"),
            };
            let denom = T::lit(inner + tail_mass);
            let li = b_lattice_index[i];
            for c in 0..d {
                values[(k * m + i) * d + c] = (conv[c][li] + T::lit(tail[c])) / denom;
            }
        }
    }
    let mut trace = vec![T::zero(); m * d];
    for (i, &li) in b_lattice_index.iter().enumerate() {
        trace[i * d..(i + 1) * d].copy_from_slice(&source[li * d..(li + 1) * d]);
    }
    HalfField::new(hspec.clone(), values, trace)
}

/// Every `stride`-th boundary node, padded by one node before and two after
/// along each axis so cubic stencils exist everywhere.
struct CoarseGrid {
    stride: usize,
    counts: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl CoarseGrid {
    fn new<T: Real>(b: &GridSpec<T>, stride: usize) -> Self {
        let n = b.n;
        let h = b.h.as_f64();
        let pad = if stride == 1 { 0 } else { 1 };
        let counts: Vec<usize> = b.counts.iter().map(|&c| (c - 1).div_ceil(stride) + 1 + 3 * pad).collect();
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            points.push(
                (0..n)
                    .map(|a| b.origin[a].as_f64() + (idx[a] as f64 - pad as f64) * stride as f64 * h)
                    .collect(),
            );
            crate::quadrature::increment(&mut idx, &counts);
        }
        Self { stride, counts, points }
    }

    fn interpolate(&self, samples: &[Vec<f64>], fine: &[usize]) -> Vec<f64> {
        let n = self.counts.len();
        if self.stride == 1 {
            let f = fine.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i);
            return samples[f].clone();
        }
        // Per axis: 4 coarse indices and Lagrange weights.
        let mut stencils = Vec::with_capacity(n);
        for a in 0..n {
            let t = fine[a] as f64 / self.stride as f64 + 1.0;
            let base = (t.floor() as usize).saturating_sub(1).min(self.counts[a] - 4);
            let mut w = [0.0; 4];
            for (j, wj) in w.iter_mut().enumerate() {
                let mut l = 1.0;
                for q in 0..4 {
                    if q != j {
                        l *= (t - (base + q) as f64) / (j as f64 - q as f64);
                    }
                }
                *wj = l;
            }
            stencils.push((base, w));
        }
        let width = samples[0].len();
        let mut out = vec![0.0; width];
        for corner in 0..4usize.pow(n as u32) {
            let mut rest = corner;
            let mut flat = 0;
            let mut w = 1.0;
            for a in 0..n {
                let j = rest % 4;
                rest /= 4;
                flat = flat * self.counts[a] + stencils[a].0 + j;
                w *= stencils[a].1[j];
            }
            for (o, v) in out.iter_mut().zip(&samples[flat]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Visit every half-grid cell meeting `B_r⁺(x0) \ B_ρ⁺(x0)` with its covered
/// volume. Partially covered cells are weighted by the fraction of a 6ⁿ⁺¹
/// midpoint subsample that lies in the shell.
pub(crate) fn visit_shell<T: Real, F>(ue: &HalfField<T>, x0: &[T], rho: T, r: T, mut f: F) -> Result<()>
where
    F: FnMut(usize, usize, &[T], T),
{
    let b = &ue.spec.boundary;
    let n = b.n;
    if x0.len() != n {
        return Err(Error::Precondition("centre dimension mismatch".into()));
    }
    if !(r > T::zero()) || rho < T::zero() || rho >= r {
        return Err(Error::Precondition(format!("need 0 ≤ ρ < r, got ρ = {rho}, r = {r}")));
    }
    let edges = ue.spec.z_edges();
    let lo = b.cell_lo();
    let hi = b.cell_hi();
    let tol = b.h * T::lit(1e-9);
    if (0..n).any(|a| x0[a] - r < lo[a] - tol || x0[a] + r > hi[a] + tol) || edges[edges.len() - 1] < r - tol {
        return Err(Error::Precondition(format!("half-ball of radius {r} exceeds the half-grid")));
    }
    let h = b.h;
    let half = h * T::lit(0.5);
    let mut ranges = Vec::with_capacity(n);
    for a in 0..n {
        let i0 = ((x0[a] - r - b.origin[a]) / h).floor().max(T::zero()).to_usize().unwrap_or(0);
        let i1 = ((x0[a] + r - b.origin[a]) / h).ceil().to_usize().unwrap_or(0).min(b.counts[a] - 1);
        ranges.push((i0, i1));
    }
    let sub = 6usize;
    let r2 = r * r;
    let rho2 = rho * rho;
    let mut y = vec![T::zero(); n + 1];
    for k in 0..ue.spec.levels() {
        let (z0, z1) = (edges[k], edges[k + 1]);
        if z0 >= r {
            break;
        }
        let dz = z1 - z0;
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let node = b.flat(&idx);
            let mut near = T::zero();
            let mut far = T::zero();
            for a in 0..n {
                let c = b.origin[a] + T::of(idx[a]) * h - x0[a];
                y[a] = c;
                let (cl, ch) = (c - half, c + half);
                let nearest = if cl > T::zero() { cl } else if ch < T::zero() { ch } else { T::zero() };
                near += nearest * nearest;
                far += cl.abs().max(ch.abs()).powi(2);
            }
            near += z0 * z0;
            far += z1 * z1;
            y[n] = ue.spec.z_levels[k];
            if near <= r2 && far > rho2 {
                let frac = if far <= r2 && near > rho2 {
                    T::one()
                } else {
                    let total = sub.pow(n as u32 + 1);
                    let mut hit = 0usize;
                    for s in 0..total {
                        let mut rest = s;
                        let mut d2 = T::zero();
                        for a in 0..=n {
                            let j = rest % sub;
                            rest /= sub;
                            let t = (T::of(j) + T::lit(0.5)) / T::of(sub);
                            let p = if a < n { y[a] - half + t * h } else { z0 + t * dz };
                            d2 += p * p;
                        }
                        if d2 <= r2 && d2 > rho2 {
                            hit += 1;
                        }
                    }
                    T::of(hit) / T::of(total)
                };
                if frac > T::zero() {
                    f(k, node, &y, frac * b.cell_volume() * dz);
                }
            }
            // advance the multi-index inside the bounding box
            let mut a = n;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] <= ranges[a].1 {
                    break;
                }
                idx[a] = ranges[a].0;
                if a == 0 {
                    a = usize::MAX;
                    break;
                }
            }
            if a == usize::MAX {
                break;
            }
        }
    }
    Ok(())
}

/// `𝐄(u^e, B_r⁺(x0)) = ½ ∫_{B_r⁺} |∇u^e|²`.
pub fn halfball_energy<T: Real>(ue: &HalfField<T>, x0: &[T], r: T) -> Result<T> {
    let mut e = T::zero();
    visit_shell(ue, x0, T::zero(), r, |k, i, _, w| e += w * norm2(ue.gradient(k, i)))?;
    Ok(e * T::lit(0.5))
}

/// `Θ(u^e, B_r⁺(x0)) = r^{1−n} 𝐄(u^e, B_r⁺(x0))`.
pub fn theta_density<T: Real>(ue: &HalfField<T>, x0: &[T], r: T) -> Result<T> {
    let n = ue.spec.boundary.n as i32;
    Ok(halfball_energy(ue, x0, r)? * r.powi(1 - n))
}

/// `Θ` sampled at several radii, plus the extrapolated limit when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve<T> {
    pub center: Vec<T>,
    pub radii: Vec<T>,
    pub theta: Vec<T>,
    pub xi: Option<XiEstimate<T>>,
}

pub fn density_curve<T: Real>(ue: &HalfField<T>, x0: &[T], radii: &[T]) -> Result<DensityCurve<T>> {
    let theta = radii.iter().map(|&r| theta_density(ue, x0, r)).collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve { center: x0.to_vec(), radii: radii.to_vec(), theta, xi: None })
}

/// Extrapolated `Ξ(u, x0) = lim_{r↘0} Θ(u^e, B_r⁺(x0))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate<T> {
    pub value: T,
    /// Size of the last Θ increment; heuristic, see [`xi_density`].
    pub error_bar: T,
    pub radii: Vec<T>,
    pub theta: Vec<T>,
}

/// Smallest radius treated as resolved: four boundary spacings.
pub fn min_resolvable_radius<T: Real>(spec: &HalfGridSpec<T>) -> T {
    spec.boundary.h * T::lit(4.0)
}

/// Extrapolate `Θ` to `r → 0` from the three smallest resolvable radii.
///
/// With increments `δ₁ = Θ(r₃) − Θ(r₂)` and `δ₂ = Θ(r₂) − Θ(r₁)` for
/// `r₁ < r₂ < r₃`, a geometric decay `q = δ₂/δ₁ ∈ [0, 1)` is summed to
/// zero radius; otherwise the smallest-radius value is returned. The error
/// bar is `|δ₂|`. By the monotonicity formula the increments only bound the
/// gap from one side, so the bar is a heuristic.
pub fn xi_density<T: Real>(ue: &HalfField<T>, x0: &[T], radii: &[T]) -> Result<XiEstimate<T>> {
    let floor = min_resolvable_radius(&ue.spec);
    let mut usable: Vec<T> = radii.iter().copied().filter(|&r| r >= floor).collect();
    usable.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    usable.dedup();
    if usable.len() < 3 {
        return Err(Error::Resolution(format!(
            "need three radii ≥ {floor} (four grid spacings); resolvable among the request: {usable:?}"
        )));
    }
    let used = usable[..3].to_vec();
    let theta = used.iter().map(|&r| theta_density(ue, x0, r)).collect::<Result<Vec<_>>>()?;
    let d1 = theta[2] - theta[1];
    let d2 = theta[1] - theta[0];
    let mut value = theta[0];
    if d1 != T::zero() {
        let q = d2 / d1;
        if q >= T::zero() && q < T::one() {
            value = theta[0] - d2 * q / (T::one() - q);
        }
    }
    Ok(XiEstimate { value: value.max(T::zero()), error_bar: d2.abs(), radii: used, theta })
}

/// `∫_{B_r⁺ \ B_ρ⁺} |(𝐲 − 𝐱₀)·∇u^e|² / |𝐲 − 𝐱₀|^{n+1}`.
fn radial_shell_integral<T: Real>(ue: &HalfField<T>, x0: &[T], rho: T, r: T) -> Result<T> {
    let (n, d) = (ue.spec.boundary.n, ue.d);
    let mut s = T::zero();
    let mut rad = vec![T::zero(); d];
    visit_shell(ue, x0, rho, r, |k, i, y, w| {
        let g = ue.gradient(k, i);
        rad.iter_mut().for_each(|v| *v = T::zero());
        for (a, &ya) in y.iter().enumerate() {
            for c in 0..d {
                rad[c] += ya * g[a * d + c];
            }
        }
        let dist2 = norm2(y);
        s += w * norm2(&rad) / dist2.powf(T::lit(0.5) * T::of(n + 1));
    })?;
    Ok(s)
}

/// One row of [`MonotonicityAudit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow<T> {
    pub rho: T,
    pub r: T,
    /// `Θ(r) − Θ(ρ)`.
    pub lhs: T,
    /// Radial-derivative integral over the shell.
    pub rhs: T,
    pub mismatch: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityAudit<T> {
    pub center: Vec<T>,
    pub rows: Vec<AuditRow<T>>,
}

/// Floor in the relative-mismatch denominator.
pub const MISMATCH_FLOOR: f64 = 1e-14;

/// Both sides of `Θ(r) − Θ(ρ) = ∫_{B_r⁺\B_ρ⁺} |(𝐲−𝐱₀)·∇u^e|²/|𝐲−𝐱₀|^{n+1}`.
pub fn monotonicity_audit<T: Real>(ue: &HalfField<T>, x0: &[T], pairs: &[(T, T)]) -> Result<MonotonicityAudit<T>> {
    let rows = pairs
        .iter()
        .map(|&(rho, r)| {
            if !(rho > T::zero() && rho < r) {
                return Err(Error::Precondition(format!("need 0 < ρ < r, got ({rho}, {r})")));
            }
            let lhs = theta_density(ue, x0, r)? - theta_density(ue, x0, rho)?;
            let rhs = radial_shell_integral(ue, x0, rho, r)?;
            let mismatch = (lhs - rhs).abs() / lhs.max(rhs).max(T::lit(MISMATCH_FLOOR));
            Ok(AuditRow { rho, r, lhs, rhs, mismatch })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonotonicityAudit { center: x0.to_vec(), rows })
}

/// Richardson extrapolation of values computed at spacings `h, 2h, 4h, …`
/// (finest first), assuming an error expansion `a₁h + a₂h² + …`.
///
/// Each pass eliminates one power; `k` values eliminate `k − 1` powers.
pub fn richardson<T: Real>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Empty("no values to extrapolate".into()));
    }
    let mut table = values.to_vec();
    for p in 1..values.len() {
        let f = T::lit(2f64.powi(p as i32));
        table = table.windows(2).map(|w| (f * w[0] - w[1]) / (f - T::one())).collect();
    }
    Ok(table[0])
}

impl<T: Real> MonotonicityAudit<T> {
    /// Combine audits of the same centre and pairs computed at spacings
    /// `h, 2h, 4h, …` (finest first) by [`richardson`] on each side.
    ///
    /// Near a singular boundary point the discrete energy misses an `O(h)`
    /// amount concentrated within a few cells, so single-resolution `Θ`
    /// increments carry an `O(h/ρ^{n−1})` offset; extrapolation removes it.
    pub fn extrapolate(audits: &[MonotonicityAudit<T>]) -> Result<Self> {
        let first = audits.first().ok_or_else(|| Error::Empty("no audits to extrapolate".into()))?;
        if audits.iter().any(|a| {
            a.center != first.center
                || a.rows.len() != first.rows.len()
                || a.rows.iter().zip(&first.rows).any(|(x, y)| x.rho != y.rho || x.r != y.r)
        }) {
            return Err(Error::Precondition("audits must share centre and radius pairs".into()));
        }
        let rows = (0..first.rows.len())
            .map(|j| {
                let lhs = richardson(&audits.iter().map(|a| a.rows[j].lhs).collect::<Vec<_>>())?;
                let rhs = richardson(&audits.iter().map(|a| a.rows[j].rhs).collect::<Vec<_>>())?;
                let mismatch = (lhs - rhs).abs() / lhs.max(rhs).max(T::lit(MISMATCH_FLOOR));
                Ok(AuditRow { rho: first.rows[j].rho, r: first.rows[j].r, lhs, rhs, mismatch })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { center: first.center.clone(), rows })
    }
}

/// Pinching `W_r(x) = ∫_{B_{8r}⁺ \ B_r⁺} |(𝐲−𝐱)·∇u^e|²/|𝐲−𝐱|^{n+1}`.
pub fn pinching_w<T: Real>(ue: &HalfField<T>, x: &[T], r: T) -> Result<T> {
    radial_shell_integral(ue, x, r, r * T::lit(8.0))
}

/// `A_ij = ∫_{B_r⁺(x)} ⟨∂ᵢu^e, ∂ⱼu^e⟩` over boundary directions, with its
/// eigen-decomposition (eigenvalues descending).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalEnergy<T> {
    pub matrix: SymMatrix<T>,
    pub eigen: Eigen<T>,
}

impl<T: Real> DirectionalEnergy<T> {
    /// `∫|P·∇u^e|² = trace(Fᵀ A F)` for an orthonormal frame `F`.
    pub fn along(&self, frame: &[Vec<T>]) -> T {
        frame.iter().map(|f| self.matrix.form(f, f)).sum()
    }
}

pub fn directional_energy_matrix<T: Real>(ue: &HalfField<T>, x: &[T], r: T) -> Result<DirectionalEnergy<T>> {
    let (n, d) = (ue.spec.boundary.n, ue.d);
    let mut m = SymMatrix::zeros(n);
    visit_shell(ue, x, T::zero(), r, |k, i, _, w| {
        let g = ue.gradient(k, i);
        for a in 0..n {
            for b in a..n {
                let s: T = (0..d).map(|c| g[a * d + c] * g[b * d + c]).sum();
                m.add_sym(a, b, w * s);
            }
        }
    })?;
    let eigen = m.eigen();
    Ok(DirectionalEnergy { matrix: m, eigen })
}

/// `𝐄(u^e, B_r⁺(x)) / E(u, D_{2r}(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison<T> {
    pub ratio: T,
    pub extension_energy: T,
    pub boundary_energy: T,
    /// Set when the boundary energy vanishes; `ratio` is then reported as 0.
    pub degenerate: bool,
}

pub fn extension_energy_comparison<T: Real>(u: &VectorField<T>, x: &[T], r: T) -> Result<EnergyComparison<T>> {
    let outer = Ball::new(x.to_vec(), r * T::lit(3.0))?;
    if !outer.inside_cells(&u.spec) {
        return Err(Error::Precondition("D_{3r}(x) must lie inside the grid".into()));
    }
    let hspec = HalfGridSpec::around(&u.spec, x, r + u.spec.h, r * T::lit(1.3))?;
    let ue = poisson_extend(u, &hspec)?;
    let extension_energy = halfball_energy(&ue, x, r)?;
    let boundary_energy = half_energy(u, &Ball::new(x.to_vec(), r * T::lit(2.0))?)?.value;
    if boundary_energy <= T::zero() {
        return Ok(EnergyComparison { ratio: T::zero(), extension_energy, boundary_energy, degenerate: true });
    }
    Ok(EnergyComparison { ratio: extension_energy / boundary_energy, extension_energy, boundary_energy, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;

    #[test]
    fn closed_form_masses_match_quadrature() {
        let z = 0.3;
        let p1 = |t: f64| z / (std::f64::consts::PI * (t * t + z * z));
        let q: f64 = gauss_legendre_on(40, -0.2, 0.7).iter().map(|&(t, w)| w * p1(t)).sum();
        assert!((interval_mass(-0.2, 0.7, z) - q).abs() < 1e-12);

        let p2 = |s: f64, t: f64| z / (2.0 * std::f64::consts::PI * (s * s + t * t + z * z).powf(1.5));
        let gs = gauss_legendre_on(40, -0.4, 0.5);
        let gt = gauss_legendre_on(40, 0.1, 0.9);
        let mut q = 0.0;
        for &(s, ws) in &gs {
            for &(t, wt) in &gt {
                q += ws * wt * p2(s, t);
            }
        }
        assert!((rectangle_mass([-0.4, 0.1], [0.5, 0.9], z) - q).abs() < 1e-12);
        // whole plane
        assert!((rectangle_mass([-1e9, -1e9], [1e9, 1e9], z) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn geometric_levels_follow_the_schedule() {
        let b = GridSpec::<f64>::centered(1, 1, 1.0, 16).unwrap();
        let s = HalfGridSpec::geometric(b, 1.0).unwrap();
        let h = 1.0 / 16.0;
        assert!((s.z_levels[0] - h / 2.0).abs() < 1e-15);
        assert!((s.z_levels[1] / s.z_levels[0] - 1.25).abs() < 1e-12);
        let capped = HalfGridSpec::graded(s.boundary.clone(), 1.0, 1.25, Some(2.0 * h)).unwrap();
        assert!(capped.z_levels.windows(2).all(|w| w[1] - w[0] <= 2.0 * h + 1e-12));
        assert!(HalfGridSpec::graded(s.boundary.clone(), 1.0, 1.0, None).is_err());
        assert!(*s.z_levels.last().unwrap() >= 1.0);
        let e = s.z_edges();
        assert_eq!(e[0], 0.0);
        assert_eq!(e.len(), s.levels() + 1);
    }

    #[test]
    fn invalid_levels_are_rejected() {
        let b = GridSpec::<f64>::centered(1, 1, 1.0, 4).unwrap();
        assert!(HalfGridSpec::new(b.clone(), vec![0.1, 0.1]).is_err());
        assert!(HalfGridSpec::new(b.clone(), vec![0.0, 0.1]).is_err());
        assert!(HalfGridSpec::new(b, vec![0.5]).is_err());
    }

    #[test]
    fn coarse_interpolation_is_exact_on_cubics() {
        let b = GridSpec::<f64>::new(1, vec![0.0, 0.0], 0.1, vec![13, 9]).unwrap();
        let cg = CoarseGrid::new(&b, 4);
        let f = |p: &[f64]| p[0].powi(3) - 2.0 * p[0] * p[1] * p[1] + p[1];
        let samples: Vec<Vec<f64>> = cg.points.iter().map(|p| vec![f(p)]).collect();
        for i in 0..b.len() {
            let x: Vec<f64> = b.coord_flat(i);
            let v = cg.interpolate(&samples, &b.multi(i));
            assert!((v[0] - f(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn richardson_removes_leading_powers() {
        let f = |h: f64| 3.0 + 2.0 * h - 5.0 * h * h;
        let v = [f(0.01), f(0.02), f(0.04)];
        assert!((richardson(&v).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(richardson(&[1.5]).unwrap(), 1.5);
        assert!(richardson::<f64>(&[]).is_err());
    }

    #[test]
    fn shell_weights_sum_to_half_ball_volume() {
        let b = GridSpec::<f64>::centered(2, 1, 1.0, 32).unwrap();
        let hs = HalfGridSpec::geometric(b.clone(), 1.0).unwrap();
        let ue = HalfField::new(hs.clone(), vec![0.0; hs.len()], vec![0.0; b.len()]).unwrap();
        let mut vol = 0.0;
        visit_shell(&ue, &[0.0, 0.0], 0.0, 0.5, |_, _, _, w| vol += w).unwrap();
        let exact = 2.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((vol - exact).abs() < 2e-3 * exact, "{vol} vs {exact}");
        assert!(visit_shell(&ue, &[0.7, 0.0], 0.0, 0.5, |_, _, _, _| ()).is_err());
    }
}
