use serde::{Deserialize, Serialize};

use super::exterior::{AnalyticKind, AnalyticMap, Exterior};
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

/// Sampled map `u: grid ⊂ ℝⁿ → ℝᵈ` plus a descriptor of its values outside the grid.
///
/// `flags[i]` marks nodes whose value is a placeholder at a known singular
/// point; they are excluded from sup-norm scans and nonlocal quadratures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField<T> {
    pub spec: GridSpec<T>,
    pub values: Vec<T>,
    pub flags: Vec<bool>,
    pub exterior: Exterior<T>,
}

impl<T: Real> VectorField<T> {
    pub fn new(spec: GridSpec<T>, values: Vec<T>, exterior: Exterior<T>) -> Result<Self> {
        if values.len() != spec.len() * spec.d {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len() * spec.d,
                values.len()
            )));
        }
        let flags = vec![false; spec.len()];
        Ok(Self { spec, values, flags, exterior })
    }

    /// Sample a closure at every node.
    pub fn from_fn<F>(spec: GridSpec<T>, exterior: Exterior<T>, f: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T>,
    {
        let mut values = Vec::with_capacity(spec.len() * spec.d);
        for x in spec.nodes() {
            let v = f(&x);
            debug_assert_eq!(v.len(), spec.d);
            values.extend(v);
        }
        let flags = vec![false; spec.len()];
        Self { spec, values, flags, exterior }
    }

    pub fn constant(spec: GridSpec<T>, c: Vec<T>) -> Self {
        let ext = Exterior::Constant(c.clone());
        Self::from_fn(spec, ext, |_| c.clone())
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[T] {
        let d = self.spec.d;
        &self.values[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn value_mut(&mut self, i: usize) -> &mut [T] {
        let d = self.spec.d;
        &mut self.values[i * d..(i + 1) * d]
    }

    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Largest deviation of `|u|` from 1 over non-flagged nodes.
    pub fn unit_defect(&self) -> T {
        (0..self.spec.len())
            .filter(|&i| !self.flags[i])
            .map(|i| (norm2(self.value(i)).sqrt() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Evaluate at an arbitrary point: multilinear interpolation inside the
    /// node box (flagged nodes dropped from the stencil), exterior data outside.
    pub fn sample(&self, x: &[T]) -> Result<Vec<T>> {
        let d = self.spec.d;
        if let Some(st) = self.spec.stencil(x) {
            let mut out = vec![T::zero(); d];
            let mut wsum = T::zero();
            for (i, w) in st {
                if self.flags[i] || w == T::zero() {
                    continue;
                }
                wsum += w;
                out.iter_mut().zip(self.value(i)).for_each(|(o, &v)| *o += w * v);
            }
            if wsum > T::zero() {
                out.iter_mut().for_each(|o| *o /= wsum);
                return Ok(out);
            }
            let i = self.spec.flat(&self.spec.nearest(x));
            return Ok(self.value(i).to_vec());
        }
        self.exterior
            .eval(x)
            .ok_or_else(|| Error::OutOfDomain(format!("{x:?} outside grid, exterior = none")))
    }

    /// Replacement values for flagged nodes: the mean of the non-flagged
    /// axis neighbours (an estimate of the cell average at the singularity).
    pub fn cell_average_values(&self) -> Vec<T> {
        let mut vals = self.values.clone();
        let d = self.spec.d;
        for i in 0..self.spec.len() {
            if !self.flags[i] {
                continue;
            }
            let idx = self.spec.multi(i);
            let mut acc = vec![T::zero(); d];
            let mut cnt = 0usize;
            for a in 0..self.spec.n {
                for step in [-1isize, 1] {
                    let j = idx[a] as isize + step;
                    if j < 0 || j >= self.spec.counts[a] as isize {
                        continue;
                    }
                    let mut nb = idx.clone();
                    nb[a] = j as usize;
                    let f = self.spec.flat(&nb);
                    if self.flags[f] {
                        continue;
                    }
                    acc.iter_mut().zip(self.value(f)).for_each(|(o, &v)| *o += v);
                    cnt += 1;
                }
            }
            if cnt > 0 {
                for c in 0..d {
                    vals[i * d + c] = acc[c] / T::of(cnt);
                }
            }
        }
        vals
    }
}

/// Nearest-point projection onto `S^{d-1}`.
pub fn project_to_sphere<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let r = norm2(v).sqrt();
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::Domain("projection onto the sphere undefined at 0".into()));
    }
    Ok(v.iter().map(|&x| x / r).collect())
}

/// Target manifold `S^{d-1} ⊂ ℝᵈ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereTarget {
    pub d: usize,
}

impl SphereTarget {
    pub fn project<T: Real>(&self, v: &[T]) -> Result<Vec<T>> {
        project_to_sphere(v)
    }

    /// Orthogonal projection of `v` onto `T_u S^{d-1} = u^⊥`.
    pub fn tangent<T: Real>(&self, u: &[T], v: &[T]) -> Vec<T> {
        let c = dot(u, v);
        v.iter().zip(u).map(|(&a, &b)| a - c * b).collect()
    }
}

/// `y ↦ u(x0 + r·y)` resampled on the same grid.
pub fn rescale_field<T: Real>(u: &VectorField<T>, x0: &[T], r: T) -> Result<VectorField<T>> {
    if !(r > T::zero()) {
        return Err(Error::Precondition(format!("scale must be positive, got {r}")));
    }
    if x0.len() != u.spec.n {
        return Err(Error::Precondition("center dimension mismatch".into()));
    }
    let spec = u.spec.clone();
    let d = spec.d;
    let mut values = Vec::with_capacity(spec.len() * d);
    for y in spec.nodes() {
        let p: Vec<T> = y.iter().zip(x0).map(|(&yv, &xv)| xv + r * yv).collect();
        values.extend(u.sample(&p)?);
    }
    let flags = vec![false; spec.len()];
    let mut out = VectorField { spec, values, flags, exterior: u.exterior.rescaled(x0, r) };
    // A flagged node marks a singular point; carry the point, not the node.
    for i in (0..u.spec.len()).filter(|&i| u.flags[i]) {
        let x = u.spec.coord_flat(i);
        let y: Vec<T> = x.iter().zip(x0).map(|(&xv, &c)| (xv - c) / r).collect();
        mark_singular(&mut out, &y);
    }
    Ok(out)
}

/// Samples of `x ↦ x/|x|` (n = d = 2). The node nearest the origin, if the
/// origin lies in its cell, holds the placeholder `(1, 0)` and is flagged.
pub fn analytic_vortex<T: Real>(spec: &GridSpec<T>) -> Result<VectorField<T>> {
    if spec.n != 2 || spec.d != 2 {
        return Err(Error::Precondition(format!("vortex needs n = d = 2, got n = {}, d = {}", spec.n, spec.d)));
    }
    let map = AnalyticMap::identity(AnalyticKind::Vortex, 2);
    let mut u = VectorField::from_fn(spec.clone(), Exterior::Analytic(map.clone()), |x| map.eval(x));
    mark_singular(&mut u, &[T::zero(), T::zero()]);
    Ok(u)
}

/// Flag the node whose cell contains `p` and set its value to `e₁`.
pub(crate) fn mark_singular<T: Real>(u: &mut VectorField<T>, p: &[T]) {
    let idx = u.spec.nearest(p);
    let x = u.spec.coord(&idx);
    let half = u.spec.h * T::lit(0.5) * (T::one() + T::lit(1e-9));
    if x.iter().zip(p).all(|(&a, &b)| (a - b).abs() <= half) {
        let f = u.spec.flat(&idx);
        u.flags[f] = true;
        let v = u.value_mut(f);
        v.iter_mut().for_each(|c| *c = T::zero());
        v[0] = T::one();
    }
}

/// Jacobian field, layout `[node][axis][component]`. Centered differences
/// in the interior, two-point one-sided differences on faces.
pub fn gradient<T: Real>(u: &VectorField<T>) -> Vec<T> {
    gradient_of(&u.spec, &u.values)
}

pub(crate) fn gradient_of<T: Real>(spec: &GridSpec<T>, values: &[T]) -> Vec<T> {
    let (n, d) = (spec.n, spec.d);
    let mut g = vec![T::zero(); spec.len() * n * d];
    let strides = strides(&spec.counts);
    let inv_h = T::one() / spec.h;
    let half_inv_h = T::lit(0.5) * inv_h;
    for i in 0..spec.len() {
        let idx = spec.multi(i);
        for a in 0..n {
            let (lo, hi, scale) = if idx[a] == 0 {
                (i, i + strides[a], inv_h)
            } else if idx[a] == spec.counts[a] - 1 {
                (i - strides[a], i, inv_h)
            } else {
                (i - strides[a], i + strides[a], half_inv_h)
            };
            for c in 0..d {
                g[(i * n + a) * d + c] = (values[hi * d + c] - values[lo * d + c]) * scale;
            }
        }
    }
    g
}

/// Transpose of [`gradient`] as a linear map: given `w` with the Jacobian
/// layout, returns `Gᵀw` with the value layout.
pub fn gradient_transpose<T: Real>(spec: &GridSpec<T>, w: &[T]) -> Vec<T> {
    let (n, d) = (spec.n, spec.d);
    let mut out = vec![T::zero(); spec.len() * d];
    let strides = strides(&spec.counts);
    let inv_h = T::one() / spec.h;
    let half_inv_h = T::lit(0.5) * inv_h;
    for i in 0..spec.len() {
        let idx = spec.multi(i);
        for a in 0..n {
            let (lo, hi, scale) = if idx[a] == 0 {
                (i, i + strides[a], inv_h)
            } else if idx[a] == spec.counts[a] - 1 {
                (i - strides[a], i, inv_h)
            } else {
                (i - strides[a], i + strides[a], half_inv_h)
            };
            for c in 0..d {
                let v = w[(i * n + a) * d + c] * scale;
                out[hi * d + c] += v;
                out[lo * d + c] -= v;
            }
        }
    }
    out
}

/// Frobenius norm of the Jacobian at each node.
pub fn gradient_norms<T: Real>(u: &VectorField<T>) -> Vec<T> {
    let g = gradient(u);
    let m = u.spec.n * u.spec.d;
    g.chunks(m).map(|c| norm2(c).sqrt()).collect()
}

pub(crate) fn strides(counts: &[usize]) -> Vec<usize> {
    let n = counts.len();
    let mut s = vec![1usize; n];
    for a in (0..n.saturating_sub(1)).rev() {
        s[a] = s[a + 1] * counts[a + 1];
    }
    s
}
