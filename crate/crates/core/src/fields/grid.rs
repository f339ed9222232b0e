use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::increment;
use crate::scalar::Real;

/// Uniform tensor grid in ℝⁿ carrying values in ℝᵈ.
///
/// Node `i` (a multi-index) sits at `origin + h·i`. Each node owns the cell
/// `origin + h·i ± h/2`; the union of cells is the *cell box*, which is the
/// region quadratures treat as sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub n: usize,
    pub d: usize,
    pub origin: Vec<T>,
    pub h: T,
    pub counts: Vec<usize>,
}

impl<T: Real> GridSpec<T> {
    pub fn new(d: usize, origin: Vec<T>, h: T, counts: Vec<usize>) -> Result<Self> {
        let n = origin.len();
        if n == 0 || d == 0 {
            return Err(Error::InvalidGrid("dimensions must be positive".into()));
        }
        if counts.len() != n {
            return Err(Error::InvalidGrid(format!("expected {n} counts, got {}", counts.len())));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::InvalidGrid("need at least 2 nodes per axis".into()));
        }
        Ok(Self { n, d, origin, h, counts })
    }

    /// Grid with `per_unit` intervals per unit length covering `[-half, half]ⁿ`,
    /// with a node at the origin.
    pub fn centered(n: usize, d: usize, half: T, per_unit: usize) -> Result<Self> {
        let h = T::one() / T::of(per_unit);
        let m = (half / h).round().to_usize().ok_or_else(|| Error::InvalidGrid("bad extent".into()))?;
        Self::new(d, vec![-(T::of(m)) * h; n], h, vec![2 * m + 1; n])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        for a in (0..self.n).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn coord(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().zip(&self.origin).map(|(&i, &o)| o + T::of(i) * self.h).collect()
    }

    pub fn coord_flat(&self, flat: usize) -> Vec<T> {
        self.coord(&self.multi(flat))
    }

    /// Iterate node coordinates in row-major order.
    pub fn nodes(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        let mut idx = vec![0usize; self.n];
        (0..self.len()).map(move |_| {
            let c = self.coord(&idx);
            increment(&mut idx, &self.counts);
            c
        })
    }

    pub fn node_lo(&self) -> Vec<T> {
        self.origin.clone()
    }

    pub fn node_hi(&self) -> Vec<T> {
        self.origin.iter().zip(&self.counts).map(|(&o, &c)| o + T::of(c - 1) * self.h).collect()
    }

    pub fn cell_lo(&self) -> Vec<T> {
        let half = self.h * T::lit(0.5);
        self.origin.iter().map(|&o| o - half).collect()
    }

    pub fn cell_hi(&self) -> Vec<T> {
        let half = self.h * T::lit(0.5);
        self.node_hi().into_iter().map(|v| v + half).collect()
    }

    pub fn cell_volume(&self) -> T {
        self.h.powi(self.n as i32)
    }

    pub fn contains_node_box(&self, x: &[T]) -> bool {
        let lo = self.node_lo();
        let hi = self.node_hi();
        x.iter().zip(lo.iter().zip(&hi)).all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Nearest node (clamped into the grid).
    pub fn nearest(&self, x: &[T]) -> Vec<usize> {
        x.iter()
            .zip(&self.origin)
            .zip(&self.counts)
            .map(|((&v, &o), &c)| {
                let f = ((v - o) / self.h).round();
                let f = f.max(T::zero()).min(T::of(c - 1));
                f.to_usize().unwrap_or(0)
            })
            .collect()
    }

    /// Multilinear interpolation stencil `(flat index, weight)` for a point in
    /// the node box, `None` outside.
    pub fn stencil(&self, x: &[T]) -> Option<Vec<(usize, T)>> {
        let tol = self.h * T::lit(1e-9);
        let mut base = vec![0usize; self.n];
        let mut frac = vec![T::zero(); self.n];
        for a in 0..self.n {
            let s = (x[a] - self.origin[a]) / self.h;
            let top = T::of(self.counts[a] - 1);
            if s < -tol / self.h || s > top + tol / self.h {
                return None;
            }
            let s = s.max(T::zero()).min(top);
            let mut i = s.floor().to_usize().unwrap_or(0);
            if i >= self.counts[a] - 1 {
                i = self.counts[a] - 2;
            }
            base[a] = i;
            frac[a] = s - T::of(i);
        }
        let mut out = Vec::with_capacity(1 << self.n);
        for corner in 0..(1usize << self.n) {
            let mut w = T::one();
            let mut idx = base.clone();
            for a in 0..self.n {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= T::one() - frac[a];
                }
            }
            out.push((self.flat(&idx), w));
        }
        Some(out)
    }

    /// True when `other` has the same spacing and its nodes coincide with nodes of `self`.
    pub fn is_aligned_subgrid(&self, other: &GridSpec<T>) -> bool {
        if other.n != self.n || (other.h - self.h).abs() > self.h * T::lit(1e-9) {
            return false;
        }
        (0..self.n).all(|a| {
            let s = (other.origin[a] - self.origin[a]) / self.h;
            let r = s.round();
            (s - r).abs() < T::lit(1e-6)
                && r >= T::zero()
                && r.to_usize().map(|o| o + other.counts[a] <= self.counts[a]).unwrap_or(false)
        })
    }
}

/// Closed ball `D_r(c)` in ℝⁿ, used as the domain Ω of energies and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Real> Ball<T> {
    pub fn new(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::Precondition(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &[T]) -> bool {
        crate::scalar::dist2(x, &self.center) <= self.radius * self.radius
    }

    /// Whether the ball lies inside the cell box of `spec`.
    pub fn inside_cells(&self, spec: &GridSpec<T>) -> bool {
        let lo = spec.cell_lo();
        let hi = spec.cell_hi();
        (0..spec.n).all(|a| self.center[a] - self.radius >= lo[a] && self.center[a] + self.radius <= hi[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::<f64>::new(2, vec![0.0], 0.0, vec![3]).is_err());
        assert!(GridSpec::<f64>::new(2, vec![0.0], 0.1, vec![1]).is_err());
        assert!(GridSpec::<f64>::new(2, vec![0.0, 0.0], 0.1, vec![3]).is_err());
    }

    #[test]
    fn flat_and_multi_are_inverse() {
        let g = GridSpec::<f64>::new(1, vec![0.0, 0.0, 0.0], 0.5, vec![3, 4, 5]).unwrap();
        for f in 0..g.len() {
            assert_eq!(g.flat(&g.multi(f)), f);
        }
        let nodes: Vec<_> = g.nodes().collect();
        assert_eq!(nodes[7], g.coord_flat(7));
    }

    #[test]
    fn stencil_weights_sum_to_one() {
        let g = GridSpec::<f64>::centered(2, 1, 1.0, 4).unwrap();
        let s = g.stencil(&[0.13, -0.71]).unwrap();
        let total: f64 = s.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(g.stencil(&[1.2, 0.0]).is_none());
    }
}
