//! Quadrature building blocks: Gauss–Legendre rules, a transformed rule for
//! the unbounded complement of an axis-aligned box, and FFT-based lattice
//! convolution.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(m);
    let half = 0.5 * (b - a);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (a + half * (xi + 1.0), half * wi))
        .collect()
}

/// Quadrature nodes for the exterior of an axis-aligned box `[lo, hi]`.
///
/// In one dimension each ray `y = c ± a/t`, `t ∈ (0,1]` is integrated with
/// Gauss–Legendre in `t`. In two dimensions the complement is split into four
/// polar sectors (one per face) around the box centre, with radius
/// `ρ = ρ_face(θ)/t`. Integrands decaying like `|y|^{-(n+1)}` become bounded
/// in `t`, which is what the Poisson and energy kernels need.
///
/// With `reach = Some(R)` the rule stops at distance `R` from the box centre
/// (measured along each ray), for data whose tail is not worth integrating.
#[derive(Debug, Clone)]
pub struct ExteriorRule<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> ExteriorRule<T> {
    pub fn new(lo: &[T], hi: &[T], radial_order: usize, angular_order: usize, reach: Option<f64>) -> Result<Self> {
        let n = lo.len();
        let lo: Vec<f64> = lo.iter().map(|v| v.as_f64()).collect();
        let hi: Vec<f64> = hi.iter().map(|v| v.as_f64()).collect();
        let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let a: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let radial = |edge: f64| {
            let t0 = reach.map_or(0.0, |r| (edge / r).min(1.0));
            gauss_legendre_on(radial_order, t0, 1.0)
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match n {
            1 => {
                for sign in [-1.0, 1.0] {
                    for (t, wt) in radial(a[0]) {
                        points.push(vec![T::lit(c[0] + sign * a[0] / t)]);
                        weights.push(T::lit(wt * a[0] / (t * t)));
                    }
                }
            }
            2 => {
                let tc = a[1].atan2(a[0]);
                let pi = std::f64::consts::PI;
                // (angle range, face distance along normal, normal is x-axis?)
                let faces = [
                    (-tc, tc, a[0], true),
                    (tc, pi - tc, a[1], false),
                    (pi - tc, pi + tc, a[0], true),
                    (pi + tc, 2.0 * pi - tc, a[1], false),
                ];
                for (t0, t1, dist, x_face) in faces {
                    for (th, wth) in gauss_legendre_on(angular_order, t0, t1) {
                        let proj = if x_face { th.cos() } else { th.sin() };
                        let edge = dist / proj.abs();
                        for (t, wt) in radial(edge) {
                            let rho = edge / t;
                            points.push(vec![T::lit(c[0] + rho * th.cos()), T::lit(c[1] + rho * th.sin())]);
                            weights.push(T::lit(wth * wt * edge * edge / (t * t * t)));
                        }
                    }
                }
            }
            _ => {
                return Err(Error::Precondition(format!(
                    "exterior quadrature implemented for n ≤ 2, got n = {n}"
                )))
            }
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn fast_len(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Zero-padded FFT machinery for linear (non-periodic) convolution of lattice
/// data with a translation invariant kernel.
///
/// Spectra of data and of kernels can be computed independently and reused,
/// which matters both when one kernel meets many data sets (energy
/// minimisation) and when one data set meets many kernels (Poisson levels).
pub struct LatticeFft<T: Real> {
    dims: Vec<usize>,
    padded: Vec<usize>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

/// A transformed data set or kernel on the padded lattice.
#[derive(Clone)]
pub struct Spectrum<T>(Vec<Complex<T>>);

impl<T: Real> LatticeFft<T> {
    pub fn new(dims: &[usize]) -> Self {
        let padded: Vec<usize> = dims.iter().map(|&d| fast_len(2 * d - 1)).collect();
        let mut planner = FftPlanner::<T>::new();
        let forward = padded.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inverse = padded.iter().map(|&m| planner.plan_fft_inverse(m)).collect();
        Self { dims: dims.to_vec(), padded, forward, inverse }
    }

    /// Transform lattice data given in row-major order over `dims`.
    pub fn spectrum(&self, data: &[T]) -> Spectrum<T> {
        let total: usize = self.padded.iter().product();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); total];
        let n = self.dims.len();
        let mut idx = vec![0usize; n];
        for &v in data {
            buf[self.padded_index(&idx)] = Complex::new(v, T::zero());
            increment(&mut idx, &self.dims);
        }
        self.transform(&mut buf, false);
        Spectrum(buf)
    }

    /// Transform `kernel(offset)`, where `offset[a]` is the signed lattice
    /// displacement along axis `a`.
    pub fn kernel_spectrum<F>(&self, kernel: F) -> Spectrum<T>
    where
        F: Fn(&[isize]) -> T,
    {
        let n = self.dims.len();
        let total: usize = self.padded.iter().product();
        let mut kb = vec![Complex::new(T::zero(), T::zero()); total];
        let mut idx = vec![0usize; n];
        let mut off = vec![0isize; n];
        for slot in kb.iter_mut() {
            let mut inside = true;
            for a in 0..n {
                let m = self.padded[a] as isize;
                let i = idx[a] as isize;
                let o = if i < self.dims[a] as isize { i } else { i - m };
                if o <= -(self.dims[a] as isize) {
                    inside = false;
                }
                off[a] = o;
            }
            if inside {
                *slot = Complex::new(kernel(&off), T::zero());
            }
            increment(&mut idx, &self.padded);
        }
        self.transform(&mut kb, false);
        Spectrum(kb)
    }

    /// `out[i] = Σ_j kernel(i - j) · data[j]` on the unpadded lattice.
    pub fn convolve(&self, data: &Spectrum<T>, kernel: &Spectrum<T>) -> Vec<T> {
        let total: usize = self.padded.iter().product();
        let scale = T::one() / T::of(total);
        let mut prod: Vec<Complex<T>> = data.0.iter().zip(&kernel.0).map(|(a, b)| a * b).collect();
        self.transform(&mut prod, true);
        let n = self.dims.len();
        let count: usize = self.dims.iter().product();
        let mut out = Vec::with_capacity(count);
        let mut idx = vec![0usize; n];
        for _ in 0..count {
            out.push(prod[self.padded_index(&idx)].re * scale);
            increment(&mut idx, &self.dims);
        }
        out
    }

    fn padded_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.padded).fold(0, |p, (&i, &m)| p * m + i)
    }

    fn transform(&self, buf: &mut [Complex<T>], inverse: bool) {
        let n = self.padded.len();
        for axis in 0..n {
            let len = self.padded[axis];
            let stride: usize = self.padded[axis + 1..].iter().product();
            let outer: usize = self.padded[..axis].iter().product();
            let plan = if inverse { &self.inverse[axis] } else { &self.forward[axis] };
            let mut line = vec![Complex::new(T::zero(), T::zero()); len];
            let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * len * stride + s;
                    for (k, l) in line.iter_mut().enumerate() {
                        *l = buf[base + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, l) in line.iter().enumerate() {
                        buf[base + k * stride] = *l;
                    }
                }
            }
        }
    }
}

/// Row-major odometer increment (last axis fastest).
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return;
        }
        idx[a] = 0;
    }
}
