//! Small dense linear algebra: symmetric eigen-decomposition and
//! Gram–Schmidt helpers for frames of at most a handful of vectors.

use crate::scalar::{dot, norm2, Real};

/// Row-major square symmetric matrix of side `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Quadratic form `vᵀ A w`.
    pub fn form(&self, v: &[T], w: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                s += v[i] * self.get(i, j) * w[j];
            }
        }
        s
    }

    /// Eigen-decomposition with eigenvalues sorted in descending order.
    pub fn eigen(&self) -> Eigen<T> {
        jacobi_eigen(self)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<T>>,
}

/// Cyclic Jacobi rotations; adequate and exact enough for n ≤ 10.
fn jacobi_eigen<T: Real>(m: &SymMatrix<T>) -> Eigen<T> {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += a[i * n + i] * a[i * n + i];
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= T::epsilon() * T::epsilon() * (diag + T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Descending; ties broken by index so the output is deterministic.
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<T> = (0..n).map(|k| v[k * n + i]).collect();
            canonical_sign(&mut col);
            col
        })
        .collect();
    Eigen { values, vectors }
}

/// Flip `v` so that its first non-negligible entry is positive.
pub(crate) fn canonical_sign<T: Real>(v: &mut [T]) {
    let tol = T::lit(1e-12);
    if let Some(&first) = v.iter().find(|x| x.abs() > tol) {
        if first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Orthonormalise `vectors` in order (modified Gram–Schmidt). Returns `None`
/// if a vector is (numerically) dependent on its predecessors.
pub fn orthonormalize<T: Real>(vectors: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = norm2(v).sqrt();
        if scale <= T::zero() {
            return None;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, &y)| *x -= c * y);
            }
        }
        let nw = norm2(&w).sqrt();
        if nw <= T::lit(1e-10) * scale {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        out.push(w);
    }
    Some(out)
}

/// Squared distance from `p` to the affine subspace `base + span(frame)`,
/// where `frame` is orthonormal.
pub fn dist2_to_affine<T: Real>(p: &[T], base: &[T], frame: &[Vec<T>]) -> T {
    let mut w: Vec<T> = p.iter().zip(base).map(|(&a, &b)| a - b).collect();
    for q in frame {
        let c = dot(&w, q);
        w.iter_mut().zip(q).for_each(|(x, &y)| *x -= c * y);
    }
    norm2(&w)
}
