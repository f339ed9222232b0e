use serde::{Deserialize, Serialize};

use crate::scalar::{norm2, Real};

/// Closed-form maps usable as exterior data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalyticKind {
    /// `y ↦ y/|y|` into `S^{n-1}` (d = n).
    Vortex,
    /// `y ↦ (cos y₁, sin y₁)` into `S¹` (d = 2).
    Wave,
}

/// `y ↦ kind(shift + scale·y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMap<T> {
    pub kind: AnalyticKind,
    pub shift: Vec<T>,
    pub scale: T,
}

impl<T: Real> AnalyticMap<T> {
    pub fn identity(kind: AnalyticKind, n: usize) -> Self {
        Self { kind, shift: vec![T::zero(); n], scale: T::one() }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == T::one() && self.shift.iter().all(|&s| s == T::zero())
    }

    fn pre(&self, y: &[T]) -> Vec<T> {
        y.iter().zip(&self.shift).map(|(&v, &s)| s + self.scale * v).collect()
    }

    pub fn eval(&self, y: &[T]) -> Vec<T> {
        let p = self.pre(y);
        match self.kind {
            AnalyticKind::Vortex => {
                let r = norm2(&p).sqrt();
                if r == T::zero() {
                    let mut e = vec![T::zero(); p.len()];
                    e[0] = T::one();
                    e
                } else {
                    p.iter().map(|&v| v / r).collect()
                }
            }
            AnalyticKind::Wave => vec![p[0].cos(), p[0].sin()],
        }
    }

    /// Frobenius norm of the Jacobian at `y`.
    pub fn grad_norm(&self, y: &[T]) -> T {
        let p = self.pre(y);
        match self.kind {
            AnalyticKind::Vortex => {
                let r = norm2(&p).sqrt();
                self.scale.abs() * T::of(p.len() - 1).sqrt() / r
            }
            AnalyticKind::Wave => self.scale.abs(),
        }
    }

    /// Upper bound of the Jacobian norm over points `y` with `|y - c| ≥ dist`
    /// where `c` is the preimage of the singular point.
    pub fn grad_norm_bound(&self, min_dist_to_singularity: T) -> T {
        match self.kind {
            AnalyticKind::Vortex => {
                let dim = T::of(self.shift.len() - 1).sqrt();
                if min_dist_to_singularity <= T::zero() {
                    T::infinity()
                } else {
                    dim / min_dist_to_singularity
                }
            }
            AnalyticKind::Wave => self.scale.abs(),
        }
    }

    /// Point mapped to the vortex singularity, if any.
    pub fn singular_point(&self) -> Option<Vec<T>> {
        match self.kind {
            AnalyticKind::Vortex => Some(self.shift.iter().map(|&s| -s / self.scale).collect()),
            AnalyticKind::Wave => None,
        }
    }

    pub fn target_dim(&self, n: usize) -> usize {
        match self.kind {
            AnalyticKind::Vortex => n,
            AnalyticKind::Wave => 2,
        }
    }
}

/// How the far field of a Poisson-type integral is handled.
#[derive(Debug, Clone, PartialEq)]
pub enum FarField<T> {
    /// The data tends to a known mean far away; the kernel tail is
    /// integrated analytically against it.
    Mean(Vec<T>),
    /// Smooth data integrated by the transformed exterior rule.
    Quadrature,
}

/// Values of the map outside the sampled grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Exterior<T> {
    None,
    Constant(Vec<T>),
    Analytic(AnalyticMap<T>),
}

impl<T: Real> Exterior<T> {
    pub fn vortex(n: usize) -> Self {
        Exterior::Analytic(AnalyticMap::identity(AnalyticKind::Vortex, n))
    }

    pub fn wave(n: usize) -> Self {
        Exterior::Analytic(AnalyticMap::identity(AnalyticKind::Wave, n))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Exterior::None)
    }

    pub fn eval(&self, y: &[T]) -> Option<Vec<T>> {
        match self {
            Exterior::None => None,
            Exterior::Constant(c) => Some(c.clone()),
            Exterior::Analytic(m) => Some(m.eval(y)),
        }
    }

    /// Descriptor of `y ↦ self(x0 + r·y)`.
    pub fn rescaled(&self, x0: &[T], r: T) -> Self {
        match self {
            Exterior::None => Exterior::None,
            Exterior::Constant(c) => Exterior::Constant(c.clone()),
            Exterior::Analytic(m) => Exterior::Analytic(AnalyticMap {
                kind: m.kind,
                shift: m.shift.iter().zip(x0).map(|(&s, &x)| s + m.scale * x).collect(),
                scale: m.scale * r,
            }),
        }
    }

    pub fn far_field(&self) -> Option<FarField<T>> {
        match self {
            Exterior::None => None,
            Exterior::Constant(c) => Some(FarField::Mean(c.clone())),
            Exterior::Analytic(m) => match m.kind {
                AnalyticKind::Vortex => Some(FarField::Quadrature),
                // Oscillatory: the kernel tail averages it to zero.
                AnalyticKind::Wave => Some(FarField::Mean(vec![T::zero(); 2])),
            },
        }
    }

    /// Whether the data is smooth and non-oscillatory at infinity, so the
    /// transformed exterior rule converges for nonlocal energies.
    pub fn supports_energy_tail(&self) -> bool {
        match self {
            Exterior::None => false,
            Exterior::Constant(_) => true,
            Exterior::Analytic(m) => m.kind == AnalyticKind::Vortex,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vortex_rescaling_composes() {
        let e = Exterior::<f64>::vortex(2);
        let r = e.rescaled(&[1.0, 0.0], 0.5);
        let v = r.eval(&[2.0, 2.0]).unwrap();
        // (1,0) + 0.5·(2,2) = (2,1)
        let s = 5f64.sqrt();
        assert!((v[0] - 2.0 / s).abs() < 1e-15 && (v[1] - 1.0 / s).abs() < 1e-15);
        if let Exterior::Analytic(m) = r {
            assert_eq!(m.singular_point().unwrap(), vec![-2.0, 0.0]);
        }
    }
}
