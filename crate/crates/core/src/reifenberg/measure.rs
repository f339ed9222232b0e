//! Discrete measures, second moments, Jones β₂ numbers, multiscale
//! integrals, the discrete Reifenberg predicate, and Vitali subcovers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Eigen, SymMatrix};
use crate::scalar::{dist2, Real};

/// Volume of the unit ball in ℝᵏ.
pub fn unit_ball_volume(k: usize) -> f64 {
    let k = k as f64;
    std::f64::consts::PI.powf(k / 2.0) / libm_gamma(k / 2.0 + 1.0)
}

/// Γ for half-integers and integers, which is all ball volumes need.
fn libm_gamma(x: f64) -> f64 {
    // x = m or m + 1/2 with m ≥ 1 (or x = 1/2)
    let mut acc = 1.0;
    let mut y = x;
    while y > 1.0 {
        y -= 1.0;
        acc *= y;
    }
    if (y - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// A weighted point; packing measures also carry the ball radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom<T> {
    pub point: Vec<T>,
    pub weight: T,
    pub radius: Option<T>,
}

/// `μ = Σ wᵢ δ_{yᵢ}` with positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure<T> {
    pub n: usize,
    pub atoms: Vec<Atom<T>>,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(n: usize, atoms: Vec<Atom<T>>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if a.point.len() != n {
                return Err(Error::InvalidMeasure(format!("atom {i} has dimension {}, expected {n}", a.point.len())));
            }
            if !(a.weight > T::zero()) || !a.weight.is_finite() || a.point.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom {i} needs finite coordinates and positive weight")));
            }
            if let Some(r) = a.radius {
                if !(r > T::zero()) {
                    return Err(Error::InvalidMeasure(format!("atom {i} has nonpositive radius")));
                }
            }
        }
        Ok(Self { n, atoms })
    }

    pub fn from_points(points: &[Vec<T>], weights: &[T]) -> Result<Self> {
        let n = points.first().map_or(1, |p| p.len());
        let atoms = points
            .iter()
            .zip(weights)
            .map(|(p, &w)| Atom { point: p.clone(), weight: w, radius: None })
            .collect();
        Self::new(n, atoms)
    }

    /// Packing measure `Σ ω_k r_x^k δ_x`; the balls `B_{r_x/5}(x)` must be
    /// pairwise disjoint.
    pub fn packing(centers: &[Vec<T>], radii: &[T], k: usize) -> Result<Self> {
        if centers.len() != radii.len() {
            return Err(Error::InvalidMeasure("one radius per centre required".into()));
        }
        let fifth = T::lit(0.2);
        for i in 0..centers.len() {
            for j in 0..i {
                let d = dist2(&centers[i], &centers[j]).sqrt();
                if d < fifth * (radii[i] + radii[j]) {
                    return Err(Error::InvalidMeasure(format!(
                        "balls {j} and {i} violate 1/5-disjointness (distance {d}, radii {} and {})",
                        radii[j], radii[i]
                    )));
                }
            }
        }
        let wk = T::lit(unit_ball_volume(k));
        let n = centers.first().map_or(1, |p| p.len());
        let atoms = centers
            .iter()
            .zip(radii)
            .map(|(p, &r)| Atom { point: p.clone(), weight: wk * r.powi(k as i32), radius: Some(r) })
            .collect();
        Self::new(n, atoms)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_packing(&self) -> bool {
        !self.atoms.is_empty() && self.atoms.iter().all(|a| a.radius.is_some())
    }

    /// `Σ r_x^k` over atoms with radii.
    pub fn packing_sum(&self, k: usize) -> T {
        self.atoms.iter().filter_map(|a| a.radius).map(|r| r.powi(k as i32)).sum()
    }

    /// Atoms in the closed ball `D_r(x)`.
    pub fn restricted<'a>(&'a self, x: &'a [T], r: T) -> impl Iterator<Item = &'a Atom<T>> + 'a {
        let r2 = r * r;
        self.atoms.iter().filter(move |a| dist2(&a.point, x) <= r2)
    }

    /// Parse CSV rows `x1,…,xn,weight[,radius]`. A non-numeric first line is
    /// taken as a header; `has_radius` selects the trailing radius column.
    pub fn from_csv(text: &str, n: usize, has_radius: bool) -> Result<Self> {
        let width = n + 1 + usize::from(has_radius);
        let mut atoms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if atoms.is_empty() && lineno == 0 => continue,
                Err(e) => return Err(Error::Parse { line: lineno + 1, msg: e.to_string() }),
            };
            if values.len() != width {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {width} columns, found {}", values.len()),
                });
            }
            atoms.push(Atom {
                point: values[..n].iter().map(|&v| T::lit(v)).collect(),
                weight: T::lit(values[n]),
                radius: has_radius.then(|| T::lit(values[n + 1])),
            });
        }
        Self::new(n, atoms)
    }
}

/// Unnormalized second moment of `μ ⌊ D_r(x)` about its centre of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport<T> {
    pub mass: T,
    pub center_of_mass: Vec<T>,
    pub q: SymMatrix<T>,
    pub eigen: Eigen<T>,
    /// Set when no atom lies in the ball; everything else is then zero.
    pub empty: bool,
}

pub fn second_moment<T: Real>(mu: &DiscreteMeasure<T>, x: &[T], r: T) -> MomentReport<T> {
    let n = mu.n;
    let atoms: Vec<&Atom<T>> = mu.restricted(x, r).collect();
    let mut q = SymMatrix::zeros(n);
    if atoms.is_empty() {
        let eigen = q.eigen();
        return MomentReport { mass: T::zero(), center_of_mass: x.to_vec(), q, eigen, empty: true };
    }
    let mass: T = atoms.iter().map(|a| a.weight).sum();
    let mut cm = vec![T::zero(); n];
    for a in &atoms {
        cm.iter_mut().zip(&a.point).for_each(|(c, &p)| *c += a.weight * p);
    }
    cm.iter_mut().for_each(|c| *c /= mass);
    for a in &atoms {
        let y: Vec<T> = a.point.iter().zip(&cm).map(|(&p, &c)| p - c).collect();
        for i in 0..n {
            for j in i..n {
                q.add_sym(i, j, a.weight * y[i] * y[j]);
            }
        }
    }
    let mut eigen = q.eigen();
    // Q is positive semidefinite; clear round-off negatives
    eigen.values.iter_mut().for_each(|v| *v = v.max(T::zero()));
    MomentReport { mass, center_of_mass: cm, q, eigen, empty: false }
}

/// Affine k-plane `base + span(frame)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePlane<T> {
    pub base: Vec<T>,
    pub frame: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaReport<T> {
    /// `β²`, not `β`.
    pub beta2: T,
    pub plane: AffinePlane<T>,
    pub empty: bool,
}

/// `β^k_{2,μ}(x, r)² = r^{−k−2} Σ_{j>k} λ_j(Q)` with the best plane
/// `x_cm + span(v₁, …, v_k)`.
pub fn jones_beta<T: Real>(mu: &DiscreteMeasure<T>, x: &[T], r: T, k: usize) -> Result<BetaReport<T>> {
    if k > mu.n {
        return Err(Error::Precondition(format!("plane dimension {k} exceeds n = {}", mu.n)));
    }
    if !(r > T::zero()) {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    let m = second_moment(mu, x, r);
    let tail: T = m.eigen.values[k..].iter().copied().sum();
    let beta2 = tail / r.powi(k as i32 + 2);
    let plane = AffinePlane { base: m.center_of_mass.clone(), frame: m.eigen.vectors[..k].to_vec() };
    Ok(BetaReport { beta2, plane, empty: m.empty })
}

/// `∫_{D_r(x)} Σ_j β(y, s_j)² ln 2 dμ(y)` over `s_j = r·2^{−j}`, `j = 0..=levels`:
/// the midpoint rule in `log s` for `∫_0^r β² ds/s`.
pub fn multiscale_beta_integral<T: Real>(
    mu: &DiscreteMeasure<T>,
    x: &[T],
    r: T,
    k: usize,
    levels: usize,
) -> Result<T> {
    let ln2 = T::LN_2();
    let mut total = T::zero();
    for a in mu.restricted(x, r) {
        let mut inner = T::zero();
        let mut s = r;
        for _ in 0..=levels {
            inner += jones_beta(mu, &a.point, s, k)?.beta2;
            s *= T::lit(0.5);
        }
        total += a.weight * inner * ln2;
    }
    Ok(total)
}

/// Verdict for one ball of the predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallVerdict<T> {
    pub atom: usize,
    pub radius: T,
    pub integral: T,
    pub threshold: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReifenbergReport<T> {
    pub verdicts: Vec<BallVerdict<T>>,
    pub packing_sum: T,
    pub pass: bool,
}

/// Number of dyadic levels below `r` needed to reach the smallest packing
/// radius (β vanishes below it on an isolated atom).
fn levels_for<T: Real>(mu: &DiscreteMeasure<T>, r: T) -> usize {
    let rmin = mu.atoms.iter().filter_map(|a| a.radius).fold(T::infinity(), T::min);
    if !rmin.is_finite() {
        return 10;
    }
    let l = (r / rmin).log2().ceil().to_isize().unwrap_or(0) + 1;
    l.clamp(0, 40) as usize
}

/// Check `∫_{D_r(x)} ∫_0^r β² ds/s dμ < δ₆² r^k` on atom-centred dyadic balls
/// `D_r(x) ⊆ D_R(c)`, `r = R·2^{−j}`, down to the smallest packing radius.
pub fn reifenberg_predicate<T: Real>(
    mu: &DiscreteMeasure<T>,
    k: usize,
    delta6: T,
    root_center: &[T],
    root_radius: T,
) -> Result<ReifenbergReport<T>> {
    if !mu.is_empty() && !mu.is_packing() {
        return Err(Error::InvalidMeasure("the predicate needs packing radii on every atom".into()));
    }
    let rmin = mu.atoms.iter().filter_map(|a| a.radius).fold(T::infinity(), T::min);
    let mut verdicts = Vec::new();
    for (i, a) in mu.atoms.iter().enumerate() {
        let d = dist2(&a.point, root_center).sqrt();
        let mut r = root_radius;
        while r >= rmin {
            if d + r <= root_radius {
                let integral = multiscale_beta_integral(mu, &a.point, r, k, levels_for(mu, r))?;
                let threshold = delta6 * delta6 * r.powi(k as i32);
                verdicts.push(BallVerdict { atom: i, radius: r, integral, threshold, pass: integral < threshold });
            }
            r *= T::lit(0.5);
        }
    }
    let pass = verdicts.iter().all(|v| v.pass);
    Ok(ReifenbergReport { verdicts, packing_sum: mu.packing_sum(k), pass })
}

/// Greedy Vitali subcover: balls by descending radius (stable in input
/// order), keeping a ball iff its 1/5-shrink misses every kept 1/5-shrink.
/// Every input centre then lies in some kept ball. Returns kept indices.
pub fn vitali_subcover<T: Real>(balls: &[(Vec<T>, T)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.sort_by(|&a, &b| balls[b].1.partial_cmp(&balls[a].1).expect("finite radii"));
    let fifth = T::lit(0.2);
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let (c, r) = &balls[i];
        let free = kept.iter().all(|&j| {
            let (cj, rj) = &balls[j];
            dist2(c, cj).sqrt() >= fifth * (*r + *rj)
        });
        if free {
            kept.push(i);
        }
    }
    kept
}
