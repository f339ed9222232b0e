//! Ball-covering refinement with good/bad/final classification.
//!
//! Θ enters only through [`ThetaOracle`], so the same refinement runs on
//! analytic test densities and on computed extensions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::vitali_subcover;
use crate::error::{Error, Result};
use crate::extension::{theta_density, HalfField};
use crate::linalg::dist2_to_affine;
use crate::quadrature::gauss_legendre_on;
use crate::scalar::{dist2, Real};
use crate::symmetry::effective_span;

/// `(y, s) ↦ Θ(u^e, B_s⁺(y))` for boundary points `y ∈ ℝⁿ`.
pub trait ThetaOracle<T>: Sync {
    fn dim(&self) -> usize;
    fn theta(&self, y: &[T], s: T) -> Result<T>;
}

/// Constant density, the synthetic oracle for sets lying on a plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTheta<T> {
    pub n: usize,
    pub value: T,
}

impl<T: Real> ThetaOracle<T> for ConstantTheta<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn theta(&self, y: &[T], _s: T) -> Result<T> {
        check_dim(y, self.n)?;
        Ok(self.value)
    }
}

/// Exact density of the planar vortex `x/|x|`.
///
/// Its extension is `u^e(x, z) = x / (|(x, z)| + z)` (bounded, harmonic, and
/// equal to the vortex on the boundary), with `|∇u^e|² = 2/(|(x,z)| + z)²`.
/// Homogeneity reduces the half-ball energy to a hemisphere integral of
/// that density times the chord length of each ray inside the ball. At the
/// origin `Θ ≡ π`.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexTheta {
    /// `(cos φ, weight·sin φ)` pairs in the polar angle.
    polar: Vec<(f64, f64, f64)>,
    azimuth: Vec<(f64, f64)>,
}

impl VortexTheta {
    pub fn new(order: usize) -> Self {
        let polar = gauss_legendre_on(order, 0.0, std::f64::consts::FRAC_PI_2)
            .into_iter()
            .map(|(phi, w)| (phi.sin(), phi.cos(), w * phi.sin()))
            .collect();
        // composite rule in ψ: the integrand has kinks where rays graze the sphere
        let panels = 8;
        let mut azimuth = Vec::new();
        for p in 0..panels {
            let a = std::f64::consts::TAU * p as f64 / panels as f64;
            let b = std::f64::consts::TAU * (p + 1) as f64 / panels as f64;
            azimuth.extend(gauss_legendre_on(order / 2 + 1, a, b));
        }
        Self { polar, azimuth }
    }

    /// The density at the vortex centre, `π`.
    pub const THETA_STAR: f64 = std::f64::consts::PI;
}

impl Default for VortexTheta {
    fn default() -> Self {
        Self::new(96)
    }
}

impl<T: Real> ThetaOracle<T> for VortexTheta {
    fn dim(&self) -> usize {
        2
    }

    fn theta(&self, y: &[T], s: T) -> Result<T> {
        check_dim(y, 2)?;
        let s = s.as_f64();
        if !(s > 0.0) {
            return Err(Error::Precondition("radius must be positive".into()));
        }
        let (y0, y1) = (y[0].as_f64(), y[1].as_f64());
        let d2 = y0 * y0 + y1 * y1;
        if d2 == 0.0 {
            return Ok(T::lit(Self::THETA_STAR));
        }
        // chord of the ray t·ω (t > 0) inside |w − Y| < s, Y = (y, 0)
        let c = d2 - s * s;
        let mut acc = 0.0;
        for &(sp, cp, wp) in &self.polar {
            let density = 2.0 / ((1.0 + cp) * (1.0 + cp));
            for &(psi, wq) in &self.azimuth {
                let b = sp * (psi.cos() * y0 + psi.sin() * y1);
                let disc = b * b - c;
                if disc <= 0.0 {
                    continue;
                }
                let root = disc.sqrt();
                let len = (b + root).max(0.0) - (b - root).max(0.0);
                acc += wp * wq * density * len;
            }
        }
        Ok(T::lit(0.5 * acc / s))
    }
}

/// Θ measured on a computed extension.
pub struct FieldTheta<'a, T> {
    pub field: &'a HalfField<T>,
}

impl<T: Real> ThetaOracle<T> for FieldTheta<'_, T> {
    fn dim(&self) -> usize {
        self.field.spec.boundary.n
    }
    fn theta(&self, y: &[T], s: T) -> Result<T> {
        theta_density(self.field, y, s)
    }
}

fn check_dim<T>(y: &[T], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Precondition(format!("point of dimension {} for an oracle on ℝ^{n}", y.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallClass {
    /// Refined further; the energy has not dropped by `δ` at this ball.
    Bad,
    /// Energy dropped by at least `δ`; carries a certificate.
    Final,
    /// Reached the target radius `r`.
    RBall,
}

/// `sup Θ` at the parent ball versus `sup_{y ∈ D_{r_x}(x) ∩ S} Θ(y, 2r_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate<T> {
    pub before: T,
    pub after: T,
    pub drop: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode<T> {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub center: Vec<T>,
    pub radius: T,
    pub class: BallClass,
    pub certificate: Option<Certificate<T>>,
    /// Indices into the input set of the points this ball is responsible for.
    pub points: Vec<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringTree<T> {
    pub k: usize,
    pub center: Vec<T>,
    pub radius: T,
    pub eps: T,
    pub delta: T,
    pub rho: T,
    pub r: T,
    pub nodes: Vec<TreeNode<T>>,
    /// Number of refinement levels actually performed.
    pub iterations: usize,
    /// Points that lay outside the `2ρt/5`-neighbourhood of the spanned
    /// plane when the pinched set spanned `k` dimensions. They are still
    /// covered; a nonzero count means the oracle is not a genuine density.
    pub off_plane: usize,
}

impl<T: Real> CoveringTree<T> {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode<T>> {
        self.nodes.iter().filter(|n| n.children.is_empty() && n.class != BallClass::Bad)
    }

    /// `Σ r_x^k` over the leaves.
    pub fn packing_sum(&self) -> T {
        self.leaves().map(|n| n.radius.powi(self.k as i32)).sum()
    }

    /// True when every listed point lies in some leaf ball.
    pub fn covers(&self, points: &[Vec<T>]) -> bool {
        points.iter().all(|p| self.leaves().any(|l| dist2(p, &l.center) < l.radius * l.radius))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverOptions<T> {
    /// Energy-drop threshold; `0.05·E` at the root when `None`.
    pub delta: Option<T>,
    pub rho: T,
    /// Slack allowed before the oracle is declared non-monotone.
    pub tol: T,
    pub max_depth: usize,
}

impl<T: Real> Default for CoverOptions<T> {
    fn default() -> Self {
        Self { delta: None, rho: T::lit(0.01), tol: T::lit(1e-9), max_depth: 64 }
    }
}

struct Pending<T> {
    parent: Option<usize>,
    center: Vec<T>,
    radius: T,
    class: BallClass,
    certificate: Option<Certificate<T>>,
    points: Vec<usize>,
}

fn lex_cmp<T: Real>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Outcome of refining one bad ball: its children.
struct Refinement<T> {
    children: Vec<Pending<T>>,
    off_plane: usize,
}

/// Cover `S ∩ D_R(center)` by balls that are either of radius `r` or carry an
/// energy drop of at least `δ`.
///
/// At a bad ball `D_t(c)` with points `P`: `E = sup_P Θ(y, 2t)`, the pinched
/// set is `𝓕 = {y ∈ P : Θ(y, ρt/10) > E − δ}`, and its effective span is taken
/// at `ρt/10`. If that span has dimension at least `k`, every point is covered
/// by bad children of radius `max(ρt, r)`. Otherwise points within `ρt/4` of
/// the span stay bad and the rest get final balls of radius `ρt/20`, chosen so
/// that no pinched point can fall inside them. Children of one ball come from a
/// single Vitali selection and are therefore 1/5-disjoint.
#[allow(clippy::too_many_arguments)]
pub fn covering_tree<T: Real, O: ThetaOracle<T> + ?Sized>(
    set: &[Vec<T>],
    oracle: &O,
    k: usize,
    eps: T,
    r: T,
    center: &[T],
    big_r: T,
    opts: &CoverOptions<T>,
) -> Result<CoveringTree<T>> {
    let n = oracle.dim();
    if center.len() != n || set.iter().any(|p| p.len() != n) {
        return Err(Error::Precondition(format!("points must lie in ℝ^{n}")));
    }
    if k > n {
        return Err(Error::Precondition(format!("k = {k} exceeds n = {n}")));
    }
    if !(r > T::zero() && r < big_r && big_r <= T::one()) {
        return Err(Error::Precondition(format!("need 0 < r < R ≤ 1, got r = {r}, R = {big_r}")));
    }
    if !(opts.rho > T::zero() && opts.rho <= T::lit(0.01)) {
        return Err(Error::Precondition(format!("ρ must lie in (0, 1/100], got {}", opts.rho)));
    }
    if let Some(d) = opts.delta {
        if !(d > T::zero()) {
            return Err(Error::Precondition("δ must be positive".into()));
        }
    }
    let root_points: Vec<usize> =
        (0..set.len()).filter(|&i| dist2(&set[i], center) < big_r * big_r).collect();
    let mut tree = CoveringTree {
        k,
        center: center.to_vec(),
        radius: big_r,
        eps,
        delta: opts.delta.unwrap_or(T::zero()),
        rho: opts.rho,
        r,
        nodes: Vec::new(),
        iterations: 0,
        off_plane: 0,
    };
    if root_points.is_empty() {
        return Ok(tree);
    }
    if opts.delta.is_none() {
        let e = sup_theta(set, &root_points, oracle, T::lit(2.0) * big_r)?;
        tree.delta = T::lit(0.05) * e;
        if !(tree.delta > T::zero()) {
            return Err(Error::Precondition("default δ = 0.05·E vanishes; pass δ explicitly".into()));
        }
    }
    let mut level = vec![Pending {
        parent: None,
        center: center.to_vec(),
        radius: big_r,
        class: BallClass::Bad,
        certificate: None,
        points: root_points,
    }];
    let mut depth = 0;
    while !level.is_empty() {
        if depth > opts.max_depth {
            return Err(Error::Precondition(format!("refinement exceeded {} levels", opts.max_depth)));
        }
        level.sort_by(|a, b| lex_cmp(&a.center, &b.center).then(b.radius.partial_cmp(&a.radius).unwrap()));
        let first_id = tree.nodes.len();
        for (i, p) in level.iter().enumerate() {
            if let Some(parent) = p.parent {
                tree.nodes[parent].children.push(first_id + i);
            }
        }
        let refinements: Vec<Option<Refinement<T>>> = level
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                if p.class == BallClass::Bad {
                    refine(set, oracle, k, tree.delta, r, opts, first_id + i, p).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for (i, (p, refinement)) in level.into_iter().zip(refinements).enumerate() {
            tree.nodes.push(TreeNode {
                id: first_id + i,
                parent: p.parent,
                depth,
                center: p.center,
                radius: p.radius,
                class: p.class,
                certificate: p.certificate,
                points: p.points,
                children: Vec::new(),
            });
            if let Some(rf) = refinement {
                tree.off_plane += rf.off_plane;
                next.extend(rf.children);
            }
        }
        level = next;
        depth += 1;
    }
    tree.iterations = depth;
    Ok(tree)
}

fn sup_theta<T: Real, O: ThetaOracle<T> + ?Sized>(set: &[Vec<T>], pts: &[usize], oracle: &O, s: T) -> Result<T> {
    let vals = pts.par_iter().map(|&i| oracle.theta(&set[i], s)).collect::<Result<Vec<T>>>()?;
    Ok(vals.into_iter().fold(T::neg_infinity(), T::max))
}

#[allow(clippy::too_many_arguments)]
fn refine<T: Real, O: ThetaOracle<T> + ?Sized>(
    set: &[Vec<T>],
    oracle: &O,
    k: usize,
    delta: T,
    r: T,
    opts: &CoverOptions<T>,
    id: usize,
    ball: &Pending<T>,
) -> Result<Refinement<T>> {
    let t = ball.radius;
    let pts = &ball.points;
    let big = T::lit(2.0) * t;
    let small = opts.rho * t / T::lit(10.0);
    let pairs = pts
        .iter()
        .map(|&i| Ok((oracle.theta(&set[i], big)?, oracle.theta(&set[i], small)?)))
        .collect::<Result<Vec<(T, T)>>>()?;
    for (&i, &(b, s)) in pts.iter().zip(&pairs) {
        if b < s - opts.tol {
            return Err(Error::OracleConsistency(format!(
                "Θ({:?}, {big}) = {b} < Θ(·, {small}) = {s}",
                set[i]
            )));
        }
    }
    let e = pairs.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
    let pinched: Vec<Vec<T>> = pts
        .iter()
        .zip(&pairs)
        .filter(|(_, p)| p.1 > e - delta)
        .map(|(&i, _)| set[i].clone())
        .collect();
    let span = if pinched.is_empty() { None } else { Some(effective_span(&pinched, small)?) };
    let child_r = (opts.rho * t).max(r);
    let mut candidates: Vec<(Vec<T>, T)> = Vec::new();
    let mut is_final: Vec<bool> = Vec::new();
    let mut off_plane = 0;
    match &span {
        Some(sp) if sp.dim >= k => {
            let frame = &sp.frame[..k];
            let reach = T::lit(0.4) * opts.rho * t;
            for &i in pts {
                if dist2_to_affine(&set[i], &sp.base, frame) > reach * reach {
                    off_plane += 1;
                }
                candidates.push((set[i].clone(), child_r));
                is_final.push(false);
            }
        }
        _ => {
            let fr = opts.rho * t / T::lit(20.0);
            let near = T::lit(0.25) * opts.rho * t;
            for &i in pts {
                let is_near = span
                    .as_ref()
                    .is_some_and(|sp| dist2_to_affine(&set[i], &sp.base, &sp.frame) <= near * near);
                candidates.push((set[i].clone(), if is_near { child_r } else { fr }));
                is_final.push(!is_near);
            }
        }
    }
    let kept = vitali_subcover(&candidates);
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); kept.len()];
    for (slot, &i) in pts.iter().enumerate() {
        let home = kept
            .iter()
            .position(|&j| dist2(&set[i], &candidates[j].0) < candidates[j].1 * candidates[j].1)
            .ok_or_else(|| Error::Precondition(format!("point {i} escaped the Vitali cover (slot {slot})")))?;
        owned[home].push(i);
    }
    let mut children = Vec::with_capacity(kept.len());
    for (j, members) in kept.into_iter().zip(owned) {
        let (c, rad) = &candidates[j];
        let (class, certificate) = if is_final[j] {
            let two = T::lit(2.0) * *rad;
            let r2 = *rad * *rad;
            let mut after = T::neg_infinity();
            for &i in pts.iter().filter(|&&i| dist2(&set[i], c) < r2) {
                let v = oracle.theta(&set[i], two)?;
                after = after.max(v);
            }
            let drop = e - after;
            if drop < delta - opts.tol {
                return Err(Error::OracleConsistency(format!(
                    "final ball at {c:?} drops by {drop} < δ = {delta}; Θ is not monotone in the radius"
                )));
            }
            (BallClass::Final, Some(Certificate { before: e, after, drop }))
        } else if *rad <= r {
            (BallClass::RBall, None)
        } else {
            (BallClass::Bad, None)
        };
        children.push(Pending { parent: Some(id), center: c.clone(), radius: *rad, class, certificate, points: members });
    }
    Ok(Refinement { children, off_plane })
}
