//! The nonlocal half-Dirichlet energy
//!
//! ```text
//! E(u, Ω) = (γₙ/4) ∬_{(ℝⁿ×ℝⁿ) \ (Ωᶜ×Ωᶜ)} |u(x) − u(y)|² / |x − y|^{n+1} dx dy
//! ```
//!
//! and the quantities derived from it: the H^{1/2} seminorm, the weak
//! fractional Laplacian pairing, the sphere Euler–Lagrange residual, and a
//! projected descent minimiser with fixed exterior data.
//!
//! Pairs of grid cells are integrated with the midpoint rule, evaluated for
//! all pairs at once as an FFT lattice convolution. The exterior of the grid
//! enters through the transformed rule of [`ExteriorRule`]. A cell paired with
//! itself contributes the isotropic average of the linearised integrand,
//! `|∇u|²/n · Iₙ hⁿ⁺¹`, where `Iₙ = ∬_{[0,1]ⁿ×[0,1]ⁿ} |s − t|^{1−n}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{gradient_of, gradient_transpose, Ball, Exterior, GridSpec, VectorField};
use crate::quadrature::{gauss_legendre_on, ExteriorRule, LatticeFft, Spectrum};
use crate::scalar::{dot, norm2, Real};

const EXTERIOR_RADIAL_ORDER: usize = 32;
const EXTERIOR_ANGULAR_ORDER: usize = 32;

/// `γₙ = π^{−(n+1)/2} Γ((n+1)/2)`.
pub fn gamma_n<T: Real>(n: usize) -> T {
    assert!(n >= 1, "gamma_n needs n ≥ 1");
    // Γ at integers and half-integers by the recurrence Γ(a+1) = aΓ(a).
    let target = 0.5 * (n as f64 + 1.0);
    let (mut a, mut g) = if n % 2 == 1 { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
    while a < target {
        g *= a;
        a += 1.0;
    }
    T::lit(std::f64::consts::PI.powf(-target) * g)
}

/// `Iₙ = ∬_{[0,1]ⁿ×[0,1]ⁿ} |s − t|^{1−n} ds dt`.
///
/// After the change of variables `w = s − t` the integrand is
/// `|w|^{1−n} Π(1 − |wᵢ|)`; splitting `[0,1]ⁿ` into the n pyramids on which
/// one coordinate is maximal removes the singularity, leaving a polynomial
/// times a smooth factor that Gauss–Legendre integrates to round-off.
pub fn self_cell_integral(n: usize) -> f64 {
    assert!(n >= 1, "self_cell_integral needs n ≥ 1");
    let rule = gauss_legendre_on(16, 0.0, 1.0);
    let m = n - 1;
    let mut total = 0.0;
    for flat in 0..rule.len().pow(m as u32) {
        let mut rest = flat;
        let mut beta = Vec::with_capacity(m);
        let mut wb = 1.0;
        for _ in 0..m {
            let (b, w) = rule[rest % rule.len()];
            rest /= rule.len();
            beta.push(b);
            wb *= w;
        }
        let b2: f64 = beta.iter().map(|b| b * b).sum();
        let radial = (1.0 + b2).powf(0.5 * (1.0 - n as f64));
        for &(a, wa) in &rule {
            let poly = (1.0 - a) * beta.iter().map(|b| 1.0 - a * b).product::<f64>();
            total += wa * wb * poly * radial;
        }
    }
    total * (1u64 << n) as f64 * n as f64
}

/// Value of `E(u, Ω)` split by integration region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport<T> {
    pub value: T,
    /// Ω×Ω, including the same-cell contributions.
    pub interior_interior: T,
    /// Both orderings of Ω×Ωᶜ, lattice part plus exterior quadrature.
    pub interior_exterior: T,
    /// Flagged cells excluded from the quadrature.
    pub skipped_cells: usize,
    /// Upper bound for the exterior integral beyond the truncation radius;
    /// zero when the tail is integrated to infinity.
    pub truncation_bound: T,
}

/// Precomputed geometry for repeated energy evaluations with a fixed grid,
/// domain, flag set and exterior.
pub(crate) struct EnergyContext<T: Real> {
    spec: GridSpec<T>,
    gamma: T,
    active: Vec<bool>,
    in_omega: Vec<bool>,
    free: Vec<usize>,
    fft: LatticeFft<T>,
    kernel: Spectrum<T>,
    mass_all: Vec<T>,
    mass_omega: Vec<T>,
    ext_mass: Vec<T>,
    ext_u: Vec<T>,
    ext_u2: Vec<T>,
    shift: Vec<T>,
    self_coef: T,
    truncation_bound: T,
    skipped: usize,
}

struct Evaluation<T> {
    report: EnergyReport<T>,
    /// Lattice convolution `K * (a·ũ)` per component, node-major.
    conv_active: Vec<T>,
    centered: Vec<T>,
}

impl<T: Real> EnergyContext<T> {
    pub(crate) fn new(u: &VectorField<T>, omega: &Ball<T>, r_ext: Option<T>) -> Result<Self> {
        let spec = u.spec.clone();
        let (n, d) = (spec.n, spec.d);
        if omega.center.len() != n {
            return Err(Error::Precondition("Ω centre dimension mismatch".into()));
        }
        if !omega.inside_cells(&spec) {
            return Err(Error::Precondition("Ω must lie inside the grid box".into()));
        }
        if u.exterior.is_none() {
            return Err(Error::MissingExterior("the Ω×Ωᶜ integral needs data outside the grid".into()));
        }
        let h = spec.h;
        let hn = spec.cell_volume();
        let gamma = gamma_n::<T>(n);
        let active: Vec<bool> = u.flags.iter().map(|&f| !f).collect();
        let in_omega: Vec<bool> = spec.nodes().map(|x| omega.contains(&x)).collect();
        let free: Vec<usize> = (0..spec.len()).filter(|&i| active[i] && in_omega[i]).collect();
        if free.is_empty() {
            return Err(Error::Resolution("Ω contains no grid nodes".into()));
        }

        let fft = LatticeFft::new(&spec.counts);
        let exponent = -T::lit(0.5) * T::of(n + 1);
        let kernel = fft.kernel_spectrum(|o| {
            let r2: isize = o.iter().map(|&v| v * v).sum();
            if r2 == 0 {
                T::zero()
            } else {
                // hⁿ · |x − y|^{−(n+1)} with |x − y| = h·|o|
                T::of(r2 as usize).powf(exponent) / h
            }
        });
        let ones: Vec<T> = active.iter().map(|&a| if a { T::one() } else { T::zero() }).collect();
        let omega_mask: Vec<T> =
            (0..spec.len()).map(|i| if active[i] && in_omega[i] { T::one() } else { T::zero() }).collect();
        let mass_all = fft.convolve(&fft.spectrum(&ones), &kernel);
        let mass_omega = fft.convolve(&fft.spectrum(&omega_mask), &kernel);

        let shift = u.value(free[0]).to_vec();

        let (reach, truncation_unit) = if u.exterior.supports_energy_tail() {
            (None, T::zero())
        } else {
            let lo = spec.cell_lo();
            let hi = spec.cell_hi();
            let half_diag = lo.iter().zip(&hi).map(|(&a, &b)| (b - a) * (b - a)).sum::<T>().sqrt() * T::lit(0.5);
            let reach = r_ext.unwrap_or(half_diag * T::lit(10.0));
            if reach < omega.radius * T::lit(2.0) || reach <= half_diag {
                return Err(Error::Precondition(format!(
                    "truncation radius {reach} must exceed 2·radius(Ω) and the grid half-diagonal {half_diag}"
                )));
            }
            // ∫_{|y|>R−ρ} 4|y|^{−(n+1)} dy per unit x-volume, ρ = half diagonal
            let sphere = sphere_area::<T>(n);
            (Some(reach.as_f64()), T::lit(4.0) * sphere / (reach - half_diag))
        };

        let rule = ExteriorRule::new(
            &spec.cell_lo(),
            &spec.cell_hi(),
            EXTERIOR_RADIAL_ORDER,
            EXTERIOR_ANGULAR_ORDER,
            reach,
        )?;
        let ext_vals: Vec<Vec<T>> = rule
            .points
            .iter()
            .map(|p| {
                let v = u.exterior.eval(p).expect("exterior present");
                v.iter().zip(&shift).map(|(&a, &b)| a - b).collect()
            })
            .collect();
        let per_node: Vec<(T, Vec<T>, T)> = free
            .par_iter()
            .map(|&i| {
                let x = spec.coord_flat(i);
                let mut m = T::zero();
                let mut eu = vec![T::zero(); d];
                let mut eu2 = T::zero();
                for ((p, &w), v) in rule.points.iter().zip(&rule.weights).zip(&ext_vals) {
                    let r2: T = x.iter().zip(p).map(|(&a, &b)| (a - b) * (a - b)).sum();
                    let k = w * r2.powf(exponent);
                    m += k;
                    eu.iter_mut().zip(v).for_each(|(e, &c)| *e += k * c);
                    eu2 += k * norm2(v);
                }
                (m, eu, eu2)
            })
            .collect();
        let mut ext_mass = Vec::with_capacity(free.len());
        let mut ext_u = Vec::with_capacity(free.len() * d);
        let mut ext_u2 = Vec::with_capacity(free.len());
        for (m, eu, eu2) in per_node {
            ext_mass.push(m);
            ext_u.extend(eu);
            ext_u2.push(eu2);
        }

        let self_coef = gamma / T::lit(4.0) * T::lit(self_cell_integral(n)) * h.powi(n as i32 + 1) / T::of(n);
        let truncation_bound = gamma / T::lit(2.0) * truncation_unit * hn * T::of(free.len());
        let skipped = u.flagged_count();
        Ok(Self {
            spec,
            gamma,
            active,
            in_omega,
            free,
            fft,
            kernel,
            mass_all,
            mass_omega,
            ext_mass,
            ext_u,
            ext_u2,
            shift,
            self_coef,
            truncation_bound,
            skipped,
        })
    }

    fn centered(&self, values: &[T]) -> Vec<T> {
        let d = self.spec.d;
        values.iter().enumerate().map(|(k, &v)| v - self.shift[k % d]).collect()
    }

    /// `K * (mask · ũ_c)` for every component, node-major.
    fn convolve_components(&self, centered: &[T], mask: impl Fn(usize) -> bool) -> Vec<T> {
        let d = self.spec.d;
        let len = self.spec.len();
        let mut out = vec![T::zero(); len * d];
        for c in 0..d {
            let data: Vec<T> = (0..len).map(|i| if mask(i) { centered[i * d + c] } else { T::zero() }).collect();
            let conv = self.fft.convolve(&self.fft.spectrum(&data), &self.kernel);
            for (i, v) in conv.into_iter().enumerate() {
                out[i * d + c] = v;
            }
        }
        out
    }

    fn self_energy(&self, values: &[T]) -> T {
        let (n, d) = (self.spec.n, self.spec.d);
        let g = gradient_of(&self.spec, values);
        let s: T = self.free.iter().map(|&i| norm2(&g[i * n * d..(i + 1) * n * d])).sum();
        self.self_coef * s
    }

    fn evaluate(&self, values: &[T]) -> Evaluation<T> {
        let d = self.spec.d;
        let hn = self.spec.cell_volume();
        let u = self.centered(values);
        let conv_active = self.convolve_components(&u, |i| self.active[i]);
        let conv_omega = self.convolve_components(&u, |i| self.active[i] && self.in_omega[i]);

        let mut sum_all = T::zero();
        let mut sum_oo = T::zero();
        let mut ext = T::zero();
        for (k, &i) in self.free.iter().enumerate() {
            let ui = &u[i * d..(i + 1) * d];
            let q = norm2(ui);
            sum_all += q * self.mass_all[i] - T::lit(2.0) * dot(ui, &conv_active[i * d..(i + 1) * d]);
            sum_oo += q * self.mass_omega[i] - dot(ui, &conv_omega[i * d..(i + 1) * d]);
            ext += q * self.ext_mass[k] - T::lit(2.0) * dot(ui, &self.ext_u[k * d..(k + 1) * d]) + self.ext_u2[k];
        }
        sum_oo *= T::lit(2.0);
        for i in 0..self.spec.len() {
            if self.active[i] {
                sum_all += norm2(&u[i * d..(i + 1) * d]) * self.mass_omega[i];
            }
        }
        let quarter = self.gamma / T::lit(4.0) * hn;
        let ii = (quarter * sum_oo + self.self_energy(values)).max(T::zero());
        let ie = (quarter * T::lit(2.0) * (sum_all - sum_oo + ext)).max(T::zero());
        Evaluation {
            report: EnergyReport {
                value: ii + ie,
                interior_interior: ii,
                interior_exterior: ie,
                skipped_cells: self.skipped,
                truncation_bound: self.truncation_bound,
            },
            conv_active,
            centered: u,
        }
    }

    /// Per free node, `L(x) = γ Σ_y hⁿ K (u_x − u_y)` over lattice and exterior.
    fn lattice_laplacian(&self, ev: &Evaluation<T>) -> Vec<T> {
        let d = self.spec.d;
        let mut out = Vec::with_capacity(self.free.len() * d);
        for (k, &i) in self.free.iter().enumerate() {
            let m = self.mass_all[i] + self.ext_mass[k];
            for c in 0..d {
                let v = ev.centered[i * d + c] * m - ev.conv_active[i * d + c] - self.ext_u[k * d + c];
                out.push(self.gamma * v);
            }
        }
        out
    }

    /// Full gradient of the discrete energy with respect to node values,
    /// zero outside the free nodes.
    fn gradient(&self, values: &[T], ev: &Evaluation<T>) -> Vec<T> {
        let (n, d) = (self.spec.n, self.spec.d);
        let hn = self.spec.cell_volume();
        let lap = self.lattice_laplacian(ev);
        let mut jac = gradient_of(&self.spec, values);
        let mut weight = vec![false; self.spec.len()];
        self.free.iter().for_each(|&i| weight[i] = true);
        for (i, w) in weight.iter().enumerate() {
            if !w {
                jac[i * n * d..(i + 1) * n * d].iter_mut().for_each(|v| *v = T::zero());
            }
        }
        let self_part = gradient_transpose(&self.spec, &jac);
        let two = T::lit(2.0) * self.self_coef;
        let mut g = vec![T::zero(); values.len()];
        for (k, &i) in self.free.iter().enumerate() {
            for c in 0..d {
                g[i * d + c] = hn * lap[k * d + c] + two * self_part[i * d + c];
            }
        }
        g
    }

    fn diagonal(&self) -> Vec<T> {
        let hn = self.spec.cell_volume();
        self.free
            .iter()
            .enumerate()
            .map(|(k, &i)| self.gamma * hn * (self.mass_all[i] + self.ext_mass[k]))
            .collect()
    }
}

fn sphere_area<T: Real>(n: usize) -> T {
    // |S^{n−1}| = 2π^{n/2}/Γ(n/2) = 2/γ_{n−1}
    match n {
        1 => T::lit(2.0),
        _ => T::lit(2.0) / gamma_n::<T>(n - 1),
    }
}

/// `E(u, Ω)` by lattice midpoint quadrature plus exterior quadrature.
pub fn half_energy<T: Real>(u: &VectorField<T>, omega: &Ball<T>) -> Result<EnergyReport<T>> {
    let ctx = EnergyContext::new(u, omega, None)?;
    Ok(ctx.evaluate(&u.values).report)
}

/// `[u]_{H^{1/2}(Ω)} = ((γₙ/2) ∬_{Ω×Ω} |u(x) − u(y)|²/|x − y|^{n+1})^{1/2}`.
///
/// Only Ω enters, so no exterior data is needed.
pub fn h_half_seminorm<T: Real>(u: &VectorField<T>, omega: &Ball<T>) -> Result<T> {
    let mut v = u.clone();
    if v.exterior.is_none() {
        v.exterior = Exterior::Constant(vec![T::zero(); v.spec.d]);
    }
    let report = half_energy(&v, omega)?;
    Ok((T::lit(2.0) * report.interior_interior).sqrt())
}

/// `⟨(−Δ)^{1/2}u, φ⟩_Ω = (γₙ/2) ∬ (u(x) − u(y))·(φ(x) − φ(y)) / |x − y|^{n+1}`
/// over the energy region, for `φ` vanishing outside Ω.
///
/// The quadrature is the polarisation of the one in [`half_energy`], so
/// `⟨u, u⟩ = 2E(u, Ω)` whenever `u` itself vanishes outside Ω.
pub fn fractional_pairing<T: Real>(u: &VectorField<T>, phi: &VectorField<T>, omega: &Ball<T>) -> Result<T> {
    let ctx = EnergyContext::new(u, omega, None)?;
    pairing_with(&ctx, u, phi)
}

fn pairing_with<T: Real>(ctx: &EnergyContext<T>, u: &VectorField<T>, phi: &VectorField<T>) -> Result<T> {
    let spec = &ctx.spec;
    if phi.spec != *spec {
        return Err(Error::Precondition("u and φ must share a grid".into()));
    }
    match &phi.exterior {
        Exterior::None => {}
        Exterior::Constant(c) if c.iter().all(|&v| v == T::zero()) => {}
        _ => return Err(Error::Precondition("φ must vanish outside the grid".into())),
    }
    let (n, d) = (spec.n, spec.d);
    if (0..spec.len()).any(|i| !ctx.in_omega[i] && phi.value(i).iter().any(|&v| v != T::zero())) {
        return Err(Error::Precondition("φ must vanish outside Ω".into()));
    }
    let mut phi_vals = phi.values.clone();
    for i in 0..spec.len() {
        if !ctx.active[i] {
            phi_vals[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = T::zero());
        }
    }
    let ev = ctx.evaluate(&u.values);
    let lap = ctx.lattice_laplacian(&ev);
    let hn = spec.cell_volume();
    let mut lattice = T::zero();
    for (k, &i) in ctx.free.iter().enumerate() {
        lattice += dot(&phi_vals[i * d..(i + 1) * d], &lap[k * d..(k + 1) * d]);
    }
    let gu = gradient_of(spec, &u.values);
    let gp = gradient_of(spec, &phi_vals);
    let mut local = T::zero();
    for &i in &ctx.free {
        local += dot(&gu[i * n * d..(i + 1) * n * d], &gp[i * n * d..(i + 1) * n * d]);
    }
    Ok(hn * lattice + T::lit(2.0) * ctx.self_coef * local)
}

/// Pointwise residual of the sphere equation on the nodes of Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualField<T> {
    /// Flat grid indices of the (non-flagged) nodes of Ω.
    pub nodes: Vec<usize>,
    pub values: Vec<T>,
    /// Cell volume, for integrated norms.
    pub cell_volume: T,
}

impl<T: Real> ResidualField<T> {
    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// `(Σ hⁿ r(x)²)^{1/2}`.
    pub fn l2(&self) -> T {
        (self.values.iter().map(|&r| r * r).sum::<T>() * self.cell_volume).sqrt()
    }
}

/// `|(−Δ)^{1/2}u(x) − λ(x) u(x)|` with `λ(x) = (γₙ/2)∫|u(x) − u(y)|²/|x − y|^{n+1} dy`,
/// both by the same principal-value lattice sum (the cell of `x` omitted).
pub fn sphere_el_residual<T: Real>(u: &VectorField<T>, omega: &Ball<T>) -> Result<ResidualField<T>> {
    let ctx = EnergyContext::new(u, omega, None)?;
    let d = u.spec.d;
    let ev = ctx.evaluate(&u.values);
    let lap = ctx.lattice_laplacian(&ev);
    let sq: Vec<T> = (0..u.spec.len())
        .map(|i| if ctx.active[i] { norm2(&ev.centered[i * d..(i + 1) * d]) } else { T::zero() })
        .collect();
    let conv_sq = ctx.fft.convolve(&ctx.fft.spectrum(&sq), &ctx.kernel);
    let mut values = Vec::with_capacity(ctx.free.len());
    for (k, &i) in ctx.free.iter().enumerate() {
        let ui = &ev.centered[i * d..(i + 1) * d];
        let q = norm2(ui);
        let s_all = q * ctx.mass_all[i] + conv_sq[i] - T::lit(2.0) * dot(ui, &ev.conv_active[i * d..(i + 1) * d]);
        let ext = q * ctx.ext_mass[k] - T::lit(2.0) * dot(ui, &ctx.ext_u[k * d..(k + 1) * d]) + ctx.ext_u2[k];
        let lambda = ctx.gamma / T::lit(2.0) * (s_all + ext);
        let val = u.value(i);
        let r2: T = (0..d).map(|c| (lap[k * d + c] - lambda * val[c]).powi(2)).sum();
        values.push(r2.sqrt());
    }
    Ok(ResidualField { nodes: ctx.free.clone(), values, cell_volume: u.spec.cell_volume() })
}

/// Knobs for [`minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions<T> {
    /// Initial (and maximal) preconditioned step, in `(0, 1]`.
    pub step: T,
    pub max_iterations: usize,
    /// Stop when the relative energy decrease of an accepted step drops below this.
    pub tolerance: T,
    /// Truncation radius for exterior data whose tail is not integrated to infinity.
    pub r_ext: T,
}

impl<T: Real> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self { step: T::one(), max_iterations: 500, tolerance: T::lit(1e-10), r_ext: T::lit(16.0) }
    }
}

impl<T: Real> MinimizeOptions<T> {
    pub fn validate(&self, omega: &Ball<T>) -> Result<()> {
        if !(self.step > T::zero() && self.step <= T::one()) {
            return Err(Error::Precondition(format!("step must lie in (0, 1], got {}", self.step)));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::Precondition("energy tolerance must be positive".into()));
        }
        if !(self.r_ext >= T::lit(2.0) * omega.radius) {
            return Err(Error::Precondition(format!(
                "R_ext = {} must be at least twice the domain radius {}",
                self.r_ext, omega.radius
            )));
        }
        Ok(())
    }
}

/// One accepted iterate (iteration 0 is the initial field).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub energy: T,
    pub step: T,
    /// Largest tangential energy gradient per unit volume over Ω.
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome<T> {
    pub field: VectorField<T>,
    pub log: Vec<IterationRecord<T>>,
    pub converged: bool,
}

impl<T> MinimizeOutcome<T> {
    /// Number of accepted descent steps.
    pub fn iterations(&self) -> usize {
        self.log.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MinimizeError<T> {
    Invalid(Error),
    /// Backtracking shrank the step below 1e−12 without sufficient decrease.
    Stagnation { partial: Box<MinimizeOutcome<T>> },
}

impl<T> From<Error> for MinimizeError<T> {
    fn from(e: Error) -> Self {
        MinimizeError::Invalid(e)
    }
}

impl<T> std::fmt::Display for MinimizeError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MinimizeError::Invalid(e) => write!(f, "{e}"),
            MinimizeError::Stagnation { partial } => {
                write!(f, "line search stagnated after {} iterations", partial.log.len().saturating_sub(1))
            }
        }
    }
}

impl<T: std::fmt::Debug> std::error::Error for MinimizeError<T> {}

/// Minimise `E(·, Ω)` over maps into the sphere agreeing with `u0` off Ω.
///
/// Each iteration moves the free nodes along the Jacobi-preconditioned
/// tangential gradient, `v ← π(u − τ P_T∇E / D)`, and backtracks on `τ` until
/// the Armijo condition holds, so accepted energies never increase. With
/// `τ = 1` the update is essentially a projected weighted average of the
/// neighbouring values.
pub fn minimize<T: Real>(
    u0: &VectorField<T>,
    omega: &Ball<T>,
    opts: &MinimizeOptions<T>,
) -> Result<MinimizeOutcome<T>, MinimizeError<T>> {
    opts.validate(omega)?;
    if u0.unit_defect() > T::lit(1e-10) {
        return Err(Error::Precondition(format!("initial map is not sphere valued (defect {})", u0.unit_defect())).into());
    }
    let ctx = EnergyContext::new(u0, omega, Some(opts.r_ext))?;
    let d = u0.spec.d;
    let hn = u0.spec.cell_volume();
    let diag = ctx.diagonal();
    let armijo = T::lit(1e-4);
    let min_step = T::lit(1e-12);

    let mut values = u0.values.clone();
    let mut ev = ctx.evaluate(&values);
    let mut energy = ev.report.value;
    let mut log = Vec::new();
    let mut tau = opts.step;
    let mut converged = false;
    let finish = |values: Vec<T>, log: Vec<IterationRecord<T>>, converged: bool| MinimizeOutcome {
        field: VectorField { values, ..u0.clone() },
        log,
        converged,
    };

    for iteration in 0..=opts.max_iterations {
        let g = ctx.gradient(&values, &ev);
        let mut dir = vec![T::zero(); ctx.free.len() * d];
        let mut residual = T::zero();
        let mut slope = T::zero();
        for (k, &i) in ctx.free.iter().enumerate() {
            let ui = &values[i * d..(i + 1) * d];
            let gi = &g[i * d..(i + 1) * d];
            let c = dot(ui, gi);
            let t: Vec<T> = gi.iter().zip(ui).map(|(&a, &b)| a - c * b).collect();
            let tn = norm2(&t);
            residual = residual.max(tn.sqrt() / hn);
            slope += tn / diag[k];
            for c in 0..d {
                dir[k * d + c] = -t[c] / diag[k];
            }
        }
        let last_step = if iteration == 0 { T::zero() } else { tau };
        log.push(IterationRecord { iteration, energy, step: last_step, residual });
        let scale = energy.max(T::min_positive_value());
        if iteration == opts.max_iterations || slope <= T::epsilon() * T::epsilon() * scale {
            converged = slope <= T::epsilon() * T::epsilon() * scale;
            break;
        }
        if iteration > 0 {
            tau = (tau * T::lit(2.0)).min(opts.step);
        }
        loop {
            let mut trial = values.clone();
            for (k, &i) in ctx.free.iter().enumerate() {
                let v: Vec<T> = (0..d).map(|c| values[i * d + c] + tau * dir[k * d + c]).collect();
                let r = norm2(&v).sqrt();
                if r > T::zero() {
                    for c in 0..d {
                        trial[i * d + c] = v[c] / r;
                    }
                }
            }
            let trial_ev = ctx.evaluate(&trial);
            let te = trial_ev.report.value;
            if te <= energy - armijo * tau * slope {
                let decrease = energy - te;
                values = trial;
                ev = trial_ev;
                energy = te;
                if decrease <= opts.tolerance * scale {
                    converged = true;
                }
                break;
            }
            tau /= T::lit(2.0);
            if tau < min_step {
                // A predicted decrease below round-off means we are at a
                // discrete critical point rather than stuck.
                if tau * slope * T::lit(2.0) <= T::lit(64.0) * T::epsilon() * scale {
                    converged = true;
                    break;
                }
                return Err(MinimizeError::Stagnation { partial: Box::new(finish(values, log, false)) });
            }
        }
        if converged {
            let g = ctx.gradient(&values, &ev);
            let residual = ctx
                .free
                .iter()
                .map(|&i| {
                    let ui = &values[i * d..(i + 1) * d];
                    let gi = &g[i * d..(i + 1) * d];
                    let c = dot(ui, gi);
                    gi.iter().zip(ui).map(|(&a, &b)| (a - c * b).powi(2)).sum::<T>().sqrt() / hn
                })
                .fold(T::zero(), T::max);
            if log.last().map(|r| r.energy) != Some(energy) {
                log.push(IterationRecord { iteration: iteration + 1, energy, step: tau, residual });
            }
            break;
        }
    }
    Ok(finish(values, log, converged))
}

/// Outcome of [`weak_harmonic_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakHarmonicReport<T> {
    /// `|⟨(−Δ)^{1/2}u, φ⟩| / ‖φ‖_{L²}` per trial.
    pub ratios: Vec<T>,
    pub max_ratio: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Pair `u` with random smooth tangent fields supported in Ω.
///
/// Each trial field is a sum of three bumps `exp(−1/(1 − |x−c|²/ρ²))` with
/// random vector coefficients, projected pointwise onto `u(x)^⊥`.
pub fn weak_harmonic_test<T: Real>(
    u: &VectorField<T>,
    omega: &Ball<T>,
    trials: usize,
    tol: T,
    seed: u64,
) -> Result<WeakHarmonicReport<T>> {
    if u.unit_defect() > T::lit(1e-8) {
        return Err(Error::Precondition("weak harmonicity test needs a sphere-valued map".into()));
    }
    let ctx = EnergyContext::new(u, omega, None)?;
    let spec = &u.spec;
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let bumps: Vec<(Vec<T>, T, Vec<T>)> = (0..3)
            .map(|_| {
                let center: Vec<T> = loop {
                    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                        break p
                            .iter()
                            .zip(&omega.center)
                            .map(|(&v, &c)| c + T::lit(0.6 * v) * omega.radius)
                            .collect();
                    }
                };
                let rho = T::lit(rng.gen_range(0.15..0.35)) * omega.radius;
                let coef: Vec<T> = (0..d).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
                (center, rho, coef)
            })
            .collect();
        let phi = VectorField::from_fn(spec.clone(), Exterior::Constant(vec![T::zero(); d]), |x| {
            let mut v = vec![T::zero(); d];
            for (c, rho, coef) in &bumps {
                let s = x.iter().zip(c).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / (*rho * *rho);
                if s < T::one() {
                    let b = (-T::one() / (T::one() - s)).exp();
                    v.iter_mut().zip(coef).for_each(|(o, &k)| *o += b * k);
                }
            }
            v
        });
        let mut phi = phi;
        for i in 0..spec.len() {
            let ui = u.value(i).to_vec();
            let p = phi.value_mut(i);
            if u.flags[i] {
                p.iter_mut().for_each(|v| *v = T::zero());
                continue;
            }
            let c = dot(&ui, p);
            p.iter_mut().zip(&ui).for_each(|(v, &b)| *v -= c * b);
        }
        let norm = (norm2(&phi.values) * spec.cell_volume()).sqrt();
        let pairing = pairing_with(&ctx, u, &phi)?;
        ratios.push(if norm > T::zero() { pairing.abs() / norm } else { T::zero() });
    }
    let max_ratio = ratios.iter().copied().fold(T::zero(), T::max);
    Ok(WeakHarmonicReport { ratios, max_ratio, tolerance: tol, pass: max_ratio <= tol })
}
