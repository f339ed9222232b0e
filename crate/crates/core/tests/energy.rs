use approx::assert_relative_eq;
use fracmap_core::energy::{
    fractional_pairing, gamma_n, h_half_seminorm, half_energy, minimize, sphere_el_residual, weak_harmonic_test,
    MinimizeError, MinimizeOptions,
};
use fracmap_core::fields::{analytic_vortex, gradient_norms, Ball, Exterior, GridSpec, VectorField};
use fracmap_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

fn ball(c: &[f64], r: f64) -> Ball<f64> {
    Ball::new(c.to_vec(), r).unwrap()
}

/// Smooth bump supported in `|x − c| < rho`.
fn bump(x: &[f64], c: &[f64], rho: f64) -> f64 {
    let s: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (rho * rho);
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

#[test]
fn gamma_matches_special_function_oracle() {
    for n in 1..=7 {
        let expected = std::f64::consts::PI.powf(-(n as f64 + 1.0) / 2.0) * gamma((n as f64 + 1.0) / 2.0);
        assert_relative_eq!(gamma_n::<f64>(n), expected, max_relative = 1e-14);
    }
    assert_relative_eq!(gamma_n::<f64>(1), std::f64::consts::FRAC_1_PI, max_relative = 1e-15);
    assert_relative_eq!(gamma_n::<f64>(2), 0.159_154_943_091_895_34, max_relative = 1e-15);
    assert_relative_eq!(gamma_n::<f64>(3), 0.101_321_183_642_337_77, max_relative = 1e-15);
}

#[test]
fn constant_maps_carry_no_energy() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 16).unwrap();
    let u = VectorField::constant(spec, vec![0.0, 1.0]);
    let om = ball(&[0.1, 0.0], 0.6);
    let e = half_energy(&u, &om).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(h_half_seminorm(&u, &om).unwrap(), 0.0);
    assert!(sphere_el_residual(&u, &om).unwrap().values.iter().all(|&r| r == 0.0));
    let w = weak_harmonic_test(&u, &om, 4, 1e-12, 1).unwrap();
    assert!(w.pass && w.ratios.iter().all(|&r| r == 0.0));
}

#[test]
fn vortex_energy_scales_like_radius() {
    // 0-homogeneous in n = 2: E(u, D_r) ∝ r
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 64).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let half = half_energy(&u, &ball(&[0.0, 0.0], 0.5)).unwrap();
    let quarter = half_energy(&u, &ball(&[0.0, 0.0], 0.25)).unwrap();
    let ratio = half.value / quarter.value;
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    assert_relative_eq!(half.value, half.interior_interior + half.interior_exterior, max_relative = 1e-12);
    assert_eq!(half.skipped_cells, 1);

    let semi = h_half_seminorm(&u, &ball(&[0.0, 0.0], 0.5)).unwrap();
    assert!(semi.is_finite() && semi > 0.0);
    assert!(semi * semi <= 2.0 * half.value);
}

#[test]
fn energy_needs_exterior_data_when_omega_is_interior() {
    let spec = GridSpec::<f64>::centered(1, 2, 1.0, 16).unwrap();
    let u = VectorField::from_fn(spec, Exterior::None, |x| vec![x[0].cos(), x[0].sin()]);
    assert!(matches!(half_energy(&u, &ball(&[0.0], 0.5)), Err(Error::MissingExterior(_))));
    // the seminorm only looks inside Ω
    assert!(h_half_seminorm(&u, &ball(&[0.0], 0.5)).unwrap() > 0.0);
}

#[test]
fn energy_grows_with_perturbation_amplitude() {
    let spec = GridSpec::<f64>::centered(1, 2, 2.0, 64).unwrap();
    let om = ball(&[0.0], 1.0);
    let energies: Vec<f64> = [0.25, 0.5, 1.0]
        .iter()
        .map(|&amp| {
            let u = VectorField::from_fn(spec.clone(), Exterior::Constant(vec![1.0, 0.0]), |x| {
                let phi = amp * bump(x, &[0.0], 0.9);
                vec![phi.cos(), phi.sin()]
            });
            half_energy(&u, &om).unwrap().value
        })
        .collect();
    assert!(energies[0] > 0.0 && energies[0] < energies[1] && energies[1] < energies[2], "{energies:?}");
}

fn random_bumps(spec: &GridSpec<f64>, center: &[f64], radius: f64, rng: &mut ChaCha8Rng) -> VectorField<f64> {
    let d = spec.d;
    let n = spec.n;
    let terms: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..3)
        .map(|_| {
            let c: Vec<f64> = (0..n).map(|a| center[a] + rng.gen_range(-0.3..0.3) * radius).collect();
            let rho = rng.gen_range(0.2..0.5) * radius;
            let coef: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (c, rho, coef)
        })
        .collect();
    VectorField::from_fn(spec.clone(), Exterior::Constant(vec![0.0; d]), |x| {
        let mut v = vec![0.0; d];
        for (c, rho, coef) in &terms {
            let b = bump(x, c, *rho);
            v.iter_mut().zip(coef).for_each(|(v, k)| *v += b * k);
        }
        v
    })
}

#[test]
fn pairing_is_symmetric_and_matches_the_energy() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 24).unwrap();
    let om = ball(&[0.0, 0.0], 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let a = random_bumps(&spec, &[0.0, 0.0], 0.8, &mut rng);
        let b = random_bumps(&spec, &[0.0, 0.0], 0.8, &mut rng);
        let ab = fractional_pairing(&a, &b, &om).unwrap();
        let ba = fractional_pairing(&b, &a, &om).unwrap();
        assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0), "{ab} vs {ba}");
        // ⟨φ, φ⟩ = 2E(φ, Ω) for φ supported in Ω
        let aa = fractional_pairing(&a, &a, &om).unwrap();
        let e = half_energy(&a, &om).unwrap().value;
        assert_relative_eq!(aa, 2.0 * e, max_relative = 1e-10);
    }
    let c = VectorField::constant(spec.clone(), vec![0.6, 0.8]);
    let phi = random_bumps(&spec, &[0.0, 0.0], 0.8, &mut rng);
    assert!(fractional_pairing(&c, &phi, &om).unwrap().abs() < 1e-14);
}

#[test]
fn pairing_rejects_test_fields_leaking_out_of_omega() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 16).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let phi = VectorField::from_fn(spec, Exterior::Constant(vec![0.0, 0.0]), |x| vec![bump(x, &[0.5, 0.0], 0.5), 0.0]);
    assert!(matches!(fractional_pairing(&u, &phi, &ball(&[0.0, 0.0], 0.5)), Err(Error::Precondition(_))));
}

fn residual_on_annulus(res: usize) -> f64 {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, res).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let r = sphere_el_residual(&u, &ball(&[0.0, 0.0], 0.8)).unwrap();
    r.nodes
        .iter()
        .zip(&r.values)
        .filter(|(&i, _)| {
            let x = spec.coord_flat(i);
            (0.3..=0.7).contains(&x[0].hypot(x[1]))
        })
        .map(|(_, &v)| v)
        .fold(0.0, f64::max)
}

#[test]
fn vortex_residual_shrinks_with_the_grid() {
    let (coarse, fine) = (residual_on_annulus(16), residual_on_annulus(32));
    assert!(fine < 0.7 * coarse, "{coarse} → {fine}");
}

fn random_unit_field(res: usize) -> f64 {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, res).unwrap();
    let u = VectorField::from_fn(spec, Exterior::Constant(vec![1.0, 0.0]), |x| {
        let phi = 2.0 * bump(x, &[0.1, -0.05], 0.8) * (3.0 * x[0] - 2.0 * x[1]).sin() + 1.5 * bump(x, &[0.0, 0.0], 0.8);
        vec![phi.cos(), phi.sin()]
    });
    sphere_el_residual(&u, &ball(&[0.0, 0.0], 0.8)).unwrap().l2()
}

#[test]
fn non_harmonic_residual_stays_away_from_zero() {
    let (coarse, fine) = (random_unit_field(16), random_unit_field(32));
    assert!(coarse > 0.1 && fine > 0.1, "{coarse}, {fine}");
    assert!((fine / coarse - 1.0).abs() < 0.3, "{coarse}, {fine}");
}

#[test]
fn constant_start_is_already_minimal() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 16).unwrap();
    let u = VectorField::constant(spec, vec![1.0, 0.0]);
    let out = minimize(&u, &ball(&[0.0, 0.0], 0.5), &MinimizeOptions::default()).unwrap();
    assert_eq!(out.iterations(), 0);
    assert!(out.converged);
    assert_eq!(out.field, u);
}

#[test]
fn minimizer_options_are_validated() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.0, 8).unwrap();
    let u = VectorField::constant(spec, vec![1.0, 0.0]);
    let om = ball(&[0.0, 0.0], 0.5);
    for opts in [
        MinimizeOptions { step: 1.5, ..MinimizeOptions::default() },
        MinimizeOptions { r_ext: 0.5, ..MinimizeOptions::default() },
        MinimizeOptions { tolerance: 0.0, ..MinimizeOptions::default() },
    ] {
        assert!(matches!(minimize(&u, &om, &opts), Err(MinimizeError::Invalid(_))));
    }
}

/// Minimise from a noisy start with smooth S¹ data outside `[-1, 1]`.
fn smooth_minimizer(res: usize) -> (VectorField<f64>, Vec<f64>) {
    let spec = GridSpec::<f64>::centered(1, 2, 1.5, res).unwrap();
    let om = ball(&[0.0], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut u0 = VectorField::from_fn(spec.clone(), Exterior::wave(1), |x| vec![x[0].cos(), x[0].sin()]);
    for i in 0..spec.len() {
        let x = spec.coord_flat(i)[0];
        if x.abs() < 1.0 {
            let t = x + 0.3 * rng.gen_range(-1.0..1.0);
            u0.value_mut(i).copy_from_slice(&[t.cos(), t.sin()]);
        }
    }
    let out = minimize(&u0, &om, &MinimizeOptions { max_iterations: 400, ..MinimizeOptions::default() }).unwrap();
    let energies = out.log.iter().map(|r| r.energy).collect();
    (out.field, energies)
}

#[test]
fn minimizers_have_gradients_bounded_uniformly_in_h() {
    let mut sups = Vec::new();
    for res in [32, 64] {
        let (u, energies) = smooth_minimizer(res);
        assert!(energies.windows(2).all(|w| w[1] <= w[0]));
        let norms = gradient_norms(&u);
        let sup = (0..u.spec.len())
            .filter(|&i| u.spec.coord_flat(i)[0].abs() < 0.9)
            .map(|i| norms[i])
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    assert!(sups[1] < 1.5 * sups[0] && sups[1] < 5.0, "{sups:?}");
}

#[test]
fn noisy_vortex_fails_the_weak_test() {
    let spec = GridSpec::<f64>::centered(2, 2, 1.1, 24).unwrap();
    let mut u = analytic_vortex(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..spec.len() {
        let x = spec.coord_flat(i);
        if u.flags[i] || x[0].hypot(x[1]) >= 1.0 {
            continue;
        }
        let v = u.value(i).to_vec();
        let p = [v[0] + 0.2 * rng.gen_range(-1.0..1.0), v[1] + 0.2 * rng.gen_range(-1.0..1.0)];
        let norm = p[0].hypot(p[1]);
        u.value_mut(i).copy_from_slice(&[p[0] / norm, p[1] / norm]);
    }
    let om = ball(&[0.0, 0.0], 1.0);
    let before = half_energy(&u, &om).unwrap().value;
    let out = minimize(&u, &om, &MinimizeOptions { max_iterations: 300, ..MinimizeOptions::default() }).unwrap();
    let after = out.log.last().unwrap().energy;
    assert!(after < before);
    assert!(out.log.windows(2).all(|w| w[1].energy <= w[0].energy));
    // values outside Ω never move
    for i in 0..spec.len() {
        if spec.coord_flat(i).iter().map(|v| v * v).sum::<f64>() > 1.0 {
            assert_eq!(out.field.value(i), u.value(i));
        }
    }
    let tol = 10.0 * sphere_el_residual(&out.field, &om).unwrap().l2();
    let noisy = weak_harmonic_test(&u, &om, 6, tol, 2).unwrap();
    let minimised = weak_harmonic_test(&out.field, &om, 6, tol, 2).unwrap();
    assert!(!noisy.pass, "{} vs {tol}", noisy.max_ratio);
    assert!(minimised.max_ratio < noisy.max_ratio);
}
