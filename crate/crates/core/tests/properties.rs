use fracmap_core::energy::{fractional_pairing, half_energy};
use fracmap_core::fields::{project_to_sphere, Ball, Exterior, GridSpec, VectorField};
use fracmap_core::reifenberg::{jones_beta, vitali_subcover, DiscreteMeasure};
use fracmap_core::symmetry::{effective_span, tube_volume};
use proptest::prelude::*;

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn measure(n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    prop::collection::vec((coords(n), 0.1..1.0f64), 1..12).prop_map(|v| v.into_iter().unzip())
}

/// Field on a 1-d grid that vanishes outside `|x| < 0.5`, built from nodal amplitudes.
fn supported(amps: &[f64]) -> VectorField<f64> {
    let spec = GridSpec::<f64>::centered(1, 2, 1.0, 12).unwrap();
    let m = amps.len() as f64;
    VectorField::from_fn(spec, Exterior::Constant(vec![0.0, 0.0]), |x| {
        if x[0].abs() >= 0.5 {
            return vec![0.0, 0.0];
        }
        let t = (x[0] + 0.5) * m;
        let a = amps[(t as usize).min(amps.len() - 1)];
        vec![a * (1.0 - 4.0 * x[0] * x[0]), 0.5 * a * x[0]]
    })
}

fn omega() -> Ball<f64> {
    Ball::new(vec![0.0], 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_unit(v in coords(3)) {
        prop_assume!(v.iter().map(|a| a * a).sum::<f64>() > 1e-6);
        let p = project_to_sphere(&v).unwrap();
        let norm = p.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-14);
        let q = project_to_sphere(&p).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pairing_is_symmetric_and_bilinear(
        a in prop::collection::vec(-1.0..1.0f64, 4),
        b in prop::collection::vec(-1.0..1.0f64, 4),
        s in -2.0..2.0f64,
    ) {
        let (u, v) = (supported(&a), supported(&b));
        let uv = fractional_pairing(&u, &v, &omega()).unwrap();
        let vu = fractional_pairing(&v, &u, &omega()).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-10 * (1.0 + uv.abs()));
        let mut w = v.clone();
        w.values.iter_mut().zip(&u.values).for_each(|(x, y)| *x = s * *x + y);
        let uw = fractional_pairing(&u, &w, &omega()).unwrap();
        let uu = fractional_pairing(&u, &u, &omega()).unwrap();
        prop_assert!((uw - (s * uv + uu)).abs() <= 1e-10 * (1.0 + uw.abs()));
        prop_assert!(uu >= -1e-12);
    }

    #[test]
    fn energy_is_nonnegative(a in prop::collection::vec(-1.0..1.0f64, 4)) {
        let e = half_energy(&supported(&a), &omega()).unwrap();
        prop_assert!(e.value >= 0.0 && e.truncation_bound >= 0.0);
    }

    #[test]
    fn beta_is_invariant_and_bounded(
        (pts, w) in measure(2),
        t in 0.0..std::f64::consts::TAU,
        shift in coords(2),
        k in 0usize..=2,
    ) {
        let mu = DiscreteMeasure::from_points(&pts, &w).unwrap();
        let moved: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| vec![t.cos() * p[0] - t.sin() * p[1] + shift[0], t.sin() * p[0] + t.cos() * p[1] + shift[1]])
            .collect();
        let nu = DiscreteMeasure::from_points(&moved, &w).unwrap();
        let r = 1.5;
        let a = jones_beta(&mu, &[0.0, 0.0], r, k).unwrap().beta2;
        let b = jones_beta(&nu, &shift, r, k).unwrap().beta2;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        // any plane through the centre of mass does no better; the whole
        // spread Σ w|y − c|² bounds every tail
        let mass: f64 = w.iter().sum();
        prop_assert!(a >= 0.0 && a <= mass * 4.0 * r * r / r.powi(k as i32 + 2) + 1e-12);
    }

    #[test]
    fn vitali_keeps_disjoint_shrinks_and_covers(
        balls in prop::collection::vec((coords(2), 0.01..0.3f64), 1..40),
    ) {
        let kept = vitali_subcover(&balls);
        let d = |a: &[f64], b: &[f64]| (a[0] - b[0]).hypot(a[1] - b[1]);
        for (x, &i) in kept.iter().enumerate() {
            for &j in &kept[..x] {
                prop_assert!(d(&balls[i].0, &balls[j].0) >= 0.2 * (balls[i].1 + balls[j].1));
            }
        }
        for (c, r) in &balls {
            prop_assert!(kept.iter().any(|&j| balls[j].1 >= *r && d(c, &balls[j].0) <= 0.2 * (balls[j].1 + r)));
        }
    }

    #[test]
    fn effective_span_points_stay_near_the_span(pts in prop::collection::vec(coords(3), 1..10), rho in 0.01..0.5f64) {
        let span = effective_span(&pts, rho).unwrap();
        prop_assert!(span.dim <= 3 && span.frame.len() == span.dim);
        for v in &span.frame {
            prop_assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-10);
        }
        // stopping means every point is within 2ρ of the span
        if span.dim < 3 {
            for p in &pts {
                let mut w: Vec<f64> = p.iter().zip(&span.base).map(|(a, b)| a - b).collect();
                for v in &span.frame {
                    let c: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
                prop_assert!(w.iter().map(|a| a * a).sum::<f64>() < 4.0 * rho * rho + 1e-12);
            }
        }
    }

    #[test]
    fn tube_volume_is_monotone(nodes in prop::collection::vec(0usize..441, 1..8), r1 in 0.1..0.4f64, dr in 0.0..0.3f64) {
        let spec = GridSpec::<f64>::centered(2, 2, 1.0, 10).unwrap();
        let window = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
        let small = tube_volume(&spec, &nodes[..1], r1, &window).unwrap();
        let v1 = tube_volume(&spec, &nodes, r1, &window).unwrap();
        let v2 = tube_volume(&spec, &nodes, r1 + dr, &window).unwrap();
        prop_assert!(small <= v1 && v1 <= v2);
        prop_assert!(v2 <= std::f64::consts::PI * 1.1);
    }
}
