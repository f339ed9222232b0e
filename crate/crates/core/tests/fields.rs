use fracmap_core::fields::{
    analytic_vortex, gradient, gradient_norms, io, project_to_sphere, rescale_field, Exterior, GridSpec, VectorField,
};
use fracmap_core::{Error, GridSpec64};

fn mean_square_distance(u: &VectorField<f64>, c: &[f64]) -> f64 {
    let d = u.spec.d;
    let total: f64 = u
        .values
        .chunks(d)
        .map(|v| v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / u.spec.len() as f64
}

#[test]
fn projection_examples() {
    assert_eq!(project_to_sphere(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
    assert_eq!(project_to_sphere(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    assert!(matches!(project_to_sphere(&[0.0, 0.0]), Err(Error::Domain(_))));
}

#[test]
fn vortex_samples_and_singular_node() {
    let spec = GridSpec64::centered(2, 2, 1.0, 10).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let at = |x: &[f64]| spec.flat(&spec.nearest(x));
    let i = at(&[0.3, 0.4]);
    assert!((u.value(i)[0] - 0.6).abs() < 1e-15 && (u.value(i)[1] - 0.8).abs() < 1e-15);
    assert_eq!(u.value(at(&[-1.0, 0.0])), &[-1.0, 0.0]);
    let o = at(&[0.0, 0.0]);
    assert!(u.flags[o]);
    assert_eq!(u.value(o), &[1.0, 0.0]);
    assert_eq!(u.flagged_count(), 1);
}

#[test]
fn vortex_rescaled_about_a_regular_point_flattens_out() {
    let spec = GridSpec64::centered(2, 2, 1.0, 32).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let dists: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&r| mean_square_distance(&rescale_field(&u, &[1.0, 0.0], r).unwrap(), &[1.0, 0.0]))
        .collect();
    assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
    // the map is smooth near (1, 0): the mean-square distance scales like r²
    assert!((dists[0] / dists[2] - 16.0).abs() < 3.0, "{dists:?}");
}

#[test]
fn vortex_is_fixed_by_rescaling_about_the_centre() {
    let spec = GridSpec64::centered(2, 2, 1.0, 32).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let v = rescale_field(&u, &[0.0, 0.0], 0.5).unwrap();
    let h = spec.h;
    for i in 0..spec.len() {
        let x = spec.coord_flat(i);
        let rad = x[0].hypot(x[1]);
        if rad < 4.0 * h {
            continue;
        }
        let (w, e) = (v.value(i), u.value(i));
        let gap = (w[0] - e[0]).hypot(w[1] - e[1]);
        // x/2 is a node exactly when both indices are even; elsewhere the
        // sample is interpolated, with error of order (h/|x|)²
        let on_grid = x.iter().all(|c| ((c / h).round() as i64) % 2 == 0);
        let tol = if on_grid { 1e-12 } else { (h / rad).powi(2) };
        assert!(gap <= tol, "node {x:?}: {gap}");
    }
}

#[test]
fn rescaling_composes_within_interpolation_error() {
    let spec = GridSpec64::centered(2, 2, 1.0, 32).unwrap();
    let u = VectorField::from_fn(spec.clone(), Exterior::wave(2), |x| vec![x[0].cos(), x[0].sin()]);
    let (x0, r, s) = ([0.2, -0.1], 0.7, 0.6);
    let twice = rescale_field(&rescale_field(&u, &x0, r).unwrap(), &[0.0, 0.0], s).unwrap();
    let once = rescale_field(&u, &x0, r * s).unwrap();
    let gap = twice.values.iter().zip(&once.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= spec.h, "{gap}");
}

#[test]
fn gradients_of_affine_and_constant_fields() {
    let spec = GridSpec64::new(2, vec![-0.5, 0.25], 0.125, vec![7, 5]).unwrap();
    let a = [[1.5, -2.0], [0.25, 3.0]];
    let u = VectorField::from_fn(spec.clone(), Exterior::None, |x| {
        vec![a[0][0] * x[0] + a[1][0] * x[1] + 1.0, a[0][1] * x[0] + a[1][1] * x[1] - 2.0]
    });
    let g = gradient(&u);
    for node in g.chunks(4) {
        // layout [axis][component]
        for axis in 0..2 {
            for c in 0..2 {
                assert!((node[axis * 2 + c] - a[axis][c]).abs() < 1e-12);
            }
        }
    }
    let c = VectorField::constant(spec, vec![0.0, 1.0]);
    assert!(gradient(&c).iter().all(|&v| v == 0.0));
}

#[test]
fn vortex_gradient_times_radius_is_one_on_the_annulus() {
    let spec = GridSpec64::centered(2, 2, 1.25, 64).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let norms = gradient_norms(&u);
    let mut checked = 0;
    for (i, &g) in norms.iter().enumerate() {
        let x = spec.coord_flat(i);
        let rad = x[0].hypot(x[1]);
        if rad >= 10.0 * spec.h && rad <= 1.0 {
            assert!((g * rad - 1.0).abs() < 0.05, "at {x:?}: {}", g * rad);
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn vortex_survives_a_file_round_trip() {
    let spec = GridSpec::<f64>::centered(2, 2, 0.5, 8).unwrap();
    let u = analytic_vortex(&spec).unwrap();
    let mut buf = Vec::new();
    io::write_text(&u, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("FHM1\n"));
    let back: VectorField<f64> = io::read(&buf[..]).unwrap();
    assert_eq!(back, u);

    let mut bin = Vec::new();
    io::write_binary(&u, &mut bin).unwrap();
    let back: VectorField<f64> = io::read(&bin[..]).unwrap();
    assert_eq!(back, u);
}

#[test]
fn single_precision_alias_works() {
    let spec = fracmap_core::GridSpec32::centered(2, 2, 1.0, 16).unwrap();
    let u: fracmap_core::VectorField32 = analytic_vortex(&spec).unwrap();
    assert!(u.unit_defect() < 1e-6);
}
