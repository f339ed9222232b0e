//! Command handlers. Each returns a JSON summary (printed on stdout) plus
//! the list of failed checks, which turns into exit status 1.

use std::path::{Path, PathBuf};

use fracmap_core::extension::{
    monotonicity_audit, poisson_extend, theta_density, xi_density, HalfField, HalfGridSpec,
};
use fracmap_core::fields::{self, analytic_vortex, Ball, GridSpec, VectorField};
use fracmap_core::energy::{minimize, sphere_el_residual, weak_harmonic_test, MinimizeError, MinimizeOptions};
use fracmap_core::reifenberg::{
    covering_tree, jones_beta, reifenberg_predicate, second_moment, BallClass, CoverOptions, DiscreteMeasure,
    FieldTheta, ThetaOracle, VortexTheta,
};
use fracmap_core::symmetry::{
    dyadic_schedule, gradient_superlevel_volume, quantitative_stratum, regularity_scales, tube_volume,
    StratumOptions,
};
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::config::*;
use crate::output::{num, to_json, write_atomic, write_json, Csv};
use crate::report::{run_vortex_report, write_report, ReportMap, ReportOptions};
use crate::CliError;

/// Summary of a finished command.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub failures: Vec<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, failures: Vec::new() }
    }
}

/// Run a command and turn failed checks into an error after printing.
pub fn execute(command: &Command) -> Result<(), CliError> {
    let outcome = dispatch(command)?;
    print!("{}", to_json(&outcome.summary)?);
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(outcome.failures.join("; ")))
    }
}

pub fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Minimize(a) => cmd_minimize(a),
        Command::Extend(a) => cmd_extend(a),
        Command::Theta(a) => cmd_theta(a),
        Command::AuditMonotonicity(a) => cmd_audit(a),
        Command::Strata(a) => cmd_strata(a),
        Command::Volume(a) => cmd_volume(a),
        Command::Beta(a) => cmd_beta(a),
        Command::Cover(a) => cmd_cover(a),
        Command::VortexReport(a) => cmd_vortex_report(a),
        Command::Selftest(_) => cmd_selftest(),
        Command::Run(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            dispatch(&cfg.command)
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn read_field(path: &Path) -> Result<VectorField<f64>, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(fields::io::read_path(path)?)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `v`, or the origin of ℝⁿ when `v` is empty.
fn point(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    if v.is_empty() {
        return Ok(vec![0.0; n]);
    }
    if v.len() != n {
        return Err(CliError::Config(format!("{what} has {} coordinates, expected {n}", v.len())));
    }
    Ok(v.to_vec())
}

fn positive(v: f64, what: &str) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} must be positive, got {v}")))
    }
}

/// Extension on a half-grid over `D_reach(center)` with the usual margin of
/// four spacings, tall enough for half-balls of radius `height`.
fn extend_for(u: &VectorField<f64>, center: &[f64], reach: f64, height: f64) -> Result<HalfField<f64>, CliError> {
    let h = u.spec.h;
    let spec = HalfGridSpec::around(&u.spec, center, reach + 4.0 * h, height * 1.1)?;
    Ok(poisson_extend(u, &spec)?)
}

/// Rows `x1,…,xn`, optional non-numeric header.
pub fn parse_points(text: &str, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == n => out.push(v),
            Ok(v) => {
                return Err(CliError::Config(format!("line {}: expected {n} columns, found {}", i + 1, v.len())))
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Config(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Vortex on `[−half, half]²` with uniform noise of amplitude `noise` added
/// inside `omega` and projected back to the circle.
pub fn noisy_vortex(resolution: usize, half: f64, noise: f64, seed: u64, omega: &Ball<f64>) -> Result<VectorField<f64>, CliError> {
    let spec = GridSpec::centered(2, 2, half, resolution)?;
    let mut u = analytic_vortex(&spec)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in 0..spec.len() {
        let x = spec.coord_flat(i);
        if u.flags[i] || !omega.contains(&x) {
            continue;
        }
        let v = u.value(i);
        let p = [v[0] + noise * rng.gen_range(-1.0..1.0), v[1] + noise * rng.gen_range(-1.0..1.0)];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        u.value_mut(i).copy_from_slice(&[p[0] / r, p[1] / r]);
    }
    Ok(u)
}

/// Ω from `--omega cx,…,r`, or from the separate centre and radius flags.
fn omega_for(a: &MinimizeArgs, n: usize) -> Result<Ball<f64>, CliError> {
    if a.omega.is_empty() {
        positive(a.omega_radius, "omega-radius")?;
        return Ok(Ball::new(point(&a.omega_center, n, "omega-center")?, a.omega_radius)?);
    }
    if a.omega.len() != n + 1 {
        return Err(CliError::Config(format!("--omega takes {} numbers (centre and radius), got {}", n + 1, a.omega.len())));
    }
    positive(a.omega[n], "omega radius")?;
    Ok(Ball::new(a.omega[..n].to_vec(), a.omega[n])?)
}

fn cmd_minimize(a: &MinimizeArgs) -> Result<Outcome, CliError> {
    let mut opts = MinimizeOptions { max_iterations: a.max_iterations, tolerance: a.tolerance, r_ext: a.r_ext, ..MinimizeOptions::default() };
    if let Some(p) = &a.opts {
        let file = MinimizeOptsFile::load(p)?;
        opts.step = file.step.unwrap_or(opts.step);
        opts.max_iterations = file.max_iterations.unwrap_or(opts.max_iterations);
        opts.tolerance = file.tolerance.unwrap_or(opts.tolerance);
        opts.r_ext = file.r_ext.unwrap_or(opts.r_ext);
    }
    let u0 = match &a.input {
        Some(p) => read_field(p)?,
        None => {
            if a.resolution < 4 {
                return Err(CliError::Config("resolution must be at least 4".into()));
            }
            if !(0.0..1.0).contains(&a.noise) {
                return Err(CliError::Config(format!("noise must lie in [0, 1), got {}", a.noise)));
            }
            noisy_vortex(a.resolution, a.half, a.noise, a.seed, &omega_for(a, 2)?)?
        }
    };
    let omega = omega_for(a, u0.spec.n)?;
    let mut failures = Vec::new();
    let out = match minimize(&u0, &omega, &opts) {
        Ok(o) => o,
        Err(MinimizeError::Invalid(e)) => return Err(e.into()),
        Err(MinimizeError::Stagnation { partial }) => {
            failures.push(format!("line search stagnated after {} iterations", partial.iterations()));
            *partial
        }
    };
    if let Some(w) = out.log.windows(2).find(|w| w[1].energy > w[0].energy) {
        failures.push(format!("energy increased at iteration {}", w[1].iteration));
    }
    let residual = sphere_el_residual(&out.field, &omega)?;
    let tol = 10.0 * residual.l2();
    let weak = weak_harmonic_test(&out.field, &omega, a.weak_trials, tol, a.seed)?;
    if out.converged && !weak.pass {
        failures.push(format!("weak harmonicity ratio {} above {}", weak.max_ratio, tol));
    }
    if let Some(p) = &a.log {
        let mut csv = Csv::new(&["iteration", "energy", "step", "residual"]);
        for r in &out.log {
            csv.row(&[r.iteration.to_string(), num(r.energy), num(r.step), num(r.residual)]);
        }
        csv.write(p)?;
    }
    if let Some(p) = &a.out {
        let mut buf = Vec::new();
        fields::io::write_text(&out.field, &mut buf)?;
        write_atomic(p, &buf)?;
    }
    let first = out.log.first().map(|r| r.energy);
    let last = out.log.last().map(|r| r.energy);
    Ok(Outcome {
        summary: json!({
            "command": "minimize",
            "initial_energy": first,
            "final_energy": last,
            "iterations": out.iterations(),
            "converged": out.converged,
            "residual_l2": residual.l2(),
            "residual_max": residual.max(),
            "weak_harmonic": weak,
        }),
        failures,
    })
}

fn cmd_extend(a: &ExtendArgs) -> Result<Outcome, CliError> {
    let u = read_field(required(&a.input, "input")?)?;
    let c = point(&a.center, u.spec.n, "center")?;
    positive(a.half_width, "half-width")?;
    positive(a.z_max, "z-max")?;
    let around = HalfGridSpec::around(&u.spec, &c, a.half_width, a.z_max)?;
    let spec = match a.schedule.as_str() {
        "geometric" => around,
        "graded" => HalfGridSpec::graded(around.boundary, a.z_max, a.ratio, a.cap)?,
        other => return Err(CliError::Config(format!("unknown schedule {other:?} (geometric or graded)"))),
    };
    let ue = poisson_extend(&u, &spec)?;
    if let Some(p) = &a.out {
        let n = spec.boundary.n;
        let mut header = vec!["level".to_string(), "z".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=ue.d).map(|i| format!("u{i}")));
        let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for (l, &z) in spec.z_levels.iter().enumerate() {
            for i in 0..spec.boundary.len() {
                let mut row = vec![l.to_string(), num(z)];
                row.extend(spec.boundary.coord_flat(i).into_iter().map(num));
                row.extend(ue.value(l, i).iter().map(|&v| num(v)));
                csv.row(&row);
            }
        }
        csv.write(p)?;
    }
    Ok(Outcome::ok(json!({
        "command": "extend",
        "levels": spec.levels(),
        "boundary_nodes": spec.boundary.len(),
        "z_levels": spec.z_levels,
    })))
}

fn cmd_theta(a: &ThetaArgs) -> Result<Outcome, CliError> {
    let u = read_field(required(&a.input, "input")?)?;
    let c = point(&a.center, u.spec.n, "center")?;
    if a.radii.is_empty() {
        return Err(CliError::Config("at least one radius is required".into()));
    }
    a.radii.iter().try_for_each(|&r| positive(r, "radius"))?;
    let rmax = a.radii.iter().copied().fold(0.0, f64::max);
    let ue = extend_for(&u, &c, rmax, rmax)?;
    let theta = a.radii.iter().map(|&r| theta_density(&ue, &c, r)).collect::<Result<Vec<_>, _>>()?;
    let xi = if a.xi { Some(xi_density(&ue, &c, &a.radii)?) } else { None };
    if let Some(p) = &a.out {
        let mut csv = Csv::new(&["radius", "theta"]);
        for (&r, &t) in a.radii.iter().zip(&theta) {
            csv.row(&[num(r), num(t)]);
        }
        csv.write(p)?;
    }
    Ok(Outcome::ok(json!({ "command": "theta", "center": c, "radii": a.radii, "theta": theta, "xi": xi })))
}

fn parse_pairs(pairs: &[String]) -> Result<Vec<(f64, f64)>, CliError> {
    pairs
        .iter()
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| CliError::Config(format!("pair {p:?} is not rho:r")))?;
            let rho: f64 = a.trim().parse().map_err(|_| CliError::Config(format!("bad ρ in {p:?}")))?;
            let r: f64 = b.trim().parse().map_err(|_| CliError::Config(format!("bad r in {p:?}")))?;
            if !(rho > 0.0 && rho < r) {
                return Err(CliError::Config(format!("pair {p:?} needs 0 < ρ < r")));
            }
            Ok((rho, r))
        })
        .collect()
}

fn cmd_audit(a: &AuditArgs) -> Result<Outcome, CliError> {
    let u = read_field(required(&a.input, "input")?)?;
    let c = point(&a.center, u.spec.n, "center")?;
    let pairs = parse_pairs(&a.pairs)?;
    if pairs.is_empty() {
        return Err(CliError::Config("at least one pair is required".into()));
    }
    let rmax = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let ue = extend_for(&u, &c, rmax, rmax)?;
    let audit = monotonicity_audit(&ue, &c, &pairs)?;
    if let Some(p) = &a.out {
        let mut csv = Csv::new(&["rho", "r", "lhs", "rhs", "mismatch"]);
        for row in &audit.rows {
            csv.row(&[num(row.rho), num(row.r), num(row.lhs), num(row.rhs), num(row.mismatch)]);
        }
        csv.write(p)?;
    }
    Ok(Outcome::ok(json!({ "command": "audit-monotonicity", "audit": audit })))
}

fn cmd_strata(a: &StrataArgs) -> Result<Outcome, CliError> {
    let u = read_field(required(&a.input, "input")?)?;
    let n = u.spec.n;
    if a.k >= n {
        return Err(CliError::Config(format!("k must be below n = {n}")));
    }
    positive(a.eps, "eps")?;
    positive(a.window_radius, "window-radius")?;
    if !(a.r > 0.0 && a.r <= 0.5) {
        return Err(CliError::Config(format!("r must lie in (0, 1/2], got {}", a.r)));
    }
    if a.schedule != "dyadic" {
        return Err(CliError::Config(format!("unknown schedule {:?}; only \"dyadic\" is available", a.schedule)));
    }
    let wc = point(&a.window_center, n, "window-center")?;
    let schedule = dyadic_schedule(a.r)?;
    let smax = schedule[0];
    let ue = extend_for(&u, &wc, a.window_radius + smax, smax)?;
    let opts = StratumOptions { window: Some(Ball::new(wc, a.window_radius)?), stride: a.stride, ..StratumOptions::default() };
    let stratum = quantitative_stratum(&ue, a.k, a.eps, a.r, None, &opts)?;
    if let Some(p) = &a.out {
        stratum_csv(&stratum, n).write(p)?;
    }
    Ok(Outcome::ok(json!({ "command": "strata", "stratum": stratum })))
}

pub(crate) fn stratum_csv(s: &fracmap_core::symmetry::Stratum<f64>, n: usize) -> Csv {
    let mut header = vec!["node".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["witness_scale".to_string(), "defect".to_string()]);
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for node in &s.nodes {
        let mut row = vec![node.node.to_string()];
        row.extend(node.coords.iter().map(|&v| num(v)));
        row.extend([num(node.witness_scale), num(node.defect)]);
        csv.row(&row);
    }
    csv
}

fn cmd_volume(a: &VolumeArgs) -> Result<Outcome, CliError> {
    let u = read_field(required(&a.input, "input")?)?;
    let n = u.spec.n;
    let window = Ball::new(point(&a.window_center, n, "window-center")?, a.window_radius)?;
    a.radii.iter().try_for_each(|&r| positive(r, "radius"))?;
    let volumes: Vec<f64> = match a.mode.as_str() {
        "superlevel" => a.radii.iter().map(|&r| gradient_superlevel_volume(&u, r, &window)).collect::<Result<_, _>>()?,
        "regularity" => {
            let scales = regularity_scales(&u, &window)?;
            let cell = u.spec.cell_volume();
            a.radii.iter().map(|&r| scales.iter().filter(|s| s.1 < r).count() as f64 * cell).collect()
        }
        "tube" => {
            let pts = parse_points(&read_text(required(&a.set, "set")?)?, n)?;
            let mut nodes: Vec<usize> = pts.iter().map(|p| u.spec.flat(&u.spec.nearest(p))).collect();
            nodes.sort_unstable();
            nodes.dedup();
            a.radii.iter().map(|&r| tube_volume(&u.spec, &nodes, r, &window)).collect::<Result<_, _>>()?
        }
        other => return Err(CliError::Config(format!("unknown volume mode {other:?}"))),
    };
    if let Some(p) = &a.out {
        let mut csv = Csv::new(&["r", "volume"]);
        for (&r, &v) in a.radii.iter().zip(&volumes) {
            csv.row(&[num(r), num(v)]);
        }
        csv.write(p)?;
    }
    Ok(Outcome::ok(json!({
        "command": "volume",
        "mode": a.mode,
        "radii": a.radii,
        "volumes": volumes,
        "loglog_slope": loglog_slope(&a.radii, &volumes),
    })))
}

fn cmd_beta(a: &BetaArgs) -> Result<Outcome, CliError> {
    if a.center.is_empty() {
        return Err(CliError::Config("--center is required; its length fixes n".into()));
    }
    let n = a.center.len();
    positive(a.radius, "radius")?;
    if a.k > n {
        return Err(CliError::Config(format!("k must lie in [0, {n}]")));
    }
    let path = required(&a.measure, "measure")?;
    let mu = DiscreteMeasure::from_csv(&read_text(path)?, n, a.packing)?;
    let beta = jones_beta(&mu, &a.center, a.radius, a.k)?;
    let moment = second_moment(&mu, &a.center, a.radius);
    let predicate = if a.predicate {
        if !a.packing {
            return Err(CliError::Config("--predicate needs --packing radii".into()));
        }
        positive(a.delta6, "delta6")?;
        let rc = point(&a.root_center, n, "root-center")?;
        Some(reifenberg_predicate(&mu, a.k, a.delta6, &rc, a.root_radius)?)
    } else {
        None
    };
    let summary = json!({
        "command": "beta",
        "beta2": beta.beta2,
        "plane": beta.plane,
        "empty": beta.empty,
        "mass": moment.mass,
        "eigenvalues": moment.eigen.values,
        "predicate": predicate,
    });
    if let Some(p) = &a.out {
        write_json(p, &summary)?;
    }
    Ok(Outcome::ok(summary))
}

fn cmd_cover(a: &CoverArgs) -> Result<Outcome, CliError> {
    if !(a.rho > 0.0 && a.rho <= 0.01) {
        return Err(CliError::Config(format!("rho must satisfy 0 < ρ ≤ 1/100, got {}", a.rho)));
    }
    if !(a.r > 0.0 && a.r < a.big_r && a.big_r <= 1.0) {
        return Err(CliError::Config(format!("need 0 < r < R ≤ 1, got r = {}, R = {}", a.r, a.big_r)));
    }
    positive(a.eps, "eps")?;
    if let Some(d) = a.delta {
        positive(d, "delta")?;
    }
    let opts = CoverOptions { delta: a.delta, rho: a.rho, tol: a.tol, ..CoverOptions::default() };
    let set_path = required(&a.set, "set")?;
    let text = read_text(set_path)?;
    let run = |oracle: &dyn ThetaOracle<f64>| -> Result<_, CliError> {
        let n = oracle.dim();
        if a.k > n {
            return Err(CliError::Config(format!("k must lie in [0, {n}]")));
        }
        let set = parse_points(&text, n)?;
        let c = point(&a.center, n, "center")?;
        let tree = covering_tree(&set, oracle, a.k, a.eps, a.r, &c, a.big_r, &opts)?;
        Ok((set, c, tree))
    };
    let (set, c, tree) = match a.theta.as_str() {
        "vortex" => run(&VortexTheta::default())?,
        spec if spec.starts_with("field:") => {
            let u = read_field(Path::new(&spec["field:".len()..]))?;
            let c = point(&a.center, u.spec.n, "center")?;
            let ue = extend_for(&u, &c, 3.0 * a.big_r, 2.0 * a.big_r)?;
            run(&FieldTheta { field: &ue })?
        }
        other => return Err(CliError::Config(format!("unknown theta oracle {other:?} (vortex or field:<path>)"))),
    };
    let mut failures = Vec::new();
    let inside: Vec<Vec<f64>> = set
        .iter()
        .filter(|p| p.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() < a.big_r * a.big_r)
        .cloned()
        .collect();
    if !tree.covers(&inside) {
        failures.push("leaves do not cover the input set".into());
    }
    for leaf in tree.leaves() {
        match leaf.class {
            BallClass::Final => {
                let cert = leaf.certificate.as_ref().expect("final leaves carry certificates");
                if cert.drop < tree.delta - a.tol {
                    failures.push(format!("final leaf {} drops by {} < δ", leaf.id, cert.drop));
                }
            }
            BallClass::RBall if leaf.radius != a.r => failures.push(format!("r-ball {} has radius {}", leaf.id, leaf.radius)),
            _ => {}
        }
    }
    if let Some(p) = &a.out {
        write_json(p, &tree)?;
    }
    Ok(Outcome {
        summary: json!({
            "command": "cover",
            "nodes": tree.nodes.len(),
            "leaves": tree.leaves().count(),
            "packing_sum": tree.packing_sum(),
            "iterations": tree.iterations,
            "delta": tree.delta,
            "off_plane": tree.off_plane,
        }),
        failures,
    })
}

fn cmd_vortex_report(a: &VortexReportArgs) -> Result<Outcome, CliError> {
    let map = match a.map.as_str() {
        "vortex" => ReportMap::Vortex,
        "constant" => ReportMap::Constant,
        other => return Err(CliError::Config(format!("unknown map {other:?} (vortex or constant)"))),
    };
    let opts = ReportOptions { resolution: a.resolution, radii: a.radii.clone(), map, eps: a.eps, stratum_r: a.stratum_r };
    let bundle = run_vortex_report(&opts)?;
    write_report(&bundle, &a.out_dir)?;
    let failures = bundle.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(Outcome {
        summary: json!({ "command": "vortex-report", "out_dir": a.out_dir, "checks": bundle.checks }),
        failures,
    })
}

fn cmd_selftest() -> Result<Outcome, CliError> {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    // constant data extends to the same constant
    let spec = GridSpec::centered(1, 2, 1.0, 16)?;
    let u = VectorField::constant(spec.clone(), vec![0.6, 0.8]);
    let ue = poisson_extend(&u, &HalfGridSpec::around(&spec, &[0.0], 0.5, 0.5)?)?;
    checks.push(("constant extension", ue.max_deviation_from(&[0.6, 0.8]) < 1e-6));
    // unit-side equilateral triangle about its centroid: β² = 1/2
    let s = 3f64.sqrt();
    let tri = vec![vec![0.0, 1.0 / s], vec![-0.5, -0.5 / s], vec![0.5, -0.5 / s]];
    let mu = DiscreteMeasure::from_points(&tri, &[1.0; 3])?;
    let b = jones_beta(&mu, &[0.0, 0.0], 1.0, 1)?;
    checks.push(("triangle beta", (b.beta2 - 0.5).abs() < 1e-12));
    // the analytic vortex density at its centre
    let t: f64 = VortexTheta::default().theta(&[0.0, 0.0], 0.5)?;
    checks.push(("vortex density", (t - std::f64::consts::PI).abs() < 1e-15));
    let failures = checks.iter().filter(|c| !c.1).map(|c| c.0.to_string()).collect();
    let summary = json!({
        "command": "selftest",
        "checks": checks.iter().map(|(n, p)| json!({"name": n, "pass": p})).collect::<Vec<_>>(),
    });
    Ok(Outcome { summary, failures })
}
