//! The vortex report: every pipeline on one map, with the analytic volume
//! laws checked along the way.

use std::f64::consts::PI;
use std::path::Path;

use fracmap_core::extension::{density_curve, poisson_extend, xi_density, DensityCurve, HalfGridSpec, XiEstimate};
use fracmap_core::fields::{analytic_vortex, Ball, GridSpec, VectorField};
use fracmap_core::reifenberg::{covering_tree, CoverOptions, VortexTheta};
use fracmap_core::symmetry::{
    dyadic_schedule, gradient_superlevel_volume, quantitative_stratum, regularity_scales, tube_volume, Stratum,
    StratumOptions,
};
use serde::{Deserialize, Serialize};

use crate::commands::{loglog_slope, stratum_csv};
use crate::output::{num, write_json, Csv};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportMap {
    Vortex,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub resolution: usize,
    pub radii: Vec<f64>,
    pub map: ReportMap,
    /// Stratum threshold ε.
    pub eps: f64,
    /// Smallest stratum scale.
    pub stratum_r: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { resolution: 128, radii: vec![0.1, 0.2, 0.4], map: ReportMap::Vortex, eps: 0.01, stratum_r: 0.125 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub r: f64,
    pub volume: f64,
    pub reference: f64,
}

impl VolumeRow {
    pub fn ratio(&self) -> Option<f64> {
        (self.reference > 0.0).then(|| self.volume / self.reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSummary {
    pub leaves: usize,
    pub packing_sum: f64,
    pub iterations: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub options: ReportOptions,
    pub h: f64,
    /// `Vol({|∇u| > 1/r} ∩ D₁)` against `πr²`.
    pub superlevel: Vec<VolumeRow>,
    pub superlevel_slope: Option<f64>,
    /// `Vol({r_u < r} ∩ D₁)` against `π(2r)²`.
    pub regularity: Vec<VolumeRow>,
    #[serde(skip)]
    pub regularity_scales: Vec<(Vec<f64>, f64)>,
    pub theta: DensityCurve<f64>,
    pub xi: Option<XiEstimate<f64>>,
    /// Exact density at the vortex centre (zero for the constant map).
    pub theta_star: f64,
    pub stratum: Stratum<f64>,
    /// `Vol(D_r(S) ∩ D₁)` of the stratum; no closed-form reference.
    pub tube: Vec<VolumeRow>,
    pub cover: CoverSummary,
    pub checks: Vec<Check>,
}

/// Radius of the window in which the stratum is sampled, in units of the
/// smallest stratum scale.
const STRATUM_WINDOW: f64 = 3.0;
/// Boundary spacing of the sampled stratum nodes.
const STRATUM_SPACING: f64 = 1.0 / 16.0;

pub fn run_vortex_report(opts: &ReportOptions) -> Result<ReportBundle, CliError> {
    if opts.resolution < 64 {
        return Err(CliError::Config(format!("resolution {} below the minimum of 64", opts.resolution)));
    }
    let h = 1.0 / opts.resolution as f64;
    let feasible: Vec<f64> = opts.radii.iter().copied().filter(|&r| r >= 4.0 * h && r <= 0.5).collect();
    if opts.radii.is_empty() || feasible.len() != opts.radii.len() {
        return Err(CliError::Config(format!(
            "radii must lie in [4h, 1/2] = [{}, 0.5] at resolution {}; feasible among the request: {feasible:?}",
            4.0 * h,
            opts.resolution
        )));
    }
    let scale_ok = opts.stratum_r >= 4.0 * h && opts.stratum_r <= 0.5;
    if opts.eps.is_nan() || opts.eps <= 0.0 || !scale_ok {
        return Err(CliError::Config("need ε > 0 and a stratum scale in [4h, 1/2]".into()));
    }
    let spec = GridSpec::centered(2, 2, 1.25, opts.resolution)?;
    let u = match opts.map {
        ReportMap::Vortex => analytic_vortex(&spec)?,
        ReportMap::Constant => VectorField::constant(spec.clone(), vec![1.0, 0.0]),
    };
    let vortex = opts.map == ReportMap::Vortex;
    let disk = Ball::new(vec![0.0, 0.0], 1.0)?;
    let origin = [0.0, 0.0];
    let mut checks = Vec::new();

    let superlevel: Vec<VolumeRow> = opts
        .radii
        .iter()
        .map(|&r| {
            let volume = gradient_superlevel_volume(&u, r, &disk)?;
            Ok(VolumeRow { r, volume, reference: if vortex { PI * r * r } else { 0.0 } })
        })
        .collect::<Result<_, fracmap_core::Error>>()?;
    let superlevel_slope = loglog_slope(&opts.radii, &superlevel.iter().map(|v| v.volume).collect::<Vec<_>>());

    let scales = regularity_scales(&u, &disk)?;
    let regularity: Vec<VolumeRow> = opts
        .radii
        .iter()
        .map(|&r| VolumeRow {
            r,
            volume: scales.iter().filter(|s| s.1 < r).count() as f64 * spec.cell_volume(),
            reference: if vortex { 4.0 * PI * r * r } else { 0.0 },
        })
        .collect();
    let regularity_scales = scales.iter().map(|&(i, s)| (spec.coord_flat(i), s)).collect();

    let schedule = dyadic_schedule(opts.stratum_r)?;
    let smax = schedule[0];
    let window = STRATUM_WINDOW * opts.stratum_r;
    let theta_radii: Vec<f64> = [0.125, 0.25, 0.5].into_iter().filter(|&r| r >= 4.0 * h).collect();
    let reach = (window + smax).max(0.5);
    let hspec = HalfGridSpec::around(&spec, &origin, reach + 4.0 * h, 1.1 * smax.max(0.5))?;
    let ue = poisson_extend(&u, &hspec)?;
    let theta = density_curve(&ue, &origin, &theta_radii)?;
    let xi = xi_density(&ue, &origin, &theta_radii).ok();
    let theta_star = if vortex { VortexTheta::THETA_STAR } else { 0.0 };

    let stride = ((STRATUM_SPACING / h).round() as usize).max(1);
    let sopts = StratumOptions { window: Some(Ball::new(origin.to_vec(), window)?), stride, ..StratumOptions::default() };
    let stratum = quantitative_stratum(&ue, 0, opts.eps, opts.stratum_r, None, &sopts)?;
    let nodes: Vec<usize> = stratum.nodes.iter().map(|s| s.node).collect();
    let points: Vec<Vec<f64>> = stratum.nodes.iter().map(|s| s.coords.clone()).collect();
    // stratum nodes index the half-grid boundary; map them to the field grid
    let field_nodes: Vec<usize> = points.iter().map(|p| spec.flat(&spec.nearest(p))).collect();
    debug_assert_eq!(nodes.len(), field_nodes.len());
    let tube = opts
        .radii
        .iter()
        .map(|&r| Ok(VolumeRow { r, volume: tube_volume(&spec, &field_nodes, r, &disk)?, reference: 0.0 }))
        .collect::<Result<Vec<_>, fracmap_core::Error>>()?;

    let tree = covering_tree(
        &points,
        &VortexTheta::default(),
        0,
        opts.eps,
        opts.stratum_r,
        &origin,
        1.0,
        &CoverOptions::default(),
    )?;
    let cover = CoverSummary {
        leaves: tree.leaves().count(),
        packing_sum: tree.packing_sum(),
        iterations: tree.iterations,
        delta: tree.delta,
    };

    if vortex {
        for row in superlevel.iter() {
            let ratio = row.ratio().unwrap_or(0.0);
            checks.push(Check {
                name: format!("superlevel volume / πr² at r = {}", row.r),
                value: ratio,
                reference: 1.0,
                pass: (0.9..=1.1).contains(&ratio),
            });
        }
        if opts.radii.len() >= 2 {
            let slope = superlevel_slope.unwrap_or(f64::NAN);
            checks.push(Check {
                name: "superlevel log-log slope".into(),
                value: slope,
                reference: 2.0,
                pass: (slope - 2.0).abs() <= 0.1,
            });
        }
        for row in regularity.iter() {
            let ratio = row.ratio().unwrap_or(0.0);
            checks.push(Check {
                name: format!("Vol(r_u < r) / 4πr² at r = {}", row.r),
                value: ratio,
                reference: 1.0,
                pass: (0.9..=1.1).contains(&ratio),
            });
        }
        let near = stratum.nodes.iter().any(|s| s.coords.iter().map(|v| v * v).sum::<f64>().sqrt() <= 2.0 * h);
        checks.push(Check {
            name: "stratum contains the vortex centre".into(),
            value: f64::from(u8::from(near)),
            reference: 1.0,
            pass: near,
        });
    } else {
        let total: f64 = superlevel.iter().chain(&regularity).chain(&tube).map(|v| v.volume).sum();
        checks.push(Check { name: "constant map volumes vanish".into(), value: total, reference: 0.0, pass: total == 0.0 });
        let count = stratum.nodes.len() as f64;
        checks.push(Check { name: "constant map stratum is empty".into(), value: count, reference: 0.0, pass: count == 0.0 });
    }

    Ok(ReportBundle {
        options: opts.clone(),
        h,
        superlevel,
        superlevel_slope,
        regularity,
        regularity_scales,
        theta,
        xi,
        theta_star,
        stratum,
        tube,
        cover,
        checks,
    })
}

fn volume_csv(rows: &[VolumeRow]) -> Csv {
    let mut csv = Csv::new(&["r", "volume", "reference", "ratio"]);
    for v in rows {
        csv.row(&[num(v.r), num(v.volume), num(v.reference), v.ratio().map(num).unwrap_or_default()]);
    }
    csv
}

/// `report.json` plus one CSV per table in `dir`.
pub fn write_report(bundle: &ReportBundle, dir: &Path) -> Result<(), CliError> {
    write_json(&dir.join("report.json"), bundle)?;
    volume_csv(&bundle.superlevel).write(&dir.join("superlevel.csv"))?;
    volume_csv(&bundle.regularity).write(&dir.join("regularity.csv"))?;
    volume_csv(&bundle.tube).write(&dir.join("tube.csv"))?;
    let mut theta = Csv::new(&["radius", "theta"]);
    for (&r, &t) in bundle.theta.radii.iter().zip(&bundle.theta.theta) {
        theta.row(&[num(r), num(t)]);
    }
    theta.write(&dir.join("theta.csv"))?;
    let mut scales = Csv::new(&["x1", "x2", "r_u"]);
    for (x, s) in &bundle.regularity_scales {
        scales.row(&[num(x[0]), num(x[1]), num(*s)]);
    }
    scales.write(&dir.join("regularity_scales.csv"))?;
    stratum_csv(&bundle.stratum, 2).write(&dir.join("strata.csv"))?;
    Ok(())
}
