//! Command arguments. Every command can be given on the command line or in
//! a versioned JSON config, `{"version": 1, "command": {"<name>": {…}}}`,
//! whose keys are the long flag names.

use std::path::{Path, PathBuf};

use clap::{Args, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Config schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Defaults of an argument struct, exactly as clap would fill them in.
fn clap_defaults<A: Args + FromArgMatches>() -> A {
    let cmd = A::augment_args(clap::Command::new("defaults").no_binary_name(true));
    let m = cmd.try_get_matches_from(Vec::<String>::new()).expect("every argument has a default");
    A::from_arg_matches(&m).expect("defaults convert")
}

macro_rules! clap_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                clap_defaults()
            }
        }
    )*};
}

#[derive(Debug, Parser)]
#[command(name = "fracmap", version, about = "Half-harmonic maps into spheres: extensions, densities, strata, β-numbers and coverings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Minimise the half-energy on a ball with the data outside held fixed.
    ///
    /// Log CSV columns: iteration (count), energy (dimensionless),
    /// step (preconditioned step length), residual (tangential energy
    /// gradient per unit volume).
    Minimize(MinimizeArgs),
    /// Poisson-extend a field to a half-grid.
    ///
    /// CSV columns: level (index), z (length), x1..xn (length), u1..ud
    /// (target coordinates).
    Extend(ExtendArgs),
    /// Density Θ(r) = r^{1−n}·E(u^e, B_r⁺) at a point.
    ///
    /// CSV columns: radius (length), theta (dimensionless).
    Theta(ThetaArgs),
    /// Both sides of the monotonicity identity for (ρ, r) pairs.
    ///
    /// CSV columns: rho, r (length), lhs, rhs, mismatch (dimensionless).
    AuditMonotonicity(AuditArgs),
    /// Quantitative stratum S^k_{ε,r} on a window of boundary nodes.
    ///
    /// CSV columns: node (flat index), x1..xn (length), witness_scale
    /// (length), defect (squared target distance, dimensionless).
    Strata(StrataArgs),
    /// Gradient-superlevel, regularity-scale, or tube volumes.
    ///
    /// CSV columns: r (length), volume (lengthⁿ).
    Volume(VolumeArgs),
    /// Jones β₂ of a discrete measure, optionally with the Reifenberg predicate.
    ///
    /// Measure CSV: x1..xn, weight[, radius]. Output is JSON.
    Beta(BetaArgs),
    /// Ball covering with energy-drop certificates.
    ///
    /// Set CSV: x1..xn per row. Output is the tree as JSON.
    Cover(CoverArgs),
    /// Full vortex pipeline: volumes, densities, strata and covering.
    ///
    /// CSV columns: superlevel.csv, regularity.csv and tube.csv hold
    /// r (length), volume (lengthⁿ), reference (lengthⁿ), ratio;
    /// theta.csv holds radius (length), theta; regularity_scales.csv holds
    /// x1, x2 (length), r_u (length); strata.csv as for `strata`.
    VortexReport(VortexReportArgs),
    /// Quick internal consistency checks.
    Selftest(SelftestArgs),
    /// Run a JSON experiment config.
    #[serde(skip)]
    Run(RunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MinimizeArgs {
    /// Initial map (FHM1); a noisy vortex is generated when absent.
    #[arg(long, visible_alias = "field")]
    #[serde(alias = "field")]
    pub input: Option<PathBuf>,
    /// Nodes per unit length of the generated grid.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Half side of the generated grid.
    #[arg(long, default_value_t = 1.1)]
    pub half: f64,
    /// Amplitude of the uniform noise added inside Ω before projection.
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub omega_center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub omega_radius: f64,
    /// Ω as `cx,…,r`; overrides --omega-center and --omega-radius.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub omega: Vec<f64>,
    /// Minimiser options (JSON with any of step, max_iterations, tolerance,
    /// r_ext); they override the matching flags.
    #[arg(long)]
    pub opts: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Truncation radius for exterior data.
    #[arg(long, default_value_t = 16.0)]
    pub r_ext: f64,
    /// Random tangent fields paired with the result.
    #[arg(long, default_value_t = 8)]
    pub weak_trials: usize,
    /// Output map (FHM1).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Energy log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExtendArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Centre of the half-grid (origin when absent).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
    #[arg(long, default_value_t = 0.6)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.6)]
    pub z_max: f64,
    /// `geometric` or `graded`.
    #[arg(long, default_value = "geometric")]
    pub schedule: String,
    /// Ratio of consecutive z spacings for `graded`.
    #[arg(long, default_value_t = 1.25)]
    pub ratio: f64,
    /// Largest z spacing for `graded`.
    #[arg(long)]
    pub cap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ThetaArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.125, 0.25, 0.5])]
    pub radii: Vec<f64>,
    /// Also extrapolate Ξ from the three smallest resolvable radii.
    #[arg(long)]
    pub xi: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AuditArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
    /// `rho:r` pairs.
    #[arg(long, value_delimiter = ',', default_values_t = ["0.1:0.2".to_string(), "0.2:0.4".to_string(), "0.1:0.4".to_string()])]
    pub pairs: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct StrataArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.125)]
    pub r: f64,
    /// Scale ladder; only `dyadic` (r·2^j up to 1/2) is implemented.
    #[arg(long, default_value = "dyadic")]
    pub schedule: String,
    /// Examine every `stride`-th node per axis.
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub window_center: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    pub window_radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct VolumeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `superlevel` (|∇u| > 1/r), `regularity` (r_u < r), or `tube` (D_r(set)).
    #[arg(long, visible_alias = "kind", default_value = "superlevel")]
    #[serde(alias = "kind")]
    pub mode: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4])]
    pub radii: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub window_center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub window_radius: f64,
    /// Points (CSV x1..xn) whose tube is measured; snapped to nearest nodes.
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BetaArgs {
    /// Measure CSV: x1..xn, weight[, radius].
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Ball centre; its length fixes n.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// The CSV carries a trailing radius column (packing measure).
    #[arg(long)]
    pub packing: bool,
    /// Also run the Reifenberg predicate on the root ball.
    #[arg(long)]
    pub predicate: bool,
    #[arg(long, default_value_t = 0.1)]
    pub delta6: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub root_center: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub root_radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CoverArgs {
    /// Point set CSV: x1..xn per row.
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// `vortex` (exact planar vortex density) or `field:<path.fhm>`.
    #[arg(long, default_value = "vortex")]
    pub theta: String,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Energy-drop threshold; 0.05·E at the root when absent.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.125)]
    pub r: f64,
    #[arg(long = "R", default_value_t = 1.0)]
    #[serde(rename = "R")]
    pub big_r: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
    /// Slack before the density oracle counts as non-monotone.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct VortexReportArgs {
    /// Nodes per unit length, at least 64.
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4])]
    pub radii: Vec<f64>,
    /// `vortex` or `constant`.
    #[arg(long, default_value = "vortex")]
    pub map: String,
    /// Stratum threshold.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.125)]
    pub stratum_r: f64,
    #[arg(long, default_value = "vortex-report")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SelftestArgs {}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct RunArgs {
    /// Experiment config (JSON).
    pub config: PathBuf,
}

clap_default!(
    MinimizeArgs,
    ExtendArgs,
    ThetaArgs,
    AuditArgs,
    StrataArgs,
    VolumeArgs,
    BetaArgs,
    CoverArgs,
    VortexReportArgs,
    SelftestArgs
);

/// A replayable experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub command: Command,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Contents of `minimize --opts`: any subset of the minimiser knobs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptsFile {
    pub step: Option<f64>,
    #[serde(alias = "max-iterations")]
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    #[serde(alias = "r-ext")]
    pub r_ext: Option<f64>,
}

impl MinimizeOptsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
