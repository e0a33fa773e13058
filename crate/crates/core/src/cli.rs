//! Command-line surface. The binary only parses arguments and maps the
//! result of [`run`] to an exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{chi_square_cdf, convolve_chi2_normal, fit_normal_mixture, DistributionSpec, MarginalDistribution};
use crate::error::{Error, Result};
use crate::makarov::{makarov_curve, BoundsCurve};
use crate::mtr::{mtr_curve, MtrOptions};
use crate::oracle::{build_mask, check_feasibility, discretize_quantiles, solve_transport_lp, Direction, SupportRegion};
use crate::restriction::{restricted_curve, RestrictionSpec};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
/// oracle-check ran but a gap exceeded the tolerance.
pub const EXIT_GAP: i32 = 1;

pub const SECTION4_K1: [u32; 3] = [1, 5, 10];
pub const SECTION4_K2: [f64; 3] = [1.0, 10.0, 40.0];
pub const SECTION4_STEPS: usize = 81;

#[derive(Debug, Parser)]
#[command(name = "dte-bounds", version, about = "Bounds on the distribution of treatment effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Makarov and restricted bound curves for one configuration.
    Bounds(CommonArgs),
    /// Compare the bound formulas with the discretized transport LP.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Discretization sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Chi-square/normal design over all nine (k1, k2) pairs; `--out` is a directory.
    ReplicateSection4 {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Normal-mixture approximations of a target CDF (default: the nine convolution targets).
    FitMixture {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sup-distance acceptance threshold.
        #[arg(long, default_value_t = 0.005)]
        tolerance: f64,
    },
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `mtr.rng_seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure of a subcommand with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_COMPUTE,
        };
        CliError { code, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

/// One JSON document describing a bounds run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub f0: MarginalDistribution,
    pub f1: MarginalDistribution,
    #[serde(default = "no_restriction")]
    pub restriction: RestrictionSpec,
    pub delta_min: f64,
    pub delta_max: f64,
    pub steps: usize,
    #[serde(default)]
    pub mtr: MtrOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn no_restriction() -> RestrictionSpec {
    RestrictionSpec::None
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min < self.delta_max) || !self.delta_min.is_finite() || !self.delta_max.is_finite() {
            return Err(Error::Config(format!(
                "delta_min ({}) must be below delta_max ({})",
                self.delta_min, self.delta_max
            )));
        }
        if self.steps < 2 {
            return Err(Error::Config(format!("steps must be at least 2 (got {})", self.steps)));
        }
        self.mtr.validate()
    }

    /// Inclusive grid of `steps` points.
    pub fn deltas(&self) -> Vec<f64> {
        linspace(self.delta_min, self.delta_max, self.steps)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))?;
        cfg.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

/// Decimal with 12 significant digits; exponent form for very small or large magnitudes.
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let e = v.abs().log10().floor() as i32;
    if !(-5..12).contains(&e) {
        return format!("{v:.11e}");
    }
    let s = format!("{:.*}", (11 - e).max(0) as usize, v);
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_sig12(*v)))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Result of the `bounds` subcommand before it is written out.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsRun {
    pub config: RunConfig,
    pub makarov: BoundsCurve,
    pub restricted: BoundsCurve,
}

impl BoundsRun {
    pub fn csv(&self) -> Result<Vec<u8>> {
        let (m, r) = (&self.makarov, &self.restricted);
        csv_bytes(
            &["delta", "makarov_lower", "makarov_upper", "restricted_lower", "restricted_upper"],
            (0..m.deltas.len()).map(|i| vec![m.deltas[i], m.lower[i], m.upper[i], r.lower[i], r.upper[i]]),
        )
    }

    /// Witnesses, curves and options.
    pub fn sidecar(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }
}

pub fn compute_bounds(config: &RunConfig) -> Result<BoundsRun> {
    config.validate()?;
    let deltas = config.deltas();
    let makarov = makarov_curve(&config.f0, &config.f1, &deltas)?;
    let restricted = restricted_curve(&config.f0, &config.f1, &config.restriction, &deltas, &config.mtr)?;
    Ok(BoundsRun {
        config: config.clone(),
        makarov,
        restricted,
    })
}

/// Writes the CSV to `out` (or standard output) and, for a file, a JSON
/// sidecar next to it.
pub fn cmd_bounds(config: &RunConfig, out: Option<&Path>) -> Result<BoundsRun> {
    let run = compute_bounds(config)?;
    let csv = run.csv()?;
    match out {
        Some(path) => {
            fs::write(path, &csv)?;
            fs::write(path.with_extension("json"), run.sidecar()?)?;
        }
        None => std::io::stdout().write_all(&csv)?,
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub delta: f64,
    pub formula_lower: f64,
    pub lp_lower: f64,
    pub formula_upper: f64,
    pub lp_upper: f64,
}

impl OracleRow {
    pub fn gap(&self) -> f64 {
        (self.formula_lower - self.lp_lower)
            .abs()
            .max((self.formula_upper - self.lp_upper).abs())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub tolerance: f64,
    /// Largest gap at the finest grid.
    pub max_gap: f64,
    pub passed: bool,
}

impl OracleReport {
    pub fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["n", "delta", "formula_lower", "lp_lower", "formula_upper", "lp_upper", "gap"],
            self.rows.iter().map(|r| {
                vec![r.n as f64, r.delta, r.formula_lower, r.lp_lower, r.formula_upper, r.lp_upper, r.gap()]
            }),
        )
    }
}

pub fn support_region(restriction: &RestrictionSpec) -> Result<SupportRegion> {
    match restriction {
        RestrictionSpec::None => Ok(SupportRegion::None),
        RestrictionSpec::Mtr => Ok(SupportRegion::Mtr),
        RestrictionSpec::Concave { context } => Ok(SupportRegion::Concave(*context)),
        RestrictionSpec::Convex { context } => Ok(SupportRegion::Convex(*context)),
        RestrictionSpec::Roy { .. } => Err(Error::Config(
            "oracle-check takes a single pair of marginals; check roy cells one arm at a time".into(),
        )),
    }
}

/// Formula values against the LP optimum with n equal-mass atoms per marginal.
pub fn oracle_check(config: &RunConfig, grids: &[usize], tolerance: f64) -> Result<OracleReport> {
    config.validate()?;
    if grids.is_empty() || grids.iter().any(|&n| !(2..=500).contains(&n)) {
        return Err(Error::Config("grid sizes must lie in 2..=500".into()));
    }
    let region = support_region(&config.restriction)?;
    let deltas = config.deltas();
    let formula = restricted_curve(&config.f0, &config.f1, &config.restriction, &deltas, &config.mtr)?;

    let mut rows = Vec::new();
    for &n in grids {
        let mu0 = discretize_quantiles(&config.f0, n)?;
        let mu1 = discretize_quantiles(&config.f1, n)?;
        let mask = build_mask(&mu0.points, &mu1.points, region);
        if let Some(cert) = check_feasibility(&mu0, &mu1, &mask)?.certificate {
            return Err(Error::Infeasible(cert));
        }
        let lp: Vec<(f64, f64)> = deltas
            .par_iter()
            .map(|&d| {
                let (l, _) = solve_transport_lp(&mu0, &mu1, &mask, d, Direction::MinBelow)?;
                let (u, _) = solve_transport_lp(&mu0, &mu1, &mask, d, Direction::MaxBelow)?;
                Ok((l, u))
            })
            .collect::<Result<_>>()?;
        for (i, (l, u)) in lp.into_iter().enumerate() {
            rows.push(OracleRow {
                n,
                delta: deltas[i],
                formula_lower: formula.lower[i],
                lp_lower: l,
                formula_upper: formula.upper[i],
                lp_upper: u,
            });
        }
    }
    let finest = *grids.iter().max().unwrap();
    let max_gap = rows.iter().filter(|r| r.n == finest).map(OracleRow::gap).fold(0.0, f64::max);
    Ok(OracleReport {
        rows,
        tolerance,
        max_gap,
        passed: max_gap <= tolerance,
    })
}

/// One (k1, k2) design: Y0 ~ N(0, k2), Y1 = Y0 + χ²(k1), so F1 is the
/// convolution and the true DTE is the χ²(k1) CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section4Table {
    pub k1: u32,
    pub k2: f64,
    pub deltas: Vec<f64>,
    pub true_dte: Vec<f64>,
    pub makarov_lower: Vec<f64>,
    pub makarov_upper: Vec<f64>,
    pub mtr_lower: Vec<f64>,
}

impl Section4Table {
    pub fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["delta", "true_dte", "makarov_lower", "makarov_upper", "mtr_lower"],
            (0..self.deltas.len()).map(|i| {
                vec![
                    self.deltas[i],
                    self.true_dte[i],
                    self.makarov_lower[i],
                    self.makarov_upper[i],
                    self.mtr_lower[i],
                ]
            }),
        )
    }

    pub fn file_name(&self) -> String {
        format!("section4_k1_{}_k2_{}.csv", self.k1, self.k2)
    }

    /// First row breaking makarov_lower ≤ mtr_lower ≤ truth ≤ makarov_upper by more than `slack`.
    pub fn sandwich_violation(&self, slack: f64) -> Option<usize> {
        (0..self.deltas.len()).find(|&i| {
            self.makarov_lower[i] > self.mtr_lower[i] + slack
                || self.mtr_lower[i] > self.true_dte[i] + slack
                || self.true_dte[i] > self.makarov_upper[i] + slack
        })
    }

    /// Trapezoid integral of mtr_lower − makarov_lower over δ.
    pub fn integrated_gain(&self) -> f64 {
        let gain: Vec<f64> = self.mtr_lower.iter().zip(&self.makarov_lower).map(|(m, k)| m - k).collect();
        self.deltas
            .windows(2)
            .zip(gain.windows(2))
            .map(|(d, g)| 0.5 * (d[1] - d[0]) * (g[0] + g[1]))
            .sum()
    }
}

pub fn section4_table(k1: u32, k2: f64, opts: &MtrOptions) -> Result<Section4Table> {
    let f0 = MarginalDistribution::normal(0.0, k2)?;
    let f1 = convolve_chi2_normal(k1, k2)?;
    let top = MarginalDistribution::chi_square(k1 as f64)?.quantile(0.999)?;
    let deltas = linspace(0.0, top, SECTION4_STEPS);
    let mak = makarov_curve(&f0, &f1, &deltas)?;
    let mtr = mtr_curve(&f0, &f1, &deltas, opts)?;
    Ok(Section4Table {
        k1,
        k2,
        true_dte: deltas.iter().map(|d| chi_square_cdf(k1 as f64, *d)).collect(),
        makarov_lower: mak.lower,
        makarov_upper: mak.upper,
        mtr_lower: mtr.lower,
        deltas,
    })
}

/// All nine designs, k1 outer, k2 inner.
pub fn replicate_section4(opts: &MtrOptions) -> Result<Vec<Section4Table>> {
    let mut out = Vec::with_capacity(9);
    for k1 in SECTION4_K1 {
        for k2 in SECTION4_K2 {
            out.push(section4_table(k1, k2, opts)?);
        }
    }
    Ok(out)
}

pub const SANDWICH_SLACK: f64 = 1e-6;

pub fn cmd_replicate_section4(out_dir: &Path, opts: &MtrOptions) -> std::result::Result<Vec<Section4Table>, CliError> {
    let tables = replicate_section4(opts)?;
    fs::create_dir_all(out_dir).map_err(Error::from)?;
    for t in &tables {
        fs::write(out_dir.join(t.file_name()), t.csv()?).map_err(Error::from)?;
    }
    for t in &tables {
        if let Some(i) = t.sandwich_violation(SANDWICH_SLACK) {
            return Err(CliError {
                code: EXIT_COMPUTE,
                message: format!(
                    "sandwich violated for (k1 = {}, k2 = {}) at delta = {}: makarov_lower {}, mtr_lower {}, truth {}, makarov_upper {}",
                    t.k1, t.k2, t.deltas[i], t.makarov_lower[i], t.mtr_lower[i], t.true_dte[i], t.makarov_upper[i]
                ),
            });
        }
    }
    Ok(tables)
}

/// Input for `fit-mixture`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub target: MarginalDistribution,
    #[serde(default = "default_components")]
    pub max_components: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_components() -> usize {
    3
}

fn default_grid_points() -> usize {
    401
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub target: String,
    pub components: usize,
    pub sup_distance: f64,
    pub mixture: DistributionSpec,
}

pub fn fit_mixture(cfg: &FitConfig, threshold: f64) -> Result<FitReport> {
    let (lo, hi) = cfg.target.effective_range(1e-6);
    let grid = linspace(lo, hi, cfg.grid_points.max(50));
    let fit = fit_normal_mixture(&cfg.target, &grid, cfg.max_components, threshold)?;
    Ok(FitReport {
        target: cfg.target.label(),
        components: fit.components,
        sup_distance: fit.sup_distance,
        mixture: fit.distribution.to_spec(),
    })
}

fn section4_fit_configs() -> Result<Vec<FitConfig>> {
    let mut out = Vec::new();
    for k1 in SECTION4_K1 {
        for k2 in SECTION4_K2 {
            out.push(FitConfig {
                target: convolve_chi2_normal(k1, k2)?,
                max_components: default_components(),
                grid_points: default_grid_points(),
            });
        }
    }
    Ok(out)
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn with_seed(mut cfg: RunConfig, seed: Option<u64>) -> RunConfig {
    if let Some(s) = seed {
        cfg.mtr.rng_seed = s;
    }
    cfg
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::Bounds(args) => {
            let cfg = with_seed(RunConfig::load(&args.config)?, args.seed);
            let out = args.out.or_else(|| cfg.output.clone());
            let run = cmd_bounds(&cfg, out.as_deref())?;
            log::info!("{} rows, restriction {:?}", run.makarov.deltas.len(), run.restricted.method);
        }
        Command::OracleCheck { common, grid, tolerance } => {
            let cfg = with_seed(RunConfig::load(&common.config)?, common.seed);
            let report = oracle_check(&cfg, &grid, tolerance)?;
            for r in &report.rows {
                eprintln!(
                    "n = {:>3}  delta = {:>10}  lower {} vs LP {}  upper {} vs LP {}  gap {}",
                    r.n,
                    fmt_sig12(r.delta),
                    fmt_sig12(r.formula_lower),
                    fmt_sig12(r.lp_lower),
                    fmt_sig12(r.formula_upper),
                    fmt_sig12(r.lp_upper),
                    fmt_sig12(r.gap())
                );
            }
            write_or_print(common.out.as_deref(), &report.csv()?)?;
            if !report.passed {
                return Err(CliError {
                    code: EXIT_GAP,
                    message: format!("max gap {} exceeds tolerance {}", report.max_gap, report.tolerance),
                });
            }
            eprintln!("max gap {} within tolerance {}", fmt_sig12(report.max_gap), report.tolerance);
        }
        Command::ReplicateSection4 { out, seed } => {
            let opts = MtrOptions {
                rng_seed: seed.unwrap_or(0),
                ..MtrOptions::default()
            };
            let dir = out.unwrap_or_else(|| PathBuf::from("section4"));
            let tables = cmd_replicate_section4(&dir, &opts)?;
            for t in &tables {
                eprintln!("k1 = {:>2}, k2 = {:>2}: integrated gain {}", t.k1, t.k2, fmt_sig12(t.integrated_gain()));
            }
        }
        Command::FitMixture { config, out, tolerance } => {
            let cfgs = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
                    vec![serde_json::from_str::<FitConfig>(&text).map_err(|e| config_error(format!("invalid config: {e}")))?]
                }
                None => section4_fit_configs()?,
            };
            let reports: Vec<FitReport> = cfgs.par_iter().map(|c| fit_mixture(c, tolerance)).collect::<Result<_>>()?;
            let mut bytes = serde_json::to_vec_pretty(&reports).map_err(Error::from)?;
            bytes.push(b'\n');
            write_or_print(out.as_deref(), &bytes)?;
        }
    }
    Ok(())
}
