//! One-dimensional distribution functions used as fixed marginals.
//!
//! Every bound in this crate is a functional of two CDFs. A
//! [`MarginalDistribution`] is immutable once built; the expensive
//! χ²–normal convolution lazily tabulates a monotone interpolant that the
//! optimizers use for searching, while [`MarginalDistribution::cdf`] always
//! evaluates the exact quadrature.

mod fit;
mod tabulated;

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::numeric;

pub use fit::{fit_normal_mixture, MixtureFit};
pub use tabulated::TabulatedCdf;

/// Anything that can be evaluated as a distribution function.
pub trait Cdf: Sync {
    fn cdf(&self, y: f64) -> f64;
}

impl<T: Cdf + ?Sized> Cdf for &T {
    fn cdf(&self, y: f64) -> f64 {
        (**self).cdf(y)
    }
}

/// Search view of a marginal: identical to the exact CDF except for kinds
/// whose exact evaluation needs quadrature, which go through a dense table.
#[derive(Clone, Copy)]
pub struct Surrogate<'a>(pub &'a MarginalDistribution);

impl Cdf for Surrogate<'_> {
    fn cdf(&self, y: f64) -> f64 {
        self.0.cdf_fast(y)
    }
}

/// Tail mass treated as zero when deciding where a CDF is saturated.
pub const SATURATION_TAIL: f64 = 1e-13;

const CONVOLUTION_WINDOW_SDS: f64 = 8.0;
const CONVOLUTION_TOL: f64 = 1e-13;
const TABLE_NODES: usize = 1 << 14;

/// JSON form of a distribution, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DistributionSpec {
    #[serde(rename = "normal")]
    Normal { mu: f64, sigma2: f64 },
    #[serde(rename = "chi_square")]
    ChiSquare { k: f64 },
    #[serde(rename = "chi2_normal_convolution")]
    Chi2NormalConvolution { k1: u32, k2: f64 },
    #[serde(rename = "normal_mixture")]
    NormalMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    #[serde(rename = "uniform")]
    Uniform { a: f64, b: f64 },
    #[serde(rename = "step_cdf")]
    StepCdf { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone)]
enum Kind {
    Normal {
        mu: f64,
        sd: f64,
    },
    ChiSquare {
        k: f64,
    },
    Convolution {
        k1: u32,
        k2: f64,
        table: OnceLock<TabulatedCdf>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Step {
        points: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A univariate distribution function F with evaluation, inversion and
/// support metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct MarginalDistribution {
    kind: Kind,
    range: OnceLock<(f64, f64)>,
}

impl PartialEq for MarginalDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.to_spec() == other.to_spec()
    }
}

impl TryFrom<DistributionSpec> for MarginalDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Normal { mu, sigma2 } => Self::normal(mu, sigma2),
            DistributionSpec::ChiSquare { k } => Self::chi_square(k),
            DistributionSpec::Chi2NormalConvolution { k1, k2 } => convolve_chi2_normal(k1, k2),
            DistributionSpec::NormalMixture {
                weights,
                means,
                variances,
            } => Self::normal_mixture(weights, means, variances),
            DistributionSpec::Uniform { a, b } => Self::uniform(a, b),
            DistributionSpec::StepCdf { points } => {
                let (ys, fs) = points.into_iter().map(|[y, f]| (y, f)).unzip();
                Self::step_cdf(ys, fs)
            }
        }
    }
}

impl From<MarginalDistribution> for DistributionSpec {
    fn from(d: MarginalDistribution) -> Self {
        d.to_spec()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_quantile(q: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * q)
}

/// Distribution function of χ²(k).
pub fn chi_square_cdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(0.5 * k, 0.5 * x)
    }
}

impl MarginalDistribution {
    fn from_kind(kind: Kind) -> Self {
        MarginalDistribution {
            kind,
            range: OnceLock::new(),
        }
    }

    pub fn normal(mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !mu.is_finite() || !sigma2.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "normal needs finite mu and sigma2 > 0 (got {mu}, {sigma2})"
            )));
        }
        Ok(Self::from_kind(Kind::Normal {
            mu,
            sd: sigma2.sqrt(),
        }))
    }

    pub fn chi_square(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "chi_square needs k > 0 (got {k})"
            )));
        }
        Ok(Self::from_kind(Kind::ChiSquare { k }))
    }

    pub fn normal_mixture(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("mixture has no components".into()));
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::InvalidDistribution(format!(
                "mixture arrays differ in length ({}, {}, {})",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidDistribution("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution(
                "mixture components need finite means and positive variances".into(),
            ));
        }
        Ok(Self::from_kind(Kind::Mixture {
            weights,
            means,
            sds: variances.iter().map(|v| v.sqrt()).collect(),
        }))
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "uniform needs finite a < b (got {a}, {b})"
            )));
        }
        Ok(Self::from_kind(Kind::Uniform { a, b }))
    }

    /// Right-continuous step CDF taking value `values[i]` on
    /// `[points[i], points[i + 1])` and 0 left of the first breakpoint.
    pub fn step_cdf(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("step CDF has no breakpoints".into()));
        }
        if points.len() != values.len() {
            return Err(Error::InvalidDistribution(
                "step CDF breakpoints and values differ in length".into(),
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite breakpoint".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidDistribution(
                "step CDF breakpoints must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidDistribution(
                "step CDF values must be nondecreasing in [0, 1]".into(),
            ));
        }
        Ok(Self::from_kind(Kind::Step { points, values }))
    }

    pub fn to_spec(&self) -> DistributionSpec {
        match &self.kind {
            Kind::Normal { mu, sd } => DistributionSpec::Normal {
                mu: *mu,
                sigma2: sd * sd,
            },
            Kind::ChiSquare { k } => DistributionSpec::ChiSquare { k: *k },
            Kind::Convolution { k1, k2, .. } => DistributionSpec::Chi2NormalConvolution { k1: *k1, k2: *k2 },
            Kind::Mixture { weights, means, sds } => DistributionSpec::NormalMixture {
                weights: weights.clone(),
                means: means.clone(),
                variances: sds.iter().map(|s| s * s).collect(),
            },
            Kind::Uniform { a, b } => DistributionSpec::Uniform { a: *a, b: *b },
            Kind::Step { points, values } => DistributionSpec::StepCdf {
                points: points.iter().zip(values).map(|(y, f)| [*y, *f]).collect(),
            },
        }
    }

    /// Short human-readable label, used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            Kind::Normal { mu, sd } => format!("normal({mu}, {})", sd * sd),
            Kind::ChiSquare { k } => format!("chi_square({k})"),
            Kind::Convolution { k1, k2, .. } => format!("chi2_normal_convolution({k1}, {k2})"),
            Kind::Mixture { weights, .. } => format!("normal_mixture({} components)", weights.len()),
            Kind::Uniform { a, b } => format!("uniform({a}, {b})"),
            Kind::Step { points, .. } => format!("step_cdf({} points)", points.len()),
        }
    }

    pub fn is_step(&self) -> bool {
        matches!(self.kind, Kind::Step { .. })
    }

    /// Breakpoints of a step CDF; empty for continuous kinds.
    pub fn jump_points(&self) -> &[f64] {
        match &self.kind {
            Kind::Step { points, .. } => points,
            _ => &[],
        }
    }

    /// Exact distribution function.
    pub fn cdf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        match &self.kind {
            Kind::Normal { mu, sd } => std_normal_cdf((y - mu) / sd),
            Kind::ChiSquare { k } => chi_square_cdf(*k, y),
            Kind::Convolution { k1, k2, .. } => convolution_cdf(*k1, *k2, y),
            Kind::Mixture { weights, means, sds } => weights
                .iter()
                .zip(means)
                .zip(sds)
                .map(|((w, m), s)| w * std_normal_cdf((y - m) / s))
                .sum::<f64>()
                .clamp(0.0, 1.0),
            Kind::Uniform { a, b } => ((y - a) / (b - a)).clamp(0.0, 1.0),
            Kind::Step { points, values } => {
                let idx = points.partition_point(|p| *p <= y);
                if idx == 0 {
                    0.0
                } else {
                    values[idx - 1]
                }
            }
        }
    }

    /// Left limit F(y−).
    pub fn cdf_left(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Step { points, values } => {
                let idx = points.partition_point(|p| *p < y);
                if idx == 0 {
                    0.0
                } else {
                    values[idx - 1]
                }
            }
            _ => self.cdf(y),
        }
    }

    /// Fast evaluation for searching. Exact for every kind except the
    /// convolution, which uses a tabulated interpolant accurate to ~1e-7.
    pub fn cdf_fast(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Convolution { table, .. } => table
                .get_or_init(|| {
                    let (lo, hi) = self.effective_range(SATURATION_TAIL);
                    TabulatedCdf::from_cdf(|x| self.cdf(x), lo, hi, TABLE_NODES)
                })
                .cdf(y),
            _ => self.cdf(y),
        }
    }

    /// Support as extended reals.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Normal { .. } | Kind::Convolution { .. } | Kind::Mixture { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            Kind::ChiSquare { .. } => (0.0, f64::INFINITY),
            Kind::Uniform { a, b } => (*a, *b),
            Kind::Step { points, .. } => (points[0], points[points.len() - 1]),
        }
    }

    /// Characteristic spread, used to size search windows.
    pub fn scale(&self) -> f64 {
        match &self.kind {
            Kind::Normal { sd, .. } => *sd,
            Kind::ChiSquare { k } => (2.0 * k).sqrt(),
            Kind::Convolution { k1, k2, .. } => (2.0 * *k1 as f64 + k2).sqrt(),
            Kind::Mixture { weights, means, sds } => {
                let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
                let var: f64 = weights
                    .iter()
                    .zip(means)
                    .zip(sds)
                    .map(|((w, m), s)| w * (s * s + (m - mean) * (m - mean)))
                    .sum();
                var.sqrt()
            }
            Kind::Uniform { a, b } => b - a,
            Kind::Step { points, .. } => (points[points.len() - 1] - points[0]).max(1.0),
        }
    }

    /// Finite interval outside of which the CDF is within `tail` of 0 or 1.
    /// Cached for the default tail.
    pub fn effective_range(&self, tail: f64) -> (f64, f64) {
        if tail == SATURATION_TAIL {
            return *self.range.get_or_init(|| self.compute_range(tail));
        }
        self.compute_range(tail)
    }

    fn compute_range(&self, tail: f64) -> (f64, f64) {
        match &self.kind {
            Kind::Uniform { a, b } => (*a, *b),
            Kind::Step { points, .. } => (points[0], points[points.len() - 1]),
            Kind::ChiSquare { .. } => (0.0, self.quantile_unchecked(1.0 - tail)),
            _ => (self.quantile_unchecked(tail), self.quantile_unchecked(1.0 - tail)),
        }
    }

    /// Smallest y with F(y) ≥ q, for q strictly inside (0, 1).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("quantile level {q} is outside (0, 1)")));
        }
        Ok(self.quantile_unchecked(q))
    }

    /// Quantile extended to the closed unit interval: level 0 and 1 map to
    /// the support endpoints.
    pub fn quantile_extended(&self, q: f64) -> f64 {
        if q <= 0.0 {
            self.support().0
        } else if q >= 1.0 {
            self.support().1
        } else {
            self.quantile_unchecked(q)
        }
    }

    fn quantile_unchecked(&self, q: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mu, sd } => mu + sd * std_normal_quantile(q),
            Kind::Uniform { a, b } => a + q * (b - a),
            Kind::Step { points, values } => {
                let idx = values.partition_point(|v| *v < q);
                if idx < points.len() {
                    points[idx]
                } else {
                    f64::INFINITY
                }
            }
            _ => self.bisect_quantile(q),
        }
    }

    fn bisect_quantile(&self, q: f64) -> f64 {
        let (lo_support, _) = self.support();
        let center = match &self.kind {
            Kind::ChiSquare { k } => *k,
            Kind::Convolution { k1, .. } => *k1 as f64,
            Kind::Mixture { weights, means, .. } => weights.iter().zip(means).map(|(w, m)| w * m).sum(),
            _ => 0.0,
        };
        let step = self.scale().max(1e-6);
        let mut lo = if lo_support.is_finite() { lo_support } else { center - step };
        let mut width = step;
        while lo > lo_support && self.cdf(lo) >= q {
            lo -= width;
            width *= 2.0;
            if lo_support.is_finite() && lo < lo_support {
                lo = lo_support;
            }
        }
        let mut hi = center + step;
        width = step;
        while self.cdf(hi) < q {
            hi += width;
            width *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let tol = 1e-13 * (1.0 + lo.abs().max(hi.abs()));
        numeric::bisect_increasing(|y| self.cdf(y), q, lo, hi, tol)
    }
}

impl Cdf for MarginalDistribution {
    fn cdf(&self, y: f64) -> f64 {
        MarginalDistribution::cdf(self, y)
    }
}

/// Distribution of β + ε with β ~ χ²(k1) and ε ~ N(0, k2) independent.
pub fn convolve_chi2_normal(k1: u32, k2: f64) -> Result<MarginalDistribution> {
    if k1 < 1 {
        return Err(Error::domain("chi-square degrees of freedom k1 must be at least 1"));
    }
    if !(k2 > 0.0) || !k2.is_finite() {
        return Err(Error::domain(format!(
            "normal variance k2 must be positive (got {k2}); degenerate noise is not a continuous marginal"
        )));
    }
    Ok(MarginalDistribution::from_kind(Kind::Convolution {
        k1,
        k2,
        table: OnceLock::new(),
    }))
}

/// F(y) = ∫ G(t; k1) φ((y − t)/s)/s dt with s = √k2, over the ±8s window.
/// The substitution t = u² removes the square-root behaviour of G at 0.
fn convolution_cdf(k1: u32, k2: f64, y: f64) -> f64 {
    let s = k2.sqrt();
    let t_hi = y + CONVOLUTION_WINDOW_SDS * s;
    if t_hi <= 0.0 {
        return 0.0;
    }
    let t_lo = (y - CONVOLUTION_WINDOW_SDS * s).max(0.0);
    let k = k1 as f64;
    let integrand = |u: f64| {
        let t = u * u;
        chi_square_cdf(k, t) * std_normal_pdf((y - t) / s) / s * 2.0 * u
    };
    // Noise beyond ±8s carries < 1.3e-15 of mass.
    numeric::integrate(integrand, t_lo.sqrt(), t_hi.sqrt(), CONVOLUTION_TOL).clamp(0.0, 1.0)
}

/// Sort values into nondecreasing order (monotone rearrangement of an
/// estimated quantile curve).
pub fn rearrange_monotone(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("rearrange_monotone needs at least one value"));
    }
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Invert a monotone quantile curve into a right-continuous step CDF with
/// F(quantiles[i]) = q_grid[i]. At tied quantile values the largest level wins.
pub fn step_cdf_from_quantiles(q_grid: &[f64], quantiles: &[f64]) -> Result<MarginalDistribution> {
    if q_grid.len() != quantiles.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} quantile levels but {} quantile values",
            q_grid.len(),
            quantiles.len()
        )));
    }
    if q_grid.is_empty() {
        return Err(Error::EmptyInput("quantile grid is empty"));
    }
    if q_grid.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || q_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("quantile levels must be strictly increasing inside (0, 1)"));
    }
    if let Some(index) = quantiles.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::NotMonotone { index: index + 1 });
    }
    let mut points: Vec<f64> = Vec::with_capacity(quantiles.len());
    let mut values: Vec<f64> = Vec::with_capacity(quantiles.len());
    for (&y, &q) in quantiles.iter().zip(q_grid) {
        if points.last() == Some(&y) {
            *values.last_mut().expect("nonempty") = q;
        } else {
            points.push(y);
            values.push(q);
        }
    }
    MarginalDistribution::step_cdf(points, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal() -> MarginalDistribution {
        MarginalDistribution::normal(0.0, 1.0).unwrap()
    }

    #[test]
    fn cdf_spot_values() {
        assert!((std_normal().cdf(0.0) - 0.5).abs() < 1e-15);
        let chi1 = MarginalDistribution::chi_square(1.0).unwrap();
        assert_eq!(chi1.cdf(0.0), 0.0);
        // P(Z^2 <= 1) = P(|Z| <= 1) = 2Φ(1) − 1.
        let via_normal = 2.0 * std_normal().cdf(1.0) - 1.0;
        assert!((chi1.cdf(1.0) - via_normal).abs() < 1e-12);
        assert!((chi1.cdf(1.0) - 0.682_689_492_137_085_9).abs() < 1e-12);
        // Independent route: integrate the χ²(1) density x^{-1/2} e^{-x/2} / √(2π) with x = u².
        let quad = numeric::integrate(
            |u: f64| 2.0 * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            0.0,
            1.0,
            1e-14,
        );
        assert!((chi1.cdf(1.0) - quad).abs() < 1e-12);
    }

    #[test]
    fn quantile_spot_values_and_domain() {
        assert!(std_normal().quantile(0.5).unwrap().abs() < 1e-12);
        let u = MarginalDistribution::uniform(0.0, 1.0).unwrap();
        assert!((u.quantile(0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(u.quantile(0.0), Err(Error::Domain(_))));
        assert!(matches!(u.quantile(1.2), Err(Error::Domain(_))));
        let conv = convolve_chi2_normal(1, 1.0).unwrap();
        let v = conv.quantile(0.5).unwrap();
        assert!((conv.cdf(v) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn convolution_limits_and_domain() {
        let conv = convolve_chi2_normal(1, 1.0).unwrap();
        assert!(conv.cdf(40.0) >= 1.0 - 1e-6);
        let at0 = conv.cdf(0.0);
        assert!(at0 > 0.0 && at0 < 0.5, "{at0}");
        assert!(matches!(convolve_chi2_normal(1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(convolve_chi2_normal(0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn convolution_matches_density_route() {
        // Independent route: F(y) = ∫ g(b; k1) Φ((y − b)/s) db with the χ²
        // density g, integrated on a u = √b scale.
        let (k1, k2, y) = (5u32, 10.0, 5.0);
        let conv = convolve_chi2_normal(k1, k2).unwrap();
        let k = k1 as f64;
        let s = k2.sqrt();
        let ln_norm = (0.5 * k) * 2f64.ln() + statrs::function::gamma::ln_gamma(0.5 * k);
        let via_density = numeric::integrate(
            |u: f64| {
                let b = u * u;
                let g = ((0.5 * k - 1.0) * b.ln() - 0.5 * b - ln_norm).exp();
                g * std_normal_cdf((y - b) / s) * 2.0 * u
            },
            1e-300,
            (y + 12.0 * s + 60.0).sqrt(),
            1e-14,
        );
        assert!((conv.cdf(y) - via_density).abs() < 1e-8, "{} vs {}", conv.cdf(y), via_density);
    }

    #[test]
    fn fast_table_tracks_exact() {
        let conv = convolve_chi2_normal(1, 1.0).unwrap();
        for i in 0..200 {
            let y = -6.0 + 0.09 * i as f64;
            assert!((conv.cdf(y) - conv.cdf_fast(y)).abs() < 1e-6);
        }
    }

    #[test]
    fn step_cdf_right_continuous() {
        let s = MarginalDistribution::step_cdf(vec![1.0, 2.0], vec![0.5, 1.0]).unwrap();
        assert_eq!(s.cdf(0.999), 0.0);
        assert_eq!(s.cdf(1.0), 0.5);
        assert_eq!(s.cdf_left(1.0), 0.0);
        assert_eq!(s.cdf(2.0), 1.0);
        assert_eq!(s.quantile(0.5).unwrap(), 1.0);
        assert_eq!(s.quantile(0.51).unwrap(), 2.0);
        assert!(MarginalDistribution::step_cdf(vec![1.0, 1.0], vec![0.5, 1.0]).is_err());
        assert!(MarginalDistribution::step_cdf(vec![1.0, 2.0], vec![0.7, 0.5]).is_err());
    }

    #[test]
    fn mixture_validation() {
        assert!(MarginalDistribution::normal_mixture(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MarginalDistribution::normal_mixture(vec![1.5, -0.5], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        let m = MarginalDistribution::normal_mixture(vec![0.3, 0.7], vec![0.0, 1.0], vec![1.0, 4.0]).unwrap();
        let expect = 0.3 * std_normal_cdf(0.5) + 0.7 * std_normal_cdf(-0.25);
        assert!((m.cdf(0.5) - expect).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_examples() {
        let texts = [
            r#"{"kind": "normal", "mu": 0.0, "sigma2": 1.0}"#,
            r#"{"kind": "chi2_normal_convolution", "k1": 5, "k2": 10}"#,
            r#"{"kind": "normal_mixture", "weights": [0.5, 0.5], "means": [0, 1], "variances": [1, 2]}"#,
            r#"{"kind": "step_cdf", "points": [[0, 0.5], [1, 1]]}"#,
            r#"{"kind": "uniform", "a": 0, "b": 1}"#,
            r#"{"kind": "chi_square", "k": 1}"#,
        ];
        for t in texts {
            let d: MarginalDistribution = serde_json::from_str(t).unwrap();
            let back: MarginalDistribution = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
            assert_eq!(d, back);
        }
        assert!(serde_json::from_str::<MarginalDistribution>(r#"{"kind": "uniform", "a": 1, "b": 0}"#).is_err());
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(rearrange_monotone(&[3.0, 1.0, 2.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rearrange_monotone(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rearrange_monotone(&[2.0, 2.0, 1.0]).unwrap(), vec![1.0, 2.0, 2.0]);
        assert!(matches!(rearrange_monotone(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn step_from_quantiles_examples() {
        let s = step_cdf_from_quantiles(&[0.25, 0.5, 0.75], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.cdf(2.0), 0.5);
        let tied = step_cdf_from_quantiles(&[0.25, 0.5, 0.75], &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(tied.cdf(1.0), 0.5);
        assert!(matches!(
            step_cdf_from_quantiles(&[0.25, 0.5, 0.75], &[3.0, 1.0, 2.0]),
            Err(Error::NotMonotone { .. })
        ));
        assert!(matches!(
            step_cdf_from_quantiles(&[0.25, 0.5], &[1.0, 2.0, 3.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
