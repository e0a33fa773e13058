//! Plug-in bounds from sample data and subsampling bias correction.

use std::io::Read;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::MarginalDistribution;
use crate::error::{Error, Result};
use crate::makarov::BoundsCurve;
use crate::mtr::MtrOptions;
use crate::restriction::{restricted_curve, RestrictionSpec};

/// Observed (y, d) pairs with optional nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    y: Vec<f64>,
    d: Vec<bool>,
    w: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    y: f64,
    d: f64,
    w: Option<f64>,
}

impl SampleData {
    pub fn new(y: Vec<f64>, d: Vec<bool>, w: Option<Vec<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyInput("sample has no rows"));
        }
        if d.len() != y.len() || w.as_ref().is_some_and(|w| w.len() != y.len()) {
            return Err(Error::ShapeMismatch("sample columns differ in length".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("outcome in row {i} is not finite")));
        }
        if let Some(w) = &w {
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::domain("weights must be finite and nonnegative"));
            }
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::domain("weights sum to zero"));
            }
        }
        Ok(SampleData { y, d, w })
    }

    /// CSV with header y,d[,w]; d must be 0 or 1.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut y, mut d, mut w) = (Vec::new(), Vec::new(), Vec::new());
        let mut weighted = None;
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let treated = match row.d {
                0.0 => false,
                1.0 => true,
                x => return Err(Error::domain(format!("row {i}: d = {x} is not 0 or 1"))),
            };
            match (*weighted.get_or_insert(row.w.is_some()), row.w) {
                (true, Some(v)) => w.push(v),
                (false, None) => {}
                _ => return Err(Error::domain(format!("row {i}: weight column is only partly filled"))),
            }
            y.push(row.y);
            d.push(treated);
        }
        SampleData::new(y, d, weighted.unwrap_or(false).then_some(w))
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        SampleData::from_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        SampleData::new(
            idx.iter().map(|&i| self.y[i]).collect(),
            idx.iter().map(|&i| self.d[i]).collect(),
            self.w.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect()),
        )
    }

    fn weight(&self, i: usize) -> f64 {
        self.w.as_ref().map_or(1.0, |w| w[i])
    }
}

fn weighted_ecdf(pairs: &mut [(f64, f64)], arm: &'static str) -> Result<MarginalDistribution> {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyInput(arm));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points: Vec<f64> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    for &(y, w) in pairs.iter() {
        if points.last() == Some(&y) {
            *mass.last_mut().unwrap() += w;
        } else {
            points.push(y);
            mass.push(w);
        }
    }
    let mut cum = 0.0;
    let mut values: Vec<f64> = mass
        .iter()
        .map(|m| {
            cum += m;
            (cum / total).min(1.0)
        })
        .collect();
    *values.last_mut().unwrap() = 1.0;
    MarginalDistribution::step_cdf(points, values)
}

/// Weighted empirical CDFs of Y in the untreated and treated arms.
pub fn empirical_marginals(data: &SampleData) -> Result<(MarginalDistribution, MarginalDistribution)> {
    let mut arms: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for i in 0..data.len() {
        let w = data.weight(i);
        if w > 0.0 {
            arms[usize::from(data.d[i])].push((data.y[i], w));
        }
    }
    let [mut a0, mut a1] = arms;
    Ok((
        weighted_ecdf(&mut a0, "untreated arm is empty")?,
        weighted_ecdf(&mut a1, "treated arm is empty")?,
    ))
}

/// Bound curve evaluated at estimated marginals. Only restrictions that
/// need nothing beyond the two marginals are accepted.
pub fn plugin_bounds(
    f0_hat: &MarginalDistribution,
    f1_hat: &MarginalDistribution,
    restriction: &RestrictionSpec,
    deltas: &[f64],
    opts: &MtrOptions,
) -> Result<BoundsCurve> {
    match restriction {
        RestrictionSpec::None | RestrictionSpec::Mtr => restricted_curve(f0_hat, f1_hat, restriction, deltas, opts),
        other => Err(Error::Config(format!(
            "plug-in bounds support only the none and mtr restrictions, not {:?}",
            other.method()
        ))),
    }
}

/// 2·full − mean(subsamples). Not clamped; values outside [0, 1] are logged.
pub fn subsample_bias_adjust(full_estimate: f64, subsample_estimates: &[f64]) -> Result<f64> {
    if subsample_estimates.is_empty() {
        return Err(Error::EmptyInput("no subsample estimates"));
    }
    let mean = subsample_estimates.iter().sum::<f64>() / subsample_estimates.len() as f64;
    let adjusted = 2.0 * full_estimate - mean;
    if !(0.0..=1.0).contains(&adjusted) {
        log::debug!("bias-adjusted estimate {adjusted} lies outside [0, 1]");
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    /// Subsample size.
    pub b: usize,
    /// Number of random subsamples.
    #[serde(default = "default_draws")]
    pub q: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    200
}

impl SubsampleConfig {
    /// b = ⌊n^0.7⌋ with the default number of draws.
    pub fn for_sample_size(n: usize, seed: u64) -> Self {
        SubsampleConfig {
            b: (n as f64).powf(0.7).floor() as usize,
            q: default_draws(),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.b < 1 || self.b >= n {
            return Err(Error::Config(format!("subsample size b = {} must satisfy 1 ≤ b < n = {n}", self.b)));
        }
        if self.q < 1 {
            return Err(Error::Config("at least one subsample draw is required".into()));
        }
        Ok(())
    }
}

/// q sets of b distinct indices from 0..n, each sorted. Draw j uses stream j
/// of a generator seeded with `cfg.seed`.
pub fn draw_subsamples(n: usize, cfg: &SubsampleConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate(n)?;
    Ok((0..cfg.q)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(j as u64);
            let mut idx = sample(&mut rng, n, cfg.b).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect())
}

/// Plug-in lower bound with its subsampling correction over a δ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedLower {
    pub deltas: Vec<f64>,
    pub raw: Vec<f64>,
    pub subsample_mean: Vec<f64>,
    pub adjusted: Vec<f64>,
}

/// Raw and bias-adjusted plug-in lower bounds under `restriction`
/// (none or mtr). Subsamples missing a treatment arm are redrawn from the
/// next streams.
pub fn bias_adjusted_lower(
    data: &SampleData,
    restriction: &RestrictionSpec,
    deltas: &[f64],
    opts: &MtrOptions,
    cfg: &SubsampleConfig,
) -> Result<AdjustedLower> {
    let (f0, f1) = empirical_marginals(data)?;
    let raw = plugin_bounds(&f0, &f1, restriction, deltas, opts)?.lower;
    let draws = draw_subsamples(data.len(), cfg)?;
    let curves: Vec<Option<Vec<f64>>> = draws
        .par_iter()
        .map(|idx| {
            let sub = data.subset(idx)?;
            let (g0, g1) = match empirical_marginals(&sub) {
                Ok(m) => m,
                Err(Error::EmptyInput(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some(plugin_bounds(&g0, &g1, restriction, deltas, opts)?.lower))
        })
        .collect::<Result<_>>()?;
    let curves: Vec<Vec<f64>> = curves.into_iter().flatten().collect();
    if curves.is_empty() {
        return Err(Error::EmptyInput("every subsample missed a treatment arm"));
    }
    let mut subsample_mean = Vec::with_capacity(deltas.len());
    let mut adjusted = Vec::with_capacity(deltas.len());
    for (i, full) in raw.iter().enumerate() {
        let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        subsample_mean.push(column.iter().sum::<f64>() / column.len() as f64);
        adjusted.push(subsample_bias_adjust(*full, &column)?);
    }
    Ok(AdjustedLower {
        deltas: deltas.to_vec(),
        raw,
        subsample_mean,
        adjusted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(y: &[f64], d: &[u8]) -> SampleData {
        SampleData::new(y.to_vec(), d.iter().map(|x| *x == 1).collect(), None).unwrap()
    }

    #[test]
    fn empirical_examples() {
        let (f0, f1) = empirical_marginals(&rows(&[1.0, 2.0, 3.0], &[0, 0, 1])).unwrap();
        assert_eq!(f0.jump_points(), &[1.0, 2.0]);
        assert_eq!((f0.cdf(1.0), f0.cdf(1.5), f0.cdf(2.0)), (0.5, 0.5, 1.0));
        assert_eq!((f1.cdf(2.9), f1.cdf(3.0)), (0.0, 1.0));

        let y = vec![0.3, 1.2, 0.7, 2.0, 1.1];
        let d = vec![false, true, false, true, true];
        let plain = empirical_marginals(&SampleData::new(y.clone(), d.clone(), None).unwrap()).unwrap();
        let weighted = empirical_marginals(&SampleData::new(y, d, Some(vec![2.5; 5])).unwrap()).unwrap();
        assert_eq!(plain, weighted);

        let (g0, g1) = empirical_marginals(&rows(&[4.0, 5.0], &[0, 1])).unwrap();
        assert_eq!((g0.jump_points().len(), g1.jump_points().len()), (1, 1));
        assert!(matches!(empirical_marginals(&rows(&[4.0, 5.0], &[0, 0])), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn csv_input() {
        let data = SampleData::from_reader("y,d\n1,0\n2,0\n3,1\n".as_bytes()).unwrap();
        assert_eq!(data, rows(&[1.0, 2.0, 3.0], &[0, 0, 1]));
        let w = SampleData::from_reader("y,d,w\n1,0,0.5\n3,1,1\n".as_bytes()).unwrap();
        assert_eq!(w.weight(0), 0.5);
        assert!(SampleData::from_reader("y,d\n1,2\n".as_bytes()).is_err());
        assert!(SampleData::from_reader("y,d\n".as_bytes()).is_err());
    }

    #[test]
    fn bias_adjust_examples() {
        assert_eq!(subsample_bias_adjust(0.5, &[0.5, 0.5]).unwrap(), 0.5);
        assert!((subsample_bias_adjust(0.5, &[0.6, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        assert!((subsample_bias_adjust(0.3, &[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert!(subsample_bias_adjust(0.3, &[]).is_err());
    }

    #[test]
    fn subsample_examples() {
        let cfg = SubsampleConfig { b: 2, q: 1, seed: 7 };
        let s = draw_subsamples(3, &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 2);
        assert!(s[0][0] < s[0][1] && s[0][1] < 3);
        assert!(draw_subsamples(5, &SubsampleConfig { b: 5, q: 1, seed: 0 }).is_err());
        let cfg = SubsampleConfig { b: 10, q: 20, seed: 3 };
        assert_eq!(draw_subsamples(50, &cfg).unwrap(), draw_subsamples(50, &cfg).unwrap());
        assert_eq!(SubsampleConfig::for_sample_size(500, 0).b, 77);
    }

    #[test]
    fn plugin_examples() {
        let y: Vec<f64> = (0..40).map(|i| (i % 20) as f64 * 0.37).collect();
        let d: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let data = SampleData::new(y, d, None).unwrap();
        let (f0, f1) = empirical_marginals(&data).unwrap();
        let deltas = [0.1, 0.5, 2.0];
        let opts = MtrOptions::default();
        let c = plugin_bounds(&f0, &f1, &RestrictionSpec::Mtr, &deltas, &opts).unwrap();
        assert!(c.lower.iter().all(|v| (v - 1.0).abs() < 1e-9), "{:?}", c.lower);
        let ctx = crate::shape::ShapeContext::new(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!(matches!(
            plugin_bounds(&f0, &f1, &RestrictionSpec::Concave { context: ctx }, &deltas, &opts),
            Err(Error::Config(_))
        ));
    }
}
