use crate::error::{Error, Result};
use crate::numeric::nelder_mead;

use super::MarginalDistribution;

/// An accepted normal-mixture approximation and how close it came.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub distribution: MarginalDistribution,
    pub components: usize,
    pub sup_distance: f64,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

fn unpack(theta: &[f64], m: usize) -> Params {
    let max_logit = theta[..m].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta[..m].iter().map(|l| (l - max_logit).exp()).collect();
    let total: f64 = exps.iter().sum();
    Params {
        weights: exps.iter().map(|e| e / total).collect(),
        means: theta[m..2 * m].to_vec(),
        sds: theta[2 * m..3 * m].iter().map(|s| s.clamp(-30.0, 30.0).exp()).collect(),
    }
}

fn mixture_cdf(p: &Params, y: f64) -> f64 {
    p.weights
        .iter()
        .zip(&p.means)
        .zip(&p.sds)
        .map(|((w, mu), sd)| w * super::std_normal_cdf((y - mu) / sd))
        .sum()
}

fn sup_distance(p: &Params, grid: &[f64], target: &[f64]) -> f64 {
    grid.iter()
        .zip(target)
        .map(|(y, t)| (mixture_cdf(p, *y) - t).abs())
        .fold(0.0, f64::max)
}

fn grid_quantile(grid: &[f64], target: &[f64], q: f64) -> f64 {
    let idx = target.partition_point(|f| *f < q).min(grid.len() - 1);
    grid[idx]
}

/// Fit normal mixtures of increasing order by least squares on the CDF
/// values at `eval_grid`, accepting the first order whose sup-distance on
/// the grid is below `ks_threshold`.
pub fn fit_normal_mixture(
    target: &MarginalDistribution,
    eval_grid: &[f64],
    max_components: usize,
    ks_threshold: f64,
) -> Result<MixtureFit> {
    if eval_grid.len() < 50 {
        return Err(Error::domain(format!(
            "mixture fit needs at least 50 grid points (got {})",
            eval_grid.len()
        )));
    }
    if max_components < 1 {
        return Err(Error::domain("max_components must be at least 1"));
    }
    if !(ks_threshold > 0.0) {
        return Err(Error::domain("ks_threshold must be positive"));
    }
    let mut grid = eval_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let values: Vec<f64> = grid.iter().map(|y| target.cdf(*y)).collect();

    let mut mean = 0.0;
    let mut second = 0.0;
    let mut prev_f = 0.0;
    let mut prev_y = grid[0];
    for (y, f) in grid.iter().zip(&values) {
        let mid = 0.5 * (prev_y + y);
        mean += mid * (f - prev_f);
        second += mid * mid * (f - prev_f);
        prev_f = *f;
        prev_y = *y;
    }
    let sd = (second - mean * mean).max(1e-12).sqrt();

    let objective = |theta: &[f64], m: usize| -> f64 {
        let p = unpack(theta, m);
        grid.iter()
            .zip(&values)
            .map(|(y, t)| {
                let e = mixture_cdf(&p, *y) - t;
                e * e
            })
            .sum()
    };

    let mut best_overall = f64::INFINITY;
    for m in 1..=max_components {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let placements: [fn(f64) -> f64; 3] = [|u| u, |u| u * u, |u| u.sqrt()];
        for (variant, place) in placements.iter().enumerate() {
            for spread in [1.0, 0.5] {
                if m == 1 && (variant > 0 || spread < 1.0) {
                    continue;
                }
                let mut theta = vec![0.0; 3 * m];
                for i in 0..m {
                    let u = place((i as f64 + 0.5) / m as f64);
                    theta[m + i] = if m == 1 { mean } else { grid_quantile(&grid, &values, u) };
                    theta[2 * m + i] = (spread * sd / (m as f64).sqrt()).ln();
                }
                let step: Vec<f64> = (0..3 * m)
                    .map(|i| if i < m { 0.5 } else if i < 2 * m { 0.25 * sd } else { 0.3 })
                    .collect();
                let mut run = nelder_mead(|t| objective(t, m), &theta, &step, 4000 * m, 1e-16);
                for _ in 0..3 {
                    let again = nelder_mead(|t| objective(t, m), &run.point, &step, 4000 * m, 1e-16);
                    let improved = again.value < run.value * (1.0 - 1e-9);
                    run = again;
                    if !improved {
                        break;
                    }
                }
                let sup = sup_distance(&unpack(&run.point, m), &grid, &values);
                if best.as_ref().is_none_or(|(b, _)| sup < *b) {
                    best = Some((sup, run.point));
                }
            }
        }
        let (sup, theta) = best.expect("at least one start per order");
        log::debug!("mixture order {m}: sup-distance {sup:.3e}");
        best_overall = best_overall.min(sup);
        if sup < ks_threshold {
            let p = unpack(&theta, m);
            let total: f64 = p.weights.iter().sum();
            let weights = p.weights.iter().map(|w| w / total).collect();
            let variances = p.sds.iter().map(|s| s * s).collect();
            return Ok(MixtureFit {
                distribution: MarginalDistribution::normal_mixture(weights, p.means, variances)?,
                components: m,
                sup_distance: sup,
            });
        }
    }
    Err(Error::FitFailure {
        max_components,
        threshold: ks_threshold,
        best: best_overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::convolve_chi2_normal;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn normal_target_needs_one_component() {
        let target = MarginalDistribution::normal(0.0, 1.0).unwrap();
        let fit = fit_normal_mixture(&target, &grid(-5.0, 5.0, 201), 3, 0.01).unwrap();
        assert_eq!(fit.components, 1);
        assert!(fit.sup_distance < 1e-6, "{}", fit.sup_distance);
    }

    #[test]
    fn convolution_fits_with_at_most_three_components() {
        let target = convolve_chi2_normal(1, 1.0).unwrap();
        let fit = fit_normal_mixture(&target, &grid(-5.0, 15.0, 201), 3, 0.005).unwrap();
        assert!(fit.components <= 3);
        assert!(fit.sup_distance < 0.005);
    }

    #[test]
    fn uniform_with_one_normal_fails() {
        let target = MarginalDistribution::uniform(0.0, 1.0).unwrap();
        let g = grid(-0.5, 1.5, 101);
        // Oracle: the best single normal over a (μ, σ) grid stays far from 1e-6.
        let mut best = f64::INFINITY;
        for i in 0..41 {
            for j in 1..41 {
                let mu = 0.3 + 0.01 * i as f64;
                let sd = 0.01 * j as f64;
                let d = g
                    .iter()
                    .map(|y| (super::super::std_normal_cdf((y - mu) / sd) - target.cdf(*y)).abs())
                    .fold(0.0, f64::max);
                best = best.min(d);
            }
        }
        assert!(best > 1e-3);
        let err = fit_normal_mixture(&target, &g, 1, 1e-6).unwrap_err();
        assert!(matches!(err, Error::FitFailure { .. }));
    }

    #[test]
    fn short_grid_is_rejected() {
        let target = MarginalDistribution::normal(0.0, 1.0).unwrap();
        assert!(fit_normal_mixture(&target, &grid(-1.0, 1.0, 10), 1, 0.01).is_err());
    }
}
