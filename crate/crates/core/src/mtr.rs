//! Bounds under monotone treatment response, Pr(Y1 ≥ Y0) = 1.
//!
//! The lower bound is a supremum over increasing sequences {a_k} with
//! 0 ≤ a_{k+1} − a_k ≤ δ of Σ max(F1(a_{k+1}) − F0(a_k), 0); the upper bound
//! coincides with the Makarov upper bound for δ ≥ 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Affine, ChainProblem, Sense, WindowBox};
use crate::distributions::MarginalDistribution;
use crate::error::{Error, Result};
use crate::makarov::{check_grid, makarov_lower, makarov_upper, Attaining, BoundsCurve, Method, Witness};

/// Slack used to represent the strict two-step gap a_{k+2} − a_k > δ.
pub const PRUNE_SLACK: f64 = 1e-9;

/// A finite window of base points a_{−J}, …, a_{J+1}; the 2J + 1 terms
/// pair consecutive points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleSequence {
    pub delta: f64,
    pub base_points: Vec<f64>,
    pub window: usize,
}

impl TriangleSequence {
    pub fn from_points(delta: f64, base_points: Vec<f64>) -> Self {
        let window = base_points.len().saturating_sub(2) / 2;
        TriangleSequence {
            delta,
            base_points,
            window,
        }
    }

    pub fn empty(delta: f64) -> Self {
        TriangleSequence {
            delta,
            base_points: Vec::new(),
            window: 0,
        }
    }

    /// 0 ≤ a_{k+1} − a_k ≤ δ and a_{k+2} − a_k > δ, up to `tol`.
    pub fn satisfies_spacing(&self, tol: f64) -> bool {
        let p = &self.base_points;
        p.windows(2).all(|w| w[1] - w[0] >= -tol && w[1] - w[0] <= self.delta + tol)
            && p.windows(3).all(|w| w[2] - w[0] > self.delta - tol)
    }

    /// Σ max(F1(a_{k+1}) − F0(a_k), 0) with exact CDFs.
    pub fn objective(&self, f0: &MarginalDistribution, f1: &MarginalDistribution) -> f64 {
        self.base_points
            .windows(2)
            .map(|w| (f1.cdf(w[1]) - f0.cdf(w[0])).max(0.0))
            .sum()
    }
}

/// Tuning for the sequence search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtrOptions {
    pub epsilon_k: f64,
    pub smoothing_h: f64,
    pub multistarts: usize,
    pub rng_seed: u64,
    pub y_grid: usize,
    /// Coordinate-ascent sweeps per start.
    pub max_sweeps: usize,
    /// When false only the equal-spacing warm start is used.
    pub refine: bool,
}

impl Default for MtrOptions {
    fn default() -> Self {
        MtrOptions {
            epsilon_k: 1e-5,
            smoothing_h: 0.05,
            multistarts: 100,
            rng_seed: 0,
            y_grid: 512,
            max_sweeps: 30,
            refine: true,
        }
    }
}

impl MtrOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_k > 0.0) {
            return Err(Error::Config(format!("epsilon_k must be positive (got {})", self.epsilon_k)));
        }
        if !(self.smoothing_h > 0.0) {
            return Err(Error::Config(format!("smoothing_h must be positive (got {})", self.smoothing_h)));
        }
        if self.multistarts < 1 {
            return Err(Error::Config("multistarts must be at least 1".into()));
        }
        if self.y_grid < 2 {
            return Err(Error::Config("y_grid must be at least 2".into()));
        }
        Ok(())
    }
}

pub(crate) fn smooth_max_unchecked(x: f64, h: f64) -> f64 {
    let r = x / h;
    if r < -500.0 {
        0.0
    } else if r > 500.0 {
        x
    } else {
        x / (1.0 + (-r).exp())
    }
}

/// Smooth surrogate of max(x, 0): x / (1 + exp(−x/h)).
pub fn smooth_max(x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("smoothing bandwidth must be positive (got {h})")));
    }
    Ok(smooth_max_unchecked(x, h))
}

pub(crate) fn mtr_problem<'a>(f0: &'a MarginalDistribution, f1: &'a MarginalDistribution, delta: f64) -> ChainProblem<'a> {
    ChainProblem {
        f0,
        f1,
        sense: Sense::Lower,
        lo: Affine::identity(),
        hi: Affine::translate(delta),
        g: Affine::identity(),
        prune: Some(delta + PRUNE_SLACK),
    }
}

fn positive_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("delta must be positive (got {delta})")))
    }
}

/// V(δ) = sup over y in [0, δ) of Σ_k max(F1(y + (k+1)δ) − F0(y + kδ), 0),
/// with the maximizing offset y*.
pub fn equal_spacing_value(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    delta: f64,
    y_grid: usize,
) -> Result<(f64, f64)> {
    positive_delta(delta)?;
    mtr_problem(f0, f1, delta)
        .scan(y_grid, &[])
        .ok_or_else(|| Error::domain("equal-spacing orbit is degenerate"))
}

/// Smallest K such that 2K + 1 consecutive terms of the orbit through y*
/// recover V(δ) to within `epsilon_k`.
pub fn truncation_k(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    delta: f64,
    y_star: f64,
    epsilon_k: f64,
) -> Result<usize> {
    positive_delta(delta)?;
    if !(epsilon_k > 0.0) {
        return Err(Error::domain("epsilon_k must be positive"));
    }
    mtr_problem(f0, f1, delta)
        .truncate(y_star, epsilon_k)
        .map(|t| t.k)
        .ok_or_else(|| Error::domain("equal-spacing orbit is degenerate"))
}

/// Locally improve a window a_{−J}..a_{J+1} confined to
/// a_{−J} ≥ ŷ − Kδ and a_J ≤ ŷ + Kδ, where ŷ is `anchor`.
#[allow(clippy::too_many_arguments)]
pub fn refine_sequence(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    delta: f64,
    k: usize,
    j: usize,
    anchor: f64,
    start: &TriangleSequence,
    opts: &MtrOptions,
) -> Result<(f64, TriangleSequence)> {
    positive_delta(delta)?;
    opts.validate()?;
    if j < k || j > 2 * k {
        return Err(Error::domain(format!("window J = {j} is outside [K, 2K] for K = {k}")));
    }
    if start.base_points.len() != 2 * j + 2 {
        return Err(Error::InfeasibleStart(format!(
            "start has {} points, a window of J = {j} needs {}",
            start.base_points.len(),
            2 * j + 2
        )));
    }
    let problem = mtr_problem(f0, f1, delta);
    let bx = WindowBox {
        first: anchor - k as f64 * delta,
        last: anchor + k as f64 * delta,
    };
    problem.check_feasible(&start.base_points, &bx)?;
    let (value, pts) = problem.refine(&start.base_points, &bx, opts);
    Ok((value, TriangleSequence::from_points(delta, pts)))
}

/// Lower bound with its witness and the warm-start diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrBound {
    pub bound: f64,
    pub sequence: TriangleSequence,
    pub k: usize,
    pub orbit_value: f64,
    pub truncated_value: f64,
    pub y_star: f64,
    pub dominance_violation: bool,
}

impl MtrBound {
    fn trivial(delta: f64, bound: f64, sequence: TriangleSequence) -> Self {
        MtrBound {
            bound,
            sequence,
            k: 0,
            orbit_value: bound,
            truncated_value: bound,
            y_star: 0.0,
            dominance_violation: false,
        }
        .with_delta(delta)
    }

    fn with_delta(mut self, delta: f64) -> Self {
        self.sequence.delta = delta;
        self
    }
}

/// sup_y F1(y) − F0(y): positive when the treated CDF lies above the
/// untreated one somewhere, which rules out monotone response.
pub fn dominance_gap(f0: &MarginalDistribution, f1: &MarginalDistribution) -> f64 {
    let e = makarov_lower(f0, f1, 0.0);
    f1.cdf(e.argument) - f0.cdf(e.argument)
}

/// Sharp lower bound on Pr(Y1 − Y0 ≤ δ) under monotone response.
pub fn mtr_lower(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    delta: f64,
    opts: &MtrOptions,
) -> Result<MtrBound> {
    opts.validate()?;
    if delta < 0.0 {
        return Ok(MtrBound::trivial(delta, 0.0, TriangleSequence::empty(delta)));
    }
    let dominance_violation = dominance_gap(f0, f1) > 1e-6;
    if dominance_violation {
        log::warn!(
            "treated CDF exceeds untreated CDF by more than 1e-6; monotone response is incompatible with these marginals"
        );
    }
    let mak = makarov_lower(f0, f1, delta);
    if delta < 1e-12 {
        let mut b = MtrBound::trivial(
            delta,
            mak.value,
            TriangleSequence::from_points(delta, vec![mak.argument, mak.argument]),
        );
        b.dominance_violation = dominance_violation;
        return Ok(b);
    }
    let problem = mtr_problem(f0, f1, delta);
    let out = problem
        .solve(opts, &[mak.argument])
        .ok_or_else(|| Error::domain("equal-spacing orbit is degenerate"))?;
    Ok(MtrBound {
        bound: out.value,
        sequence: TriangleSequence::from_points(delta, out.points),
        k: out.k,
        orbit_value: out.orbit_value,
        truncated_value: out.truncated_value,
        y_star: out.y_star,
        dominance_violation,
    })
}

/// Upper bound under monotone response: 0 for δ < 0, Makarov otherwise.
pub fn mtr_upper(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64) -> f64 {
    if delta < 0.0 {
        0.0
    } else {
        makarov_upper(f0, f1, delta).value
    }
}

/// Both bounds over a δ grid.
pub fn mtr_curve(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    deltas: &[f64],
    opts: &MtrOptions,
) -> Result<BoundsCurve> {
    check_grid(deltas)?;
    let rows: Vec<Result<(MtrBound, f64, f64)>> = deltas
        .par_iter()
        .map(|&d| {
            let lower = mtr_lower(f0, f1, d, opts)?;
            let up = makarov_upper(f0, f1, d);
            Ok((lower, if d < 0.0 { 0.0 } else { up.value }, up.argument))
        })
        .collect();
    let rows: Vec<(MtrBound, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    BoundsCurve::new(
        deltas.to_vec(),
        rows.iter().map(|r| r.0.bound).collect(),
        rows.iter().map(|r| r.1).collect(),
        Method::Mtr,
        Some(
            rows.into_iter()
                .map(|(l, u, arg)| Attaining {
                    lower: Witness::Sequence(l.sequence),
                    upper: if u > 0.0 { Witness::Point(arg) } else { Witness::Trivial },
                })
                .collect(),
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{chi_square_cdf, convolve_chi2_normal};

    fn unif(a: f64, b: f64) -> MarginalDistribution {
        MarginalDistribution::uniform(a, b).unwrap()
    }

    fn std_normal() -> MarginalDistribution {
        MarginalDistribution::normal(0.0, 1.0).unwrap()
    }

    /// Independent oracle for V(δ): brute-force scan of the equal-spacing sum.
    fn brute_v(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..10_000 {
            let y = delta * i as f64 / 10_000.0;
            let s: f64 = (-200..200)
                .map(|k| {
                    let a = y + k as f64 * delta;
                    (f1.cdf(a + delta) - f0.cdf(a)).max(0.0)
                })
                .sum();
            if s > best.0 + 1e-12 {
                best = (s, y);
            }
        }
        best
    }

    #[test]
    fn smooth_max_examples() {
        assert_eq!(smooth_max(0.0, 0.05).unwrap(), 0.0);
        assert!((smooth_max(1.0, 0.01).unwrap() - 1.0).abs() < 1e-40);
        assert!(smooth_max(-1.0, 0.01).unwrap().abs() < 1e-40);
        assert!(smooth_max(1.0, 0.0).is_err());
        assert_eq!(smooth_max(-30.0, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn equal_spacing_examples() {
        let n = std_normal();
        let (v, _) = equal_spacing_value(&n, &n, 1.0, 512).unwrap();
        assert!((v - 1.0).abs() < 1e-9);

        let (u0, u1) = (unif(0.0, 1.0), unif(0.5, 1.5));
        let (ov, oy) = brute_v(&u0, &u1, 0.75);
        assert!((ov - 0.5).abs() < 1e-9 && oy == 0.0);
        let (v, y) = equal_spacing_value(&u0, &u1, 0.75, 512).unwrap();
        assert!((v - 0.5).abs() < 1e-6);
        assert!(y.abs() < 1e-9);

        let (ov, _) = brute_v(&u0, &u1, 0.5);
        assert!(ov.abs() < 1e-12);
        let (v, _) = equal_spacing_value(&u0, &u1, 0.5, 512).unwrap();
        assert!(v.abs() < 1e-9);
        assert!(equal_spacing_value(&u0, &u1, 0.0, 512).is_err());
    }

    #[test]
    fn truncation_examples() {
        // Enumerating the orbit through y* = 0 gives nonzero terms only at
        // k = 0 and k = 1 (0.25 each), so one window of three terms suffices.
        let (u0, u1) = (unif(0.0, 1.0), unif(0.5, 1.5));
        assert_eq!(truncation_k(&u0, &u1, 0.75, 0.0, 1e-5).unwrap(), 1);

        // Telescoping: the best 2K+1 window misses 1 − Φ(c+K+1) + Φ(c−K),
        // which first drops below 1e-5 at K = 5.
        let n = std_normal();
        let miss = |k: f64| 1.0 - (n.cdf(k + 1.0) - n.cdf(-k));
        assert!(miss(4.0) > 1e-5 && miss(5.0) < 1e-5);
        assert_eq!(truncation_k(&n, &n, 1.0, 0.0, 1e-5).unwrap(), 5);

        let f1 = MarginalDistribution::normal(0.7, 2.0).unwrap();
        assert_eq!(truncation_k(&n, &f1, 0.4, 0.1, 1.0).unwrap(), 0);
    }

    #[test]
    fn refine_examples() {
        let n = std_normal();
        let opts = MtrOptions::default();
        let start = TriangleSequence::from_points(1.0, (-5..=6).map(|k| k as f64).collect());
        let (v, seq) = refine_sequence(&n, &n, 1.0, 5, 5, 0.0, &start, &opts).unwrap();
        assert!(v >= start.objective(&n, &n) - 1e-15);
        assert!(v <= 1.0 + 1e-12 && v > 1.0 - 1e-5);
        assert!(seq.satisfies_spacing(1e-9));

        let (u0, u1) = (unif(0.0, 1.0), unif(0.5, 1.5));
        let start = TriangleSequence::from_points(0.75, (-2..=3).map(|k| 0.75 * k as f64).collect());
        let (v, _) = refine_sequence(&u0, &u1, 0.75, 2, 2, 0.0, &start, &opts).unwrap();
        assert!((v - 0.5).abs() < 1e-9, "{v}");

        let bad = TriangleSequence::from_points(0.5, vec![0.0, 0.6, 1.0, 1.5]);
        assert!(matches!(
            refine_sequence(&u0, &u1, 0.5, 1, 1, 0.5, &bad, &opts),
            Err(Error::InfeasibleStart(_))
        ));
    }

    #[test]
    fn lower_examples() {
        let opts = MtrOptions::default();
        let n = std_normal();
        assert_eq!(mtr_lower(&n, &n, -0.5, &opts).unwrap().bound, 0.0);
        let b = mtr_lower(&n, &n, 0.3, &opts).unwrap();
        assert!((b.bound - 1.0).abs() < 1e-6, "{}", b.bound);
        assert!(b.sequence.satisfies_spacing(1e-9));
        assert!((b.sequence.objective(&n, &n) - b.bound).abs() < 1e-9);

        let f1 = convolve_chi2_normal(1, 1.0).unwrap();
        let b = mtr_lower(&n, &f1, 2.0, &opts).unwrap();
        let mak = makarov_lower(&n, &f1, 2.0).value;
        let truth = chi_square_cdf(1.0, 2.0);
        assert!((truth - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert!(b.bound >= mak - 1e-9 && b.bound <= truth + 1e-6, "{mak} {} {truth}", b.bound);
        assert!(!b.dominance_violation);
    }

    #[test]
    fn upper_examples() {
        let u = unif(0.0, 1.0);
        assert_eq!(mtr_upper(&u, &u, -1.0), 0.0);
        assert!((mtr_upper(&u, &u, 0.1) - 1.0).abs() < 1e-12);
        assert!((mtr_upper(&u, &unif(0.5, 1.5), 0.25) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn dominance_violation_is_flagged() {
        let f0 = MarginalDistribution::normal(1.0, 1.0).unwrap();
        let f1 = std_normal();
        let b = mtr_lower(&f0, &f1, 0.5, &MtrOptions::default()).unwrap();
        assert!(b.dominance_violation);
    }
}
