//! Bounds from the marginals alone, the copulas that attain them, and a
//! discretized evaluator of Pr(Y1 − Y0 ≤ δ) under an explicit copula.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Cdf, MarginalDistribution, Surrogate, SATURATION_TAIL};
use crate::error::{Error, Result};
use crate::mtr::TriangleSequence;
use crate::numeric::golden_max;

const SCAN_POINTS: usize = 2001;
const GOLDEN_TOL: f64 = 1e-10;
/// Jump points beyond this count are thinned before scanning step CDFs.
const MAX_JUMP_CANDIDATES: usize = 200_000;

/// Which restriction produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Makarov,
    Mtr,
    Concave,
    Convex,
    Roy,
}

/// What attains a bound at one δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// Maximizer (or minimizer) y* of F1(y) − F0(y − δ).
    Point(f64),
    Sequence(TriangleSequence),
    /// The bound holds by construction (0 or 1) or mixes several witnesses.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attaining {
    pub lower: Witness,
    pub upper: Witness,
}

/// Lower and upper bound values over a strictly increasing grid of δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsCurve {
    pub deltas: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub method: Method,
    pub attaining: Option<Vec<Attaining>>,
}

impl BoundsCurve {
    /// Assemble a curve, clamping to [0, 1] and enforcing monotonicity in δ
    /// (running max of the lower bound, reverse running min of the upper).
    pub fn new(
        deltas: Vec<f64>,
        mut lower: Vec<f64>,
        mut upper: Vec<f64>,
        method: Method,
        attaining: Option<Vec<Attaining>>,
    ) -> Result<Self> {
        let n = deltas.len();
        if lower.len() != n || upper.len() != n || attaining.as_ref().is_some_and(|a| a.len() != n) {
            return Err(Error::ShapeMismatch("bound columns differ in length".into()));
        }
        check_grid(&deltas)?;
        for v in lower.iter_mut().chain(upper.iter_mut()) {
            *v = v.clamp(0.0, 1.0);
        }
        for i in 1..n {
            if lower[i] < lower[i - 1] {
                lower[i] = lower[i - 1];
            }
        }
        for i in (0..n.saturating_sub(1)).rev() {
            if upper[i] > upper[i + 1] {
                upper[i] = upper[i + 1];
            }
        }
        Ok(BoundsCurve {
            deltas,
            lower,
            upper,
            method,
            attaining,
        })
    }
}

pub(crate) fn check_grid(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("delta grid is empty"));
    }
    if deltas.iter().any(|d| !d.is_finite()) || deltas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("delta grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Value of a sup/inf together with the point attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub argument: f64,
}

/// Candidate abscissae for sup/inf over y of F1(y) − F0(y − δ): a dense grid
/// over the union of the two relevant ranges, plus every breakpoint when a
/// marginal is a step function (the difference is then piecewise constant
/// and right-continuous, so its extremes sit on breakpoints).
fn scan_points(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64) -> Vec<f64> {
    let (lo0, hi0) = f0.effective_range(SATURATION_TAIL);
    let (lo1, hi1) = f1.effective_range(SATURATION_TAIL);
    let lo = lo1.min(lo0 + delta);
    let hi = hi1.max(hi0 + delta);
    let mut pts: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    for (jumps, shift) in [(f1.jump_points(), 0.0), (f0.jump_points(), delta)] {
        let stride = jumps.len().div_ceil(MAX_JUMP_CANDIDATES).max(1);
        pts.extend(jumps.iter().step_by(stride).map(|j| j + shift));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// sup or inf (via `sign`) of F1(y) − F0(y − δ). The grid is scanned on the
/// search surrogates and the best grid cell is refined on the exact CDFs.
fn extremum(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64, sign: f64) -> Extremum {
    let s0 = Surrogate(f0);
    let s1 = Surrogate(f1);
    let pts = scan_points(f0, f1, delta);
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &y) in pts.iter().enumerate() {
        let v = sign * (s1.cdf(y) - s0.cdf(y - delta));
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let exact = |y: f64| sign * (f1.cdf(y) - f0.cdf(y - delta));
    let mut arg = pts[best];
    let mut val = exact(arg);
    if !f0.is_step() && !f1.is_step() {
        let a = pts[best.saturating_sub(1)];
        let b = pts[(best + 1).min(pts.len() - 1)];
        let (x, v) = golden_max(exact, a, b, GOLDEN_TOL);
        if v > val {
            arg = x;
            val = v;
        }
    }
    Extremum {
        value: sign * val,
        argument: arg,
    }
}

/// sup_y max(F1(y) − F0(y − δ), 0) with its maximizer.
pub fn makarov_lower(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64) -> Extremum {
    let e = extremum(f0, f1, delta, 1.0);
    Extremum {
        value: e.value.max(0.0),
        argument: e.argument,
    }
}

/// 1 + inf_y min(F1(y) − F0(y − δ), 0) with its minimizer.
pub fn makarov_upper(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64) -> Extremum {
    let e = extremum(f0, f1, delta, -1.0);
    Extremum {
        value: 1.0 + e.value.min(0.0),
        argument: e.argument,
    }
}

/// Both bounds over a δ grid, computed in parallel.
pub fn makarov_curve(f0: &MarginalDistribution, f1: &MarginalDistribution, deltas: &[f64]) -> Result<BoundsCurve> {
    check_grid(deltas)?;
    let rows: Vec<(Extremum, Extremum)> = deltas
        .par_iter()
        .map(|&d| (makarov_lower(f0, f1, d), makarov_upper(f0, f1, d)))
        .collect();
    BoundsCurve::new(
        deltas.to_vec(),
        rows.iter().map(|r| r.0.value).collect(),
        rows.iter().map(|r| r.1.value).collect(),
        Method::Makarov,
        Some(
            rows.iter()
                .map(|(l, u)| Attaining {
                    lower: Witness::Point(l.argument),
                    upper: Witness::Point(u.argument),
                })
                .collect(),
        ),
    )
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is outside [0, 1]")))
    }
}

/// Bounds on Pr(A0 ∩ A1) given Pr(A0) = p0 and Pr(A1) = p1.
pub fn frechet_rectangle(p0: f64, p1: f64) -> Result<(f64, f64)> {
    check_probability("p0", p0)?;
    check_probability("p1", p1)?;
    Ok(((p0 + p1 - 1.0).max(0.0), p0.min(p1)))
}

fn w_bound(u: f64, v: f64) -> f64 {
    (u + v - 1.0).max(0.0)
}

/// C_s^U(u, v): min(u + s − 1, v) on [1 − s, 1] × [0, s], max(u + v − 1, 0) elsewhere.
pub fn attaining_copula_upper(s: f64, u: f64, v: f64) -> Result<f64> {
    check_probability("s", s)?;
    check_probability("u", u)?;
    check_probability("v", v)?;
    Ok(copula_upper(s, u, v))
}

/// C_t^L(u, v): min(u, v − t) on [0, 1 − t] × [t, 1], max(u + v − 1, 0) elsewhere.
pub fn attaining_copula_lower(t: f64, u: f64, v: f64) -> Result<f64> {
    check_probability("t", t)?;
    check_probability("u", u)?;
    check_probability("v", v)?;
    Ok(copula_lower(t, u, v))
}

fn copula_upper(s: f64, u: f64, v: f64) -> f64 {
    if u >= 1.0 - s && v <= s {
        (u + s - 1.0).min(v)
    } else {
        w_bound(u, v)
    }
}

fn copula_lower(t: f64, u: f64, v: f64) -> f64 {
    if u <= 1.0 - t && v >= t {
        u.min(v - t)
    } else {
        w_bound(u, v)
    }
}

/// A bivariate function evaluated as a copula on the unit square.
pub trait Copula: Sync {
    fn eval(&self, u: f64, v: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Sync> Copula for F {
    fn eval(&self, u: f64, v: f64) -> f64 {
        self(u, v)
    }
}

/// Product copula uv.
pub struct Independence;
/// Upper Fréchet–Hoeffding bound min(u, v).
pub struct Comonotone;
/// Lower Fréchet–Hoeffding bound max(u + v − 1, 0).
pub struct Countermonotone;
/// C_s^U with a fixed s.
pub struct AttainingUpper(pub f64);
/// C_t^L with a fixed t.
pub struct AttainingLower(pub f64);

impl Copula for Independence {
    fn eval(&self, u: f64, v: f64) -> f64 {
        u * v
    }
}

impl Copula for Comonotone {
    fn eval(&self, u: f64, v: f64) -> f64 {
        u.min(v)
    }
}

impl Copula for Countermonotone {
    fn eval(&self, u: f64, v: f64) -> f64 {
        w_bound(u, v)
    }
}

impl Copula for AttainingUpper {
    fn eval(&self, u: f64, v: f64) -> f64 {
        copula_upper(self.0, u, v)
    }
}

impl Copula for AttainingLower {
    fn eval(&self, u: f64, v: f64) -> f64 {
        copula_lower(self.0, u, v)
    }
}

const SPLIT_DEPTH: u32 = 3;
/// Further halvings below the quantile tables, with quantiles computed on demand.
const EXTRA_DEPTH: u32 = 14;
/// Straddling cells lighter than this are assigned by midpoint without splitting.
const SPLIT_MASS: f64 = 1e-10;

struct CopulaGrid<'a> {
    copula: &'a dyn Copula,
    f0: &'a MarginalDistribution,
    f1: &'a MarginalDistribution,
    /// Fine quantile tables at levels i / (n · 2^(depth+1)).
    q0: Vec<f64>,
    q1: Vec<f64>,
    fine: usize,
    delta: f64,
}

impl CopulaGrid<'_> {
    fn level(&self, i: usize) -> f64 {
        i as f64 / self.fine as f64
    }

    fn mass(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> f64 {
        let (u0, u1, v0, v1) = (self.level(i0), self.level(i1), self.level(j0), self.level(j1));
        self.copula.eval(u1, v1) - self.copula.eval(u0, v1) - self.copula.eval(u1, v0) + self.copula.eval(u0, v0)
    }

    /// Mass of the cell [i0, i1] × [j0, j1] (fine indices) on {y1 − y0 ≤ δ}.
    fn cell(&self, i0: usize, i1: usize, j0: usize, j1: usize, mass: f64, depth: u32) -> f64 {
        if mass <= 1e-15 {
            return 0.0;
        }
        let dmin = self.q1[j0] - self.q0[i1];
        let dmax = self.q1[j1] - self.q0[i0];
        if dmax <= self.delta {
            return mass;
        }
        if dmin > self.delta {
            return 0.0;
        }
        if depth == 0 || i1 - i0 < 2 {
            let corners = [self.q0[i0], self.q0[i1], self.q1[j0], self.q1[j1]];
            let (u0, u1, v0, v1) = (self.level(i0), self.level(i1), self.level(j0), self.level(j1));
            return self.split_below(u0, u1, v0, v1, corners, mass, EXTRA_DEPTH);
        }
        let im = (i0 + i1) / 2;
        let jm = (j0 + j1) / 2;
        let mut total = 0.0;
        for (a, b) in [(i0, im), (im, i1)] {
            for (c, d) in [(j0, jm), (jm, j1)] {
                let m = self.mass(a, b, c, d).max(0.0);
                total += self.cell(a, b, c, d, m, depth - 1);
            }
        }
        total
    }

    /// Same recursion on raw levels; `q` holds [F0⁻¹(u0), F0⁻¹(u1), F1⁻¹(v0), F1⁻¹(v1)].
    #[allow(clippy::too_many_arguments)]
    fn split_below(&self, u0: f64, u1: f64, v0: f64, v1: f64, q: [f64; 4], mass: f64, depth: u32) -> f64 {
        if mass <= 1e-15 {
            return 0.0;
        }
        if q[3] - q[0] <= self.delta {
            return mass;
        }
        if q[2] - q[1] > self.delta {
            return 0.0;
        }
        let (um, vm) = (0.5 * (u0 + u1), 0.5 * (v0 + v1));
        let (qu, qv) = (self.f0.quantile_extended(um), self.f1.quantile_extended(vm));
        if depth == 0 || mass < SPLIT_MASS {
            return if qv - qu <= self.delta { mass } else { 0.0 };
        }
        let c = |a: f64, b: f64| self.copula.eval(a, b);
        let mut total = 0.0;
        for (a, b, qa, qb) in [(u0, um, q[0], qu), (um, u1, qu, q[1])] {
            for (cc, d, qc, qd) in [(v0, vm, q[2], qv), (vm, v1, qv, q[3])] {
                let m = (c(b, d) - c(a, d) - c(b, cc) + c(a, cc)).max(0.0);
                total += self.split_below(a, b, cc, d, [qa, qb, qc, qd], m, depth - 1);
            }
        }
        total
    }
}

/// Pr(Y1 − Y0 ≤ δ) when (F0(Y0), F1(Y1)) has joint distribution `copula`,
/// by summing copula cell masses on an n × n grid of (u, v); cells that
/// straddle the boundary y1 − y0 = δ are split until they are light or
/// tiny and then assigned by their midpoint.
pub fn dte_under_copula(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    copula: &dyn Copula,
    delta: f64,
    n: usize,
) -> Result<f64> {
    if n < 100 {
        return Err(Error::domain(format!("copula grid needs n >= 100 (got {n})")));
    }
    let refine = 1usize << (SPLIT_DEPTH + 1);
    let fine = n * refine;
    let q0: Vec<f64> = (0..=fine).map(|i| f0.quantile_extended(i as f64 / fine as f64)).collect();
    let q1: Vec<f64> = (0..=fine).map(|i| f1.quantile_extended(i as f64 / fine as f64)).collect();
    let grid = CopulaGrid {
        copula,
        f0,
        f1,
        q0,
        q1,
        fine,
        delta,
    };
    let coarse: Vec<Vec<f64>> = (0..=n)
        .map(|i| (0..=n).map(|j| copula.eval(i as f64 / n as f64, j as f64 / n as f64)).collect())
        .collect();
    let rows: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let mass = coarse[i + 1][j + 1] - coarse[i][j + 1] - coarse[i + 1][j] + coarse[i][j];
                if mass < -1e-12 {
                    return Err(Error::NegativeCellMass { row: i, col: j, mass });
                }
                acc += grid.cell(i * refine, (i + 1) * refine, j * refine, (j + 1) * refine, mass, SPLIT_DEPTH);
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif(a: f64, b: f64) -> MarginalDistribution {
        MarginalDistribution::uniform(a, b).unwrap()
    }

    fn std_normal() -> MarginalDistribution {
        MarginalDistribution::normal(0.0, 1.0).unwrap()
    }

    /// Independent oracle: brute-force scan of F1(y) − F0(y − δ) on a fine grid.
    fn grid_sup(f0: &MarginalDistribution, f1: &MarginalDistribution, delta: f64, lo: f64, hi: f64) -> (f64, f64) {
        let n = 10_000;
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        for i in 0..=n {
            let y = lo + (hi - lo) * i as f64 / n as f64;
            let d = f1.cdf(y) - f0.cdf(y - delta);
            sup = sup.max(d);
            inf = inf.min(d);
        }
        (sup.max(0.0), 1.0 + inf.min(0.0))
    }

    #[test]
    fn lower_examples() {
        let u = unif(0.0, 1.0);
        assert_eq!(makarov_lower(&u, &u, 0.0).value, 0.0);

        let (oracle, _) = grid_sup(&unif(0.0, 1.0), &unif(1.0, 2.0), 1.5, -1.0, 4.0);
        assert!((oracle - 0.5).abs() < 1e-9);
        let v = makarov_lower(&unif(0.0, 1.0), &unif(1.0, 2.0), 1.5).value;
        assert!((v - 0.5).abs() < 1e-6);

        let n = std_normal();
        let expect = 2.0 * n.cdf(0.5) - 1.0;
        let (oracle, _) = grid_sup(&n, &n, 1.0, -8.0, 8.0);
        assert!((oracle - expect).abs() < 1e-6);
        let e = makarov_lower(&n, &n, 1.0);
        assert!((e.value - expect).abs() < 1e-9);
        assert!((e.argument - 0.5).abs() < 1e-4);
    }

    #[test]
    fn upper_examples() {
        let u = unif(0.0, 1.0);
        assert_eq!(makarov_upper(&u, &u, 0.0).value, 1.0);
        let shifted = unif(0.5, 1.5);
        let (_, oracle) = grid_sup(&u, &shifted, 0.25, -1.0, 3.0);
        assert!((oracle - 0.75).abs() < 1e-9);
        assert!((makarov_upper(&u, &shifted, 0.25).value - 0.75).abs() < 1e-6);
        let (_, oracle) = grid_sup(&u, &shifted, 0.5, -1.0, 3.0);
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((makarov_upper(&u, &shifted, 0.5).value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_marginals_use_breakpoints() {
        // Y0 on {0, 1}, Y1 on {2, 3}: Δ ≥ 1 always, and the countermonotone
        // coupling puts half the mass at Δ = 3.
        let f0 = MarginalDistribution::step_cdf(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap();
        let f1 = MarginalDistribution::step_cdf(vec![2.0, 3.0], vec![0.5, 1.0]).unwrap();
        assert_eq!(makarov_upper(&f0, &f1, 0.99).value, 0.0);
        assert!((makarov_lower(&f0, &f1, 2.5).value - 0.5).abs() < 1e-12);
        assert_eq!(makarov_lower(&f0, &f1, 3.01).value, 1.0);
    }

    #[test]
    fn frechet_examples() {
        let (l, u) = frechet_rectangle(1.0, 0.3).unwrap();
        assert!((l - 0.3).abs() < 1e-15 && u == 0.3);
        assert_eq!(frechet_rectangle(0.5, 0.5).unwrap(), (0.0, 0.5));
        let (l, u) = frechet_rectangle(0.9, 0.8).unwrap();
        assert!((l - 0.7).abs() < 1e-15 && (u - 0.8).abs() < 1e-15);
        assert!(frechet_rectangle(1.1, 0.2).is_err());
    }

    #[test]
    fn copula_examples() {
        for (u, v) in [(0.2, 0.9), (0.7, 0.6), (0.5, 0.5)] {
            assert!((attaining_copula_upper(1.0, u, v).unwrap() - f64::min(u, v)).abs() < 1e-15);
            assert!((attaining_copula_lower(0.0, u, v).unwrap() - f64::min(u, v)).abs() < 1e-15);
        }
        assert!((attaining_copula_upper(0.0, 0.7, 0.6).unwrap() - 0.3).abs() < 1e-15);
        assert!((attaining_copula_upper(0.5, 0.8, 0.4).unwrap() - 0.3).abs() < 1e-15);
        assert!((attaining_copula_lower(1.0, 0.7, 0.6).unwrap() - 0.3).abs() < 1e-15);
        assert!((attaining_copula_lower(0.5, 0.3, 0.9).unwrap() - 0.3).abs() < 1e-15);
        assert!(attaining_copula_upper(0.5, 1.2, 0.3).is_err());
    }

    #[test]
    fn dte_under_canonical_copulas() {
        let u = unif(0.0, 1.0);
        let ind = dte_under_copula(&u, &u, &Independence, 0.0, 400).unwrap();
        assert!((ind - 0.5).abs() < 0.01, "{ind}");
        let co = dte_under_copula(&u, &u, &Comonotone, 0.0, 400).unwrap();
        assert!((co - 1.0).abs() < 0.01, "{co}");
        let counter = dte_under_copula(&u, &u, &Countermonotone, 0.0, 400).unwrap();
        assert!((counter - 0.5).abs() < 0.01, "{counter}");
        assert!(dte_under_copula(&u, &u, &Independence, 0.0, 50).is_err());
    }

    #[test]
    fn non_copula_is_rejected() {
        let u = unif(0.0, 1.0);
        let bad = |a: f64, b: f64| a + b - a * b;
        assert!(matches!(
            dte_under_copula(&u, &u, &bad, 0.0, 100),
            Err(Error::NegativeCellMass { .. })
        ));
    }

    #[test]
    fn attaining_copulas_reach_bounds() {
        let f0 = std_normal();
        let f1 = MarginalDistribution::normal(0.5, 2.0).unwrap();
        for delta in [0.0, 0.5, 1.0] {
            let s = makarov_upper(&f0, &f1, delta).value;
            let via = dte_under_copula(&f0, &f1, &AttainingUpper(s), delta, 400).unwrap();
            assert!((via - s).abs() < 0.02, "upper {delta}: {via} vs {s}");
            let t = makarov_lower(&f0, &f1, delta).value;
            let via = dte_under_copula(&f0, &f1, &AttainingLower(t), delta - 1e-6, 400).unwrap();
            assert!((via - t).abs() < 0.02, "lower {delta}: {via} vs {t}");
        }
    }

    #[test]
    fn singular_mass_tangent_to_boundary() {
        // The comonotone piece of C_s^U touches y1 − y0 = δ in the far tail.
        let f0 = MarginalDistribution::normal(-0.4930483459014013, 1.4453024524305529).unwrap();
        let f1 = MarginalDistribution::normal(0.626120264152715, 1.6597673502897994).unwrap();
        let d = 1.0681209769767779;
        let s = makarov_upper(&f0, &f1, d).value;
        let via = dte_under_copula(&f0, &f1, &AttainingUpper(s), d, 400).unwrap();
        assert!((via - s).abs() < 1e-3, "{via} vs {s}");
    }

    #[test]
    fn curve_is_ordered_and_monotone() {
        let f0 = std_normal();
        let f1 = MarginalDistribution::normal(1.0, 1.5).unwrap();
        let deltas: Vec<f64> = (0..21).map(|i| -3.0 + 0.4 * i as f64).collect();
        let c = makarov_curve(&f0, &f1, &deltas).unwrap();
        for i in 0..deltas.len() {
            assert!(c.lower[i] <= c.upper[i]);
            if i > 0 {
                assert!(c.lower[i] >= c.lower[i - 1] && c.upper[i] >= c.upper[i - 1]);
            }
        }
    }
}
