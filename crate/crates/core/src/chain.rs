//! Optimization over monotone sequences {x_k} linked by affine constraints
//! lo(x_k) ≤ x_{k+1} ≤ hi(x_k), maximizing Σ max(c(x_k, x_{k+1}), 0).
//!
//! Lower-type problems use increasing sequences with
//! c = F1(g(x_{k+1})) − F0(x_k) and report the sum; upper-type problems use
//! decreasing sequences with c = F0(x_k) − F1(g(x_{k+1})) and report one
//! minus the sum. The search starts from orbits of the binding recursion,
//! truncates to a window around the best orbit, and refines the window with
//! seeded multistart coordinate ascent on a smoothed objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distributions::{Cdf, MarginalDistribution, Surrogate, SATURATION_TAIL};
use crate::error::{Error, Result};
use crate::mtr::{smooth_max_unchecked, MtrOptions};
use crate::numeric::golden_max;

const TIE_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const MAX_ORBIT_TERMS: i64 = 20_000;
const MAX_JUMP_CANDIDATES: usize = 4_000;

/// x ↦ slope·x + shift with slope > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Affine {
    pub slope: f64,
    pub shift: f64,
}

impl Affine {
    pub fn new(slope: f64, shift: f64) -> Self {
        Affine { slope, shift }
    }

    pub fn identity() -> Self {
        Affine::new(1.0, 0.0)
    }

    pub fn translate(shift: f64) -> Self {
        Affine::new(1.0, shift)
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.shift
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (y - self.shift) / self.slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
enum Orbit {
    Translation { step: f64 },
    Geometric { fixed: f64, ln_ratio: f64, side: f64 },
}

impl Orbit {
    fn period(&self) -> f64 {
        match *self {
            Orbit::Translation { step } => step.abs(),
            Orbit::Geometric { ln_ratio, .. } => -ln_ratio,
        }
    }

    fn point(&self, param: f64, k: i64) -> f64 {
        match *self {
            Orbit::Translation { step } => param + k as f64 * step,
            Orbit::Geometric { fixed, ln_ratio, side } => fixed + side * (param + k as f64 * ln_ratio).exp(),
        }
    }

    /// Parameter in [0, period) of the orbit through x, if any.
    fn param_of(&self, x: f64) -> Option<f64> {
        let period = self.period();
        let raw = match *self {
            Orbit::Translation { .. } => x,
            Orbit::Geometric { fixed, side, .. } => {
                let d = side * (x - fixed);
                if !(d > 0.0) {
                    return None;
                }
                d.ln()
            }
        };
        let t = raw.rem_euclid(period);
        (t.is_finite() && t < period).then_some(t)
    }

    /// Index range whose points cover [lo, hi], padded by one on each side.
    fn k_range(&self, param: f64, lo: f64, hi: f64, floor_dist: f64) -> (i64, i64) {
        let (a, b) = match *self {
            Orbit::Translation { step } => {
                let ka = (lo - param) / step;
                let kb = (hi - param) / step;
                (ka.min(kb), ka.max(kb))
            }
            Orbit::Geometric { fixed, ln_ratio, side } => {
                // distance to the fixed point over the covered interval
                let (d_near, d_far) = if side < 0.0 {
                    ((fixed - hi.min(fixed)).max(floor_dist), (fixed - lo).max(floor_dist))
                } else {
                    ((lo.max(fixed) - fixed).max(floor_dist), (hi - fixed).max(floor_dist))
                };
                let k_far = (d_far.ln() - param) / ln_ratio;
                let k_near = (d_near.ln() - param) / ln_ratio;
                (k_far.min(k_near), k_far.max(k_near))
            }
        };
        let mut kmin = a.floor() as i64 - 1;
        let mut kmax = b.ceil() as i64 + 1;
        if kmax - kmin > MAX_ORBIT_TERMS {
            let mid = (kmin + kmax) / 2;
            kmin = mid - MAX_ORBIT_TERMS / 2;
            kmax = mid + MAX_ORBIT_TERMS / 2;
        }
        (kmin, kmax)
    }
}

/// Outcome of a full chain optimization.
#[derive(Debug, Clone)]
pub(crate) struct ChainOutcome {
    /// Exact Σ max(c, 0) at `points`.
    pub value: f64,
    pub points: Vec<f64>,
    /// Warm-start orbit value V and its truncation.
    pub orbit_value: f64,
    pub truncated_value: f64,
    pub k: usize,
    pub y_star: f64,
}

pub(crate) struct ChainProblem<'a> {
    pub f0: &'a MarginalDistribution,
    pub f1: &'a MarginalDistribution,
    pub sense: Sense,
    pub lo: Affine,
    pub hi: Affine,
    pub g: Affine,
    /// Minimum of x_{k+2} − x_k (lower-type problems only).
    pub prune: Option<f64>,
}

/// Where the window refinement is confined: x_{−J} on one side of
/// `first`, x_J on the other side of `last`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowBox {
    pub first: f64,
    pub last: f64,
}

impl<'a> ChainProblem<'a> {
    fn dir(&self) -> f64 {
        match self.sense {
            Sense::Lower => 1.0,
            Sense::Upper => -1.0,
        }
    }

    fn binding(&self) -> Affine {
        match self.sense {
            Sense::Lower => self.hi,
            Sense::Upper => self.lo,
        }
    }

    fn orbit(&self) -> Option<Orbit> {
        let m = self.binding();
        if (m.slope - 1.0).abs() < 1e-12 {
            let ok = match self.sense {
                Sense::Lower => m.shift > 1e-12,
                Sense::Upper => m.shift < -1e-12,
            };
            ok.then_some(Orbit::Translation { step: m.shift })
        } else if m.slope > 0.0 && m.slope < 1.0 {
            Some(Orbit::Geometric {
                fixed: m.shift / (1.0 - m.slope),
                ln_ratio: m.slope.ln(),
                side: -self.dir(),
            })
        } else {
            None
        }
    }

    fn scale(&self) -> f64 {
        self.f0.scale().max(self.f1.scale() / self.g.slope)
    }

    /// Interval of x outside which every term vanishes.
    fn relevant(&self) -> (f64, f64) {
        let (lo0, hi0) = self.f0.effective_range(SATURATION_TAIL);
        let (lo1, hi1) = self.f1.effective_range(SATURATION_TAIL);
        (lo0.min(self.g.inverse(lo1)), hi0.max(self.g.inverse(hi1)))
    }

    fn term(&self, c0: &dyn Cdf, c1: &dyn Cdf, x0: f64, x1: f64) -> f64 {
        let d = c1.cdf(self.g.apply(x1)) - c0.cdf(x0);
        match self.sense {
            Sense::Lower => d,
            Sense::Upper => -d,
        }
    }

    /// Σ max(c, 0) over consecutive pairs.
    pub fn objective(&self, c0: &dyn Cdf, c1: &dyn Cdf, pts: &[f64]) -> f64 {
        pts.windows(2).map(|w| self.term(c0, c1, w[0], w[1]).max(0.0)).sum()
    }

    pub fn exact_objective(&self, pts: &[f64]) -> f64 {
        self.objective(self.f0, self.f1, pts)
    }

    fn orbit_points(&self, orbit: &Orbit, param: f64) -> (i64, Vec<f64>) {
        let (lo, hi) = self.relevant();
        let floor = 1e-9 * self.scale().max(1e-300);
        let (kmin, kmax) = orbit.k_range(param, lo, hi, floor);
        (kmin, (kmin..=kmax + 1).map(|k| orbit.point(param, k)).collect())
    }

    fn orbit_value(&self, c0: &dyn Cdf, c1: &dyn Cdf, orbit: &Orbit, param: f64) -> f64 {
        let (_, pts) = self.orbit_points(orbit, param);
        self.objective(c0, c1, &pts)
    }

    /// Step 1: best orbit of the binding recursion. Returns (V, param) with
    /// V evaluated exactly. `extra` holds x values whose orbits are always
    /// evaluated exactly; ties go to the smallest parameter.
    pub fn scan(&self, y_grid: usize, extra: &[f64]) -> Option<(f64, f64)> {
        let orbit = self.orbit()?;
        let s0 = Surrogate(self.f0);
        let s1 = Surrogate(self.f1);
        let period = orbit.period();
        let n = y_grid.max(2);
        let mut params: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
        let steps = self.f0.is_step() || self.f1.is_step();
        if steps {
            let mut xs: Vec<f64> = self.f0.jump_points().to_vec();
            xs.extend(self.f1.jump_points().iter().map(|j| self.g.inverse(*j)));
            let stride = xs.len().div_ceil(MAX_JUMP_CANDIDATES).max(1);
            for x in xs.iter().step_by(stride) {
                if let Some(t) = orbit.param_of(*x) {
                    let eps = 1e-9 * period;
                    params.extend([t, (t - eps).max(0.0), (t + eps).min(period * (1.0 - 1e-15))]);
                }
            }
        }
        params.sort_by(f64::total_cmp);
        params.dedup();
        let values: Vec<f64> = params
            .par_iter()
            .map(|&t| self.orbit_value(&s0, &s1, &orbit, t))
            .collect();
        let best_val = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best = values.iter().position(|v| *v >= best_val - TIE_TOL).unwrap_or(0);

        let mut candidates = vec![params[best]];
        if !steps {
            let a = if best == 0 { 0.0 } else { params[best - 1] };
            let b = if best + 1 < params.len() { params[best + 1] } else { period };
            let (t, _) = golden_max(|t| self.orbit_value(&s0, &s1, &orbit, t), a, b, 1e-9 * period);
            candidates.push(t.clamp(0.0, period * (1.0 - 1e-15)));
        }
        candidates.extend(extra.iter().filter_map(|x| orbit.param_of(*x)));
        let mut exact: Vec<(f64, f64)> = candidates
            .par_iter()
            .map(|&t| (t, self.orbit_value(self.f0, self.f1, &orbit, t)))
            .collect();
        exact.sort_by(|a, b| a.0.total_cmp(&b.0));
        let top = exact.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let (t, v) = *exact.iter().find(|e| e.1 >= top - TIE_TOL)?;
        Some((v, t))
    }

    /// Step 2: smallest K such that some window of 2K + 1 consecutive terms
    /// of the orbit through `param` is within `eps` of the full sum.
    /// Returns (K, V_K, window center index, orbit index offset, orbit points).
    pub fn truncate(&self, param: f64, eps: f64) -> Option<Truncation> {
        let orbit = self.orbit()?;
        let (kmin, pts) = self.orbit_points(&orbit, param);
        let terms: Vec<f64> = pts
            .windows(2)
            .map(|w| self.term(self.f0, self.f1, w[0], w[1]).max(0.0))
            .collect();
        let total: f64 = terms.iter().sum();
        let mut prefix = vec![0.0; terms.len() + 1];
        for (i, t) in terms.iter().enumerate() {
            prefix[i + 1] = prefix[i] + t;
        }
        let m = terms.len() as i64;
        for k in 0..=m {
            let mut best = f64::NEG_INFINITY;
            let mut center = 0;
            for c in 0..m {
                let a = (c - k).max(0) as usize;
                let b = (c + k + 1).min(m) as usize;
                let s = prefix[b] - prefix[a];
                if s > best + TIE_TOL {
                    best = s;
                    center = c;
                }
            }
            if total - best < eps {
                return Some(Truncation {
                    k: k as usize,
                    truncated_value: best,
                    center: kmin + center,
                    orbit,
                    param,
                });
            }
        }
        None
    }

    fn interval(&self, pts: &[f64], i: usize, bx: &WindowBox) -> (f64, f64) {
        let n = pts.len();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        if i > 0 {
            lo = lo.max(self.lo.apply(pts[i - 1]));
            hi = hi.min(self.hi.apply(pts[i - 1]));
        }
        if i + 1 < n {
            lo = lo.max(self.hi.inverse(pts[i + 1]));
            hi = hi.min(self.lo.inverse(pts[i + 1]));
        }
        if let Some(gap) = self.prune {
            if i >= 2 {
                lo = lo.max(pts[i - 2] + gap);
            }
            if i + 2 < n {
                hi = hi.min(pts[i + 2] - gap);
            }
        }
        let first = 0;
        let last = n - 2;
        match self.sense {
            Sense::Lower => {
                if i == first {
                    lo = lo.max(bx.first);
                }
                if i == last {
                    hi = hi.min(bx.last);
                }
            }
            Sense::Upper => {
                if i == first {
                    hi = hi.min(bx.first);
                }
                if i == last {
                    lo = lo.max(bx.last);
                }
            }
        }
        (lo, hi)
    }

    /// Check a window against every constraint, with tolerance `FEAS_TOL`.
    pub fn check_feasible(&self, pts: &[f64], bx: &WindowBox) -> Result<()> {
        if pts.len() < 2 {
            return Err(Error::InfeasibleStart("window needs at least two points".into()));
        }
        for (i, w) in pts.windows(2).enumerate() {
            if w[1] < self.lo.apply(w[0]) - FEAS_TOL || w[1] > self.hi.apply(w[0]) + FEAS_TOL {
                return Err(Error::InfeasibleStart(format!(
                    "step {i} from {} to {} leaves [{}, {}]",
                    w[0],
                    w[1],
                    self.lo.apply(w[0]),
                    self.hi.apply(w[0])
                )));
            }
        }
        if let Some(gap) = self.prune {
            if let Some(i) = pts.windows(3).position(|w| w[2] - w[0] < gap - FEAS_TOL) {
                return Err(Error::InfeasibleStart(format!("two-step gap at {i} is below {gap}")));
            }
        }
        let n = pts.len();
        let d = self.dir();
        if d * (pts[0] - bx.first) < -FEAS_TOL || d * (bx.last - pts[n - 2]) < -FEAS_TOL {
            return Err(Error::InfeasibleStart("window leaves its box".into()));
        }
        Ok(())
    }

    /// Coordinate ascent on the smoothed objective, evaluated on the search
    /// surrogates. Returns the best point seen by the unsmoothed surrogate
    /// objective together with its exact value, never worse than the start.
    pub fn refine(&self, start: &[f64], bx: &WindowBox, opts: &MtrOptions) -> (f64, Vec<f64>) {
        let s0 = Surrogate(self.f0);
        let s1 = Surrogate(self.f1);
        let h = opts.smoothing_h;
        let smooth_term = |a: f64, b: f64| smooth_max_unchecked(self.term(&s0, &s1, a, b), h);
        let mut pts = start.to_vec();
        let n = pts.len();
        let mut best_plain = self.objective(&s0, &s1, &pts);
        let mut best_pts = pts.clone();
        for _ in 0..opts.max_sweeps {
            let mut gained = 0.0;
            for i in 0..n {
                let (lo, hi) = self.interval(&pts, i, bx);
                if !(hi - lo > 1e-13 * (1.0 + lo.abs())) {
                    continue;
                }
                let local = |x: f64, pts: &[f64]| {
                    let mut s = 0.0;
                    if i > 0 {
                        s += smooth_term(pts[i - 1], x);
                    }
                    if i + 1 < n {
                        s += smooth_term(x, pts[i + 1]);
                    }
                    s
                };
                let current = local(pts[i], &pts);
                let probes: Vec<f64> = (0..9).map(|j| lo + (hi - lo) * j as f64 / 8.0).collect();
                let vals: Vec<f64> = probes.iter().map(|x| local(*x, &pts)).collect();
                let b = (0..9).fold(0, |bi, j| if vals[j] > vals[bi] { j } else { bi });
                let a_br = probes[b.saturating_sub(1)];
                let b_br = probes[(b + 1).min(8)];
                let (gx, gv) = golden_max(|x| local(x, &pts), a_br, b_br, 1e-10 * (1.0 + a_br.abs()));
                let (x, v) = if gv > vals[b] { (gx, gv) } else { (probes[b], vals[b]) };
                if v > current + 1e-13 {
                    gained += v - current;
                    pts[i] = x.clamp(lo, hi);
                }
            }
            let plain = self.objective(&s0, &s1, &pts);
            if plain > best_plain {
                best_plain = plain;
                best_pts.clone_from(&pts);
            }
            if gained < 1e-10 {
                break;
            }
        }
        let start_exact = self.exact_objective(start);
        let best_exact = self.exact_objective(&best_pts);
        if best_exact >= start_exact {
            (best_exact, best_pts)
        } else {
            (start_exact, start.to_vec())
        }
    }

    /// Random feasible window of `2j + 2` points; `None` after repeated rejection.
    fn random_start(&self, j: usize, bx: &WindowBox, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let n = 2 * j + 2;
        let translation = (self.lo.slope - 1.0).abs() < 1e-12 && (self.hi.slope - 1.0).abs() < 1e-12;
        let d = self.dir();
        for attempt in 0..100 {
            let theta = rng.random::<f64>() * 0.5f64.powi(attempt / 25);
            let mut pts = Vec::with_capacity(n);
            let x0 = if translation {
                0.0
            } else {
                bx.first + rng.random::<f64>().powi(2) * 0.5 * (bx.last - bx.first)
            };
            pts.push(x0);
            let mut ok = true;
            for i in 0..n - 1 {
                let x = pts[i];
                let (mut near, far) = match self.sense {
                    Sense::Lower => (self.lo.apply(x), self.hi.apply(x)),
                    Sense::Upper => (self.hi.apply(x), self.lo.apply(x)),
                };
                if let (Some(gap), true) = (self.prune, i >= 1) {
                    near = near.max(pts[i - 1] + gap);
                }
                if d * (far - near) < 0.0 {
                    ok = false;
                    break;
                }
                pts.push(near + theta * rng.random::<f64>() * (far - near));
            }
            if !ok {
                continue;
            }
            if translation {
                let span = pts[n - 2] - pts[0];
                let (lo, hi) = match self.sense {
                    Sense::Lower => (bx.first, bx.last - span),
                    Sense::Upper => (bx.last - span, bx.first),
                };
                if hi < lo {
                    continue;
                }
                let shift = lo + rng.random::<f64>() * (hi - lo);
                for p in pts.iter_mut() {
                    *p += shift;
                }
            }
            if self.check_feasible(&pts, bx).is_ok() {
                return Some(pts);
            }
        }
        None
    }

    /// Steps 1–4: orbit scan, truncation, and multistart refinement for
    /// window sizes J = K..2K. `extra` is forwarded to the scan.
    pub fn solve(&self, opts: &MtrOptions, extra: &[f64]) -> Option<ChainOutcome> {
        let (_, y_star) = self.scan(opts.y_grid, extra)?;
        let tr = self.truncate(y_star, opts.epsilon_k)?;
        let orbit_pts = tr.full_orbit(self);
        let orbit_exact = self.exact_objective(&orbit_pts);

        let mut best_value = orbit_exact;
        let mut best_pts = orbit_pts;

        if opts.refine {
            let k = tr.k;
            let bx = tr.window_box();
            let js: Vec<usize> = (k..=2 * k)
                .filter(|&j| self.window_feasible(j, k, &tr))
                .collect();
            if !js.is_empty() {
                let total = opts.multistarts.max(1);
                let results: Vec<Option<(f64, Vec<f64>)>> = (0..total)
                    .into_par_iter()
                    .map(|s| {
                        let j = js[s % js.len()];
                        let start = if s == 0 && j == k {
                            Some(tr.window(k))
                        } else {
                            let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
                            rng.set_stream(s as u64);
                            self.random_start(j, &bx, &mut rng)
                        }?;
                        self.check_feasible(&start, &bx).ok()?;
                        Some(self.refine(&start, &bx, opts))
                    })
                    .collect();
                for (v, pts) in results.into_iter().flatten() {
                    if v > best_value {
                        best_value = v;
                        best_pts = pts;
                    }
                }
            }
        }

        Some(ChainOutcome {
            value: best_value,
            points: best_pts,
            orbit_value: orbit_exact,
            truncated_value: tr.truncated_value,
            k: tr.k,
            y_star,
        })
    }

    fn window_feasible(&self, j: usize, k: usize, tr: &Truncation) -> bool {
        match self.prune {
            // 2J increments with consecutive pairs summing to at least `gap`
            // must fit in the 2K-step box.
            Some(gap) => {
                let span = (tr.orbit.point(tr.param, tr.center + k as i64)
                    - tr.orbit.point(tr.param, tr.center - k as i64))
                .abs();
                j == k || (j as f64) * gap <= span - 1e-12
            }
            None => true,
        }
    }

}

pub(crate) struct Truncation {
    pub k: usize,
    pub truncated_value: f64,
    pub center: i64,
    orbit: Orbit,
    param: f64,
}

impl Truncation {
    /// Points x_{c−J}..x_{c+J+1} of the orbit.
    pub fn window(&self, j: usize) -> Vec<f64> {
        let j = j as i64;
        (self.center - j..=self.center + j + 1)
            .map(|k| self.orbit.point(self.param, k))
            .collect()
    }

    pub fn window_box(&self) -> WindowBox {
        let k = self.k as i64;
        WindowBox {
            first: self.orbit.point(self.param, self.center - k),
            last: self.orbit.point(self.param, self.center + k),
        }
    }

    /// Every orbit point that can carry a nonzero term, padded to an odd
    /// number of terms.
    fn full_orbit(&self, problem: &ChainProblem<'_>) -> Vec<f64> {
        let (kmin, mut pts) = problem.orbit_points(&self.orbit, self.param);
        if pts.len() % 2 == 1 {
            let next = kmin + pts.len() as i64;
            pts.push(self.orbit.point(self.param, next));
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mtr<'a>(f0: &'a MarginalDistribution, f1: &'a MarginalDistribution, delta: f64) -> ChainProblem<'a> {
        ChainProblem {
            f0,
            f1,
            sense: Sense::Lower,
            lo: Affine::identity(),
            hi: Affine::translate(delta),
            g: Affine::identity(),
            prune: Some(delta + 1e-9),
        }
    }

    #[test]
    fn orbit_param_round_trip() {
        let o = Orbit::Geometric {
            fixed: 2.0,
            ln_ratio: 0.5f64.ln(),
            side: -1.0,
        };
        let t = o.param_of(1.3).unwrap();
        let k = (0..100).find(|&k| (o.point(t, k - 50) - 1.3).abs() < 1e-12);
        assert!(k.is_some());
        assert!(o.param_of(2.5).is_none());
    }

    #[test]
    fn refine_never_reports_below_start() {
        let f0 = MarginalDistribution::normal(0.0, 1.0).unwrap();
        let f1 = MarginalDistribution::normal(1.0, 1.0).unwrap();
        let p = mtr(&f0, &f1, 0.8);
        let tr = p.truncate(0.1, 1e-5).unwrap();
        let start = tr.window(tr.k);
        let bx = tr.window_box();
        p.check_feasible(&start, &bx).unwrap();
        let (v, pts) = p.refine(&start, &bx, &MtrOptions::default());
        assert!(v >= p.exact_objective(&start) - 1e-15);
        p.check_feasible(&pts, &bx).unwrap();
    }

    #[test]
    fn random_starts_are_feasible() {
        let f0 = MarginalDistribution::normal(0.0, 1.0).unwrap();
        let f1 = MarginalDistribution::normal(1.0, 1.0).unwrap();
        let p = mtr(&f0, &f1, 0.5);
        let tr = p.truncate(0.0, 1e-5).unwrap();
        let bx = tr.window_box();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for j in tr.k..2 * tr.k {
            if let Some(pts) = p.random_start(j, &bx, &mut rng) {
                assert_eq!(pts.len(), 2 * j + 2);
                p.check_feasible(&pts, &bx).unwrap();
            }
        }
    }
}
