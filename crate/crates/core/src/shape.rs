//! Bounds under concave or convex response in treatment intensity, given
//! a pre-treatment outcome W = w observed at intensity t_W < t0 < t1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Affine, ChainProblem, Sense};
use crate::distributions::{MarginalDistribution, SATURATION_TAIL};
use crate::error::{Error, Result};
use crate::makarov::makarov_upper;
use crate::mtr::{mtr_lower, mtr_upper, MtrOptions};
use crate::numeric::{gauss_legendre, golden_max};

const SUPPORT_TOL: f64 = 1e-6;
const MAX_TAIL_TERMS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawContext", into = "RawContext")]
pub struct ShapeContext {
    pub w: f64,
    pub t_w: f64,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Serialize, Deserialize)]
struct RawContext {
    w: f64,
    t_w: f64,
    t0: f64,
    t1: f64,
}

impl TryFrom<RawContext> for ShapeContext {
    type Error = Error;
    fn try_from(r: RawContext) -> Result<Self> {
        ShapeContext::new(r.w, r.t_w, r.t0, r.t1)
    }
}

impl From<ShapeContext> for RawContext {
    fn from(c: ShapeContext) -> Self {
        RawContext {
            w: c.w,
            t_w: c.t_w,
            t0: c.t0,
            t1: c.t1,
        }
    }
}

impl ShapeContext {
    pub fn new(w: f64, t_w: f64, t0: f64, t1: f64) -> Result<Self> {
        if ![w, t_w, t0, t1].iter().all(|x| x.is_finite()) {
            return Err(Error::domain("shape context values must be finite"));
        }
        if !(t_w < t0 && t0 < t1) {
            return Err(Error::domain(format!(
                "intensities must satisfy t_W < t0 < t1 (got {t_w}, {t0}, {t1})"
            )));
        }
        Ok(ShapeContext { w, t_w, t0, t1 })
    }

    /// Same intensities, different conditioning value.
    pub fn at(&self, w: f64) -> Self {
        ShapeContext { w, ..*self }
    }

    /// T1 = (t1 − t0)/(t1 − t_W).
    pub fn t1_weight(&self) -> f64 {
        (self.t1 - self.t0) / (self.t1 - self.t_w)
    }

    /// T0 = 1 − T1.
    pub fn t0_weight(&self) -> f64 {
        (self.t0 - self.t_w) / (self.t1 - self.t_w)
    }

    /// S1 = (t1 − t_W)/(t0 − t_W) = 1/T0.
    pub fn s1(&self) -> f64 {
        (self.t1 - self.t_w) / (self.t0 - self.t_w)
    }

    /// S0 = (t0 − t_W)/(t1 − t0) = T0/T1.
    pub fn s0(&self) -> f64 {
        (self.t0 - self.t_w) / (self.t1 - self.t0)
    }
}

/// Finite distribution of the pre-treatment outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct WMixture {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for WMixture {
    type Error = Error;
    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        WMixture::new(atoms)
    }
}

impl From<WMixture> for Vec<(f64, f64)> {
    fn from(m: WMixture) -> Self {
        m.atoms
    }
}

impl WMixture {
    /// Atoms as (w, weight).
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput("mixture has no atoms"));
        }
        if atoms.iter().any(|(w, p)| !w.is_finite() || !(*p >= 0.0)) {
            return Err(Error::domain("atoms need finite values and nonnegative weights"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(WMixture { atoms })
    }

    /// n-point Gauss–Legendre rule in the probability scale:
    /// w_i = F_W⁻¹(u_i) for the nodes u_i on (0, 1).
    pub fn gauss_legendre(fw: &MarginalDistribution, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("quadrature needs at least one atom"));
        }
        let (nodes, weights) = gauss_legendre(n);
        let total: f64 = weights.iter().sum();
        let atoms = nodes
            .iter()
            .zip(&weights)
            .map(|(x, wt)| Ok((fw.quantile(0.5 * (x + 1.0))?, wt / total)))
            .collect::<Result<Vec<_>>>()?;
        let s: f64 = atoms.iter().map(|a| a.1).sum();
        let atoms = atoms.into_iter().map(|(w, p)| (w, p / s)).collect();
        WMixture::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

/// Σ weight_i · value_i.
pub fn mix_over_w(per_w: &[f64], mix: &WMixture) -> Result<f64> {
    if per_w.len() != mix.atoms.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {} atoms",
            per_w.len(),
            mix.atoms.len()
        )));
    }
    Ok(per_w.iter().zip(&mix.atoms).map(|(v, (_, p))| v * p).sum())
}

fn check_support(f0w: &MarginalDistribution, ctx: &ShapeContext) -> Result<()> {
    let below = f0w.cdf_left(ctx.w);
    if below > SUPPORT_TOL {
        return Err(Error::SupportViolation(format!(
            "untreated conditional puts mass {below:.3e} below w = {}",
            ctx.w
        )));
    }
    Ok(())
}

/// Decreasing sequences with T0(b_k + δ) + T1·w ≤ b_{k+1} ≤ b_k and terms
/// F0(b_k) − F1(S1·b_{k+1} − (S1 − 1)w).
fn concave_upper_problem<'a>(
    f0w: &'a MarginalDistribution,
    f1w: &'a MarginalDistribution,
    delta: f64,
    ctx: &ShapeContext,
) -> ChainProblem<'a> {
    let (t0, t1, s1) = (ctx.t0_weight(), ctx.t1_weight(), ctx.s1());
    ChainProblem {
        f0: f0w,
        f1: f1w,
        sense: Sense::Upper,
        lo: Affine::new(t0, t0 * delta + t1 * ctx.w),
        hi: Affine::identity(),
        g: Affine::new(s1, -(s1 - 1.0) * ctx.w),
        prune: None,
    }
}

/// Increasing sequences with a_k ≤ a_{k+1} ≤ (a_k + δ + (S1 − 1)w)/S1 and
/// terms F1(S1·a_{k+1} + (1 − S1)w) − F0(a_k).
fn convex_lower_problem<'a>(
    f0w: &'a MarginalDistribution,
    f1w: &'a MarginalDistribution,
    delta: f64,
    ctx: &ShapeContext,
) -> ChainProblem<'a> {
    let s1 = ctx.s1();
    ChainProblem {
        f0: f0w,
        f1: f1w,
        sense: Sense::Lower,
        lo: Affine::identity(),
        hi: Affine::new(1.0 / s1, (delta + (s1 - 1.0) * ctx.w) / s1),
        g: Affine::new(s1, (1.0 - s1) * ctx.w),
        prune: None,
    }
}

/// ŵ = w + δ/(S1 − 1) and q = w + S1·δ/(S1 − 1): under concave response
/// Y0 ≤ ŵ or Y1 ≤ q forces Y1 − Y0 ≤ δ; under convex response Y0 > ŵ or
/// Y1 > q forces Y1 − Y0 > δ.
fn pivots(delta: f64, ctx: &ShapeContext) -> (f64, f64) {
    let s1 = ctx.s1();
    (ctx.w + delta / (s1 - 1.0), ctx.w + s1 * delta / (s1 - 1.0))
}

/// max(F0(ŵ), F1(c)) + Σ_{k≥0} max(F1(c + (k+1)δ) − F0(c + kδ), 0).
fn concave_head_value(f0w: &MarginalDistribution, f1w: &MarginalDistribution, delta: f64, w_hat: f64, c: f64) -> f64 {
    let hi = f0w.effective_range(SATURATION_TAIL).1.max(f1w.effective_range(SATURATION_TAIL).1);
    let terms = (((hi - c) / delta).ceil().max(0.0) as usize + 1).min(MAX_TAIL_TERMS);
    let tail: f64 = (0..terms)
        .map(|k| {
            let a = c + k as f64 * delta;
            (f1w.cdf(a + delta) - f0w.cdf(a)).max(0.0)
        })
        .sum();
    f0w.cdf(w_hat).max(f1w.cdf(c)) + tail
}

/// Lower bound from the region below ŵ/q together with an equally spaced
/// chain above it, maximized over the chain start c in [ŵ, q].
fn concave_lower_head(f0w: &MarginalDistribution, f1w: &MarginalDistribution, delta: f64, ctx: &ShapeContext, grid: usize) -> f64 {
    let (w_hat, q) = pivots(delta, ctx);
    let value = |c: f64| concave_head_value(f0w, f1w, delta, w_hat, c);
    let n = grid.max(2);
    let mut cs: Vec<f64> = (0..=n).map(|i| w_hat + (q - w_hat) * i as f64 / n as f64).collect();
    let steps = f0w.is_step() || f1w.is_step();
    if steps {
        let eps = 1e-9 * delta;
        for &x in f0w.jump_points().iter().chain(f1w.jump_points()) {
            for shift in [x, x - delta] {
                let k = ((shift - q) / delta).ceil().max(0.0);
                let c = shift - k * delta;
                if c >= w_hat {
                    cs.extend([c, c - eps]);
                }
            }
            if cs.len() > 20 * MAX_TAIL_TERMS {
                break;
            }
        }
        cs.retain(|c| *c >= w_hat && *c <= q);
    }
    let vals: Vec<f64> = cs.par_iter().map(|&c| value(c)).collect();
    let (best, &best_val) = vals
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    if steps {
        return best_val;
    }
    cs.sort_by(f64::total_cmp);
    let pos = cs.partition_point(|c| *c < cs[best.min(cs.len() - 1)]);
    let a = cs[pos.saturating_sub(1)];
    let b = cs[(pos + 1).min(cs.len() - 1)];
    let (_, v) = golden_max(value, a, b, 1e-10 * (1.0 + a.abs()));
    best_val.max(v)
}

/// (lower, upper) under concave response, conditional on W = w.
pub fn concave_bounds(
    f0w: &MarginalDistribution,
    f1w: &MarginalDistribution,
    delta: f64,
    ctx: &ShapeContext,
    opts: &MtrOptions,
) -> Result<(f64, f64)> {
    check_support(f0w, ctx)?;
    let mtr = mtr_lower(f0w, f1w, delta, opts)?.bound;
    if delta < 0.0 {
        return Ok((mtr, 0.0));
    }
    let lower = if delta < 1e-12 {
        mtr
    } else {
        mtr.max(concave_lower_head(f0w, f1w, delta, ctx, opts.y_grid)).min(1.0)
    };
    let makarov = makarov_upper(f0w, f1w, delta).value;
    let chain = concave_upper_problem(f0w, f1w, delta, ctx)
        .solve(opts, &[])
        .map_or(1.0, |o| 1.0 - o.value);
    Ok((lower, chain.min(makarov).clamp(0.0, 1.0)))
}

/// (lower, upper) under convex response, conditional on W = w.
pub fn convex_bounds(
    f0w: &MarginalDistribution,
    f1w: &MarginalDistribution,
    delta: f64,
    ctx: &ShapeContext,
    opts: &MtrOptions,
) -> Result<(f64, f64)> {
    check_support(f0w, ctx)?;
    let mtr = mtr_lower(f0w, f1w, delta, opts)?.bound;
    let makarov = mtr_upper(f0w, f1w, delta);
    if delta < 0.0 {
        return Ok((mtr, makarov));
    }
    let (w_hat, q) = pivots(delta, ctx);
    let upper = makarov.min(f1w.cdf(q)).min(f0w.cdf(w_hat));
    if delta < 1e-12 {
        return Ok((mtr, upper));
    }
    let chain = convex_lower_problem(f0w, f1w, delta, ctx)
        .solve(opts, &[])
        .map_or(0.0, |o| o.value);
    Ok((chain.max(mtr).min(1.0), upper))
}

/// Which shape restriction to impose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Concave,
    Convex,
}

/// Bounds integrated over W: `conditionals(w)` returns the pair of
/// conditional marginals at each atom.
pub fn mixed_bounds<F>(
    shape: Shape,
    ctx: &ShapeContext,
    mix: &WMixture,
    delta: f64,
    opts: &MtrOptions,
    conditionals: F,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<(MarginalDistribution, MarginalDistribution)> + Sync,
{
    let per_w: Vec<(f64, f64)> = mix
        .atoms
        .par_iter()
        .map(|&(w, _)| {
            let (f0w, f1w) = conditionals(w)?;
            let c = ctx.at(w);
            match shape {
                Shape::Concave => concave_bounds(&f0w, &f1w, delta, &c, opts),
                Shape::Convex => convex_bounds(&f0w, &f1w, delta, &c, opts),
            }
        })
        .collect::<Result<_>>()?;
    let lower: Vec<f64> = per_w.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = per_w.iter().map(|b| b.1).collect();
    Ok((mix_over_w(&lower, mix)?, mix_over_w(&upper, mix)?))
}
