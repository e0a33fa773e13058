//! Extended Roy model: D = 1{Y1 − Y0 ≥ m_C(z)} with a deterministic cost.
//! Treated units satisfy Y1 − Y0 ≥ m_C(z) and untreated units the reverse,
//! so each (D, z) cell is a support-restricted problem. Cells are combined
//! across instrument values by intersection bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Affine, ChainProblem, Sense};
use crate::distributions::MarginalDistribution;
use crate::error::{Error, Result};
use crate::makarov::{makarov_lower, makarov_upper};
use crate::mtr::{MtrOptions, PRUNE_SLACK};

const DEGENERATE_STEP: f64 = 1e-12;
const Z_TOL: f64 = 1e-12;

/// Potential-outcome marginals F0(·|d, z) and F1(·|d, z) for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMarginals {
    pub f0: MarginalDistribution,
    pub f1: MarginalDistribution,
}

/// Everything identified at one instrument value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentCell {
    pub z: f64,
    pub m_c: f64,
    /// Pr(D = 1 | Z = z).
    pub p: f64,
    pub treated: ArmMarginals,
    pub untreated: ArmMarginals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<InstrumentCell>", into = "Vec<InstrumentCell>")]
pub struct RoyContext {
    cells: Vec<InstrumentCell>,
}

impl TryFrom<Vec<InstrumentCell>> for RoyContext {
    type Error = Error;
    fn try_from(cells: Vec<InstrumentCell>) -> Result<Self> {
        RoyContext::new(cells)
    }
}

impl From<RoyContext> for Vec<InstrumentCell> {
    fn from(c: RoyContext) -> Self {
        c.cells
    }
}

impl RoyContext {
    pub fn new(cells: Vec<InstrumentCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyInput("Roy context has no instrument values"));
        }
        for c in &cells {
            if !(0.0..=1.0).contains(&c.p) {
                return Err(Error::domain(format!("propensity {} at z = {} is not a probability", c.p, c.z)));
            }
            if !c.m_c.is_finite() || !c.z.is_finite() {
                return Err(Error::domain(format!("non-finite cost or instrument at z = {}", c.z)));
            }
        }
        for (i, a) in cells.iter().enumerate() {
            if cells[..i].iter().any(|b| (a.z - b.z).abs() <= Z_TOL) {
                return Err(Error::domain(format!("instrument value {} appears twice", a.z)));
            }
        }
        Ok(RoyContext { cells })
    }

    pub fn cells(&self) -> &[InstrumentCell] {
        &self.cells
    }

    pub fn cell(&self, z: f64) -> Result<&InstrumentCell> {
        self.cells
            .iter()
            .find(|c| (c.z - z).abs() <= Z_TOL)
            .ok_or(Error::UnknownInstrument(z))
    }
}

/// Treated arm: increasing a_k with a_k ≤ a_{k+1} ≤ a_k + δ − m and terms
/// F1(a_{k+1} + m) − F0(a_k).
fn treated_problem<'a>(arm: &'a ArmMarginals, delta: f64, m: f64) -> ChainProblem<'a> {
    ChainProblem {
        f0: &arm.f0,
        f1: &arm.f1,
        sense: Sense::Lower,
        lo: Affine::identity(),
        hi: Affine::translate(delta - m),
        g: Affine::translate(m),
        prune: Some(delta - m + PRUNE_SLACK),
    }
}

/// Untreated arm: decreasing b_k with b_k + δ − m ≤ b_{k+1} ≤ b_k and terms
/// F0(b_k) − F1(b_{k+1} + m).
fn untreated_problem<'a>(arm: &'a ArmMarginals, delta: f64, m: f64) -> ChainProblem<'a> {
    ChainProblem {
        f0: &arm.f0,
        f1: &arm.f1,
        sense: Sense::Upper,
        lo: Affine::translate(delta - m),
        hi: Affine::identity(),
        g: Affine::translate(m),
        prune: None,
    }
}

/// (lower, upper) on Pr(Y1 − Y0 ≤ δ | D = d, Z = z).
pub fn roy_conditional_bounds(
    ctx: &RoyContext,
    treated: bool,
    z: f64,
    delta: f64,
    opts: &MtrOptions,
) -> Result<(f64, f64)> {
    opts.validate()?;
    let cell = ctx.cell(z)?;
    let m = cell.m_c;
    if treated {
        if delta < m {
            return Ok((0.0, 0.0));
        }
        let arm = &cell.treated;
        let mak_lo = makarov_lower(&arm.f0, &arm.f1, delta);
        let upper = makarov_upper(&arm.f0, &arm.f1, delta).value;
        let lower = if delta - m < DEGENERATE_STEP {
            mak_lo.value
        } else {
            treated_problem(arm, delta, m)
                .solve(opts, &[mak_lo.argument - delta])
                .map_or(mak_lo.value, |o| o.value.max(mak_lo.value))
        };
        Ok((lower.min(1.0), upper))
    } else {
        if delta >= m {
            return Ok((1.0, 1.0));
        }
        let arm = &cell.untreated;
        let lower = makarov_lower(&arm.f0, &arm.f1, delta).value;
        let mak_up = makarov_upper(&arm.f0, &arm.f1, delta);
        let upper = if m - delta < DEGENERATE_STEP {
            mak_up.value
        } else {
            untreated_problem(arm, delta, m)
                .solve(opts, &[mak_up.argument - delta])
                .map_or(mak_up.value, |o| (1.0 - o.value).min(mak_up.value))
        };
        Ok((lower, upper.max(0.0)))
    }
}

/// Combined bounds with their per-instrument ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoyBounds {
    pub lower: f64,
    pub upper: f64,
    /// (z, weighted lower, weighted upper) per instrument value.
    pub per_z: Vec<(f64, f64, f64)>,
    pub crossed: bool,
}

/// (max lower, min upper, crossed) over (z, lower, upper) rows.
fn intersect(per_z: &[(f64, f64, f64)]) -> (f64, f64, bool) {
    let lower = per_z.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let upper = per_z.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    (lower, upper, lower > upper + 1e-9)
}

/// sup_z of p·L(δ|1,z) + (1 − p)·L(δ|0,z) and inf_z of the same for the
/// upper bounds.
pub fn roy_bounds(ctx: &RoyContext, delta: f64, opts: &MtrOptions) -> Result<RoyBounds> {
    let per_z: Vec<(f64, f64, f64)> = ctx
        .cells
        .par_iter()
        .map(|c| {
            let (l1, u1) = roy_conditional_bounds(ctx, true, c.z, delta, opts)?;
            let (l0, u0) = roy_conditional_bounds(ctx, false, c.z, delta, opts)?;
            Ok((c.z, c.p * l1 + (1.0 - c.p) * l0, c.p * u1 + (1.0 - c.p) * u0))
        })
        .collect::<Result<_>>()?;
    let (lower, upper, crossed) = intersect(&per_z);
    if crossed {
        log::warn!("intersection bounds cross at δ = {delta}: lower {lower} > upper {upper}; inputs look misspecified");
    }
    Ok(RoyBounds {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
        per_z,
        crossed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(mu: f64, s2: f64) -> MarginalDistribution {
        MarginalDistribution::normal(mu, s2).unwrap()
    }

    fn cell(z: f64, m_c: f64, p: f64) -> InstrumentCell {
        InstrumentCell {
            z,
            m_c,
            p,
            treated: ArmMarginals {
                f0: normal(0.0, 1.0),
                f1: normal(0.0, 1.0),
            },
            untreated: ArmMarginals {
                f0: normal(0.5, 1.0),
                f1: normal(0.0, 1.0),
            },
        }
    }

    #[test]
    fn piecewise_examples() {
        let ctx = RoyContext::new(vec![cell(0.0, 0.5, 0.4)]).unwrap();
        let opts = MtrOptions::default();
        assert_eq!(roy_conditional_bounds(&ctx, true, 0.0, 0.2, &opts).unwrap(), (0.0, 0.0));
        assert_eq!(roy_conditional_bounds(&ctx, false, 0.0, 0.7, &opts).unwrap(), (1.0, 1.0));
        assert!(matches!(
            roy_conditional_bounds(&ctx, true, 3.0, 0.2, &opts),
            Err(Error::UnknownInstrument(_))
        ));
    }

    #[test]
    fn zero_cost_treated_arm_telescopes() {
        let ctx = RoyContext::new(vec![cell(1.0, 0.0, 1.0)]).unwrap();
        let opts = MtrOptions::default();
        let (lo, up) = roy_conditional_bounds(&ctx, true, 1.0, 0.4, &opts).unwrap();
        assert!((lo - 1.0).abs() < 1e-6 && (up - 1.0).abs() < 1e-9);
        let b = roy_bounds(&ctx, 0.4, &opts).unwrap();
        assert!((b.lower - lo).abs() < 1e-12 && (b.upper - up).abs() < 1e-12);
    }

    /// Y0 ~ N(0,1) and Y1 − Y0 ∈ {0.2, 1} with equal odds, independent of Y0.
    /// At z = 0 the cost 0.5 splits the two effects; at z = 1 the cost 1.2
    /// keeps everyone untreated.
    fn two_effect_context() -> RoyContext {
        let mix = MarginalDistribution::normal_mixture(vec![0.5, 0.5], vec![0.2, 1.0], vec![1.0, 1.0]).unwrap();
        RoyContext::new(vec![
            InstrumentCell {
                z: 0.0,
                m_c: 0.5,
                p: 0.5,
                treated: ArmMarginals {
                    f0: normal(0.0, 1.0),
                    f1: normal(1.0, 1.0),
                },
                untreated: ArmMarginals {
                    f0: normal(0.0, 1.0),
                    f1: normal(0.2, 1.0),
                },
            },
            InstrumentCell {
                z: 1.0,
                m_c: 1.2,
                p: 0.0,
                treated: ArmMarginals {
                    f0: normal(0.0, 1.0),
                    f1: normal(1.2, 1.0),
                },
                untreated: ArmMarginals {
                    f0: normal(0.0, 1.0),
                    f1: mix,
                },
            },
        ])
        .unwrap()
    }

    #[test]
    fn bounds_bracket_truth_and_are_monotone() {
        let ctx = two_effect_context();
        let opts = MtrOptions {
            multistarts: 10,
            ..MtrOptions::default()
        };
        let mut prev = (0.0, 0.0);
        for i in 0..16 {
            let d = -0.95 + 0.2 * i as f64;
            let truth = if d < 0.2 { 0.0 } else if d < 1.0 { 0.5 } else { 1.0 };
            let b = roy_bounds(&ctx, d, &opts).unwrap();
            assert!(!b.crossed, "{d}: {b:?}");
            assert!(b.lower <= truth + 1e-9 && truth <= b.upper + 1e-9, "{d}: {b:?}");
            assert!(b.lower >= prev.0 - 1e-9 && b.upper >= prev.1 - 1e-9, "{d}");
            prev = (b.lower, b.upper);
        }
    }

    #[test]
    fn untreated_upper_is_a_chain_bound() {
        // F0(·|0) = N(0.5, 1) sits right of F1(·|0) = N(0, 1), so the
        // b-chain beats the single Makarov term.
        let ctx = RoyContext::new(vec![cell(0.0, 1.0, 0.0)]).unwrap();
        let opts = MtrOptions::default();
        let (_, up) = roy_conditional_bounds(&ctx, false, 0.0, 0.2, &opts).unwrap();
        let arm = &ctx.cell(0.0).unwrap().untreated;
        assert!(up <= makarov_upper(&arm.f0, &arm.f1, 0.2).value + 1e-12);
        assert!((0.0..=1.0).contains(&up));
    }

    #[test]
    fn context_validation_and_json() {
        assert!(RoyContext::new(vec![]).is_err());
        assert!(RoyContext::new(vec![cell(0.0, 0.1, 1.5)]).is_err());
        assert!(RoyContext::new(vec![cell(0.0, 0.1, 0.5), cell(0.0, 0.2, 0.5)]).is_err());
        let ctx = RoyContext::new(vec![cell(0.0, 0.1, 0.5)]).unwrap();
        let json = serde_json::to_string(&ctx).unwrap();
        assert_eq!(serde_json::from_str::<RoyContext>(&json).unwrap(), ctx);
    }

    #[test]
    fn intersection_takes_max_and_min() {
        assert_eq!(intersect(&[(0.0, 0.2, 0.9), (1.0, 0.5, 0.8)]), (0.5, 0.8, false));
        assert!(intersect(&[(0.0, 0.7, 0.9), (1.0, 0.1, 0.6)]).2);
    }
}
