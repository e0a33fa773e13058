//! Config-level choice of support restriction and the dispatch from a
//! restriction to a bounds curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::MarginalDistribution;
use crate::error::Result;
use crate::makarov::{check_grid, makarov_curve, BoundsCurve, Method};
use crate::mtr::{mtr_curve, MtrOptions};
use crate::roy::{roy_bounds, RoyContext};
use crate::shape::{concave_bounds, convex_bounds, ShapeContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RestrictionSpec {
    None,
    Mtr,
    /// f0/f1 are the conditional marginals at `context.w`.
    Concave { context: ShapeContext },
    Convex { context: ShapeContext },
    /// The cells carry their own marginals; f0/f1 are not used.
    Roy { context: RoyContext },
}

impl RestrictionSpec {
    pub fn method(&self) -> Method {
        match self {
            RestrictionSpec::None => Method::Makarov,
            RestrictionSpec::Mtr => Method::Mtr,
            RestrictionSpec::Concave { .. } => Method::Concave,
            RestrictionSpec::Convex { .. } => Method::Convex,
            RestrictionSpec::Roy { .. } => Method::Roy,
        }
    }
}

/// Bounds on Pr(Y1 − Y0 ≤ δ) over `deltas` under `restriction`.
pub fn restricted_curve(
    f0: &MarginalDistribution,
    f1: &MarginalDistribution,
    restriction: &RestrictionSpec,
    deltas: &[f64],
    opts: &MtrOptions,
) -> Result<BoundsCurve> {
    check_grid(deltas)?;
    let pointwise = |f: &(dyn Fn(f64) -> Result<(f64, f64)> + Sync)| -> Result<BoundsCurve> {
        let rows: Vec<(f64, f64)> = deltas.par_iter().map(|&d| f(d)).collect::<Result<_>>()?;
        BoundsCurve::new(
            deltas.to_vec(),
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            restriction.method(),
            None,
        )
    };
    match restriction {
        RestrictionSpec::None => makarov_curve(f0, f1, deltas),
        RestrictionSpec::Mtr => mtr_curve(f0, f1, deltas, opts),
        RestrictionSpec::Concave { context } => pointwise(&|d| concave_bounds(f0, f1, d, context, opts)),
        RestrictionSpec::Convex { context } => pointwise(&|d| convex_bounds(f0, f1, d, context, opts)),
        RestrictionSpec::Roy { context } => pointwise(&|d| roy_bounds(context, d, opts).map(|b| (b.lower, b.upper))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let r: RestrictionSpec = serde_json::from_str(r#"{"type":"mtr"}"#).unwrap();
        assert_eq!(r, RestrictionSpec::Mtr);
        let r: RestrictionSpec =
            serde_json::from_str(r#"{"type":"concave","context":{"w":0,"t_w":0,"t0":1,"t1":2}}"#).unwrap();
        assert_eq!(r.method(), Method::Concave);
        assert!(serde_json::from_str::<RestrictionSpec>(r#"{"type":"convex","context":{"w":0,"t_w":2,"t0":1,"t1":2}}"#).is_err());
        assert!(serde_json::from_str::<RestrictionSpec>(r#"{"type":"monotone"}"#).is_err());
    }

    #[test]
    fn none_dispatches_to_makarov() {
        let f0 = MarginalDistribution::uniform(0.0, 1.0).unwrap();
        let f1 = MarginalDistribution::uniform(0.5, 1.5).unwrap();
        let deltas = [0.0, 0.25, 0.5, 1.0];
        let c = restricted_curve(&f0, &f1, &RestrictionSpec::None, &deltas, &MtrOptions::default()).unwrap();
        assert_eq!(c, makarov_curve(&f0, &f1, &deltas).unwrap());
    }
}
