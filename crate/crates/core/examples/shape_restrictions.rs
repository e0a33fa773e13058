//! Concave and convex response bounds, at one value of the covariate and
//! averaged over its distribution.

use dte_bounds::distributions::MarginalDistribution;
use dte_bounds::mtr::{mtr_lower, mtr_upper, MtrOptions};
use dte_bounds::shape::{concave_bounds, convex_bounds, mixed_bounds, Shape, ShapeContext, WMixture};

fn main() -> dte_bounds::Result<()> {
    let ctx = ShapeContext::new(0.0, 0.0, 1.0, 2.0)?;
    let opts = MtrOptions::default();
    let f0 = MarginalDistribution::uniform(0.0, 1.0)?;
    let f1_concave = MarginalDistribution::uniform(0.0, 1.5)?;
    let f1_convex = MarginalDistribution::uniform(0.0, 2.5)?;
    for delta in [0.25, 0.5, 1.0] {
        let (cl, cu) = concave_bounds(&f0, &f1_concave, delta, &ctx, &opts)?;
        let (vl, vu) = convex_bounds(&f0, &f1_convex, delta, &ctx, &opts)?;
        println!(
            "delta {delta}: concave [{cl:.4}, {cu:.4}] vs MTR [{:.4}, {:.4}]; convex [{vl:.4}, {vu:.4}] vs MTR [{:.4}, {:.4}]",
            mtr_lower(&f0, &f1_concave, delta, &opts)?.bound,
            mtr_upper(&f0, &f1_concave, delta),
            mtr_lower(&f0, &f1_convex, delta, &opts)?.bound,
            mtr_upper(&f0, &f1_convex, delta),
        );
    }

    // W ~ U(0, 1); conditional on W = w both outcomes start at w.
    let fw = MarginalDistribution::uniform(0.0, 1.0)?;
    let mix = WMixture::gauss_legendre(&fw, 8)?;
    let (lo, up) = mixed_bounds(Shape::Concave, &ctx, &mix, 0.5, &opts, |w| {
        Ok((MarginalDistribution::uniform(w, w + 1.0)?, MarginalDistribution::uniform(w, w + 1.5)?))
    })?;
    println!("averaged over W, delta 0.5: concave [{lo:.4}, {up:.4}]");
    Ok(())
}
