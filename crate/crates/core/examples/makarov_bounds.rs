//! Makarov bounds for two normal marginals, and the copulas that attain them.

use dte_bounds::distributions::MarginalDistribution;
use dte_bounds::makarov::{dte_under_copula, makarov_curve, makarov_lower, makarov_upper, AttainingLower, AttainingUpper};

fn main() -> dte_bounds::Result<()> {
    let f0 = MarginalDistribution::normal(0.0, 1.0)?;
    let f1 = MarginalDistribution::normal(0.5, 2.0)?;
    let deltas: Vec<f64> = (0..9).map(|i| -1.0 + 0.5 * i as f64).collect();
    let curve = makarov_curve(&f0, &f1, &deltas)?;
    println!("{:>6} {:>8} {:>8}", "delta", "lower", "upper");
    for i in 0..deltas.len() {
        println!("{:>6.2} {:>8.4} {:>8.4}", curve.deltas[i], curve.lower[i], curve.upper[i]);
    }

    let delta = 0.5;
    let up = makarov_upper(&f0, &f1, delta);
    let lo = makarov_lower(&f0, &f1, delta);
    let via_up = dte_under_copula(&f0, &f1, &AttainingUpper(up.value), delta, 400)?;
    // The lower bound is attained only as a left limit.
    let via_lo = dte_under_copula(&f0, &f1, &AttainingLower(lo.value), delta - 1e-6, 400)?;
    println!("delta = {delta}: upper {:.4} (y* = {:.3}), under C_s^U {via_up:.4}", up.value, up.argument);
    println!("delta = {delta}: lower {:.4} (y* = {:.3}), under C_t^L {via_lo:.4}", lo.value, lo.argument);
    Ok(())
}
