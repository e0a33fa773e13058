//! Extended Roy model: per-instrument bounds and their intersection.

use dte_bounds::distributions::MarginalDistribution;
use dte_bounds::mtr::MtrOptions;
use dte_bounds::roy::{roy_bounds, ArmMarginals, InstrumentCell, RoyContext};

fn main() -> dte_bounds::Result<()> {
    // Y0 ~ N(0, 1); the effect is 0.2 or 1 with equal odds. Costs between the
    // two effects select exactly the large-effect half into treatment.
    let normal = |mu: f64| MarginalDistribution::normal(mu, 1.0);
    let cell = |z: f64, m_c: f64| -> dte_bounds::Result<InstrumentCell> {
        Ok(InstrumentCell {
            z,
            m_c,
            p: 0.5,
            treated: ArmMarginals { f0: normal(0.0)?, f1: normal(1.0)? },
            untreated: ArmMarginals { f0: normal(0.0)?, f1: normal(0.2)? },
        })
    };
    let ctx = RoyContext::new(vec![cell(0.0, 0.3)?, cell(1.0, 0.9)?])?;
    let opts = MtrOptions::default();
    println!("{:>6} {:>8} {:>8}  per instrument", "delta", "lower", "upper");
    for i in 0..9 {
        let delta = -0.5 + 0.25 * i as f64;
        let b = roy_bounds(&ctx, delta, &opts)?;
        let per: Vec<String> = b.per_z.iter().map(|(z, l, u)| format!("z={z}: [{l:.3}, {u:.3}]")).collect();
        let truth = 0.5 * f64::from(u8::from(delta >= 0.2)) + 0.5 * f64::from(u8::from(delta >= 1.0));
        println!("{delta:>6.2} {:>8.4} {:>8.4}  {}  (truth {truth})", b.lower, b.upper, per.join("  "));
    }
    Ok(())
}
