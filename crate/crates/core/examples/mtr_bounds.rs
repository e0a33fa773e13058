//! Lower bound under monotone treatment response with its triangle sequence.

use dte_bounds::distributions::{convolve_chi2_normal, MarginalDistribution};
use dte_bounds::makarov::makarov_lower;
use dte_bounds::mtr::{dominance_gap, equal_spacing_value, mtr_lower, MtrOptions};

fn main() -> dte_bounds::Result<()> {
    // Y0 ~ N(0, 10), Y1 = Y0 + χ²(1).
    let f0 = MarginalDistribution::normal(0.0, 10.0)?;
    let f1 = convolve_chi2_normal(1, 10.0)?;
    println!("dominance gap {:.2e} (≤ 0 means MTR is compatible)", dominance_gap(&f0, &f1));

    let opts = MtrOptions::default();
    for delta in [0.25, 1.0, 2.5] {
        let b = mtr_lower(&f0, &f1, delta, &opts)?;
        let (v, y) = equal_spacing_value(&f0, &f1, delta, opts.y_grid)?;
        println!(
            "delta {delta}: makarov {:.4}, equal spacing {v:.4} at y = {y:.3}, refined {:.4} (K = {}, {} base points)",
            makarov_lower(&f0, &f1, delta).value,
            b.bound,
            b.k,
            b.sequence.base_points.len()
        );
        let shown: Vec<String> = b.sequence.base_points.iter().take(6).map(|a| format!("{a:.3}")).collect();
        println!("  a_k: {} ...", shown.join(", "));
    }
    Ok(())
}
