//! Normal-mixture approximations of the chi-square/normal convolution.

use dte_bounds::cli::{linspace, SECTION4_K1, SECTION4_K2};
use dte_bounds::distributions::{convolve_chi2_normal, fit_normal_mixture};

fn main() -> dte_bounds::Result<()> {
    for k1 in SECTION4_K1 {
        for k2 in SECTION4_K2 {
            let target = convolve_chi2_normal(k1, k2)?;
            let (lo, hi) = target.effective_range(1e-6);
            let fit = fit_normal_mixture(&target, &linspace(lo, hi, 401), 3, 0.005)?;
            println!(
                "k1 {k1:>2}, k2 {k2:>2}: {} component(s), sup distance {:.2e}",
                fit.components, fit.sup_distance
            );
        }
    }
    Ok(())
}
