//! Discrete optimal-transport check of the bound formulas, and the
//! certificate returned when a support restriction cannot be met.

use dte_bounds::distributions::MarginalDistribution;
use dte_bounds::makarov::makarov_upper;
use dte_bounds::mtr::{mtr_lower, MtrOptions};
use dte_bounds::oracle::{build_mask, check_feasibility, discretize_quantiles, solve_transport_lp, Direction, SupportRegion};

fn main() -> dte_bounds::Result<()> {
    let f0 = MarginalDistribution::uniform(0.0, 1.0)?;
    let f1 = MarginalDistribution::uniform(0.5, 1.5)?;
    let delta = 0.75;
    let formula = mtr_lower(&f0, &f1, delta, &MtrOptions::default())?.bound;
    let upper = makarov_upper(&f0, &f1, delta).value;
    for n in [50, 100, 200] {
        let mu0 = discretize_quantiles(&f0, n)?;
        let mu1 = discretize_quantiles(&f1, n)?;
        let mask = build_mask(&mu0.points, &mu1.points, SupportRegion::Mtr);
        let (lo, coupling) = solve_transport_lp(&mu0, &mu1, &mask, delta, Direction::MinBelow)?;
        let (up, _) = solve_transport_lp(&mu0, &mu1, &mask, delta, Direction::MaxBelow)?;
        println!(
            "n {n:>3}: LP [{lo:.4}, {up:.4}] vs formula [{formula:.4}, {upper:.4}], coupling valid: {}",
            coupling.verify(&mu0, &mu1, 1e-8)
        );
    }

    // Swapped marginals: Y1 cannot sit above Y0 everywhere.
    let mu0 = discretize_quantiles(&f1, 50)?;
    let mu1 = discretize_quantiles(&f0, 50)?;
    let mask = build_mask(&mu0.points, &mu1.points, SupportRegion::Mtr);
    let feas = check_feasibility(&mu0, &mu1, &mask)?;
    match feas.certificate {
        Some(cert) => println!("infeasible: {cert}"),
        None => println!("feasible"),
    }
    Ok(())
}
