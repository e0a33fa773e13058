//! Chi-square/normal design: Makarov and MTR bounds against the true DTE
//! for every (k1, k2) pair. Pass a directory to also write the CSVs.

use dte_bounds::cli::{cmd_replicate_section4, replicate_section4, SANDWICH_SLACK};
use dte_bounds::mtr::MtrOptions;

fn main() {
    let opts = MtrOptions::default();
    let tables = match std::env::args().nth(1) {
        Some(dir) => cmd_replicate_section4(dir.as_ref(), &opts).unwrap_or_else(|e| {
            eprintln!("{e}");
            std::process::exit(e.code)
        }),
        None => replicate_section4(&opts).expect("replication failed"),
    };
    println!("{:>3} {:>3} {:>10} {:>10}", "k1", "k2", "gain", "sandwich");
    for t in &tables {
        let ok = t.sandwich_violation(SANDWICH_SLACK).is_none();
        println!("{:>3} {:>3} {:>10.4} {:>10}", t.k1, t.k2, t.integrated_gain(), if ok { "holds" } else { "VIOLATED" });
    }
}
