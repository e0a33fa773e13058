//! A bounds run described by one JSON document, as the `bounds` subcommand
//! consumes it. The CSV goes to standard output.

use dte_bounds::cli::{compute_bounds, RunConfig};

const CONFIG: &str = r#"{
  "f0": {"kind": "normal", "mu": 0, "sigma2": 1},
  "f1": {"kind": "chi2_normal_convolution", "k1": 1, "k2": 1},
  "restriction": {"type": "mtr"},
  "delta_min": 0, "delta_max": 4, "steps": 9,
  "mtr": {"rng_seed": 7}
}"#;

fn main() {
    let text = std::env::args()
        .nth(1)
        .map(|p| std::fs::read_to_string(p).expect("cannot read config"))
        .unwrap_or_else(|| CONFIG.to_string());
    let cfg = RunConfig::from_json(&text).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(e.code)
    });
    let run = compute_bounds(&cfg).expect("bounds failed");
    print!("{}", String::from_utf8(run.csv().expect("csv")).unwrap());
}
