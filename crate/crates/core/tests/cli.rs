use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dte-bounds")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn parse_rows(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect()).collect();
    (header, rows)
}

const SECTION4: &str = r#"{"f0":{"kind":"normal","mu":0,"sigma2":1},
    "f1":{"kind":"chi2_normal_convolution","k1":1,"k2":1},
    "restriction":{"type":"mtr"},"delta_min":0,"delta_max":8,"steps":81,"mtr":{"multistarts":10}}"#;

#[test]
fn bounds_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s4.json", SECTION4);
    let out = dir.path().join("s4.csv");
    let o = run(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(header, ["delta", "makarov_lower", "makarov_upper", "restricted_lower", "restricted_upper"]);
    assert_eq!(rows.len(), 81);
    for r in &rows {
        assert!(r[1..].iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r[3] >= r[1]);
    }
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["mtr"]["rng_seed"], 3);
    assert!(sidecar["restricted"]["attaining"][40]["lower"]["sequence"]["base_points"].is_array());
}

#[test]
fn none_restriction_copies_makarov_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "u.json",
        r#"{"f0":{"kind":"uniform","a":0,"b":1},"f1":{"kind":"uniform","a":0.5,"b":1.5},
            "restriction":{"type":"none"},"delta_min":-1,"delta_max":2,"steps":13}"#,
    );
    let o = run(&["bounds", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = parse_rows(&String::from_utf8(o.stdout).unwrap());
    assert!(rows.iter().all(|r| r[1] == r[3] && r[2] == r[4]));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"f0\": ");
    assert_eq!(run(&["bounds", "--config", &bad]).status.code(), Some(2));
    assert_eq!(run(&["bounds", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));

    let swapped = write(
        dir.path(),
        "swapped.json",
        r#"{"f0":{"kind":"uniform","a":0.5,"b":1.5},"f1":{"kind":"uniform","a":0,"b":1},
            "restriction":{"type":"mtr"},"delta_min":0.25,"delta_max":0.75,"steps":2}"#,
    );
    let o = run(&["oracle-check", "--config", &swapped, "--grid", "50"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dominance"));
}

#[test]
fn oracle_check_passes_for_uniform_makarov() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "u.json",
        r#"{"f0":{"kind":"uniform","a":0,"b":1},"f1":{"kind":"uniform","a":0.5,"b":1.5},
            "delta_min":0.25,"delta_max":1.5,"steps":6}"#,
    );
    let out = dir.path().join("report.csv");
    let o = run(&["oracle-check", "--config", &cfg, "--grid", "50,200", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(header.last().unwrap(), "gap");
    assert_eq!(rows.len(), 12);
}

#[test]
fn fit_mixture_reports_one_component_for_a_normal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fit.json", r#"{"target":{"kind":"normal","mu":1,"sigma2":4}}"#);
    let o = run(&["fit-mixture", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["components"], 1);
    assert_eq!(v[0]["mixture"]["kind"], "normal_mixture");
}
