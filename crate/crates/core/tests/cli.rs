//! Command-line contract: exit codes, report files and flag overrides.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_beadsplit")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("beadsplit-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const GOOD: &str = r#"
[experiment]
master_seed = 5
replicates = 500
workers = 2
out_dir = "out"

[model]
density = "brownian"
switching = "size-biased"
alpha = 0.5
epsilon = 1e-3
tail_tol = 1e-6

[grow]
steps = 6
checkpoints = [2, 6]
"#;

#[test]
fn missing_config_is_a_config_error() {
    let out = Command::new(bin()).arg("moments").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_ranges_are_config_errors() {
    let dir = workdir("badcfg");
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, GOOD.replace("epsilon = 1e-3", "epsilon = 1.5")).unwrap();
    let out = Command::new(bin())
        .args(["moments", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(&cfg, GOOD.replace("density = \"brownian\"", "density = \"mystery\"")).unwrap();
    let out = Command::new(bin())
        .args(["moments", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn infinite_switch_rate_is_a_numerical_error() {
    let dir = workdir("numerr");
    let cfg = dir.join("exp.toml");
    // p = 1 has infinite rate against the Brownian density
    std::fs::write(
        &cfg,
        GOOD.replace("switching = \"size-biased\"", "switching = \"const(1.0)\""),
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "moments",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn moments_writes_reports_and_honors_overrides() {
    let dir = workdir("moments");
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, GOOD).unwrap();
    let out_dir = dir.join("reports");
    let out = Command::new(bin())
        .args([
            "moments",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--replicates",
            "800",
            "--seed",
            "99",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["moments.csv", "stats_tests.csv", "exponents.csv", "analytic_checks.csv"] {
        let text = std::fs::read_to_string(out_dir.join(file)).unwrap();
        assert!(text.lines().count() >= 2, "{file} has no rows");
    }
    let moments = std::fs::read_to_string(out_dir.join("moments.csv")).unwrap();
    assert!(moments.starts_with("identity,analytic,mc_mean,se,z"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn strict_z_threshold_fails_statistically() {
    let dir = workdir("zfail");
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, GOOD).unwrap();
    let out = Command::new(bin())
        .args([
            "moments",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
            "--z-threshold",
            "0.0001",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn grow_emits_dumps_and_csvs() {
    let dir = workdir("grow");
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, GOOD).unwrap();
    let out_dir = dir.join("reports");
    let out = Command::new(bin())
        .args([
            "grow",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--replicates",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["convergence.csv", "halving_bounds.csv", "junction_hits.csv",
                 "compositions.csv", "tree_rep0_n2.json", "tree_rep0_n6.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("tree_rep0_n6.json")).unwrap())
            .unwrap();
    assert_eq!(dump["nodes"].as_array().unwrap().len(), 6);
    assert_eq!(dump["leaves"].as_array().unwrap().len(), 6);
    assert_eq!(dump["generation_log"].as_array().unwrap().len(), 5);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn check_density_reports_tabulated_file() {
    let dir = workdir("checkd");
    let table = dir.join("density.json");
    let knots: Vec<(f64, f64)> = (1..100)
        .map(|i| {
            let u = i as f64 / 100.0;
            (u, u.powf(-1.5) * (1.0 - u).powf(-1.25))
        })
        .collect();
    std::fs::write(
        &table,
        serde_json::json!({
            "label": "tabulated-example",
            "singularity_exponents": [1.5, 1.25],
            "knots": knots,
        })
        .to_string(),
    )
    .unwrap();
    let cfg = dir.join("exp.toml");
    std::fs::write(
        &cfg,
        GOOD.replace(
            "density = \"brownian\"",
            &format!("density = \"file:{}\"", table.display()),
        ),
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "check-density",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("tabulated-example"));
    let _ = std::fs::remove_dir_all(&dir);
}
