use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mhawkes::simulate::io::{read_binary, read_csv};
use mhawkes::Grid64;

fn run(args: &[&str], config: &str, dir: &Path) -> (Output, PathBuf) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{}", args.join("-").replace("--", "")));
    let output = Command::new(env!("CARGO_BIN_EXE_mhawkes"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const EXPONENTIAL: &str = r#"
seed = 4
[model]
lambda_i = 1.0
kernel = { exponential = { a = 0.5, b = 1.0 } }
[grid]
h = 1e-3
horizon = 40.0
[simulate]
horizon = 50.0
replicas = 2
"#;

const S_STAR: &str = r#"
[microbes]
p_H = [1.0]
p_I = [1.0]
life_h = { exponential = { mean = 1.0 } }
life_i = { exponential = { mean = 1.0 } }
gamma_h = { boxcar = { c = 0.5 } }
gamma_i = { boxcar = { c = 0.5 } }
toxin_h = "unit_count"
toxin_i = "unit_count"
[grid]
h = 1e-2
horizon = 60.0
"#;

#[test]
fn resolvent_matches_exponential_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(&["resolvent"], EXPONENTIAL, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rh = Grid64::read_csv(fs::read(out.join("rh.csv")).unwrap().as_slice()).unwrap();
    let err = rh
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - 0.5 * (-0.5 * rh.time(i)).exp()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-5, "{err}");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["intervals"], 40000);
    assert!(out.join("metadata.json").exists());
}

#[test]
fn zero_kernel_gives_zero_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nlambda_i = 1.0\nkernel = \"zero\"\n[grid]\nh = 0.01\nhorizon = 5.0\n";
    let (o, out) = run(&["resolvent"], cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    for f in ["rh.csv", "ri.csv"] {
        let g = Grid64::read_csv(fs::read(out.join(f)).unwrap().as_slice()).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn unstable_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nlambda_i = 1.0\nkernel = { exponential = { a = 1.2, b = 1.0 } }\n";
    let (o, _) = run(&["resolvent"], cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("‖R_H‖ = ‖φ_H‖/(1 − ‖φ_H‖)"), "{err}");
}

#[test]
fn unknown_keys_and_missing_blocks_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(&["constants"], "[model]\nlambda_i = 1.0\ncolour = 3\n", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let (o, _) = run(&["verify-clt"], "[model]\nlambda_i = 1.0\n", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let (o, _) = run(&["microbes"], "[model]\nlambda_i = 1.0\n", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_mhawkes"))
        .args(["constants", "--config", "/nonexistent/config.toml", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn constants_for_the_demo() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(&["constants"], EXPONENTIAL, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let c = json(&out.join("constants.json"));
    assert!((c["sigma_z2"].as_f64().unwrap() - 2.0).abs() < 1e-4);
    assert!((c["combined_count_variance"].as_f64().unwrap() - 8.0).abs() < 1e-4);
    // flat: every value is a number or null
    assert!(c.as_object().unwrap().values().all(|v| v.is_number() || v.is_null()));
}

#[test]
fn microbe_constants() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(&["microbes"], S_STAR, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&out.join("microbes.json"));
    assert!((c["budding"]["drift_b"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let quiet = S_STAR.replace("{ boxcar = { c = 0.5 } }", "{ boxcar = { c = 0.0 } }");
    let (o, out) = run(&["microbes"], &quiet, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let c = json(&out.join("microbes.json"));
    let b = &c["budding"];
    for k in ["branching_ratio", "drift_b", "hawkes_noise_intensity", "c_h1", "variance_b", "covariance_bt"] {
        assert_eq!(b[k].as_f64().unwrap(), 0.0, "{k}");
    }
    // only the immigrants' own toxin remains
    assert_eq!(b["variance_t"].as_f64().unwrap(), b["c_i2"].as_f64().unwrap().powi(2));
}

#[test]
fn simulate_writes_reproducible_paths() {
    let dir = tempfile::tempdir().unwrap();
    let (o, a) = run(&["simulate"], EXPONENTIAL, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (_, b) = run(&["simulate", "--threads", "1"], EXPONENTIAL, dir.path());
    for f in ["path_0.csv", "path_1.csv", "path_0.bin", "path_1.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let from_csv = read_csv(fs::read(a.join("path_1.csv")).unwrap().as_slice()).unwrap();
    let from_bin = read_binary(fs::read(a.join("path_1.bin")).unwrap().as_slice()).unwrap();
    assert_eq!(from_csv, from_bin);
    assert_eq!(from_csv.header.seed, 4);
    assert_eq!(from_csv.header.replica, 1);
}

const POISSON_CLT: &str = r#"
seed = 9
[model]
lambda_i = 1.0
[grid]
h = 1e-2
horizon = 10.0
[experiment]
functional = { kind = "immigration_measure" }
scales = [50.0]
replicas = 400
tolerances = { variance_rel = 0.25, covariance_rel = 0.3 }
"#;

#[test]
fn verify_passes_and_falsifies() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(&["verify-clt"], POISSON_CLT, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("report.json").exists() && out.join("report.csv").exists());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("scale,t,mean,variance,se_mean,se_variance,predicted_variance\n"));

    let wrong = POISSON_CLT.replace("replicas = 400", "replicas = 400\nreference_variance = 3.0");
    let (o, _) = run(&["verify-clt"], &wrong, dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn two_replica_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = POISSON_CLT
        .replace("replicas = 400", "replicas = 2")
        .replace("variance_rel = 0.25, covariance_rel = 0.3", "variance_rel = 1e6, covariance_rel = 1e6");
    let (o, out) = run(&["verify-clt"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = json(&out.join("report.json"));
    assert_eq!(r["scales"][0]["replicas"], 2);
}

#[test]
fn reports_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
seed = 12
[model]
lambda_i = 1.0
kernel = { exponential = { a = 0.5, b = 1.0 } }
[grid]
h = 1e-2
horizon = 40.0
[experiment]
functional = { kind = "hawkes_measure" }
scales = [20.0, 80.0]
replicas = 40
sup_points = 100
"#;
    let (o1, a) = run(&["verify-lln", "--threads", "1"], cfg, dir.path());
    let (o2, b) = run(&["verify-lln", "--threads", "3"], cfg, dir.path());
    assert_eq!(o1.status.code(), o2.status.code());
    for f in ["report.json", "report.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (_, c) = run(&["verify-lln", "--seed", "13"], cfg, dir.path());
    assert_ne!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
}
