use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use homsim::{parse_config, run, Scenario};

const DEFAULTS: &str = include_str!("../configs/paper_defaults.toml");

fn homsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HOMSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn defaults_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper_defaults.toml")
}

fn metadata(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap()
}

#[test]
fn shipped_defaults_reproduce_the_dip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dip");
    let cfg = defaults_path();
    let res = homsim(&["dip", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let meta = metadata(&out);
    let v = meta["results"]["visibility"].as_f64().unwrap();
    let w = meta["results"]["fwhm_ps"].as_f64().unwrap();
    assert!((v - 0.820).abs() <= 0.01, "visibility {v}");
    assert!((w - 4.91).abs() <= 0.3, "fwhm {w}");
    assert_eq!(meta["scenario"], "dip");
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(meta["outputs"][0]["columns"], serde_json::json!(["tau_ps", "probability"]));

    let csv = fs::read_to_string(out.join("dip.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau_ps,probability"));
    assert_eq!(lines.count(), 101);
}

#[test]
fn shipped_defaults_reproduce_the_multipair_visibility() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(DEFAULTS, Some(Scenario::Multipair)).unwrap();
    cfg.output_dir = tmp.path().to_path_buf();
    let summary = run(&cfg, DEFAULTS).unwrap();
    let v = summary.results["visibility"].as_f64().unwrap();
    assert!((v - 0.681).abs() <= 0.02, "visibility {v}");
    let csv = fs::read_to_string(tmp.path().join("multipair.csv")).unwrap();
    assert!(csv.starts_with("nbar,eta,xi,p,r,P_mean,P_min,V\n"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn shipped_defaults_reproduce_the_remaining_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    for (scenario, key, lo, hi) in [
        (Scenario::Schmidt, "purity", 0.815, 0.825),
        (Scenario::Jsa, "purity", 0.815, 0.825),
    ] {
        let mut cfg = parse_config(DEFAULTS, Some(scenario)).unwrap();
        cfg.output_dir = tmp.path().join(scenario.as_str());
        let s = run(&cfg, DEFAULTS).unwrap();
        let v = s.results[key].as_f64().unwrap();
        assert!((lo..=hi).contains(&v), "{scenario}: {key} = {v}");
    }
    let mut cfg = parse_config(DEFAULTS, Some(Scenario::FilterScan)).unwrap();
    cfg.output_dir = tmp.path().join("filter");
    let s = run(&cfg, DEFAULTS).unwrap();
    let vs: Vec<f64> = s.results["visibilities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((vs[0] - 0.820).abs() <= 0.01);
    assert!(vs.windows(2).all(|w| w[1] >= w[0]));
    let csv = fs::read_to_string(tmp.path().join("filter/filter_scan.csv")).unwrap();
    assert!(csv.starts_with("window_nm,visibility\ninf,"), "{csv}");
}

#[test]
fn sampling_is_byte_identical_and_feeds_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(
        &cfg_path,
        "grid.points = 64\nsample.pairs = 5000\nsample.delay_ps = 6.0\nreconstruct.events_file = \"a/events.csv\"\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for dir in ["a", "b"] {
        let res = homsim(&["sample", "--config", cfg, "--out", dir, "--seed", "7"], tmp.path());
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = fs::read(tmp.path().join("a/events.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/events.csv")).unwrap();
    assert_eq!(a, b);
    let res = homsim(&["sample", "--config", cfg, "--out", "c", "--seed", "8"], tmp.path());
    assert!(res.status.success());
    assert_ne!(a, fs::read(tmp.path().join("c/events.csv")).unwrap());

    let res = homsim(&["reconstruct", "--config", cfg, "--out", "r"], tmp.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(metadata(&tmp.path().join("r"))["results"]["pairs"], 5000);
    let hist = fs::read_to_string(tmp.path().join("r/histogram.csv")).unwrap();
    assert!(hist.starts_with("lambda1_nm,lambda2_nm,count\n"));
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(&cfg_path, "grid.points = 48\ncsi.delay_ps = 3.0\ncsi.smear = true\n").unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for dir in ["x", "y"] {
        assert!(homsim(&["csi", "--config", cfg, "--out", dir], tmp.path()).status.success());
    }
    assert_eq!(
        fs::read(tmp.path().join("x/csi.csv")).unwrap(),
        fs::read(tmp.path().join("y/csi.csv")).unwrap()
    );
    assert_eq!(metadata(&tmp.path().join("x"))["config_sha256"], metadata(&tmp.path().join("y"))["config_sha256"]);
}

#[test]
fn config_errors_exit_with_code_two_and_name_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.toml");
    fs::write(&cfg_path, "multipair.mean_photon_number = -1\nmultipair.colour = \"red\"\n").unwrap();
    let res = homsim(&["multipair", "--config", cfg_path.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("multipair.mean_photon_number"), "{err}");
    assert!(err.contains("multipair.colour: unknown key"), "{err}");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn aliased_delay_is_a_config_error_and_leaves_no_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("alias.toml");
    fs::write(&cfg_path, "grid.points = 32\ndip.delay_start_ps = -50\ndip.delay_stop_ps = 50\n").unwrap();
    let res = homsim(&["dip", "--config", cfg_path.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sampling limit"));
    assert!(!tmp.path().join("o/dip.csv").exists());
}

#[test]
fn missing_files_exit_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let res = homsim(&["dip", "--config", "does-not-exist.toml"], tmp.path());
    assert_eq!(res.status.code(), Some(4));
    let cfg_path = tmp.path().join("r.toml");
    fs::write(&cfg_path, "reconstruct.events_file = \"nowhere.csv\"\n").unwrap();
    let res = homsim(&["reconstruct", "--config", cfg_path.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn thread_count_comes_from_flag_or_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("t.toml");
    fs::write(&cfg_path, "grid.points = 32\ndip.delay_start_ps = -3\ndip.delay_stop_ps = 3\n").unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let res = homsim(&["dip", "--config", cfg, "--out", "a", "--threads", "2"], tmp.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(metadata(&tmp.path().join("a"))["threads"], 2);
    let res = Command::new(env!("CARGO_BIN_EXE_homsim"))
        .args(["dip", "--config", cfg, "--out", "b"])
        .current_dir(tmp.path())
        .env("HOMSIM_THREADS", "3")
        .output()
        .unwrap();
    assert!(res.status.success());
    assert_eq!(metadata(&tmp.path().join("b"))["threads"], 3);
    let res = homsim(&["dip", "--config", cfg, "--threads", "0"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
}
