use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sqm_cli::io::read_record;

fn sqm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqm"))
        .current_dir(dir)
        .env_remove("SQM_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = sqm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn default_simulation_writes_sixty_three_steps() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["simulate", "--out", "run"]);
    let run = tmp.path().join("run");
    let rec = read_record(&run.join("record_0000.csv")).unwrap();
    assert_eq!(rec.len(), 63);
    assert_eq!(rec.channels.len(), 2);
    assert_eq!(csv_rows(&run.join("trajectory_0000.csv")).len(), 64);
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["complete"], true);
    assert!(manifest["config"]["channels"].is_array());
    let side = json(&run.join("record_0000.json"));
    assert_eq!(side["channels"][0]["gamma_hz_2pi"].as_f64().unwrap(), 122e3);
}

#[test]
fn usage_and_configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sqm(tmp.path(), &["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(tmp.path().join("bad.json"), r#"{"simulate": {"duration": 1e-6}}"#).unwrap();
    let out = sqm(tmp.path(), &["simulate", "--config", "bad.json", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let out = sqm(tmp.path(), &["simulate", "--set", "simulate.n_traj=\"many\"", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("x").join("manifest.json").exists());
}

#[test]
fn runtime_errors_exit_with_three_and_leave_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sqm(tmp.path(), &["filter", "--set", "filter.record=\"missing.csv\"", "--out", "f"]);
    assert_eq!(out.status.code(), Some(3));
    let dir = tmp.path().join("f");
    assert!(!dir.exists() || fs::read_dir(&dir).unwrap().next().is_none());
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &'static str, workers: &'static str| {
        vec!["simulate", "--set", "simulate.n_traj=6", "--seed", "9", "--workers", workers, "--out", dir]
    };
    ok(tmp.path(), &args("a", "1"));
    ok(tmp.path(), &args("b", "3"));
    for name in ["record_0000.csv", "record_0005.csv", "trajectory_0003.csv", "record_0002.json"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    ok(tmp.path(), &["simulate", "--seed", "10", "--out", "c"]);
    assert_ne!(
        fs::read(tmp.path().join("a/record_0000.csv")).unwrap(),
        fs::read(tmp.path().join("c/record_0000.csv")).unwrap()
    );
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sqm"))
        .current_dir(tmp.path())
        .env("SQM_OUTPUT_DIR", "from-env")
        .args(["disturbance", "--set", "disturbance.ball_n=5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/manifest.json").exists());
}

fn max_filter_gap(dir: &Path, decimation: &str) -> f64 {
    let (s, f) = (format!("s{decimation}"), format!("f{decimation}"));
    let set = format!("simulate.decimation={decimation}");
    ok(dir, &["simulate", "--set", &set, "--set", "simulate.initial=[0.2,0.3,-0.5]", "--out", &s]);
    let record = format!("filter.record=\"{s}/record_0000.csv\"");
    ok(dir, &["filter", "--set", &record, "--set", "filter.initial=[0.2,0.3,-0.5]", "--out", &f]);
    let original = csv_rows(&dir.join(&s).join("trajectory_0000.csv"));
    let replayed = csv_rows(&dir.join(&f).join("trajectory_filtered.csv"));
    assert_eq!(original.len(), replayed.len());
    original.iter().zip(&replayed).flat_map(|(a, b)| (0..4).map(move |k| (a[k] - b[k]).abs())).fold(0.0, f64::max)
}

#[test]
fn filtering_a_written_record_reproduces_its_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    // Without decimation the record carries every step and the replay is exact.
    assert!(max_filter_gap(tmp.path(), "1") < 1e-9);
    // Block-averaged signals replayed at the coarse step stay close.
    assert!(max_filter_gap(tmp.path(), "4") < 0.05);
}

#[test]
fn analysis_commands_write_their_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(p, &["distributions", "--set", "distributions.n_traj=2000", "--set", "distributions.pde_nr=40", "--set", "distributions.pde_nphi=64", "--out", "d"]);
    let names: Vec<String> = fs::read_dir(p.join("d")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.starts_with("dist_mc_")) && names.iter().any(|n| n.starts_with("dist_pde_")), "{names:?}");

    ok(p, &["diffusion", "--set", "diffusion.n_traj=2000", "--out", "v"]);
    assert_eq!(csv_rows(&p.join("v/variance.csv")).len(), 11);
    assert!(json(&p.join("v/slope.json"))["slope_per_us"].is_number());

    ok(p, &["disturbance", "--set", "disturbance.ball_n=7", "--out", "w"]);
    for name in ["disturbance_sphere.csv", "disturbance_disk.csv", "disturbance_ball.csv", "disturbance.json"] {
        assert!(p.join("w").join(name).exists(), "{name}");
    }

    ok(p, &["mle", "--set", "mle.preparations=[[0.6,0.0,0.0]]", "--set", "mle.n_traj=300", "--set", "mle.region_grid=21", "--set", "mle.write_maps=true", "--out", "m"]);
    let report = json(&p.join("m/mle_00.json"));
    assert_eq!(report["n_records"], 300);
    assert_eq!(report["mle"].as_array().unwrap().len(), 3);
    ok(p, &["mle", "--set", "mle.maps=\"m/maps_00.csv\"", "--set", "mle.region_grid=21", "--out", "m2"]);
    assert_eq!(json(&p.join("m2/mle.json"))["mle"], report["mle"]);

    ok(
        p,
        &["calibrate", "--set", "calibrate.n_records=500", "--set", "calibrate.ramsey_n_traj=300", "--set", "calibrate.tomo_n_traj=3000", "--set", "calibrate.tomo_voxels=5", "--out", "c"],
    );
    assert!(json(&p.join("c/calibration.json")).is_object());
    assert!(p.join("c/tomography.csv").exists());

    ok(
        p,
        &[
            "oracle", "--set", "oracle.fock_dim=30", "--set", "oracle.duration_s=5e-7", "--set", "oracle.compare_traj=1",
            "--set", "oracle.compare_duration_s=2e-7", "--set", "oracle.ringup=false", "--set", "oracle.lo_leak=null", "--out", "o",
        ],
    );
    let oracle = json(&p.join("o/oracle.json"));
    assert!(oracle["gamma_fit"].is_number());
    assert!(read_record(&p.join("o/joint_record.csv")).is_ok());
}
