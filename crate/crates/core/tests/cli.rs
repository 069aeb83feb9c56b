use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phd-search"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = r#"{
  "name": "small",
  "env": { "lower": [0, 0, 0], "upper": [60, 60, 60], "dimensionality": 3 },
  "targets": { "kind": "uniform", "count": 2, "margin": 10, "min_separation": 8 },
  "sensor": { "kind": "omni", "G": 0.98, "F": [25, 25, 25], "sigma": 0.02 },
  "thresholds": { "T_r": 1.1, "T_m": 0.7, "T_z": 5 },
  "vehicle": { "mode": "kinematic" },
  "exploration_spacing": [10, 10, 10],
  "lawnmower": { "spacing_xy": 20, "layer_dz": 20 },
  "seeds": [1, 2],
  "max_steps": 60
}"#;

fn write_small(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn run_writes_csvs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out = dir.path().join("out");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("step,seed,qx,qy,qz,n_hat,n_found,n_meas,n_gated,score_expl,score_refine\n"));
    assert!(!steps.contains('\r'));
    for f in ["found.csv", "runs.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = bin().arg("report").arg("--in").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("aggregate.csv").exists() && out.join("detections.svg").exists());
}

#[test]
fn reruns_through_the_cli_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    for name in ["a", "b"] {
        let o = bin()
            .args(["run", "--algorithm", "lawnmower", "--seeds", "4,5", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["steps.csv", "found.csv", "runs.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out = dir.path().join("sweep");
    let o = bin()
        .args(["sweep", "--param", "T_r", "--values", "0.8,1.6", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(out.join("T_r=0.8").join("runs.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad_key.json");
    fs::write(&bad_key, SMALL.replace("\"max_steps\"", "\"max_stpes\"")).unwrap();
    let bad_value = dir.path().join("bad_value.json");
    fs::write(&bad_value, SMALL.replace("\"T_r\": 1.1", "\"T_r\": -1")).unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("out");
    for cfg in [&bad_key, &bad_value] {
        let o = bin()
            .args(["run", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(code(&o), 2, "{}", cfg.display());
    }
    let o = bin()
        .args(["run", "--algorithm", "spiral", "--config"])
        .arg(write_small(dir.path()))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["sweep", "--param", "no_such_param", "--values", "1", "--config"])
        .arg(write_small(dir.path()))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["run", "--config"])
        .arg(&missing)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn singular_vehicle_aborts_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("abort.json");
    let text = SMALL.replace(
        r#""vehicle": { "mode": "kinematic" }"#,
        r#""vehicle": { "mode": "dynamic", "as_printed": true, "on_singularity": "abort", "initial": { "airspeed": 15, "heading": 0, "pitch": 1.5707963267948966, "roll": 0 } }"#,
    );
    fs::write(&cfg, text).unwrap();
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(repo("configs")).unwrap() {
        let p = entry.unwrap().path();
        phd_search::harness::ExperimentSpec::load(&p)
            .and_then(|s| s.validate())
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn published_schema_is_current() {
    let o = bin().arg("schema").output().unwrap();
    assert_eq!(code(&o), 0);
    let published = fs::read_to_string(repo("docs/config.schema.json")).unwrap();
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        published,
        "regenerate with `phd-search schema > docs/config.schema.json`"
    );
}
