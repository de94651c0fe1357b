use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pv-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pv-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (scratch("a"), scratch("b"));
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let status = bin()
            .args(["simulate", "--seed", "7", "--lambda", "200,400", "--replications", "10", "--threads", threads])
            .arg("--out")
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let csv_a = fs::read(a.join("replications.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("replications.csv")).unwrap());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "pv-lab/1");
    assert_eq!(summary["config"]["seed"], 7);
    let first = &summary["per_lambda"][0];
    for key in ["mean", "var", "var_se", "skew", "kurt", "ks_D", "ks_p", "n_degenerate"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let echo = fs::read_to_string(a.join("config.json")).unwrap();
    assert!(pv_lab::config::parse_config(&echo).is_ok());
    let _ = fs::remove_dir_all(&a);
    let _ = fs::remove_dir_all(&b);
}

#[test]
fn config_errors_exit_with_two() {
    let out = bin().args(["simulate", "--radius", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radius"));

    let out = bin().args(["simulate", "--shape", "polygon", "--dim", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported combination"));

    let out = bin().args(["variance-sweep", "--lambda", "100,200"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_overlay() {
    let dir = scratch("cfg");
    fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("c.json");
    fs::write(
        &cfg,
        r#"{"shape":"box","dim":2,"half_widths":[1,0.5],"lambda":[300],"replications":5,"seed":1}"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let status = bin()
        .args(["simulate", "--seed", "9", "--estimator", "exact2d"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["shape"], "box");
    assert_eq!(echo["estimator"], "exact2d");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn exact2d_writes_geometry() {
    let dir = scratch("exact");
    let status = bin()
        .args(["exact2d", "--dump", "--lambda", "100", "--replications", "3"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let geo: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("geometry.json")).unwrap()).unwrap();
    assert!(!geo["cells"].as_array().unwrap().is_empty());
    let rows = fs::read_to_string(dir.join("exact2d.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
    let _ = fs::remove_dir_all(&dir);
}
