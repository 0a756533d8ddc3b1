use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fisheye-distance"));
    c.env_remove("FISHEYE_DISTANCE_OUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn small_model(dir: &Path) {
    ok(dir, &["synth", "--grid", "--pairs", "2000", "--seed", "1"]);
    ok(
        dir,
        &[
            "train",
            "--grid",
            "grid.csv",
            "--max-epochs",
            "15",
            "--seed",
            "1",
        ],
    );
}

#[test]
fn synth_train_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_model(d);
    assert!(d.join("model.json").exists());
    ok(
        d,
        &[
            "synth",
            "--scene",
            "--people",
            "15",
            "--occluded-probability",
            "0.4",
            "--out-dir",
            "scene",
        ],
    );
    let table = ok(
        d,
        &[
            "evaluate",
            "--detections",
            "scene/detections.jsonl",
            "--gt",
            "scene/gt.csv",
            "--geometry",
            "--camera",
            "scene/camera.json",
            "--height",
            "60,70",
            "--mlp",
            "--model",
            "model.json",
            "--alpha-visible",
            "0.1",
            "--alpha-occluded",
            "0.5",
            "--output-json",
            "report.json",
        ],
    );
    assert!(
        table.contains("V-V") && table.contains("CCR (%)"),
        "{table}"
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    let methods = report["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 3);
    assert_eq!(methods[2]["method"], "mlp");
    assert_eq!(methods[0]["report"]["all"]["n"], 105);
    assert_eq!(report["adjustment"]["occluded"], 0.5);
    let ccr = methods[0]["report"]["violations"]["ccr"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&ccr));
}

#[test]
fn geometry_without_camera_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let det = fixtures().join("fixed/detections.jsonl");
    let out = run(
        dir.path(),
        &[
            "estimate",
            "--geometry",
            "--detections",
            det.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error[usage]: missing required option --camera"),
        "{err}"
    );
    assert!(err.contains("Usage:"));
}

#[test]
fn exclusive_estimators_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["estimate", "--geometry", "--mlp"],
        vec!["synth", "--grid", "--scene"],
        vec!["synth"],
        vec![
            "evaluate",
            "--alpha",
            "0.2",
            "--alpha-visible",
            "0.1",
            "--alpha-occluded",
            "0.3",
        ],
        vec!["no-such-command"],
    ] {
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(
            err.lines().next().unwrap().starts_with("error[usage]: "),
            "{err}"
        );
    }
}

#[test]
fn data_and_numeric_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["stats", "--gt", "missing.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[data]: "));

    std::fs::write(
        d.join("few.csv"),
        "x_in,y_in,z_in,u_px,v_px\n1,2,80,1030,1040\n5,1,70,1090,1030\n",
    )
    .unwrap();
    let out = run(d, &["calibrate", "--correspondences", "few.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[numeric]: "));

    let fx = fixtures().join("fixed");
    let out = run(
        d,
        &[
            "evaluate",
            "--geometry",
            "--camera",
            fx.join("camera.json").to_str().unwrap(),
            "--detections",
            fx.join("detections.jsonl").to_str().unwrap(),
            "--gt",
            fx.join("gt.csv").to_str().unwrap(),
            "--alpha",
            "1.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

fn argmin(csv: &str, category: &str) -> f64 {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[1] == category)
        .map(|f| (f[0].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn sweep_alpha_orders_occluded_above_visible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--scene",
            "--people",
            "50",
            "--occluded-probability",
            "0.5",
            "--quantize",
            "--seed",
            "2",
        ],
    );
    let csv = ok(
        d,
        &[
            "sweep-alpha",
            "--geometry",
            "--camera",
            "camera.json",
            "--detections",
            "detections.jsonl",
            "--gt",
            "gt.csv",
        ],
    );
    assert!(csv.starts_with("alpha,category,mae_in\n"));
    let alphas: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",All,"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(alphas.first(), Some(&-0.1));
    assert!(alphas.windows(2).all(|w| w[0] < w[1]));
    assert!(argmin(&csv, "O-O") > argmin(&csv, "V-V"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let files = |sub: &str| {
        ["detections.jsonl", "gt.csv", "grid.csv", "model.json"]
            .map(|f| std::fs::read(d.join(sub).join(f)).unwrap())
    };
    for sub in ["a", "b", "c"] {
        let seed = if sub == "c" { "8" } else { "7" };
        ok(
            d,
            &[
                "synth",
                "--scene",
                "--people",
                "12",
                "--seed",
                seed,
                "--out-dir",
                sub,
            ],
        );
        ok(
            d,
            &[
                "synth",
                "--grid",
                "--pairs",
                "500",
                "--seed",
                seed,
                "--out-dir",
                sub,
            ],
        );
        let grid = format!("{sub}/grid.csv");
        ok(
            d,
            &[
                "train",
                "--grid",
                &grid,
                "--max-epochs",
                "3",
                "--seed",
                seed,
                "--out-dir",
                sub,
            ],
        );
    }
    assert_eq!(files("a"), files("b"));
    assert_ne!(files("a"), files("c"));
}

#[test]
fn config_file_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = fixtures().join("fixed");
    std::fs::write(
        d.join("run.toml"),
        format!(
            "camera = {:?}\ndetections = {:?}\ngt = {:?}\nheight = 70.08\n",
            fx.join("camera.json"),
            fx.join("detections.jsonl"),
            fx.join("gt.csv")
        ),
    )
    .unwrap();
    let table = ok(
        d,
        &[
            "evaluate",
            "--geometry",
            "--config",
            "run.toml",
            "--output-json",
            "r.json",
        ],
    );
    assert!(table.contains("geometry H/2=35.04"), "{table}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["methods"][0]["report"]["all"]["n"], 73);

    let out = bin()
        .current_dir(d)
        .env("FISHEYE_DISTANCE_OUT_DIR", "from-env")
        .args(["synth", "--collection", "fixed"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("from-env/gt.csv").exists());
}

#[test]
fn stats_reproduces_fixture_summary() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures().join("varying");
    let text = ok(
        dir.path(),
        &[
            "stats",
            "--gt",
            fx.join("gt.csv").to_str().unwrap(),
            "--detections",
            fx.join("detections.jsonl").to_str().unwrap(),
            "--output-json",
            "s.json",
        ],
    );
    assert!(text.contains("100    126     30    256"), "{text}");
    assert!(text.contains("min distance 11.63 in") && text.contains("max distance 701.96 in"));
    let s: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(s["buckets"], serde_json::json!([45, 73, 138]));
}

#[test]
fn estimate_writes_every_same_image_pair() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures().join("fixed");
    let csv = ok(
        dir.path(),
        &[
            "estimate",
            "--geometry",
            "--camera",
            fx.join("camera.json").to_str().unwrap(),
            "--detections",
            fx.join("detections.jsonl").to_str().unwrap(),
            "--height",
            "70.08",
        ],
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id_a,id_b,distance_in");
    assert_eq!(lines.len(), 74);
    assert!(lines[1].starts_with("fixed-000:"));
}
