use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p1ac"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stability_writes_one_row_per_instance_and_method() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("stability.csv");
    let out = run(&["stability", "--n", "20", "--seed", "7", "--out", arg(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&csv), 1 + 20 * 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stability.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 3);
}

#[test]
fn stability_is_deterministic_apart_from_timing() {
    let dir = tempdir().unwrap();
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(6);
                f.join(",")
            })
            .collect()
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = run(&["stability", "--n", "15", "--seed", "11", "--methods", "p3p,p1ac-3q3", "--out", arg(p)]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(lines(&a), 1 + 15 * 2);
}

#[test]
fn json_format_writes_summary() {
    let dir = tempdir().unwrap();
    let json = dir.path().join("s.json");
    let out = run(&["stability", "--n", "5", "--format", "json", "--methods", "p3p", "--out", arg(&json)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["cells"][0]["method"], "p3p");
}

#[test]
fn custom_noise_grid_row_count() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = run(&[
        "noise-sweep",
        "--point-grid",
        "0:2:3",
        "--affine-grid",
        "0,0.01",
        "--n",
        "4",
        "--methods",
        "p3p,p1ac-3q3",
        "--out",
        arg(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&csv), 1 + 3 * 2 * 4 * 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&["stability", "--n", "-5"])), 2);
    assert_eq!(code(&run(&["stability", "--n", "0"])), 2);
    assert_eq!(code(&run(&["noise-sweep", "--point-grid", "0,1,abc"])), 2);
    assert_eq!(code(&run(&["noise-sweep", "--point-grid", "-1,2"])), 2);
    assert_eq!(code(&run(&["gen-scene", "--outlier-ratio", "1.0", "--out", "unused.json"])), 2);
    assert_eq!(code(&run(&["stability", "--methods", "p4p"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
}

#[test]
fn missing_scene_exits_with_one() {
    let dir = tempdir().unwrap();
    let out = run(&["localize", "--scene", arg(&dir.path().join("missing.json"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn malformed_scene_exits_with_one() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"version\": 3}").unwrap();
    assert_eq!(code(&run(&["localize", "--scene", arg(&path)])), 1);
}

#[test]
fn generated_scene_localizes() {
    let dir = tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    let result = dir.path().join("result.json");
    assert_eq!(code(&run(&["gen-scene", "--seed", "5", "--out", arg(&scene)])), 0);
    for method in ["p1ac-3q3", "p3p"] {
        let out = run(&["localize", "--scene", arg(&scene), "--method", method, "--out", arg(&result)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
        assert_eq!(v["succeeded"], true);
        assert!(v["angular_err_deg"].as_f64().unwrap() < 1.0, "{v}");
        assert!(v["position_err"].as_f64().unwrap() < 0.1, "{v}");
        assert!(v["true_inliers_found"].as_u64().unwrap() >= 90, "{v}");
    }
}

#[test]
fn outlier_free_scene_is_all_inliers() {
    let dir = tempdir().unwrap();
    let scene = dir.path().join("clean.json");
    let result = dir.path().join("clean_result.json");
    let gen = run(&[
        "gen-scene",
        "--corrs",
        "50",
        "--outlier-ratio",
        "0",
        "--point-noise-px",
        "0",
        "--affine-noise",
        "0",
        "--normal-noise-deg",
        "0",
        "--out",
        arg(&scene),
    ]);
    assert_eq!(code(&gen), 0);
    assert_eq!(code(&run(&["localize", "--scene", arg(&scene), "--out", arg(&result)])), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(v["inlier_count"], 50);
    assert!(v["angular_err_deg"].as_f64().unwrap() < 1e-6);
}

#[test]
fn timing_order_assertion() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    // P3P is orders of magnitude faster than the nullspace solver, so the
    // reversed order must be rejected even with few calls.
    let out = run(&["timings", "--n", "50", "--methods", "p3p,p1ac-null", "--assert-order", "p1ac-null<p3p"]);
    assert_eq!(code(&out), 1);
    let out = run(&["timings", "--n", "50", "--assert-order", "p3p<null", "--out", arg(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&csv), 1 + 3);
    assert_eq!(code(&run(&["timings", "--assert-order", "p3p"])), 2);
}
