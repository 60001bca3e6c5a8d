mod common;

use common::{boxcov, boxcov_ok, last_record, path_str, write_config};

#[test]
fn missing_verb_is_a_usage_error() {
    assert_eq!(boxcov(Vec::<&str>::new()).status.code(), Some(2));
}

#[test]
fn bad_domain_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = boxcov([
        "continue",
        "--model",
        "saddle",
        "--set",
        "domain.center=[0.0, 0.0, 0.0]",
        "--set",
        "domain.radius=[1.0, 1.0, 1.0]",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("configuration error"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        "model = \"saddle\"\n[continuation]\ndepht = 4\n",
    );
    let res = boxcov(["continue", "--config", path_str(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_basis_file_is_a_config_error() {
    let res = boxcov([
        "continue",
        "--model",
        "ks",
        "--set",
        "domain.center=[0.0, 0.0, 0.0]",
        "--set",
        "domain.radius=[8.0, 8.0, 8.0]",
        "--set",
        "pod.basis=\"/nonexistent/basis.bin\"",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn saddle_continuation_covers_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("saddle");
    let cfg = write_config(
        dir.path(),
        "saddle.toml",
        r#"
model = "saddle"

[domain]
center = [0.0, 0.0]
radius = [1.0, 1.0]

[continuation]
depth = 10
seed = 3
test_points = { monte_carlo = 50 }
"#,
    );
    boxcov_ok(["continue", "--config", path_str(&cfg), "--out", path_str(&out)]);
    let report = last_record(&out.join("report.jsonl"));
    assert_eq!(report["type"], "report");
    assert_eq!(report["terminated"], true);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("continue.metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["continuation"]["depth"], 10);
    assert_eq!(meta["resolved"]["step_cap"], 100);

    // Two rows of 32 boxes along y = 0.
    let covering = out.join("covering.txt");
    let reference = write_config(
        dir.path(),
        "axis.csv",
        &(0..=256)
            .map(|i| format!("{},0\n", -1.0 + i as f64 / 128.0))
            .collect::<String>(),
    );
    let cmp = boxcov_ok(["compare", path_str(&covering), path_str(&reference)]);
    let cmp: serde_json::Value = serde_json::from_slice(&cmp.stdout).unwrap();
    assert_eq!(cmp["boxes"], 64);
    assert_eq!(cmp["reference_to_covering"], 0.0);
    assert!(cmp["hausdorff"].as_f64().unwrap() <= cmp["covering_diameter"].as_f64().unwrap());

    let dim = boxcov_ok(["dimension", path_str(&covering), "--levels", "2,4,6,8,10"]);
    let dim: serde_json::Value = serde_json::from_slice(&dim.stdout).unwrap();
    assert!((dim["dimension"].as_f64().unwrap() - 1.0).abs() < 0.1, "{dim}");
    assert_eq!(dim["worst_case_embedding_dim"], 5);

    let csv = dir.path().join("boxes.csv");
    boxcov_ok([
        "export",
        path_str(&covering),
        "--project",
        "1",
        "2",
        "2",
        "--out",
        path_str(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("cx,cy,cz,rx,ry,rz"));
    assert_eq!(text.lines().count(), 65);
    let bad = boxcov(["export", path_str(&covering), "--project", "1", "2", "3"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn subdivision_writes_each_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("henon");
    boxcov_ok([
        "subdivide",
        "--model",
        "henon",
        "--set",
        "domain.radius=[1.5, 1.5]",
        "--set",
        "subdivision.test_points={monte_carlo=20}",
        "--steps",
        "8",
        "--emit-steps",
        "--seed",
        "9",
        "--out",
        path_str(&out),
    ]);
    for s in 1..=8 {
        assert!(out.join(format!("steps/step-{s:03}.txt")).exists());
    }
    let log = std::fs::read_to_string(out.join("subdivision.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    let last = last_record(&out.join("subdivision.jsonl"));
    assert_eq!(last["level"], 8);
    let final_file = std::fs::read(out.join("covering.txt")).unwrap();
    assert_eq!(final_file, std::fs::read(out.join("steps/step-008.txt")).unwrap());
}

#[test]
fn escaping_domain_is_an_empty_covering() {
    let dir = tempfile::tempdir().unwrap();
    let res = boxcov([
        "subdivide",
        "--model",
        "henon",
        "--set",
        "domain.center=[10.0, 10.0]",
        "--steps",
        "3",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn ks_blow_up_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = boxcov([
        "simulate",
        "--model",
        "ks",
        "--mu",
        "32",
        "--set",
        "ks.h=0.05",
        "--set",
        "domain.center=[0.0, 0.0, 0.0]",
        "--set",
        "domain.radius=[8.0, 8.0, 8.0]",
        "--horizon",
        "20",
        "--out",
        path_str(&dir.path().join("ks")),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("simulate"));
}

#[test]
fn snapshots_pod_and_observed_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ks");
    let common = [
        "--model",
        "ks",
        "--set",
        "domain.center=[0.0, 0.0, 0.0]",
        "--set",
        "domain.radius=[8.0, 8.0, 8.0]",
        "--set",
        "pod.horizon=60.0",
        "--set",
        "pod.skip=20.0",
        "--out",
        path_str(&out),
    ];
    boxcov_ok(["snapshots"].iter().chain(&common));
    assert!(out.join("snapshots.bin").exists());
    let snaps = out.join("snapshots.bin");
    boxcov_ok(
        ["pod", "--snapshots", path_str(&snaps), "--modes", "6"]
            .iter()
            .chain(&common),
    );
    let sv = std::fs::read_to_string(out.join("singular_values.csv")).unwrap();
    let values: Vec<f64> = sv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));

    let basis = out.join("basis.bin");
    let set_basis = format!("pod.basis={}", toml_string(path_str(&basis)));
    boxcov_ok(
        [
            "simulate",
            "--observe",
            "--horizon",
            "4",
            "--dt",
            "1",
            "--set",
            &set_basis,
        ]
        .iter()
        .chain(&common),
    );
    let observed = std::fs::read_to_string(out.join("observed.csv")).unwrap();
    assert_eq!(observed.lines().next(), Some("t,x0,x1,x2"));
    assert_eq!(observed.lines().count(), 6);
    let trajectory = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().next().unwrap().split(',').count(), 129);
}

#[test]
fn mg_simulation_writes_delay_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mg");
    boxcov_ok([
        "simulate",
        "--model",
        "mg",
        "--set",
        "domain.center=[0.0, 0.0, 0.0]",
        "--set",
        "domain.radius=[1.5, 1.5, 1.5]",
        "--horizon",
        "10",
        "--dt",
        "1",
        "--out",
        path_str(&out),
    ]);
    let observed = std::fs::read_to_string(out.join("observed.csv")).unwrap();
    assert_eq!(observed.lines().count(), 12);
    let last: Vec<f64> = observed
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(last[1..].iter().all(|v| *v > 0.0 && *v < 1.5));
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.into()).to_string()
}
