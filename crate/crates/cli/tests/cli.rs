//! CLI behaviour: exit-code contract, determinism, ordering consistency,
//! output formats, and the golden-manifest hash guard.

use std::path::{Path, PathBuf};
use std::process::Command;

fn qbm2() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qbm2"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs")
}

fn run(cmd: &str, config: &Path, out: &Path) -> std::process::Output {
    qbm2()
        .args([
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .expect("spawning qbm2")
}

#[test]
fn zero_coupling_coeffs_are_zero_and_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("coeffs", &configs_dir().join("zero_coupling.toml"), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("coeffs.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!(v.abs() < 1e-10, "nonzero coefficient {v}");
        }
    }
}

#[test]
fn malformed_config_exits_two_with_field_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("coeffs", &configs_dir().join("invalid_gamma.toml"), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("damping"), "error message should name the field: {msg}");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "schema = 1\n[system]\nmass = 1.0\nomega = 1.0\nbogus_knob = 3\n",
    )
    .unwrap();
    let out = run("coeffs", &cfg, tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bogus_knob") || msg.contains("unknown field"), "{msg}");
}

#[test]
fn unstable_bath_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("unstable.toml");
    std::fs::write(
        &cfg,
        r#"
schema = 1

[system]
mass = 1.0
omega = 1.0

[bath]
kind = "discrete"
temperature = 1.0
modes = [{ mass = 1.0, frequency = 0.5, coupling = 2.0 }]

[grid]
t_max = 1.0
dt = 0.01

[initial_state]
widths = [0.8, 1.0, 1.2, 0.7]

[oracle]
n_out = 10
"#,
    )
    .unwrap();
    let out = run("oracle", &cfg, tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("unbounded"), "{msg}");
}

#[test]
fn identical_configs_give_byte_identical_outputs() {
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("regression.toml");
    assert!(run("coeffs", &cfg, t1.path()).status.success());
    assert!(run("coeffs", &cfg, t2.path()).status.success());
    let a = std::fs::read(t1.path().join("coeffs.csv")).unwrap();
    let b = std::fs::read(t2.path().join("coeffs.csv")).unwrap();
    assert_eq!(a, b, "outputs differ between identical runs");
}

#[test]
fn stride_override_subsamples_exactly() {
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("regression.toml");
    assert!(run("coeffs", &cfg, t1.path()).status.success());
    let out = qbm2()
        .args([
            "coeffs",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            t2.path().to_str().unwrap(),
            "--stride",
            "40",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let dense = std::fs::read_to_string(t1.path().join("coeffs.csv")).unwrap();
    let sparse = std::fs::read_to_string(t2.path().join("coeffs.csv")).unwrap();
    let dense_rows: Vec<&str> = dense.lines().skip(1).collect();
    for (k, row) in sparse.lines().skip(1).enumerate() {
        assert_eq!(row, dense_rows[4 * k], "strided row {k} disagrees");
    }
}

#[test]
fn evolve_orderings_are_related_by_the_canonical_transform() {
    let tmp = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(configs_dir().join("regression.toml")).unwrap();
    let cm = tmp.path().join("cm.toml");
    let lab = tmp.path().join("lab.toml");
    std::fs::write(&cm, format!("{base}\n[evolve]\noutput_ordering = \"cm_rel\"\n")).unwrap();
    std::fs::write(&lab, format!("{base}\n[evolve]\noutput_ordering = \"lab\"\n")).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert!(run("evolve", &cm, d1.path()).status.success());
    assert!(run("evolve", &lab, d2.path()).status.success());
    let parse = |p: PathBuf| -> Vec<Vec<f64>> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    };
    let cm_rows = parse(d1.path().join("evolve.csv"));
    let lab_rows = parse(d2.path().join("evolve.csv"));
    // spot-check the mean transform X = (x1 + x2)/2, P = P1 + P2 on every row
    for (c, l) in cm_rows.iter().zip(&lab_rows) {
        assert!((c[1] - 0.5 * (l[1] + l[3])).abs() < 1e-12);
        assert!((c[2] - (l[2] + l[4])).abs() < 1e-12);
    }
}

#[test]
fn json_format_mirrors_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qbm2()
        .args([
            "coeffs",
            "--config",
            configs_dir().join("zero_coupling.toml").to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(tmp.path().join("coeffs.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["columns"][0], "t");
    assert!(v["rows"].as_array().unwrap().len() > 1);
}

#[test]
fn entangle_reports_closed_form_and_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("entangle", &configs_dir().join("markov_free_particle.toml"), tmp.path());
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("entangle_summary.json")).unwrap(),
    )
    .unwrap();
    let t_dent = summary["t_dent_closed_form"].as_f64().unwrap();
    let crossing = summary["first_crossing"].as_f64().unwrap();
    // crossing within one output step (1e-3) of the closed form
    assert!((crossing - t_dent).abs() <= 1e-3 + 1e-12, "{crossing} vs {t_dent}");
}

#[test]
fn golden_manifest_hash_matches_config() {
    let manifest = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/manifest.toml"),
    )
    .unwrap();
    let recorded = manifest
        .lines()
        .find_map(|l| l.strip_prefix("config_sha256 = \""))
        .and_then(|l| l.strip_suffix('"'))
        .expect("manifest records the config hash");
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(configs_dir().join("regression.toml")).unwrap();
    let hash = format!("{:x}", Sha256::digest(&bytes));
    assert_eq!(hash, recorded, "regression.toml changed without regenerating goldens");
}
