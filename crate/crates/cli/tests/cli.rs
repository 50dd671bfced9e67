use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"

[space]
kind = "lattice_box"
dim = 1
side = 48

[scales]
phi_c = [{ break = 0.0, coeff = 1.0, exp = 2.0 }]
phi_j = [{ break = 0.0, coeff = 1.0, exp = 1.0 }]

[jump]
kind = "stable_like"
alpha = 1.0

[grids]
times = 6

[[checks]]
kind = "volume"

[[checks]]
kind = "exit"
params = { radii = [4.0, 8.0] }
"#;

fn heatlab(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatlab"));
    cmd.args(args).env_remove("HEATLAB_OUT");
    if let Some(p) = env_out {
        cmd.env("HEATLAB_OUT", p);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn list_names_bundled_configs() {
    let o = heatlab(&["list"], None);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.lines().any(|l| l == "z1_alpha1") && s.lines().any(|l| l == "gasket_walk"));
}

#[test]
fn validate_reports_points() {
    let o = heatlab(&["validate", "--config", "gasket_walk"], None);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("366 points"));
}

#[test]
fn suite_writes_outputs_and_report_replays_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = heatlab(&["suite", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "points.csv", "exit.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let r = heatlab(&["report", "--out", out.to_str().unwrap()], None);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8(r.stdout).unwrap().contains("small (48 points)"));
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("from-env");
    let o = heatlab(&["check", "volume", "--config", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
}

#[test]
fn bad_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("side = 48", "side = 0"));
    let o = heatlab(&["suite", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error:"));
    let o = heatlab(&["validate", "--config", "no_such_config"], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unexpected_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("[[checks]]\nkind = \"volume\"", "[[checks]]\nkind = \"volume\"\nexpect = \"failed\"");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    let o = heatlab(&["suite", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stdout).unwrap().contains("DEV"));
    assert_eq!(heatlab(&["report", "--out", out.to_str().unwrap()], None).status.code(), Some(2));
}
