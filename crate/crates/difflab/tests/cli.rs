use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn difflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_difflab"))
        .args(args)
        .env("DIFFLAB_THREADS", "1")
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn score_check_passes_on_discrete_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[model]\nsigma = 1\n[target]\nkind = discrete\npoints = 1,0; 0,1; -1,0; 0,-1\n[score-check]\nprobes = 50\n",
    );
    let out = dir.path().join("out");
    let o = difflab(&["score-check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max |score - FD gradient|"));
    let csv = std::fs::read_to_string(out.join("score_check.csv")).unwrap();
    assert!(csv.starts_with("probe_id,t,max_abs_error\n"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["config"]["model.sigma"], "1");
}

#[test]
fn missing_sigma_exits_2_with_field_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[target]\nkind = two_deltas\n");
    let o = difflab(&["bifurcation", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.sigma") && err.contains("missing"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn bad_values_and_unknown_keys_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[model]\nsigma = 1\n[target]\nkind = two_deltas\n[bifurcation]\npoints = many\n");
    let o = difflab(&["bifurcation", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.cfg:6: field `bifurcation.points`"));

    let cfg = write_cfg(dir.path(), "[model]\nsigma = 1\n[target]\nkind = two_deltas\nradius = 2\n");
    let o = difflab(&["exponents", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target.radius`: unknown key"));

    let o = difflab(&["rem", "--config", &configs().join("rem.cfg").display().to_string(), "--set", "rem.m=30", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--set: field `rem.m`"));

    let o = difflab(&["nonsense", "--config", &cfg, "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_apply_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("bifurcation.cfg").display().to_string();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = difflab(&["bifurcation", "--config", &cfg, "--set", "bifurcation.points=30", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("branches.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,branch_id,stability,leading_eigenvalue,m_0\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("4.00000000e0,0,stable,"));
}

#[test]
fn numerical_failure_exits_3_and_flags_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // A single atom never bifurcates, so exponent fits have no critical point.
    let cfg = write_cfg(dir.path(), "[model]\nsigma = 1\n[target]\nkind = discrete\npoints = 0.5\n");
    let out = dir.path().join("o");
    let o = difflab(&["exponents", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "numerical_failure");
    assert_eq!(manifest["partial"], true);
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_difflab"))
        .args(["exponents", "--config", &configs().join("exponents.cfg").display().to_string(), "--out", "x"])
        .env("DIFFLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
