use std::path::Path;
use std::process::Command;

fn lmmp() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lmmp"));
    c.env_remove("LMMP_THREADS");
    c
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn small_config(out: &Path) -> String {
    format!(
        r#"{{
        "schema_version": 1,
        "experiment": "custom",
        "scenario": {{"kind": "regret_computable", "d": [3], "arms": 4, "resources": 2,
                     "horizon": 10, "budget": {{"rule": "sqrt_dT"}}}},
        "algorithms": [{{"type": "amf"}}],
        "repeats": 2,
        "master_seed": 11,
        "out_dir": {:?}
    }}"#,
        out.to_str().unwrap()
    )
}

#[test]
fn validate_accepts_preset_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmmp().args(["fig3", "--print-config"]).output().unwrap();
    assert!(out.status.success());
    let cfg = dir.path().join("fig3.json");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let st = lmmp().arg("validate").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
}

#[test]
fn run_with_missing_config_exits_2() {
    let st = lmmp()
        .args(["run", "--config", "/nonexistent/lmmp/config.json"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = lmmp().args(["fig1", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_config(dir.path()).replace("\"repeats\": 2", "\"repeats\": 0");
    let cfg = write_config(dir.path(), &body);
    let st = lmmp().arg("validate").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = write_config(dir.path(), &small_config(&blocker.join("sub")));
    let out = lmmp().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("file"));
}

#[test]
fn help_lists_every_flag() {
    let out = lmmp().args(["run", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--config", "--threads", "--seed", "--out"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let out = lmmp().args(["fig2", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--budget", "--d", "--repeats", "--horizon"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn run_writes_expected_files_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(&dir.path().join("ignored")));
    let out_a = dir.path().join("a");
    let st = lmmp()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_a)
        .args(["--seed", "5", "--threads", "1"])
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["rounds.csv", "summary.csv", "fits.csv"] {
        assert!(out_a.join(f).exists());
    }
    assert!(!dir.path().join("ignored").exists());
    let summary = std::fs::read_to_string(out_a.join("summary.csv")).unwrap();
    let seed_col = summary.lines().next().unwrap().split(',').position(|c| c == "seed").unwrap();
    let seed: u64 = summary.lines().nth(1).unwrap().split(',').nth(seed_col).unwrap().parse().unwrap();
    assert_eq!(seed, lmmp_harness::runner::mix_seed(5, 0));
}

#[test]
fn threads_env_var_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(&dir.path().join("o")));
    let st = lmmp()
        .env("LMMP_THREADS", "0")
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = lmmp()
        .env("LMMP_THREADS", "2")
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(st.success());
}
