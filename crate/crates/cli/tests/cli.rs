use std::path::PathBuf;
use std::process::{Command, Output};

fn lrtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrtomo")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lrtomo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const SMALL: &[&str] = &["--lambda2_values", "0.5,0.1", "--k_values", "5,20", "--n_states", "2", "--n-mc-samples", "500"];

#[test]
fn writes_metadata_and_header_to_stdout() {
    let mut args = vec!["--experiment", "fisher-concentration", "--seed", "11"];
    args.extend_from_slice(SMALL);
    let out = lrtomo(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# experiment=fisher-concentration seed=11 version="), "{meta}");
    assert_eq!(lines.next().unwrap(), "lambda2,k,trial,eig_index,eigenvalue,mean_eigenvalue,band_low,band_high");
    // 2 lambda2 x 2 k x 2 states x 3 eigenvalues
    assert_eq!(lines.count(), 24);
}

#[test]
fn config_file_and_flag_precedence() {
    let cfg = scratch("table1.cfg");
    let out_path = scratch("table1.csv");
    std::fs::write(&cfg, "experiment = table1-validate\nseed = 3 # overridden\nlambda2_values = 0.25\nn_mc_samples = 1000\n").unwrap();
    let out = lrtomo(&["--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("# experiment=table1-validate seed=5 "));
    assert_eq!(text.lines().count(), 2 + 6);
}

#[test]
fn same_seed_same_bytes() {
    let mut args = vec!["--experiment", "scaling", "--seed", "9", "--n-design-draws", "3", "--m", "100"];
    args.extend_from_slice(SMALL);
    let a = lrtomo(&args);
    let b = lrtomo(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    args[3] = "10";
    assert_ne!(lrtomo(&args).stdout, a.stdout);
}

#[test]
fn bound_check_reports_summary() {
    let out = lrtomo(&["--experiment", "bound-check", "--rank", "1", "--dim", "2", "--n-design-draws", "5"]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("exceedance fraction"), "{err}");
}

#[test]
fn config_errors_exit_with_one() {
    for args in [
        &["--experiment", "nonsense"][..],
        &["--lambda2-values", "0.9"][..],
        &["--m", "many"][..],
        &["--rank", "3", "--dim", "2"][..],
        &["--config", "/nonexistent/lrtomo.cfg"][..],
    ] {
        let out = lrtomo(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    }
    let bad = scratch("bad.cfg");
    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(lrtomo(&["--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = scratch("");
    let out = lrtomo(&["--experiment", "table1-validate", "--n-mc-samples", "10", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
