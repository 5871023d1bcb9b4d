use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steadystein"))
        .args(args)
        .env_remove("STEADYSTEIN_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn table_csv_is_deterministic() {
    let a = run(&["table", "tab1"]);
    let b = run(&["table", "tab1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(s.starts_with('#'));
    assert!(s.contains("# exact=true"));
    let header = s.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "n,R,exact_mean,approx_mean,error,bound,bound_ok");
    assert_eq!(s.lines().filter(|l| !l.starts_with('#')).count(), 11);
    assert!(!s.contains('\r'));
}

#[test]
fn table_to_file() {
    let dir = std::env::temp_dir().join(format!("steadystein-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("md.csv");
    let o = run(&["table", "md", "--n", "100", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = std::fs::read_to_string(&path).unwrap();
    assert!(s.contains("n,rho,z,z_lattice,tail_prob,error_state_dependent,error_constant"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn unknown_table_is_usage_error() {
    let o = run(&["table", "tab9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_parameters_exit_two() {
    assert_eq!(run(&["table", "tab1", "--tail-eps", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["md-curve", "--n", "100", "--rho", "1.2", "--z-max", "3"]).status.code(), Some(2));
    let o = run(&["md-curve", "--n", "100", "--rho", "0.6", "--z-max", "-50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn md_curve_prints_both_errors() {
    let o = run(&["md-curve", "--n", "100", "--rho", "0.6", "--z-max", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("z,tail_prob,error_constant,error_state_dependent"));
    assert!(s.lines().filter(|l| !l.starts_with('#')).count() > 5);
}

#[test]
fn verify_writes_json_lines() {
    let o = run(&["verify", "bar", "--model", "erlang-c"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.lines().count() > 100);
    for line in s.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["suite"], "bar");
        assert_eq!(v["passed"], true);
    }
}

#[test]
fn unknown_suite_is_usage_error() {
    assert_eq!(run(&["verify", "nope"]).status.code(), Some(2));
}
