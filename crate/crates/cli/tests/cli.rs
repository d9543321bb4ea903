use std::path::Path;
use std::process::{Command, Output};

fn sgspec(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sgspec"));
    c.args(args);
    // keep the caller's SGSPEC_* settings out of the runs
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SGSPEC_")) {
        c.env_remove(k);
    }
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn status(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().unwrap_or("{}")).unwrap()
}

#[test]
fn vacuum_table_on_stdout() {
    let o = sgspec(&["vacuum-table", "--k", "3"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,lambda_k0,mu_k0,asymptote,defect");
    assert_eq!(lines.len(), 8);
    let k1: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(k1[0], "1");
    let l: f64 = k1[1].parse().unwrap();
    let want = 8.0 * std::f64::consts::PI.powi(2) - 1.0
        + 4.0 * std::f64::consts::PI * (4.0 * std::f64::consts::PI.powi(2) - 1.0).sqrt();
    assert!((l - want).abs() < 1e-12 * want);
}

#[test]
fn vacuum_divisor_and_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"potential": {"kind": "vacuum"}, "k_max": 3}"#).unwrap();
    let o = sgspec(&["divisor", "--config", cfg.to_str().unwrap(), "--out", out], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&dir.path().join("divisor.json"));
    assert_eq!(d["K"], 3);
    let entries = d["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 7);
    let e1 = &entries[4];
    assert_eq!(e1["k"], 1);
    assert!((e1["mu"][0].as_f64().unwrap() + 1.0).abs() < 1e-8);

    let div = dir.path().join("divisor.json");
    let o = sgspec(&["reconstruct", "--divisor", div.to_str().unwrap(), "--out", out], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("reconstruct.json"));
    assert!((r["tau"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("reconstruct.csv")).unwrap();
    assert!(csv.starts_with("lambda_re,lambda_im,a_re,a_im,b_re,b_im,c_re,c_im,d_re,d_im\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn deterministic_output_is_byte_stable() {
    let run = |extra: &[&str]| {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["branch-points", "--k-max", "4", "--out", dir.path().to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = sgspec(&args, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join("branch_points.json")).unwrap()
    };
    let a = run(&["--deterministic"]);
    assert_eq!(a, run(&["--deterministic"]));
    assert_eq!(a, run(&["--threads", "1"]));
    assert_eq!(a, run(&["--threads", "2"]));
}

#[test]
fn potential_file_and_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let pot = dir.path().join("pot.json");
    std::fs::write(&pot, r#"{"J": 1, "u": [[1, 0.15, 0], [-1, 0.15, 0]], "uy": []}"#).unwrap();
    let spec = format!(r#"{{"kind":"file","path":{:?}}}"#, pot.to_str().unwrap());
    let from_file = sgspec(&["divisor", "--k-max", "2"], &[("SGSPEC_POTENTIAL", &spec)]);
    let inline = sgspec(
        &["divisor", "--k-max", "2"],
        &[("SGSPEC_POTENTIAL", r#"{"kind":"cosine","amplitude":0.3}"#)],
    );
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(from_file.stdout, inline.stdout);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = sgspec(&["divisor", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(status(&o)["status"], "input_error");

    let o = sgspec(&["divisor"], &[("SGSPEC_RTOL", "-1")]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(&bad, r#"{"k_maxx": 3}"#).unwrap();
    let o = sgspec(&["divisor", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = sgspec(&["finite-type", "--k-max", "4", "--n", "4"], &[]);
    assert_eq!(o.status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    let o = sgspec(&["reconstruct", "--divisor", missing.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    // an integrator without room for steps cannot finish the period
    let o = sgspec(&["monodromy"], &[("SGSPEC_MAX_STEPS", "3")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(status(&o)["status"], "numerical_failure");
}

#[test]
fn tolerance_violations_exit_with_two_and_keep_the_report() {
    let dir = tempfile::tempdir().unwrap();
    // K = 2 is far too coarse for the round trip of the default potential
    let o = sgspec(&["roundtrip", "--k-max", "2", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(status(&o)["status"], "tolerance_violation");
    let r = json(&dir.path().join("roundtrip.json"));
    assert!(r["max_rel_err"].as_f64().unwrap() >= 1e-3);
}
