//! Integration tests for the `mpqkd` binary: CSV contract, determinism,
//! atomic output, JSON reports and error reporting.

use std::path::Path;
use std::process::{Command, Output};

use mpqkd::config::ProtocolConfig;
use mpqkd::protosim::analytic_report;

const HEADER: &str = "distance_km,l,R,R_star,ratio,e11x,Ez,q11z,r_p,r_z,s11z";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpqkd"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn scan_emits_exact_header_and_ordered_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cutoff = 12\n");
    let out = bin()
        .args(["scan", "--distances", "0,100", "--intervals", "2000,20000000"])
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 5);
    // distances outer, intervals inner
    let key = |line: &str| {
        let mut it = line.split(',');
        (
            it.next().unwrap().parse::<f64>().unwrap(),
            it.next().unwrap().parse::<usize>().unwrap(),
        )
    };
    assert_eq!(key(lines[1]), (0.0, 2_000));
    assert_eq!(key(lines[2]), (0.0, 20_000_000));
    assert_eq!(key(lines[3]), (100.0, 2_000));
    assert_eq!(key(lines[4]), (100.0, 20_000_000));
}

#[test]
fn scan_rows_match_the_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "cutoff = 12\n");
    let out = bin()
        .args(["scan", "--distances", "100", "--intervals", "2000"])
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse::<f64>().unwrap())
        .collect();

    let mut cfg = ProtocolConfig::default();
    cfg.cutoff = 12;
    cfg.distance_km = 100.0;
    cfg.l = 2000;
    let rep = analytic_report(&cfg).unwrap();
    let expect = [
        rep.distance_km,
        rep.l as f64,
        rep.r,
        rep.r_star,
        rep.ratio(),
        rep.e11x,
        rep.ez,
        rep.q11z,
        rep.r_p,
        rep.r_z,
        rep.s11z,
    ];
    for (i, (&got, &want)) in row.iter().zip(expect.iter()).enumerate() {
        let tol = 1e-8 * want.abs().max(1e-300);
        assert!(
            (got - want).abs() <= tol,
            "column {i}: CSV {got} vs library {want}"
        );
    }
}

#[test]
fn scan_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cutoff = 12\n");
    let run = || {
        let out_path = dir.path().join(format!("scan-{}.csv", rand_suffix()));
        let out = bin()
            .args(["scan", "--distances", "0:100:50", "--intervals", "2000"])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        std::fs::read(&out_path).unwrap()
    };
    assert_eq!(run(), run());
}

fn rand_suffix() -> u128 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_nanos()
}

#[test]
fn simulate_analytic_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cutoff = 12\ndistance_km = 50\n");
    let out = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["mode"], "analytic");
    assert!(json["tallies_summary"].is_null());
    let mut lib_cfg = ProtocolConfig::default();
    lib_cfg.cutoff = 12;
    lib_cfg.distance_km = 50.0;
    let rep = analytic_report(&lib_cfg).unwrap();
    let r = json["report"]["r"].as_f64().unwrap();
    assert!((r - rep.r).abs() <= 1e-12 * rep.r.max(1e-300));
}

#[test]
fn simulate_monte_carlo_is_deterministic_and_dumps_tallies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cutoff = 12\ndistance_km = 20\nmode = montecarlo\nrounds = 200000\n",
    );
    let run = |tag: &str| {
        let tallies = dir.path().join(format!("tallies-{tag}.json"));
        let out = bin()
            .arg("simulate")
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", "9"])
            .arg("--tallies")
            .arg(&tallies)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let t: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&tallies).unwrap()).unwrap();
        assert_eq!(t["n_rounds"], 200000);
        assert_eq!(t["seed"], 9);
        stdout(&out)
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let json: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(json["mode"], "montecarlo");
    assert!(json["tallies_summary"]["effective_rounds"].as_u64().unwrap() > 0);
}

#[test]
fn tallies_flag_rejected_in_analytic_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cutoff = 12\n");
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .arg("--tallies")
        .arg(dir.path().join("t.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error[invalid-config]"));
}

#[test]
fn bad_configs_exit_nonzero_with_category() {
    let dir = tempfile::tempdir().unwrap();
    for (body, category) in [
        ("not_a_key = 1\n", "invalid-config"),
        ("mu = 0.2\nnu = 0.2\n", "degenerate-decoy"),
        ("p_z = 1.5\n", "invalid-config"),
    ] {
        let cfg = write_config(dir.path(), body);
        let out = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
        assert!(!out.status.success(), "config {body:?} unexpectedly succeeded");
        assert!(
            stderr(&out).contains(&format!("error[{category}]")),
            "config {body:?}: stderr {}",
            stderr(&out)
        );
    }
}

#[test]
fn failed_run_leaves_no_partial_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mu = 0.2\nnu = 0.2\n");
    let out_path = dir.path().join("scan.csv");
    let out = bin()
        .args(["scan", "--distances", "0", "--intervals", "2000"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out_path.exists(), "partial output left behind");
}

#[test]
fn verify_appendix_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("records.json");
    let args = [
        "verify-appendix",
        "--cutoff",
        "10",
        "--grid",
        "64",
        "--mu",
        "0.1",
        "--nu",
        "0.038",
        "--delta",
        "0",
    ];
    let out = bin().args(args).arg("--out").arg(&out_path).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS").count(), 2, "stdout: {text}");
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 2);

    // An unattainable tolerance must fail the command.
    let out = bin().args(args).args(["--tolerance", "1e-30"]).output().unwrap();
    assert!(!out.status.success());
    assert!(stdout(&out).contains("FAIL"));
}
