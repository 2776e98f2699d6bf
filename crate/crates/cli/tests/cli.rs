use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use coagself::{LogGrid, SolveConfig};
use coagself_cli::{load_profile, parse_config, Cli, CliError, Command as Cmd, ProbeReport, ProfileFile};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coagself")).args(args).current_dir(dir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(args: &[&str]) -> Result<coagself_cli::RunConfig, CliError> {
    let mut argv = vec!["coagself"];
    argv.extend_from_slice(args);
    parse_config(&Cli::try_parse_from(argv).unwrap())
}

#[test]
fn defaults_are_filled() {
    let c = config(&["solve", "--kernel", "additive", "--rho", "0.1", "--out", "p.json"]).unwrap();
    assert_eq!(c.command, Cmd::Solve);
    assert_eq!(c.kernel, "additive");
    assert_eq!(c.rho, Some(0.1));
    assert_eq!(c.out.as_deref(), Some(Path::new("p.json")));
    assert_eq!(c.solve_config().unwrap(), SolveConfig::new(0.1));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"kernel": "shear", "rho": 0.2, "max-iter": 7, "grid": "-30,30,513"}"#).unwrap();
    let c = config(&["solve", "--config", file.to_str().unwrap(), "--rho", "0.05"]).unwrap();
    assert_eq!(c.kernel, "shear");
    assert_eq!(c.rho, Some(0.05));
    assert_eq!(c.max_iter, 7);
    assert_eq!(c.grid, LogGrid::new(-30.0, 30.0, 513).unwrap());

    std::fs::write(&file, r#"{"rho": 0.2, "colour": 1}"#).unwrap();
    let e = config(&["solve", "--config", file.to_str().unwrap()]).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("colour"), "{e}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["solve", "--rho", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rho must lie in (0,1)"));

    let o = bin(&["solve", "--rho", "0.1", "--kernel", "nosuch"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("additive") && stderr(&o).contains("shear"), "{}", stderr(&o));

    let o = bin(&["solve", "--rho", "0.1", "--beta", "0.99"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = bin(&["validate"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = bin(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(bin(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn solve_validate_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(&["solve", "--kernel", "additive", "--rho", "0.1", "--out", "p.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let stored: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("p.verify.json")).unwrap()).unwrap();

    let o = bin(&["validate", "--profile", "p.json", "--out", "v.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let again: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("v.json")).unwrap()).unwrap();
    let (a, b) = (stored["residual"].as_f64().unwrap(), again["residual"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    for key in ["residual", "omega_fit_rate", "derivative_ratio", "envelope", "tails"] {
        assert!(again.get(key).is_some(), "missing {key}");
    }

    let original = load_profile(&d.join("p.json")).unwrap();
    let o = bin(&["export", "--profile", "p.json", "--format", "json", "--out", "q.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let copy: ProfileFile = load_profile(&d.join("q.json")).unwrap();
    assert_eq!(copy, original);

    let o = bin(&["export", "--profile", "p.json", "--format", "csv", "--out", "p.csv"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(d.join("p.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x", "lambda", "xi", "g"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), original.lambda.grid.n);
    for (r, &v) in rows.iter().zip(&original.lambda.values) {
        assert_eq!(r[1].parse::<f64>().unwrap(), v);
    }
    // xi overflows f64 at the right end and is written from its logarithm
    let last = rows.last().unwrap();
    assert!(last[2].ends_with("e173"), "{}", &last[2]);
}

#[test]
fn non_convergence_writes_partial_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["solve", "--rho", "0.2", "--max-iter", "2", "--out", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let p = load_profile(&dir.path().join("p.json")).unwrap();
    assert!(!p.report.converged);
    assert_eq!(p.report.iterations, 2);
}

#[test]
fn corrupt_profile_names_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"kernel\": \"additive\", \"rho\": }").unwrap();
    let o = bin(&["validate", "--profile", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("byte 30"), "{}", stderr(&o));
    let o = bin(&["validate", "--profile", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn probe_needs_a_normalised_profile() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(&["probe", "--kernel", "shear", "--synthetic"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("normalize"), "{}", stderr(&o));

    let o =
        bin(&["probe", "--kernel", "shear", "--synthetic", "--normalize", "--threshold-a", "2", "--out", "r.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: ProbeReport = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(r.a, 2.0);
    assert_eq!(r.r0, 100.0 * r.d);
    assert!(r.q > 0.0 && r.q < 1.0);
    assert_eq!(r.flag, r.lhs > r.rhs);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    for key in ["alpha", "beta0", "A", "R0", "D", "M_dual", "omega_R0", "q", "n_bar", "lhs", "rhs", "flag", "b_hat"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["sweep", "--rhos", "0.05,0.1", "--out", "s.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("s.csv")).unwrap();
    assert_eq!(
        rd.headers().unwrap(),
        vec!["rho", "converged", "iterations", "max_ratio", "final_weighted_residual", "error"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[1] == "true"));
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_coagself"))
            .args(["solve", "--rho", "0.1", "--grid", "-30,30,513"])
            .env("COAGSELF_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(run("1"), run("0"));
    let o = Command::new(env!("CARGO_BIN_EXE_coagself"))
        .args(["solve", "--rho", "0.1"])
        .env("COAGSELF_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
