use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deposition")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn zero_horizon_gives_header_only() {
    let o = run(&["simulate", "--n", "2", "--alpha", "1", "--t-end", "0"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "t,tau,zeta,c1,y\n");
}

#[test]
fn mass_check_column() {
    let o = run(&["simulate", "--t-end", "100", "--mass-check"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t,tau,zeta,c1,y,mass_defect\n"));
    let t = column(&text, "t");
    let defect = column(&text, "mass_defect");
    assert!(t.iter().zip(&defect).filter(|(t, _)| **t >= 1.0).all(|(_, d)| d.abs() <= 1e-6));
}

#[test]
fn short_truncation_on_long_horizon_is_a_breach() {
    let o = run(&["simulate", "--t-end", "1000", "--truncation", "16"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncation breach"));
}

#[test]
fn config_errors_list_every_violation() {
    let o = run(&["simulate", "--n", "1", "--alpha", "-2", "--init", "powerlaw", "--t-end", "-1", "--tol", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert_eq!(err.lines().filter(|l| l.trim_start().starts_with("- ")).count(), 5, "{err}");
}

#[test]
fn profile_beyond_front_is_zero() {
    let o = run(&["profile", "--eta", "2"]);
    assert!(o.status.success());
    assert_eq!(column(&stdout(&o), "profile"), vec![0.0]);
}

#[test]
fn manifold_slope_for_n2() {
    let o = run(&["manifold", "--n", "2", "--series", "full"]);
    assert!(o.status.success());
    let slope = column(&stdout(&o), "slope")[0];
    assert!((slope - 8.0).abs() < 0.3, "{slope}");
}

#[test]
fn rate_summary_matches_envelope_band() {
    let o = run(&["rate", "--eta", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let ratio = column(&text, "envelope_ratio_median")[0];
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    assert!(text.contains("LogOverTau"));
}

#[test]
fn query_batch() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("q.csv");
    fs::write(&input, "eta,tau\n0.5,1000\n2,100\n").unwrap();
    let o = run(&["query", "--input", input.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("eta,tau,j,scaled,profile,abs_error,envelope\n"));
    assert_eq!(column(&text, "j"), vec![500.0, 200.0]);

    fs::write(&input, "eta,tau\n1,1000\n0.5,-3\n").unwrap();
    let o = run(&["query", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    for name in ["a.csv", "b.csv"] {
        let o = run(&["simulate", "--init", "powerlaw", "--mu", "1.5", "--t-end", "50", "--out", &out(name)]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(out("a.csv")).unwrap(), fs::read(out("b.csv")).unwrap());
    let manifest = fs::read_to_string(out("a.csv") + ".manifest.toml").unwrap();
    assert!(manifest.contains("mu = 1.5"));

    for (name, threads) in [("bundle_a", "1"), ("bundle_b", "4")] {
        let o = run(&["--threads", threads, "rate", "--eta", "0.5,2", "--tau-min", "100", "--tau-max", "3000", "--out", &out(name)]);
        assert!(o.status.success());
    }
    for file in ["summary.csv", "manifest.toml", "cells/cell_0000.csv", "cells/cell_0001.csv"] {
        let a = fs::read(dir.path().join("bundle_a").join(file)).unwrap();
        let b = fs::read(dir.path().join("bundle_b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn csv_values_round_trip() {
    let o = run(&["asymptotics", "--oracle", "t-of-tau", "--from", "10", "--to", "1e4", "--points", "7"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for r in rdr.records() {
        for field in r.unwrap().iter() {
            let x: f64 = field.parse().unwrap();
            assert_eq!(format!("{x:.16e}"), field);
        }
    }
}
