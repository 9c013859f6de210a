//! Long-time behaviour beyond the acceptance gate: differenced expansions that
//! cancel initial-data constants, and invariants of the rate harness.

use deposition::asymptotics::{t_of_tau_leading, tau_of_t_leading, AsymptoticConstants};
use deposition::harness::{geometric_tau_grid, measure_convergence, sweep, MeasureOptions, Regime, SweepConfig};
use deposition::integrator::{integrate_monomer_bulk, IntegratorOptions};
use deposition::model::{InitialData, ModelParams};

fn p2() -> ModelParams {
    ModelParams::new(1.0, 2).unwrap()
}

// tau(t) = B t^(2/3) + D log t + c0 + o(1); differences remove c0.
#[test]
fn tau_log_term_between_two_times() {
    let p = p2();
    let d = AsymptoticConstants::new(&p).d;
    let traj = integrate_monomer_bulk(&p, 0.0, 0.0, 1e8, &IntegratorOptions::default()).unwrap();
    let (t1, t2) = (1e6, 1e8);
    let excess = |t: f64| traj.tau_of_t(t).unwrap() - tau_of_t_leading(t, &p);
    let ratio = (excess(t2) - excess(t1)) / (d * (t2 / t1).ln());
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

// tau ((n tau)^(1/2) c1 - 1) = (1/2) log tau + C + o(1) for n = 2.
#[test]
fn scaled_monomer_log_term_between_two_times() {
    let p = p2();
    let t_end = 1.5 * t_of_tau_leading(1e5, &p);
    let traj = integrate_monomer_bulk(&p, 0.0, 0.0, t_end, &IntegratorOptions::default()).unwrap();
    let g = |tau: f64| tau * ((2.0 * tau).sqrt() * traj.c1_of_tau(tau).unwrap() - 1.0);
    let ratio = (g(1e5) - g(1e3)) / (0.5 * (1e5f64 / 1e3).ln());
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn one_over_tau_constant_depends_on_initial_data() {
    let p = p2();
    let tau = 1e4;
    let constant = |x0: f64, y0: f64| {
        let traj = integrate_monomer_bulk(&p, x0, y0, 1.5 * t_of_tau_leading(tau, &p), &IntegratorOptions::default()).unwrap();
        tau * ((2.0 * tau).sqrt() * traj.c1_of_tau(tau).unwrap() - 1.0) - 0.5 * tau.ln()
    };
    let empty = constant(0.0, 0.0);
    let loaded = constant(0.1, 10.0);
    assert!(empty < 0.0 && loaded < 10.0 * empty, "{empty} {loaded}");
}

#[test]
fn real_and_integer_sizes_differ_by_order_one_over_tau() {
    let grid = geometric_tau_grid(1e2, 3e3, 15);
    let m = measure_convergence(0.5, &p2(), &InitialData::monomeric(), &grid, &MeasureOptions::default()).unwrap();
    let c = m
        .points
        .iter()
        .map(|pt| pt.point.tau * (pt.scaled_real - pt.point.scaled_value).abs() / pt.point.scaled_value)
        .fold(0.0, f64::max);
    assert!(c.is_finite() && c < 1.0, "{c}");
}

#[test]
fn monomeric_data_beyond_front_decay_faster_than_powers() {
    let opts = MeasureOptions {
        min_decades: 0.5,
        ..MeasureOptions::default()
    };
    for (lo, hi) in [(10.0, 50.0), (50.0, 200.0), (200.0, 1000.0)] {
        for eta in [2.0, 3.0] {
            let m = measure_convergence(eta, &p2(), &InitialData::monomeric(), &geometric_tau_grid(lo, hi, 10), &opts).unwrap();
            assert!(m.fit.slope < -3.0, "eta {eta} on [{lo}, {hi}]: {}", m.fit.slope);
            assert_eq!(m.regime, Regime::Exponential);
        }
    }
}

#[test]
fn fast_decaying_data_still_set_the_pointwise_rate() {
    let init = InitialData::power_law(1.0, 3.0).unwrap();
    let grid = geometric_tau_grid(1e2, 3e3, 15);
    let m = measure_convergence(2.0, &p2(), &init, &grid, &MeasureOptions::default()).unwrap();
    assert!((m.fit.slope + 2.5).abs() < 0.05, "{}", m.fit.slope);
    assert_eq!(m.regime, Regime::PowerLaw);
    assert_eq!(m.compact_regime, Regime::LogOverTau);
    for pt in &m.points {
        let tau = pt.point.tau;
        assert!(pt.point.abs_error < 0.5 * tau.ln() / tau);
    }
}

#[test]
fn sweep_records_failed_cells_and_continues() {
    let cfg = SweepConfig::from_toml(
        r#"
n = [2]
alpha = [1.0]
eta = [0.5, 2.0]
tau_min = 100.0
tau_max = 3000.0
tau_points = 10
quad_tol = 1e-12
quad_max_depth = 1

[[init]]
kind = "monomeric"
c1_0 = 0.0
"#,
    )
    .unwrap();
    let report = sweep(&cfg).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert!(report.cells[0].outcome.is_ok());
    let failure = report.cells[1].outcome.as_ref().unwrap_err();
    assert_eq!(failure.code, 4);

    let dir = tempfile::tempdir().unwrap();
    report.write_bundle(dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("n,alpha,mu,eta,slope,r2,regime,envelope_ratio_median"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].contains("quadrature did not converge"));
    assert!(dir.path().join("cells/cell_0000.csv").exists());
    assert!(!dir.path().join("cells/cell_0001.csv").exists());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains(&cfg.hash()));
    assert!(manifest.contains("quad_max_depth = 1"));
}
