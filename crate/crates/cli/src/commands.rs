use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deposition::asymptotics::{
    self, geometric_grid, manifold_residual_order, ManifoldResidual, ManifoldSeries,
};
use deposition::error::{Error, Result, Violations};
use deposition::harness::{self, rate_point, trajectory_for, SweepConfig};
use deposition::integrator::{fmt, integrate_full, integrate_monomer_bulk, IntegratorOptions, Truncation};
use deposition::model::{check_eta_guard, similarity_profile};
use deposition::quadrature::QuadOptions;
use deposition::representation::Representation;

use crate::{
    model_params, AsymptoticsArgs, ManifoldArgs, MonomerArgs, Oracle, ProfileArgs, QueryArgs, RateArgs, SeriesChoice,
    SimulateArgs,
};

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct RunInfo<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
}

fn manifest_text(command: &str, config: &impl Serialize) -> String {
    let run = RunInfo {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
    };
    let mut text = String::from("[run]\n");
    text.push_str(&toml::to_string(&run).expect("run info serializes"));
    text.push_str("\n[config]\n");
    text.push_str(&toml::to_string(config).expect("arguments serialize"));
    text
}

/// Writes `<out>.manifest.toml` beside a file output.
fn write_manifest(out: &Option<PathBuf>, command: &str, config: &impl Serialize) -> Result<()> {
    if let Some(path) = out {
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.toml");
        fs::write(PathBuf::from(name), manifest_text(command, config))?;
    }
    Ok(())
}

fn check_tol(v: &mut Violations, name: &str, tol: f64, lo: f64, hi: f64) {
    v.check((lo..=hi).contains(&tol), format!("{name}: must lie in [{lo:e}, {hi:e}], got {tol}"));
}

fn check_grid(v: &mut Violations, name: &str, lo: f64, hi: f64, points: usize) {
    v.check(
        lo.is_finite() && lo > 0.0 && hi > lo,
        format!("{name}: need 0 < lower < upper, got [{lo}, {hi}]"),
    );
    v.check(points >= 2, format!("--points: need at least 2, got {points}"));
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut v = Violations::new();
    let model = a.model.resolve(&mut v);
    v.check(
        a.t_end.is_finite() && a.t_end >= 0.0,
        format!("--t-end: must be non-negative, got {}", a.t_end),
    );
    check_tol(&mut v, "--tol", a.tol, 1e-12, 1e-4);
    if let Truncation::Fixed(j) = a.truncation {
        v.check(
            j >= a.model.n + 10,
            format!("--truncation: must be at least n + 10 = {}, got {j}", a.model.n + 10),
        );
    }
    v.into_result()?;
    let (params, init) = model.expect("validated");
    let opts = IntegratorOptions {
        truncation: a.truncation,
        ..IntegratorOptions::default().with_rtol(a.tol)
    };
    let traj = integrate_full(&params, &init, a.t_end, &opts)?;
    if a.mass_check {
        let worst = traj.mass_defect().unwrap_or(&[]).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        log::info!("largest relative mass-balance defect {worst:.3e}");
    }
    traj.write_csv(output(&a.out)?, a.mass_check)?;
    write_manifest(&a.out, "simulate", a)
}

pub fn profile(a: &ProfileArgs) -> Result<()> {
    let mut v = Violations::new();
    let params = model_params(&mut v, a.alpha, a.n);
    let etas = if a.eta.is_empty() {
        v.check(
            a.eta_min >= 0.0 && a.eta_max > a.eta_min,
            format!("eta range: need 0 <= eta_min < eta_max, got [{}, {}]", a.eta_min, a.eta_max),
        );
        v.check(a.points >= 2, format!("--points: need at least 2, got {}", a.points));
        let step = (a.eta_max - a.eta_min) / (a.points.max(2) - 1) as f64;
        (0..a.points).map(|k| a.eta_min + step * k as f64).filter(|e| *e > 0.0 && *e != 1.0).collect()
    } else {
        a.eta.clone()
    };
    v.into_result()?;
    let params = params.expect("validated");
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record(["eta", "profile"])?;
    for eta in etas {
        w.write_record([fmt(eta), fmt(similarity_profile(eta, &params)?)])?;
    }
    w.flush()?;
    write_manifest(&a.out, "profile", a)
}

fn rate_config(a: &RateArgs) -> Result<SweepConfig> {
    if let Some(path) = &a.config {
        return SweepConfig::from_toml(&fs::read_to_string(path)?);
    }
    let mut v = Violations::new();
    let model = a.model.resolve(&mut v);
    v.check(!a.eta.is_empty(), "--eta: at least one value required (or pass --config)");
    v.into_result()?;
    let (params, init) = model.expect("validated");
    Ok(SweepConfig {
        n: vec![params.n()],
        alpha: vec![params.alpha()],
        init: vec![init],
        eta: a.eta.clone(),
        tau_min: a.tau_min,
        tau_max: a.tau_max,
        tau_points: a.points,
        eta_guard: a.eta_guard,
        rtol: a.tol,
        quad_tol: a.quad_tol,
        quad_max_depth: QuadOptions::default().max_depth,
    })
}

pub fn rate(a: &RateArgs) -> Result<()> {
    let config = rate_config(a)?;
    config.validate()?;
    let report = harness::sweep(&config)?;
    if let Some(dir) = &a.out {
        report.write_bundle(dir)?;
    }
    let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; see the error column", report.cells.len());
    }
    let mut out = BufWriter::new(io::stdout().lock());
    report.write_summary(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn monomer(a: &MonomerArgs) -> Result<()> {
    let mut v = Violations::new();
    let model = a.model.resolve(&mut v);
    check_grid(&mut v, "t range", a.t_min, a.t_end, a.points);
    check_tol(&mut v, "--tol", a.tol, 1e-12, 1e-4);
    v.into_result()?;
    let (params, init) = model.expect("validated");
    let opts = IntegratorOptions::default().with_rtol(a.tol);
    let traj = integrate_monomer_bulk(&params, init.c1_0(), init.bulk(&params), a.t_end, &opts)?;

    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record([
        "t",
        "tau",
        "zeta",
        "c1",
        "c1_asymptote",
        "tau_asymptote",
        "zeta_asymptote",
        "scaled_monomer",
        "scaled_monomer_asymptote",
    ])?;
    let mut last = f64::NAN;
    for t in geometric_grid(a.t_end, a.t_min, a.points).into_iter().rev() {
        let r = *traj.nearest(t).expect("non-empty trajectory");
        if r.t == last {
            continue;
        }
        last = r.t;
        w.write_record([
            fmt(r.t),
            fmt(r.tau),
            fmt(r.zeta),
            fmt(r.c1),
            fmt(asymptotics::monomer_asymptote(r.t, &params)?),
            fmt(asymptotics::tau_of_t_asymptote(r.t, &params)?),
            fmt(asymptotics::zeta_of_t_asymptote(r.t, &params)?),
            fmt(asymptotics::scaled_monomer(r.tau, r.c1, &params)),
            fmt(asymptotics::scaled_monomer_asymptote(r.tau, &params)?),
        ])?;
    }
    w.flush()?;
    write_manifest(&a.out, "monomer", a)
}

pub fn manifold(a: &ManifoldArgs) -> Result<()> {
    let mut v = Violations::new();
    let params = model_params(&mut v, a.alpha, a.n);
    check_grid(&mut v, "x range", a.x_min, a.x_max, a.points);
    v.check(a.points >= 4, format!("--points: need at least 4 for a fit, got {}", a.points));
    v.into_result()?;
    let params = params.expect("validated");
    let grid = geometric_grid(a.x_max, a.x_min, a.points);
    let series: Vec<(&str, ManifoldSeries)> = match a.series {
        SeriesChoice::Full => vec![("full", ManifoldSeries::Full)],
        SeriesChoice::DropLast => vec![("drop-last", ManifoldSeries::DropLast)],
        SeriesChoice::Both => vec![("full", ManifoldSeries::Full), ("drop-last", ManifoldSeries::DropLast)],
    };
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    if a.residuals {
        w.write_record(["series", "x", "residual", "noise"])?;
        for (name, s) in &series {
            let res = ManifoldResidual::new(&params, *s);
            for &x in &grid {
                w.write_record([name.to_string(), fmt(x), fmt(res.eval(x)), fmt(res.noise(x))])?;
            }
        }
    } else {
        w.write_record(["series", "slope", "intercept", "r2", "points", "leading_order"])?;
        for (name, s) in &series {
            let fit = manifold_residual_order(&params, &grid, *s)?;
            let order = ManifoldResidual::new(&params, *s).order().map(|o| o.to_string()).unwrap_or_default();
            w.write_record([
                name.to_string(),
                fmt(fit.slope),
                fmt(fit.intercept),
                fmt(fit.r2),
                fit.points.to_string(),
                order,
            ])?;
        }
    }
    w.flush()?;
    write_manifest(&a.out, "manifold", a)
}

pub fn asymptotics(a: &AsymptoticsArgs) -> Result<()> {
    let mut v = Violations::new();
    let params = model_params(&mut v, a.alpha, a.n);
    check_grid(&mut v, "grid", a.from, a.to, a.points);
    v.into_result()?;
    let p = params.expect("validated");
    let grid: Vec<f64> = geometric_grid(a.to, a.from, a.points).into_iter().rev().collect();
    let arg = match a.oracle {
        Oracle::TOfTau | Oracle::ScaledMonomer => "tau",
        _ => "t",
    };
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record([arg, "leading", "asymptote"])?;
    for s in grid {
        let (lead, full) = match a.oracle {
            Oracle::Monomer => (asymptotics::monomer_leading(s, &p), asymptotics::monomer_asymptote(s, &p)?),
            Oracle::TauOfT => (asymptotics::tau_of_t_leading(s, &p), asymptotics::tau_of_t_asymptote(s, &p)?),
            Oracle::TOfTau => (asymptotics::t_of_tau_leading(s, &p), asymptotics::t_of_tau_asymptote(s, &p)?),
            Oracle::ScaledMonomer => (1.0, asymptotics::scaled_monomer_asymptote(s, &p)?),
            Oracle::ZetaOfT => (asymptotics::zeta_of_t_leading(s, &p), asymptotics::zeta_of_t_asymptote(s, &p)?),
        };
        w.write_record([fmt(s), fmt(lead), fmt(full)])?;
    }
    w.flush()?;
    write_manifest(&a.out, "asymptotics", a)
}

#[derive(Deserialize)]
struct QueryRow {
    eta: f64,
    tau: f64,
}

fn read_queries(path: &Path) -> Result<Vec<QueryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn query(a: &QueryArgs) -> Result<()> {
    let mut v = Violations::new();
    let model = a.model.resolve(&mut v);
    check_tol(&mut v, "--tol", a.tol, 1e-12, 1e-4);
    check_tol(&mut v, "--quad-tol", a.quad_tol, 1e-12, 1e-6);
    let rows = read_queries(&a.input)?;
    for (i, q) in rows.iter().enumerate() {
        if let Err(e) = check_eta_guard(q.eta, 0.0) {
            v.check(false, format!("row {}: {e}", i + 1));
        }
        v.check(
            q.tau.is_finite() && q.tau > 0.0,
            format!("row {}: tau must be positive, got {}", i + 1, q.tau),
        );
    }
    v.into_result()?;
    let (params, init) = model.expect("validated");
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record(["eta", "tau", "j", "scaled", "profile", "abs_error", "envelope"])?;
    if !rows.is_empty() {
        let tau_max = rows.iter().map(|q| q.tau).fold(0.0, f64::max);
        let traj = trajectory_for(&params, &init, tau_max, &IntegratorOptions::default().with_rtol(a.tol))?;
        let quad = QuadOptions {
            rel_tol: a.quad_tol,
            ..QuadOptions::default()
        };
        let rep = Representation::new(params, init, &traj, quad)?;
        for q in &rows {
            let r = rate_point(&rep, &init, q.eta, q.tau)?;
            let s = r.point;
            w.write_record([
                fmt(s.eta),
                fmt(s.tau),
                s.j.to_string(),
                fmt(s.scaled_value),
                fmt(s.profile_value),
                fmt(s.abs_error),
                fmt(r.envelope),
            ])?;
        }
    }
    w.flush()?;
    write_manifest(&a.out, "query", a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{InitKind, ModelArgs};

    #[test]
    fn manifest_echoes_arguments() {
        let args = ModelArgs {
            n: 3,
            alpha: 0.5,
            init: InitKind::Powerlaw,
            mu: Some(1.5),
            rho: 1.0,
            c1_0: 0.0,
        };
        let text = manifest_text("simulate", &args);
        assert!(text.starts_with("[run]\n"));
        assert!(text.contains("command = \"simulate\""));
        assert!(text.contains("init = \"powerlaw\""));
        assert!(text.contains("mu = 1.5"));
    }

    #[test]
    fn model_violations_are_collected() {
        let args = ModelArgs {
            n: 1,
            alpha: -1.0,
            init: InitKind::Powerlaw,
            mu: None,
            rho: 1.0,
            c1_0: 0.0,
        };
        let mut v = Violations::new();
        assert!(args.resolve(&mut v).is_none());
        assert_eq!(v.0.len(), 3, "{v}");
    }
}
