//! Convergence-rate experiments: scaled cluster profiles against the similarity
//! limit over a grid of `tau`, log-log rate fits and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::t_of_tau_leading;
use crate::error::{Error, Result, Violations};
use crate::fit::{fit_line, LineFit};
use crate::integrator::{fmt, integrate_monomer_bulk, IntegratorOptions, Trajectory};
use crate::model::{check_eta_guard, rate_envelope, similarity_profile, InitialData, ModelParams, SimilarityPoint, DEFAULT_ETA_GUARD};
use crate::quadrature::QuadOptions;
use crate::representation::{MonomerProfile, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    LogOverTau,
    PowerLaw,
    Exponential,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::LogOverTau => "LogOverTau",
            Regime::PowerLaw => "PowerLaw",
            Regime::Exponential => "Exponential",
        })
    }
}

/// Rate on compact sets of `eta` for power-law data with exponent `mu`:
/// power law below `2 - 1/n`, `log tau / tau` from there on.
pub fn regime_classify(mu: f64, params: &ModelParams) -> Regime {
    if mu < 2.0 - 1.0 / params.nf() {
        Regime::PowerLaw
    } else {
        Regime::LogOverTau
    }
}

/// Rate at a single `eta`: the initial data are always felt beyond the front.
pub fn pointwise_regime(eta: f64, init: &InitialData) -> Regime {
    if eta < 1.0 {
        Regime::LogOverTau
    } else if init.is_monomeric() {
        Regime::Exponential
    } else {
        Regime::PowerLaw
    }
}

pub fn compact_regime(init: &InitialData, params: &ModelParams) -> Regime {
    match init.mu() {
        Some(mu) => regime_classify(mu, params),
        None => Regime::LogOverTau,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub integrator: IntegratorOptions,
    pub quad: QuadOptions,
    pub eta_guard: f64,
    /// Minimum span of the `tau` grid in decades.
    pub min_decades: f64,
    /// Leading fraction of the grid left out of the slope fit.
    pub burn_in: f64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            quad: QuadOptions::default(),
            eta_guard: DEFAULT_ETA_GUARD,
            min_decades: 1.0,
            burn_in: 0.2,
        }
    }
}

impl MeasureOptions {
    /// Same experiment with tighter numerics: half the integrator tolerance, or
    /// twice the quadrature subdivision depth.
    pub fn refined(&self, integrator: bool, quadrature: bool) -> Self {
        let mut out = self.clone();
        if integrator {
            out.integrator.ode.rtol *= 0.5;
            out.integrator.ode.atol *= 0.5;
        }
        if quadrature {
            out.quad = out.quad.refined();
        }
        out
    }
}

/// One `(eta, tau)` evaluation in both the integer and the real-argument form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub point: SimilarityPoint,
    /// `ln |scaled - profile|` with `j = round(eta tau)`; finite even when the error underflows.
    pub ln_error: f64,
    pub scaled_real: f64,
    pub ln_error_real: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateMeasurement {
    pub eta: f64,
    pub points: Vec<RatePoint>,
    /// Fit of `ln error` against `ln tau` (integer cluster sizes) after the burn-in.
    pub fit: LineFit,
    pub fit_real: LineFit,
    pub regime: Regime,
    pub compact_regime: Regime,
}

impl RateMeasurement {
    pub fn tau_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.point.tau).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.point.abs_error).collect()
    }

    /// `error / envelope` per point; NaN where the envelope vanishes.
    pub fn envelope_ratios(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| if p.envelope > 0.0 { p.point.abs_error / p.envelope } else { f64::NAN })
            .collect()
    }

    pub fn envelope_ratio_median(&self) -> f64 {
        let mut r: Vec<f64> = self.envelope_ratios().into_iter().filter(|v| v.is_finite()).collect();
        if r.is_empty() {
            return f64::NAN;
        }
        r.sort_by(f64::total_cmp);
        let m = r.len();
        if m % 2 == 1 {
            r[m / 2]
        } else {
            0.5 * (r[m / 2 - 1] + r[m / 2])
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "eta", "tau", "j", "scaled", "profile", "abs_error", "envelope", "ln_abs_error", "scaled_real", "ln_abs_error_real",
        ])?;
        for p in &self.points {
            let s = &p.point;
            w.write_record([
                fmt(s.eta),
                fmt(s.tau),
                s.j.to_string(),
                fmt(s.scaled_value),
                fmt(s.profile_value),
                fmt(s.abs_error),
                fmt(p.envelope),
                fmt(p.ln_error),
                fmt(p.scaled_real),
                fmt(p.ln_error_real),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` geometrically spaced values from `lo` to `hi`.
pub fn geometric_tau_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let r = (hi / lo).powf(1.0 / (count as f64 - 1.0));
    let mut g: Vec<f64> = (0..count).map(|k| lo * r.powi(k as i32)).collect();
    g[count - 1] = hi;
    g
}

/// Monomer profile covering `[0, tau_max]`, from the closed monomer-bulk system.
pub fn trajectory_for(
    params: &ModelParams,
    init: &InitialData,
    tau_max: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    init.validate()?;
    let y0 = init.bulk(params);
    let mut t_end = (1.2 * t_of_tau_leading(tau_max, params)).max(1.0);
    loop {
        let traj = integrate_monomer_bulk(params, init.c1_0(), y0, t_end, opts)?;
        if traj.tau_max() >= tau_max {
            return Ok(traj);
        }
        t_end *= 2.0;
    }
}

/// `ln |scaled - profile|` from `ln scaled`.
fn ln_error(ln_scaled: f64, profile: f64) -> f64 {
    if profile == 0.0 {
        ln_scaled
    } else {
        (ln_scaled.exp() - profile).abs().ln()
    }
}

/// Evaluates one `(eta, tau)` cell of the similarity comparison.
pub fn rate_point<P: MonomerProfile + ?Sized>(
    rep: &Representation<'_, P>,
    init: &InitialData,
    eta: f64,
    tau: f64,
) -> Result<RatePoint> {
    let params = rep.params();
    let profile = similarity_profile(eta, params)?;
    let x = eta * tau;
    let j = x.round().max(params.nf()) as usize;
    let ln_int = rep.ln_scaled_cluster(j as f64, tau)?;
    let ln_real = rep.ln_scaled_cluster(x.max(params.nf()), tau)?;
    let envelope = if eta < 1.0 && (1.0 - eta) * tau <= 1.0 {
        f64::NAN
    } else {
        rate_envelope(eta, tau, params, init)?
    };
    let scaled = ln_int.exp();
    let mut point = SimilarityPoint::new(eta, tau, j, scaled, profile);
    if profile == 0.0 {
        point.abs_error = scaled;
    }
    Ok(RatePoint {
        point,
        ln_error: ln_error(ln_int, profile),
        scaled_real: ln_real.exp(),
        ln_error_real: ln_error(ln_real, profile),
        envelope,
    })
}

fn fit_ln(taus: &[f64], ln_err: &[f64], burn_in: f64) -> Result<LineFit> {
    let skip = (burn_in * taus.len() as f64).floor() as usize;
    let (x, y): (Vec<f64>, Vec<f64>) = taus[skip..]
        .iter()
        .zip(&ln_err[skip..])
        .filter(|(_, e)| e.is_finite())
        .map(|(t, e)| (t.ln(), *e))
        .unzip();
    if x.len() < 4 {
        return Err(Error::DegenerateGrid { usable: x.len() });
    }
    fit_line(&x, &y).ok_or(Error::DegenerateGrid { usable: x.len() })
}

fn check_grid(tau_grid: &[f64], min_decades: f64) -> Result<()> {
    if tau_grid.len() < 2 || tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("tau grid needs at least two positive values".into()));
    }
    if tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("tau grid must be strictly increasing".into()));
    }
    let decades = (tau_grid[tau_grid.len() - 1] / tau_grid[0]).log10();
    if decades < min_decades {
        return Err(Error::InsufficientDecades {
            decades,
            required: min_decades,
        });
    }
    Ok(())
}

/// Measures the convergence of the scaled solution at fixed `eta` on an existing trajectory.
pub fn measure_on(
    traj: &Trajectory,
    eta: f64,
    init: &InitialData,
    tau_grid: &[f64],
    opts: &MeasureOptions,
) -> Result<RateMeasurement> {
    let params = *traj.params();
    check_eta_guard(eta, opts.eta_guard)?;
    check_grid(tau_grid, opts.min_decades)?;
    let rep = Representation::new(params, *init, traj, opts.quad)?;
    let points = tau_grid
        .iter()
        .map(|&tau| rate_point(&rep, init, eta, tau))
        .collect::<Result<Vec<_>>>()?;
    let ln_int: Vec<f64> = points.iter().map(|p| p.ln_error).collect();
    let ln_real: Vec<f64> = points.iter().map(|p| p.ln_error_real).collect();
    Ok(RateMeasurement {
        eta,
        fit: fit_ln(tau_grid, &ln_int, opts.burn_in)?,
        fit_real: fit_ln(tau_grid, &ln_real, opts.burn_in)?,
        points,
        regime: pointwise_regime(eta, init),
        compact_regime: compact_regime(init, &params),
    })
}

/// Integrates the monomer profile and measures the rate at `eta` over `tau_grid`.
pub fn measure_convergence(
    eta: f64,
    params: &ModelParams,
    init: &InitialData,
    tau_grid: &[f64],
    opts: &MeasureOptions,
) -> Result<RateMeasurement> {
    check_eta_guard(eta, opts.eta_guard)?;
    check_grid(tau_grid, opts.min_decades)?;
    let tau_max = tau_grid[tau_grid.len() - 1];
    let traj = trajectory_for(params, init, tau_max, &opts.integrator)?;
    measure_on(&traj, eta, init, tau_grid, opts)
}

/// Cartesian sweep over `n`, `alpha`, initial data and `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    pub init: Vec<InitialData>,
    pub eta: Vec<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    #[serde(default = "default_guard")]
    pub eta_guard: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_depth")]
    pub quad_max_depth: u32,
}

fn default_guard() -> f64 {
    DEFAULT_ETA_GUARD
}
fn default_rtol() -> f64 {
    IntegratorOptions::default().ode.rtol
}
fn default_quad_tol() -> f64 {
    QuadOptions::default().rel_tol
}
fn default_depth() -> u32 {
    QuadOptions::default().max_depth
}

impl SweepConfig {
    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::new();
        v.check(!self.n.is_empty(), "n: at least one value required");
        for &n in &self.n {
            v.check(n >= 2, format!("n: must be at least 2, got {n}"));
        }
        v.check(!self.alpha.is_empty(), "alpha: at least one value required");
        for &a in &self.alpha {
            v.check(a.is_finite() && a > 0.0, format!("alpha: must be positive, got {a}"));
        }
        v.check(!self.init.is_empty(), "init: at least one initial condition required");
        for init in &self.init {
            if let Err(e) = init.validate() {
                v.check(false, format!("init: {e}"));
            }
        }
        v.check(!self.eta.is_empty(), "eta: at least one value required");
        for &eta in &self.eta {
            if let Err(e) = check_eta_guard(eta, self.eta_guard) {
                v.check(false, format!("eta: {e}"));
            }
        }
        v.check(
            self.tau_min.is_finite() && self.tau_min > 0.0 && self.tau_max > self.tau_min,
            format!("tau range: need 0 < tau_min < tau_max, got [{}, {}]", self.tau_min, self.tau_max),
        );
        v.check(self.tau_points >= 5, format!("tau_points: need at least 5, got {}", self.tau_points));
        v.check(
            (1e-12..=1e-4).contains(&self.rtol),
            format!("rtol: must lie in [1e-12, 1e-4], got {}", self.rtol),
        );
        v.check(
            (1e-12..=1e-6).contains(&self.quad_tol),
            format!("quad_tol: must lie in [1e-12, 1e-6], got {}", self.quad_tol),
        );
        v.check(self.quad_max_depth >= 1, "quad_max_depth: must be at least 1");
        v.check(self.eta_guard >= 0.0, "eta_guard: must be non-negative");
        v.into_result()
    }

    pub fn measure_options(&self) -> MeasureOptions {
        let mut opts = MeasureOptions::default();
        opts.integrator.ode.rtol = self.rtol;
        opts.quad.rel_tol = self.quad_tol;
        opts.quad.max_depth = self.quad_max_depth;
        opts.eta_guard = self.eta_guard;
        opts
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        geometric_tau_grid(self.tau_min, self.tau_max, self.tau_points)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub alpha: f64,
    pub init: InitialData,
    pub eta: f64,
    pub outcome: std::result::Result<RateMeasurement, CellFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub code: i32,
    pub message: String,
}

impl From<&Error> for CellFailure {
    fn from(e: &Error) -> Self {
        Self {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<Cell>,
}

/// Runs every cell; failures are recorded per cell and do not stop the sweep.
pub fn sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let opts = config.measure_options();
    let grid = config.tau_grid();

    // one trajectory per (n, alpha, init)
    let mut keys = Vec::new();
    for &n in &config.n {
        for &alpha in &config.alpha {
            for (k, init) in config.init.iter().enumerate() {
                keys.push((n, alpha, k, *init));
            }
        }
    }
    let trajectories: Vec<std::result::Result<Trajectory, CellFailure>> = keys
        .par_iter()
        .map(|&(n, alpha, _, init)| {
            let params = ModelParams::new(alpha, n)?;
            trajectory_for(&params, &init, config.tau_max, &opts.integrator)
        })
        .map(|r| r.map_err(|e| CellFailure::from(&e)))
        .collect();

    let mut specs = Vec::new();
    for (ti, &(n, alpha, _, init)) in keys.iter().enumerate() {
        for &eta in &config.eta {
            specs.push((ti, n, alpha, init, eta));
        }
    }
    let cells = specs
        .par_iter()
        .enumerate()
        .map(|(index, &(ti, n, alpha, init, eta))| {
            let outcome = match &trajectories[ti] {
                Ok(traj) => measure_on(traj, eta, &init, &grid, &opts).map_err(|e| CellFailure::from(&e)),
                Err(f) => Err(f.clone()),
            };
            Cell {
                index,
                n,
                alpha,
                init,
                eta,
                outcome,
            }
        })
        .collect();
    Ok(SweepReport {
        config: config.clone(),
        cells,
    })
}

fn opt_fmt(x: f64) -> String {
    if x.is_finite() {
        fmt(x)
    } else {
        String::new()
    }
}

impl SweepReport {
    /// Summary table, one row per cell in cell order.
    pub fn write_summary<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n", "alpha", "mu", "eta", "slope", "r2", "regime", "envelope_ratio_median", "compact_regime", "slope_real", "error_code", "error",
        ])?;
        for c in &self.cells {
            let mu = c.init.mu().map(fmt).unwrap_or_default();
            let row = match &c.outcome {
                Ok(m) => [
                    fmt(m.fit.slope),
                    fmt(m.fit.r2),
                    m.regime.to_string(),
                    opt_fmt(m.envelope_ratio_median()),
                    m.compact_regime.to_string(),
                    fmt(m.fit_real.slope),
                    String::new(),
                    String::new(),
                ],
                Err(f) => [
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    f.code.to_string(),
                    f.message.clone(),
                ],
            };
            let mut record = vec![c.n.to_string(), fmt(c.alpha), mu, fmt(c.eta)];
            record.extend(row);
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.csv`, `cells/cell_NNNN.csv` and `manifest.toml` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir.join("cells"))?;
        self.write_summary(fs::File::create(dir.join("summary.csv"))?)?;
        for c in &self.cells {
            if let Ok(m) = &c.outcome {
                m.write_csv(fs::File::create(dir.join("cells").join(format!("cell_{:04}.csv", c.index)))?)?;
            }
        }
        fs::write(dir.join("manifest.toml"), self.manifest())?;
        Ok(dir.to_path_buf())
    }

    pub fn manifest(&self) -> String {
        let mut meta = BTreeMap::new();
        meta.insert("tool", env!("CARGO_PKG_NAME").to_string());
        meta.insert("version", env!("CARGO_PKG_VERSION").to_string());
        meta.insert("config_sha256", self.config.hash());
        meta.insert("cells", self.cells.len().to_string());
        meta.insert(
            "failed_cells",
            self.cells.iter().filter(|c| c.outcome.is_err()).count().to_string(),
        );
        let mut out = String::new();
        out.push_str("[run]\n");
        out.push_str(&toml::to_string(&meta).expect("string map serializes"));
        out.push_str("\n[config]\n");
        out.push_str(&self.config.to_toml());
        out
    }
}
