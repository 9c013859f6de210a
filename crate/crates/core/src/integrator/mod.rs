//! Time integration of the cluster hierarchy and of the monomer-bulk system.
//!
//! Both systems become stiff at large times (the fast rate is about `y ~ alpha / x`),
//! so the default method is the implicit Radau IIA scheme; Dormand-Prince is kept as
//! an explicit alternative for short horizons and cross-checks.

mod systems;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use systems::{FullSystem, MonomerBulkSystem};
pub use trajectory::{fmt, Record, Trajectory};

use crate::asymptotics::AsymptoticConstants;
use crate::error::{Error, Result, Violations};
use crate::model::{ClusterState, InitialData, ModelParams};
use crate::ode::{self, OdeOptions, OdeSystem, Stats};
use crate::representation::poisson_memory_sum;

/// Default threshold for the cluster concentration at the truncation index.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub ode: OdeOptions,
    /// Ratio between consecutive recorded times.
    pub sample_ratio: f64,
    /// First recorded time (capped by `t_end`).
    pub first_sample: f64,
    pub tail_tol: f64,
    pub truncation: Truncation,
    /// Times at which the whole cluster distribution is kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            sample_ratio: 1.02,
            first_sample: 1e-3,
            tail_tol: DEFAULT_TAIL_TOL,
            truncation: Truncation::Auto,
            snapshot_times: Vec::new(),
        }
    }
}

impl IntegratorOptions {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.ode.rtol = rtol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::new();
        v.check(
            (1e-12..=1e-4).contains(&self.ode.rtol),
            format!("relative tolerance must lie in [1e-12, 1e-4], got {}", self.ode.rtol),
        );
        v.check(
            self.ode.atol.is_finite() && self.ode.atol > 0.0,
            format!("absolute tolerance must be positive, got {}", self.ode.atol),
        );
        v.check(
            self.sample_ratio.is_finite() && self.sample_ratio > 1.0,
            format!("sample ratio must exceed 1, got {}", self.sample_ratio),
        );
        v.check(
            self.first_sample.is_finite() && self.first_sample > 0.0,
            format!("first sample time must be positive, got {}", self.first_sample),
        );
        v.check(
            self.tail_tol.is_finite() && self.tail_tol > 0.0,
            format!("tail tolerance must be positive, got {}", self.tail_tol),
        );
        v.check(
            self.snapshot_times.iter().all(|t| t.is_finite() && *t > 0.0),
            "snapshot times must be positive",
        );
        v.into_result()
    }
}

/// `ceil(1.2 tau(t_end)) + 64` with `tau(t_end)` from the leading long-time term,
/// and never below `n + 10`.
pub fn auto_truncation(params: &ModelParams, t_end: f64) -> usize {
    let tau = AsymptoticConstants::new(params).b * t_end.max(0.0).powf(params.nf() / (params.nf() + 1.0));
    let j = (1.2 * tau).ceil() as usize + 64;
    j.max(params.n() + 10)
}

/// Recorded times: geometric from `first_sample` to `t_end`, plus `t_end` and `extra`.
pub fn sample_times(t_end: f64, first_sample: f64, ratio: f64, extra: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    if t_end <= 0.0 {
        return out;
    }
    let start = first_sample.min(t_end);
    let mut k = 0;
    loop {
        let t = start * ratio.powi(k);
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(t_end);
    out.extend(extra.iter().copied().filter(|&t| t > 0.0 && t <= t_end));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn check_horizon(t_end: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "final time must be non-negative and finite, got {t_end}"
        )));
    }
    Ok(())
}

/// Runs `sys` through `samples`; when `zeta_from_first_sample` is set, the `zeta`
/// quadrature is switched on only at the first sample.
fn run<S, F>(
    sys: &mut S,
    set_zeta: impl Fn(&mut S, bool),
    zeta_from_first_sample: bool,
    y: &mut Vec<f64>,
    samples: &[f64],
    opts: &OdeOptions,
    stats: &mut Stats,
    mut observe: F,
) -> Result<()>
where
    S: ode::ShiftedSolve,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    if samples.is_empty() {
        return Ok(());
    }
    if zeta_from_first_sample {
        set_zeta(sys, false);
        ode::integrate(&*sys, 0.0, y, &samples[..1], opts, stats, &mut observe)?;
        set_zeta(sys, true);
        ode::integrate(&*sys, samples[0], y, &samples[1..], opts, stats, &mut observe)
    } else {
        set_zeta(sys, true);
        ode::integrate(&*sys, 0.0, y, samples, opts, stats, observe)
    }
}

/// Integrates the hierarchy truncated at `J` and records `(t, tau, zeta, c1, y)`.
///
/// A run fails with [`Error::TruncationBreach`] once `c_J`, less the part still
/// carried over from the initial clusters, exceeds `opts.tail_tol`.
pub fn integrate_full(
    params: &ModelParams,
    init: &InitialData,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    init.validate()?;
    check_horizon(t_end)?;
    opts.validate()?;
    let n = params.n();
    let truncation = match opts.truncation {
        Truncation::Auto => auto_truncation(params, t_end),
        Truncation::Fixed(j) => j,
    };
    if truncation < n + 10 {
        return Err(Error::InvalidParameter(format!(
            "truncation must be at least n + 10 = {}, got {truncation}",
            n + 10
        )));
    }
    let mut sys = FullSystem {
        params: *params,
        truncation,
        frozen_tail: init.count_from(truncation + 1),
        zeta_active: true,
    };
    let m = sys.window_len();
    let mut y = vec![0.0; sys.dim()];
    y[0] = init.c1_0();
    for k in 0..m {
        y[1 + k] = init.cluster(n + k);
    }
    let mass0 = sys.window_mass(&y);
    let samples = sample_times(t_end, opts.first_sample, opts.sample_ratio, &opts.snapshot_times);

    let mut records = Vec::with_capacity(samples.len());
    let mut mass_defect = Vec::with_capacity(samples.len());
    let mut snapshots = Vec::new();
    let mut stats = Stats::default();
    let alpha = params.alpha();
    let probe = sys.clone();
    let observe = |t: f64, s: &[f64]| -> Result<()> {
        let tau = s[probe.tau_index()];
        let excess = s[m] - poisson_memory_sum(truncation, tau, init, params);
        if excess > opts.tail_tol {
            return Err(Error::TruncationBreach {
                t,
                index: truncation,
                value: s[m],
                tolerance: opts.tail_tol,
            });
        }
        records.push(Record {
            t,
            tau,
            zeta: s[probe.zeta_index()],
            c1: s[0],
            y: probe.bulk(s),
        });
        let mass = probe.window_mass(s) + s[probe.gained_index()];
        mass_defect.push((mass - mass0 - alpha * t) / (alpha * t));
        if opts.snapshot_times.contains(&t) {
            snapshots.push(ClusterState {
                t,
                c1: s[0],
                first: n,
                tail: s[1..=m].to_vec(),
            });
        }
        Ok(())
    };
    let lazy_zeta = init.c1_0() == 0.0;
    run(
        &mut sys,
        |s, on| s.zeta_active = on,
        lazy_zeta,
        &mut y,
        &samples,
        &opts.ode,
        &mut stats,
        observe,
    )?;
    if stats.clamped > 0 {
        log::info!("clamped {} negative undershoots to zero", stats.clamped);
    }
    Ok(Trajectory::new(*params, records, Some(mass_defect), snapshots, Some(truncation), stats))
}

/// Integrates the closed system `x' = alpha - n x^n - x y`, `y' = x^n`.
pub fn integrate_monomer_bulk(
    params: &ModelParams,
    x0: f64,
    y0: f64,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    check_horizon(t_end)?;
    opts.validate()?;
    if !(x0.is_finite() && x0 >= 0.0 && y0.is_finite() && y0 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial monomer and bulk must be non-negative, got x0 = {x0}, y0 = {y0}"
        )));
    }
    let mut sys = MonomerBulkSystem {
        params: *params,
        zeta_active: true,
    };
    let samples = sample_times(t_end, opts.first_sample, opts.sample_ratio, &[]);
    let mut state = vec![x0, y0, 0.0, 0.0];
    let mut records = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    run(
        &mut sys,
        |s, on| s.zeta_active = on,
        x0 == 0.0,
        &mut state,
        &samples,
        &opts.ode,
        &mut stats,
        |t, s| {
            records.push(Record {
                t,
                tau: s[2],
                zeta: s[3],
                c1: s[0],
                y: s[1],
            });
            Ok(())
        },
    )?;
    Ok(Trajectory::new(*params, records, None, Vec::new(), None, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(alpha: f64, n: usize) -> ModelParams {
        ModelParams::new(alpha, n).unwrap()
    }

    #[test]
    fn sample_grid_shape() {
        assert!(sample_times(0.0, 1e-3, 1.02, &[]).is_empty());
        assert_eq!(sample_times(1e-4, 1e-3, 1.02, &[]), vec![1e-4]);
        let s = sample_times(10.0, 1e-3, 1.5, &[2.0, 20.0]);
        assert_eq!(s[0], 1e-3);
        assert_eq!(*s.last().unwrap(), 10.0);
        assert!(s.contains(&2.0));
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn auto_truncation_rule() {
        let p = params(1.0, 2);
        assert_eq!(auto_truncation(&p, 0.0), 64);
        let b = AsymptoticConstants::new(&p).b;
        assert_eq!(auto_truncation(&p, 1e3), (1.2 * b * 100.0).ceil() as usize + 64);
    }

    #[test]
    fn short_horizon_is_linear_in_t() {
        let p = params(1.0, 2);
        let traj = integrate_full(&p, &InitialData::monomeric(), 1e-3, &IntegratorOptions::default()).unwrap();
        let r = traj.records().last().unwrap();
        assert_relative_eq!(r.c1, 1e-3, max_relative = 1e-6);
        assert_relative_eq!(r.tau, 0.5e-6, max_relative = 1e-5);
    }

    #[test]
    fn header_only_for_zero_horizon() {
        let traj = integrate_full(&params(1.0, 2), &InitialData::monomeric(), 0.0, &IntegratorOptions::default()).unwrap();
        assert!(traj.records().is_empty());
    }

    #[test]
    fn tolerance_bounds_are_enforced() {
        let opts = IntegratorOptions::default().with_rtol(1e-3);
        let err = integrate_monomer_bulk(&params(1.0, 2), 0.0, 0.0, 1.0, &opts).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn small_truncation_breaches() {
        let opts = IntegratorOptions {
            truncation: Truncation::Fixed(16),
            ..IntegratorOptions::default()
        };
        let err = integrate_full(&params(1.0, 2), &InitialData::monomeric(), 1e4, &opts).unwrap_err();
        assert!(matches!(err, Error::TruncationBreach { index: 16, .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn explicit_and_implicit_agree() {
        let p = params(1.0, 3);
        let init = InitialData::power_law(0.5, 1.5).unwrap();
        let mut opts = IntegratorOptions {
            truncation: Truncation::Fixed(60),
            ..IntegratorOptions::default()
        };
        let a = integrate_full(&p, &init, 20.0, &opts).unwrap();
        opts.ode.method = ode::Method::DormandPrince;
        let b = integrate_full(&p, &init, 20.0, &opts).unwrap();
        for (ra, rb) in a.records().iter().zip(b.records()) {
            assert_relative_eq!(ra.c1, rb.c1, max_relative = 1e-7);
            assert_relative_eq!(ra.tau, rb.tau, max_relative = 1e-7);
        }
    }
}
