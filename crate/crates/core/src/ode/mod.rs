//! Adaptive one-step ODE solvers.
//!
//! Two methods share one driver: the explicit Dormand-Prince 5(4) pair and the
//! three-stage Radau IIA collocation method (order 5, L-stable). The latter needs
//! the system to solve `(sigma I - J) x = b` for complex shifts `sigma`, which the
//! cluster systems do in linear time by exploiting their sparsity.

mod dopri5;
mod radau;

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use radau::RadauTableau;

pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Components that must stay non-negative (concentrations).
    fn nonnegative(&self) -> Range<usize> {
        0..0
    }
}

/// Linear algebra the implicit method needs from a system.
pub trait ShiftedSolve: OdeSystem {
    type Jacobian;

    fn jacobian(&self, t: f64, y: &[f64]) -> Self::Jacobian;

    /// Overwrites `b` with the solution of `(sigma I - J) x = b`.
    fn solve_shifted(&self, jac: &Self::Jacobian, sigma: Complex64, b: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DormandPrince,
    #[default]
    Radau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    pub max_steps: usize,
    /// Undershoots down to `-undershoot_factor * atol` are clamped to zero.
    pub undershoot_factor: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            method: Method::Radau,
            max_steps: 5_000_000,
            undershoot_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub solves: usize,
    /// Slightly negative components reset to zero.
    pub clamped: usize,
}

pub(crate) fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Clamps tiny negative undershoots in the non-negative range; larger ones are an error.
pub(crate) fn enforce_nonnegative<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &mut [f64],
    opts: &OdeOptions,
    stats: &mut Stats,
) -> Result<()> {
    let floor = -opts.undershoot_factor * opts.atol;
    for i in sys.nonnegative() {
        let v = y[i];
        if v < 0.0 {
            if v >= floor {
                y[i] = 0.0;
                stats.clamped += 1;
            } else {
                return Err(Error::NonPositiveState { t, index: i, value: v });
            }
        }
    }
    Ok(())
}

/// Integrates from `(t0, y)` through every time in `samples` (sorted, all `>= t0`),
/// calling `observe` at each one. Steps are shortened to land on the samples.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y: &mut Vec<f64>,
    samples: &[f64],
    opts: &OdeOptions,
    stats: &mut Stats,
    observe: F,
) -> Result<()>
where
    S: ShiftedSolve,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    match opts.method {
        Method::DormandPrince => dopri5::integrate(sys, t0, y, samples, opts, stats, observe),
        Method::Radau => radau::integrate(sys, t0, y, samples, opts, stats, observe),
    }
}

/// Explicit integration for systems without a shifted solve.
pub fn integrate_explicit<S, F>(
    sys: &S,
    t0: f64,
    y: &mut Vec<f64>,
    samples: &[f64],
    opts: &OdeOptions,
    stats: &mut Stats,
    observe: F,
) -> Result<()>
where
    S: OdeSystem,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    dopri5::integrate(sys, t0, y, samples, opts, stats, observe)
}

pub(crate) fn initial_step(t0: f64, first_target: f64) -> f64 {
    let span = (first_target - t0).abs();
    let scale = t0.abs().max(span).max(1e-300);
    (1e-6 * scale).min(span.max(1e-300))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Small dense system described by closures, solved with a dense LU.
    pub struct Dense<F, J> {
        pub dim: usize,
        pub f: F,
        pub jac: J,
    }

    impl<F, J> OdeSystem for Dense<F, J>
    where
        F: Fn(f64, &[f64], &mut [f64]),
        J: Fn(f64, &[f64]) -> DMatrix<f64>,
    {
        fn dim(&self) -> usize {
            self.dim
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
            (self.f)(t, y, dy)
        }
    }

    impl<F, J> ShiftedSolve for Dense<F, J>
    where
        F: Fn(f64, &[f64], &mut [f64]),
        J: Fn(f64, &[f64]) -> DMatrix<f64>,
    {
        type Jacobian = DMatrix<f64>;

        fn jacobian(&self, t: f64, y: &[f64]) -> DMatrix<f64> {
            (self.jac)(t, y)
        }

        fn solve_shifted(&self, jac: &DMatrix<f64>, sigma: Complex64, b: &mut [Complex64]) {
            let n = self.dim;
            let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
                let d = if i == j { sigma } else { Complex64::new(0.0, 0.0) };
                d - Complex64::new(jac[(i, j)], 0.0)
            });
            let rhs = DVector::from_column_slice(b);
            let x = m.lu().solve(&rhs).expect("singular shifted matrix");
            b.copy_from_slice(x.as_slice());
        }
    }
}
