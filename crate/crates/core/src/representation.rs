//! Exact solution of the linear cluster hierarchy in the `tau` time scale.
//!
//! ```text
//! c_j(tau) = e^-tau sum_{k=n}^{j} tau^(j-k)/(j-k)! c_k(0)
//!          + 1/(j-n)! int_0^tau c1(tau-s)^(n-1) s^(j-n) e^-s ds
//! ```
//!
//! The second term extends to real `x >= n` through `Gamma(x-n+1)`. Everything is
//! evaluated in log space because for `x > tau` the kernel mass inside `[0, tau]`
//! underflows long before the scaled value stops being interesting.

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{InitialData, ModelParams};
use crate::quadrature::{Integrator, QuadOptions};
use crate::special::{ln_factorial, ln_gamma, log_add_exp, log_sum_exp};

/// Drop the part of the kernel more than this many nats below its peak.
const KERNEL_CUTOFF: f64 = 80.0;

/// Monomer concentration as a function of `tau`.
pub trait MonomerProfile {
    fn c1_at(&self, tau: f64) -> f64;

    /// Largest `tau` at which the profile is known.
    fn tau_max(&self) -> f64;

    /// Points in `tau` where the profile is only piecewise smooth.
    fn knots(&self) -> &[f64] {
        &[]
    }
}

impl MonomerProfile for Trajectory {
    fn c1_at(&self, tau: f64) -> f64 {
        self.c1_of_tau(tau.clamp(0.0, self.tau_max()))
            .expect("clamped into range")
    }

    fn tau_max(&self) -> f64 {
        Trajectory::tau_max(self)
    }

    fn knots(&self) -> &[f64] {
        self.tau_knots()
    }
}

/// `c1 = kappa` for all `tau`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMonomer(pub f64);

impl MonomerProfile for ConstantMonomer {
    fn c1_at(&self, _tau: f64) -> f64 {
        self.0
    }

    fn tau_max(&self) -> f64 {
        f64::INFINITY
    }
}

/// `ln` of the initial-data term at cluster size `x` (integer or real).
///
/// Terms are `tau^(x-k)/Gamma(x-k+1) c_k(0) e^-tau` for `k = n..=floor(x)`, which at
/// integer `x = j` is the Poisson-weighted memory of the initial clusters.
pub fn ln_poisson_memory(x: f64, tau: f64, init: &InitialData, params: &ModelParams) -> f64 {
    let n = params.n();
    if init.is_monomeric() || x < n as f64 {
        return f64::NEG_INFINITY;
    }
    let top = x.floor() as usize;
    if tau == 0.0 {
        return if x == top as f64 { init.ln_cluster(top) } else { f64::NEG_INFINITY };
    }
    let ln_tau = tau.ln();
    let terms: Vec<f64> = (n..=top)
        .map(|k| {
            let l = x - k as f64;
            l * ln_tau - tau - ln_factorial(l) + init.ln_cluster(k)
        })
        .collect();
    log_sum_exp(&terms)
}

/// `e^-tau sum_{k=n}^{j} tau^(j-k)/(j-k)! c_k(0)`; zero for monomeric data.
pub fn poisson_memory_sum(j: usize, tau: f64, init: &InitialData, params: &ModelParams) -> f64 {
    ln_poisson_memory(j as f64, tau, init, params).exp()
}

/// Evaluator of the representation formula along one monomer profile.
pub struct Representation<'a, P: MonomerProfile + ?Sized> {
    params: ModelParams,
    init: InitialData,
    profile: &'a P,
    quad: Integrator,
}

impl<'a, P: MonomerProfile + ?Sized> Representation<'a, P> {
    pub fn new(params: ModelParams, init: InitialData, profile: &'a P, quad: QuadOptions) -> Result<Self> {
        if !(1e-12..=1e-6).contains(&quad.rel_tol) {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerance must lie in [1e-12, 1e-6], got {}",
                quad.rel_tol
            )));
        }
        init.validate()?;
        Ok(Self {
            params,
            init,
            profile,
            quad: Integrator::new(quad),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn check(&self, x: f64, tau: f64) -> Result<()> {
        if !(x.is_finite() && x >= self.params.nf()) {
            return Err(Error::InvalidParameter(format!(
                "cluster size must be at least n = {}, got {x}",
                self.params.n()
            )));
        }
        let max = self.profile.tau_max();
        if !(tau.is_finite() && (0.0..=max).contains(&tau)) {
            return Err(Error::OutOfRange { tau, min: 0.0, max });
        }
        Ok(())
    }

    /// `ln int_0^tau c1(tau-s)^(n-1) s^(x-n) e^-s ds / Gamma(x-n+1)`.
    pub fn ln_integral_term(&self, x: f64, tau: f64) -> Result<f64> {
        self.check(x, tau)?;
        if tau == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let p = x - self.params.nf();
        let lg = ln_gamma(p + 1.0);
        let ln_kernel = |s: f64| -> f64 {
            if p == 0.0 {
                -s
            } else if s <= 0.0 {
                f64::NEG_INFINITY
            } else {
                p * s.ln() - s - lg
            }
        };
        let peak = p.min(tau);
        let ln_peak = ln_kernel(peak.max(f64::MIN_POSITIVE));
        let above = |s: f64| ln_kernel(s) - ln_peak + KERNEL_CUTOFF;
        let lo = if peak > 0.0 && above(0.0) < 0.0 {
            bisect(&above, 0.0, peak)
        } else {
            0.0
        };
        let hi = if peak < tau && above(tau) < 0.0 {
            bisect(&above, tau, peak)
        } else {
            tau
        };

        let mut breaks = vec![lo, hi];
        if p < 4.0 {
            let panels = 8;
            breaks.extend((1..panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64));
        } else {
            let width = (p + 1.0).sqrt();
            breaks.push(peak);
            for m in 1..=6 {
                breaks.push(peak - m as f64 * width);
                breaks.push(peak + m as f64 * width);
            }
        }
        breaks.push(0.5 * tau);
        // pieces of the monomer profile map to s = tau - knot
        breaks.extend(self.profile.knots().iter().map(|k| tau - k));
        breaks.retain(|b| *b >= lo && *b <= hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let nm1 = self.params.n() as i32 - 1;
        let profile = self.profile;
        let integrand = |s: f64| -> f64 {
            let c = profile.c1_at(tau - s);
            (ln_kernel(s) - ln_peak).exp() * c.powi(nm1)
        };
        let r = self.quad.integrate(&breaks, integrand);
        if !r.converged {
            return Err(Error::QuadratureNonConvergence {
                x,
                tau,
                rel_error: r.abs_error / r.value.abs(),
            });
        }
        Ok(ln_peak + r.value.ln())
    }

    pub fn integral_term(&self, x: f64, tau: f64) -> Result<f64> {
        Ok(self.ln_integral_term(x, tau)?.exp())
    }

    /// `ln c_x(tau)`: initial-data memory plus the integral term.
    pub fn ln_cluster(&self, x: f64, tau: f64) -> Result<f64> {
        let integral = self.ln_integral_term(x, tau)?;
        let memory = ln_poisson_memory(x, tau, &self.init, &self.params);
        Ok(log_add_exp(memory, integral))
    }

    /// `ln` of `(n tau/alpha)^((n-1)/n) c_x(tau)`.
    pub fn ln_scaled_cluster(&self, x: f64, tau: f64) -> Result<f64> {
        let c = self.ln_cluster(x, tau)?;
        if tau == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.params.ln_scale_factor(tau) + c)
    }

    pub fn scaled_cluster(&self, x: f64, tau: f64) -> Result<f64> {
        Ok(self.ln_scaled_cluster(x, tau)?.exp())
    }
}

/// Root of `f` between `a` (where `f < 0`) and `b` (where `f >= 0`).
fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    a
}
