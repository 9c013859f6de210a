//! Model parameters, initial data and the closed-form scaling profile.
//!
//! The kinetics are
//!
//! ```text
//! c1' = alpha - n c1^n - c1 * sum_{j>=n} c_j
//! cn' = c1^n - c1 cn
//! cj' = c1 c_{j-1} - c1 cj,   j > n
//! ```
//!
//! with deposition rate `alpha` and critical cluster size `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Default exclusion half-width around the singular similarity value `eta = 1`.
pub const DEFAULT_ETA_GUARD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    alpha: f64,
    n: usize,
}

impl ModelParams {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deposition rate alpha must be positive and finite, got {alpha}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "critical cluster size n must be at least 2, got {n}"
            )));
        }
        Ok(Self { alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `(n-1)/n`, the exponent of the similarity scaling.
    pub fn scaling_exponent(&self) -> f64 {
        (self.nf() - 1.0) / self.nf()
    }

    /// `(n tau / alpha)^((n-1)/n)`, the factor turning `c_j(tau)` into the scaled solution.
    pub fn scale_factor(&self, tau: f64) -> f64 {
        (self.nf() * tau / self.alpha).powf(self.scaling_exponent())
    }

    pub fn ln_scale_factor(&self, tau: f64) -> f64 {
        self.scaling_exponent() * (self.nf() * tau / self.alpha).ln()
    }
}

/// Initial cluster distribution.
///
/// `PowerLaw` sets `c_j(0) = rho * j^(-mu)` for every `j >= n`, an exact power law
/// (so both bounds of the admissible band equal `rho`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialData {
    Monomeric { c1_0: f64 },
    #[serde(rename = "powerlaw")]
    PowerLaw { c1_0: f64, rho: f64, mu: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Monomeric { c1_0: 0.0 }
    }
}

impl InitialData {
    /// Empty surface: no monomers and no clusters.
    pub fn monomeric() -> Self {
        Self::default()
    }

    pub fn monomeric_with(c1_0: f64) -> Result<Self> {
        let data = InitialData::Monomeric { c1_0 };
        data.validate()?;
        Ok(data)
    }

    pub fn power_law(rho: f64, mu: f64) -> Result<Self> {
        Self::power_law_with(0.0, rho, mu)
    }

    pub fn power_law_with(c1_0: f64, rho: f64, mu: f64) -> Result<Self> {
        let data = InitialData::PowerLaw { c1_0, rho, mu };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let c1_0 = self.c1_0();
        if !(c1_0.is_finite() && c1_0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial monomer concentration must be non-negative, got {c1_0}"
            )));
        }
        if let InitialData::PowerLaw { rho, mu, .. } = *self {
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "power-law amplitude rho must be positive, got {rho}"
                )));
            }
            if !(mu.is_finite() && mu > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power-law exponent mu must exceed 1, got {mu}"
                )));
            }
        }
        Ok(())
    }

    pub fn c1_0(&self) -> f64 {
        match *self {
            InitialData::Monomeric { c1_0 } | InitialData::PowerLaw { c1_0, .. } => c1_0,
        }
    }

    pub fn mu(&self) -> Option<f64> {
        match *self {
            InitialData::Monomeric { .. } => None,
            InitialData::PowerLaw { mu, .. } => Some(mu),
        }
    }

    pub fn is_monomeric(&self) -> bool {
        matches!(self, InitialData::Monomeric { .. })
    }

    /// `c_j(0)` for a cluster size `j >= n`.
    pub fn cluster(&self, j: usize) -> f64 {
        match *self {
            InitialData::Monomeric { .. } => 0.0,
            InitialData::PowerLaw { rho, mu, .. } => rho * (j as f64).powf(-mu),
        }
    }

    /// `ln c_j(0)`, `-inf` when the cluster is absent.
    pub fn ln_cluster(&self, j: usize) -> f64 {
        match *self {
            InitialData::Monomeric { .. } => f64::NEG_INFINITY,
            InitialData::PowerLaw { rho, mu, .. } => rho.ln() - mu * (j as f64).ln(),
        }
    }

    /// `sum_{j >= first} c_j(0)`.
    pub fn count_from(&self, first: usize) -> f64 {
        match *self {
            InitialData::Monomeric { .. } => 0.0,
            InitialData::PowerLaw { rho, mu, .. } => rho * special::power_tail_sum(mu, first),
        }
    }

    /// Initial bulk `y(0) = sum_{j >= n} c_j(0)`.
    pub fn bulk(&self, params: &ModelParams) -> f64 {
        self.count_from(params.n())
    }
}

/// Snapshot of the tracked part of the cluster distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub t: f64,
    pub c1: f64,
    /// First tracked cluster size (the critical size `n`).
    pub first: usize,
    /// `c_first, ..., c_J`.
    pub tail: Vec<f64>,
}

impl ClusterState {
    /// Index of the last tracked cluster size.
    pub fn truncation(&self) -> usize {
        self.first + self.tail.len() - 1
    }

    /// `c_j` for `j >= first`; zero beyond the truncation.
    pub fn c(&self, j: usize) -> f64 {
        if j == 1 {
            return self.c1;
        }
        j.checked_sub(self.first)
            .and_then(|k| self.tail.get(k))
            .copied()
            .unwrap_or(0.0)
    }
}

/// One evaluation of the scaled solution against the limiting profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityPoint {
    pub eta: f64,
    pub tau: f64,
    pub j: usize,
    pub scaled_value: f64,
    pub profile_value: f64,
    pub abs_error: f64,
}

impl SimilarityPoint {
    pub fn new(eta: f64, tau: f64, j: usize, scaled_value: f64, profile_value: f64) -> Self {
        Self {
            eta,
            tau,
            j,
            scaled_value,
            profile_value,
            abs_error: (scaled_value - profile_value).abs(),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidEta {
            eta,
            reason: "must be positive and finite",
        });
    }
    if eta == 1.0 {
        return Err(Error::InvalidEta {
            eta,
            reason: "the profile is singular at eta = 1",
        });
    }
    Ok(())
}

/// Rejects `eta` closer to 1 than `guard`.
pub fn check_eta_guard(eta: f64, guard: f64) -> Result<()> {
    check_eta(eta)?;
    if (eta - 1.0).abs() < guard {
        return Err(Error::InvalidEta {
            eta,
            reason: "too close to the excluded value 1",
        });
    }
    Ok(())
}

/// Limit profile `(1 - eta)^(-(n-1)/n)` on `(0, 1)`, zero beyond 1.
pub fn similarity_profile(eta: f64, params: &ModelParams) -> Result<f64> {
    check_eta(eta)?;
    if eta < 1.0 {
        Ok((1.0 - eta).powf(-params.scaling_exponent()))
    } else {
        Ok(0.0)
    }
}

/// Asymptotic size of `|scaled - profile|` at `(eta, tau)`.
///
/// For `eta < 1` this is the `log((1-eta) tau) / ((1-eta) tau)` law; for `eta > 1`
/// it is `(n/alpha)^((n-1)/n) eta^(-mu) tau^((n-1)/n - mu)` with the unknown O(1)
/// prefactor set to one, so only its scaling in `tau` is meaningful. Monomeric data
/// carry no such term and give zero.
pub fn rate_envelope(eta: f64, tau: f64, params: &ModelParams, init: &InitialData) -> Result<f64> {
    check_eta(eta)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let nf = params.nf();
    let p = params.scaling_exponent();
    if eta < 1.0 {
        let u = (1.0 - eta) * tau;
        if u <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "envelope needs (1 - eta) tau > 1, got {u}"
            )));
        }
        Ok((nf - 1.0) * (1.0 - 1.0 / nf) * (1.0 - eta).powf(-p) * u.ln() / u)
    } else {
        match init.mu() {
            None => Ok(0.0),
            Some(mu) => Ok((nf / params.alpha()).powf(p) * eta.powf(-mu) * tau.powf(p - mu)),
        }
    }
}
