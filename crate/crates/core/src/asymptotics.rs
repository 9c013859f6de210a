//! Long-time expansions of the monomer-bulk system and the center-manifold check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_log_log, LineFit};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    /// `1/(n+2)`
    pub beta: f64,
    /// `n(n-1)/2`
    pub a: f64,
    /// `((n+1)/n) (alpha/(n+1))^(1/(n+1))`
    pub b: f64,
    /// `n(n-1)/(n+1)`
    pub d: f64,
}

impl AsymptoticConstants {
    pub fn new(params: &ModelParams) -> Self {
        let nf = params.nf();
        let alpha = params.alpha();
        Self {
            beta: 1.0 / (nf + 2.0),
            a: nf * (nf - 1.0) / 2.0,
            b: (nf + 1.0) / nf * (alpha / (nf + 1.0)).powf(1.0 / (nf + 1.0)),
            d: nf * (nf - 1.0) / (nf + 1.0),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `(alpha/(n+1))^(1/(n+1)) t^(-1/(n+1))`
pub fn monomer_leading(t: f64, params: &ModelParams) -> f64 {
    let nf = params.nf();
    (params.alpha() / (nf + 1.0)).powf(1.0 / (nf + 1.0)) * t.powf(-1.0 / (nf + 1.0))
}

/// Two-term large-time monomer concentration, with second coefficient `n(n-1)/(n+1)`.
pub fn monomer_asymptote(t: f64, params: &ModelParams) -> Result<f64> {
    check_positive("t", t)?;
    let d = AsymptoticConstants::new(params).d;
    Ok(monomer_leading(t, params) + d / t)
}

pub fn tau_of_t_leading(t: f64, params: &ModelParams) -> f64 {
    let nf = params.nf();
    AsymptoticConstants::new(params).b * t.powf(nf / (nf + 1.0))
}

/// `B t^(n/(n+1)) + D log t`
pub fn tau_of_t_asymptote(t: f64, params: &ModelParams) -> Result<f64> {
    check_positive("t", t)?;
    Ok(tau_of_t_leading(t, params) + AsymptoticConstants::new(params).d * t.ln())
}

fn t_of_tau_constant(params: &ModelParams) -> f64 {
    let nf = params.nf();
    (nf / (nf + 1.0)).powf((nf + 1.0) / nf) * ((nf + 1.0) / params.alpha()).powf(1.0 / nf)
}

pub fn t_of_tau_leading(tau: f64, params: &ModelParams) -> f64 {
    let nf = params.nf();
    t_of_tau_constant(params) * tau.powf((nf + 1.0) / nf)
}

/// `K tau^((n+1)/n) - (n-1) K tau^(1/n) log tau`, `K = (n/(n+1))^((n+1)/n) ((n+1)/alpha)^(1/n)`
pub fn t_of_tau_asymptote(tau: f64, params: &ModelParams) -> Result<f64> {
    check_positive("tau", tau)?;
    let nf = params.nf();
    let k = t_of_tau_constant(params);
    Ok(t_of_tau_leading(tau, params) - (nf - 1.0) * k * tau.powf(1.0 / nf) * tau.ln())
}

/// `1 + (n-1)(1-1/n) log tau / tau`, the limit of `(n tau/alpha)^((n-1)/n) c1^(n-1)`.
pub fn scaled_monomer_asymptote(tau: f64, params: &ModelParams) -> Result<f64> {
    check_positive("tau", tau)?;
    let nf = params.nf();
    Ok(1.0 + (nf - 1.0) * (1.0 - 1.0 / nf) * tau.ln() / tau)
}

/// The quantity compared with [`scaled_monomer_asymptote`].
pub fn scaled_monomer(tau: f64, c1: f64, params: &ModelParams) -> f64 {
    let nf = params.nf();
    (nf * tau / params.alpha()).powf((nf - 1.0) / nf) * c1.powi(params.n() as i32 - 1)
}

pub fn zeta_of_t_leading(t: f64, params: &ModelParams) -> f64 {
    let c = AsymptoticConstants::new(params);
    let ab = params.alpha() * c.beta;
    ((1.0 - c.beta) / ab.powf(c.beta)).powf(1.0 / (1.0 - c.beta)) * t.powf(1.0 / (1.0 - c.beta))
}

/// Two-term expansion of `zeta(t) = int 1/x`.
pub fn zeta_of_t_asymptote(t: f64, params: &ModelParams) -> Result<f64> {
    check_positive("t", t)?;
    let c = AsymptoticConstants::new(params);
    let ab = params.alpha() * c.beta;
    let e = 2.0 * c.beta / (1.0 - c.beta);
    Ok(zeta_of_t_leading(t, params) - c.a * ((1.0 - c.beta) / ab).powf(e) * t.powf(e))
}

/// Which terms of the center-manifold series to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ManifoldSeries {
    #[default]
    Full,
    /// Without the `x^(2n+4)` term.
    DropLast,
}

/// Dense polynomial with a running bound on its rounding error per coefficient.
#[derive(Debug, Clone)]
struct Poly {
    c: Vec<f64>,
    err: Vec<f64>,
}

impl Poly {
    fn zero(len: usize) -> Self {
        Self {
            c: vec![0.0; len],
            err: vec![0.0; len],
        }
    }

    fn from_terms(terms: &[(usize, f64)]) -> Self {
        let len = terms.iter().map(|t| t.0 + 1).max().unwrap_or(1);
        let mut p = Self::zero(len);
        for &(k, v) in terms {
            p.c[k] += v;
            p.err[k] += f64::EPSILON * v.abs();
        }
        p
    }

    fn add(&self, other: &Poly, sign: f64) -> Poly {
        let len = self.c.len().max(other.c.len());
        let mut out = Poly::zero(len);
        for k in 0..len {
            let a = self.c.get(k).copied().unwrap_or(0.0);
            let b = sign * other.c.get(k).copied().unwrap_or(0.0);
            out.c[k] = a + b;
            out.err[k] = self.err.get(k).copied().unwrap_or(0.0)
                + other.err.get(k).copied().unwrap_or(0.0)
                + f64::EPSILON * (a.abs() + b.abs());
        }
        out
    }

    fn mul(&self, other: &Poly) -> Poly {
        let len = self.c.len() + other.c.len() - 1;
        let mut out = Poly::zero(len);
        let terms = self.c.len().min(other.c.len()) as f64;
        for (i, (a, ea)) in self.c.iter().zip(&self.err).enumerate() {
            for (j, (b, eb)) in other.c.iter().zip(&other.err).enumerate() {
                out.c[i + j] += a * b;
                out.err[i + j] += a.abs() * eb + ea * b.abs() + (terms + 1.0) * f64::EPSILON * (a * b).abs();
            }
        }
        out
    }

    fn scale(&self, s: f64) -> Poly {
        Poly {
            c: self.c.iter().map(|v| v * s).collect(),
            err: self
                .err
                .iter()
                .zip(&self.c)
                .map(|(e, v)| e * s.abs() + f64::EPSILON * (v * s).abs())
                .collect(),
        }
    }

    fn derivative(&self) -> Poly {
        let len = self.c.len().saturating_sub(1).max(1);
        let mut out = Poly::zero(len);
        for k in 1..self.c.len() {
            out.c[k - 1] = k as f64 * self.c[k];
            out.err[k - 1] = k as f64 * self.err[k];
        }
        out
    }
}

fn manifold_poly(params: &ModelParams, series: ManifoldSeries) -> Poly {
    let n = params.n();
    let nf = params.nf();
    let a = params.alpha();
    let mut terms = vec![
        (n, nf),
        (n + 2, -1.0 / a),
        (2 * n + 2, nf * (nf - 1.0) / (a * a)),
    ];
    if series == ManifoldSeries::Full {
        terms.push((2 * n + 4, -(nf + 1.0) / (a * a * a)));
    }
    Poly::from_terms(&terms)
}

/// `n x^n - x^(n+2)/alpha + n(n-1) x^(2n+2)/alpha^2 - (n+1) x^(2n+4)/alpha^3`
pub fn center_manifold_phi(x: f64, params: &ModelParams) -> f64 {
    let p = manifold_poly(params, ManifoldSeries::Full);
    p.c.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Invariance defect of the series as an exact polynomial in `x`.
///
/// Coefficients that cancel to within their rounding bound are set to zero,
/// which keeps the residual resolvable far below `eps * phi(x)`.
#[derive(Debug, Clone)]
pub struct ManifoldResidual {
    coeffs: Vec<f64>,
    bounds: Vec<f64>,
}

impl ManifoldResidual {
    pub fn new(params: &ModelParams, series: ManifoldSeries) -> Self {
        let n = params.n();
        let nf = params.nf();
        let a = params.alpha();
        let phi = manifold_poly(params, series);
        let dphi = phi.derivative();
        let xn = Poly::from_terms(&[(n, 1.0)]);
        let x1 = Poly::from_terms(&[(1, 1.0)]);
        let xn1 = Poly::from_terms(&[(n + 1, 1.0)]);
        let xn2 = Poly::from_terms(&[(n + 2, 1.0)]);
        // phi' (phi x - n x^(n+1))
        let lhs = dphi.mul(&phi.mul(&x1).add(&xn1.scale(nf), -1.0));
        // -alpha phi - x^(n+2) + phi^2 + alpha n x^n - n phi x^n
        let rhs = phi
            .scale(-a)
            .add(&xn2, -1.0)
            .add(&phi.mul(&phi), 1.0)
            .add(&xn.scale(a * nf), 1.0)
            .add(&phi.mul(&xn).scale(nf), -1.0);
        let r = lhs.add(&rhs, -1.0);
        let mut coeffs = r.c;
        let bounds = r.err;
        for (c, b) in coeffs.iter_mut().zip(&bounds) {
            if c.abs() <= 4.0 * b {
                *c = 0.0;
            }
        }
        Self { coeffs, bounds }
    }

    /// Lowest power with a non-zero coefficient.
    pub fn order(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| *c != 0.0)
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Rounding bound of [`eval`](Self::eval) at `x`.
    pub fn noise(&self, x: f64) -> f64 {
        let ax = x.abs();
        let surviving: f64 = self
            .coeffs
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .filter(|(_, (c, _))| **c != 0.0)
            .map(|(k, (c, b))| (b + 4.0 * f64::EPSILON * c.abs()) * ax.powi(k as i32))
            .sum();
        surviving
    }
}

/// Fitted log-log slope of `|R(x)|` over `x_grid`.
pub fn manifold_residual_order(
    params: &ModelParams,
    x_grid: &[f64],
    series: ManifoldSeries,
) -> Result<LineFit> {
    let res = ManifoldResidual::new(params, series);
    let (xs, rs): (Vec<f64>, Vec<f64>) = x_grid
        .iter()
        .filter(|x| x.is_finite() && **x > 0.0)
        .map(|&x| (x, res.eval(x).abs()))
        .filter(|&(x, r)| r > 10.0 * res.noise(x) && r > f64::MIN_POSITIVE)
        .unzip();
    if xs.len() < 4 {
        return Err(Error::DegenerateGrid { usable: xs.len() });
    }
    fit_log_log(&xs, &rs).ok_or(Error::DegenerateGrid { usable: xs.len() })
}

/// `count` points spaced geometrically from `hi` down to `lo`.
pub fn geometric_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![hi];
    }
    let r = (lo / hi).powf(1.0 / (count as f64 - 1.0));
    (0..count).map(|k| hi * r.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(alpha: f64, n: usize) -> ModelParams {
        ModelParams::new(alpha, n).unwrap()
    }

    #[test]
    fn monomer_example() {
        let v = monomer_asymptote(1e6, &p(1.0, 2)).unwrap();
        assert_relative_eq!(v, (1.0f64 / 3.0).cbrt() * 1e-2 + 2.0 / 3.0 * 1e-6, max_relative = 1e-14);
        assert_relative_eq!(v, 6.93428e-3, max_relative = 1e-5);
    }

    #[test]
    fn scaled_monomer_example() {
        let v = scaled_monomer_asymptote(1e3, &p(1.0, 2)).unwrap();
        assert_relative_eq!(v, 1.0034539, max_relative = 1e-7);
    }

    #[test]
    fn t_of_tau_example() {
        let params = p(1.0, 2);
        let lead = (2.0f64 / 3.0).powf(1.5) * 3f64.sqrt() * 1e6;
        assert_relative_eq!(t_of_tau_leading(1e4, &params), lead, max_relative = 1e-14);
        let full = t_of_tau_asymptote(1e4, &params).unwrap();
        assert_relative_eq!(full, lead - (2.0f64 / 3.0).powf(1.5) * 3f64.sqrt() * 100.0 * 1e4f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn constants_are_positive_and_consistent() {
        for n in 2..8 {
            for alpha in [0.3, 1.0, 4.0] {
                let params = p(alpha, n);
                let c = AsymptoticConstants::new(&params);
                assert!(c.beta > 0.0 && c.a > 0.0 && c.b > 0.0 && c.d > 0.0);
                assert_relative_eq!(c.beta, 1.0 / (n as f64 + 2.0));
                assert_relative_eq!(2.0 * c.a / (n as f64 + 1.0), c.d, max_relative = 1e-15);
                // zeta leading term inverts t = (alpha beta)^beta / (1 - beta) zeta^(1-beta)
                let t = 1e5;
                let z = zeta_of_t_leading(t, &params);
                let back = (alpha * c.beta).powf(c.beta) / (1.0 - c.beta) * z.powf(1.0 - c.beta);
                assert_relative_eq!(back, t, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn time_scale_expansions_are_mutually_inverse() {
        let params = p(1.0, 3);
        let mut prev = f64::INFINITY;
        for k in 4..12 {
            let t = 10f64.powi(k);
            let tau = tau_of_t_asymptote(t, &params).unwrap();
            let back = t_of_tau_asymptote(tau, &params).unwrap();
            let rel = ((back - t) / t).abs();
            assert!(rel < prev, "t = {t}: {rel} !< {prev}");
            prev = rel;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn phi_example() {
        let v = center_manifold_phi(0.1, &p(1.0, 2));
        assert_relative_eq!(v, 2e-2 - 1e-4 + 2e-6 - 3e-8, max_relative = 1e-14);
        assert_eq!(center_manifold_phi(0.0, &p(1.0, 2)), 0.0);
    }

    // leading residual coefficients from a computer-algebra expansion of the defect
    #[test]
    fn residual_leading_terms() {
        let cases = [
            (2, ManifoldSeries::Full, 8, 4.0),
            (2, ManifoldSeries::DropLast, 8, 7.0),
            (3, ManifoldSeries::Full, 11, 36.0),
            (3, ManifoldSeries::DropLast, 10, 4.0),
        ];
        for alpha in [1.0, 0.7, 2.5] {
            for (n, series, order, coeff) in cases {
                let r = ManifoldResidual::new(&p(alpha, n), series);
                assert_eq!(r.order(), Some(order), "n = {n}, {series:?}, alpha = {alpha}");
                assert_relative_eq!(r.coefficient(order), coeff / (alpha * alpha), max_relative = 1e-12);
            }
        }
        let r = ManifoldResidual::new(&p(1.0, 2), ManifoldSeries::Full);
        assert_relative_eq!(r.coefficient(10), -22.0, max_relative = 1e-12);
    }

    #[test]
    fn residual_matches_direct_evaluation_where_resolvable() {
        let params = p(1.3, 2);
        let r = ManifoldResidual::new(&params, ManifoldSeries::Full);
        let x: f64 = 0.3;
        let a = params.alpha();
        let phi = center_manifold_phi(x, &params);
        let h = 1e-6;
        let dphi = (center_manifold_phi(x + h, &params) - center_manifold_phi(x - h, &params)) / (2.0 * h);
        let direct = dphi * (phi * x - 2.0 * x.powi(3))
            - (-a * phi - x.powi(4) + phi * phi + 2.0 * a * x * x - 2.0 * phi * x * x);
        assert_relative_eq!(r.eval(x), direct, max_relative = 1e-5);
    }

    #[test]
    fn degenerate_grid() {
        let err = manifold_residual_order(&p(1.0, 2), &[0.1, 0.05], ManifoldSeries::Full).unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid { usable: 2 }));
    }

    #[test]
    fn residual_slopes() {
        let grid = geometric_grid(1e-1, 1e-3, 40);
        let s2 = manifold_residual_order(&p(1.0, 2), &grid, ManifoldSeries::Full).unwrap();
        assert!(s2.slope >= 8.0 - 0.3, "{s2:?}");
        let s4 = manifold_residual_order(&p(1.0, 4), &grid, ManifoldSeries::DropLast).unwrap();
        assert!((s4.slope - 12.0).abs() < 0.3, "{s4:?}");
    }
}
