use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use super::{enforce_nonnegative, error_norm, initial_step, OdeOptions, ShiftedSolve, Stats};
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 7;
const SAFETY: f64 = 0.9;

/// Coefficients of the three-stage Radau IIA method and the eigen-decomposition
/// of the inverse of its Butcher matrix used to decouple the Newton system.
#[derive(Debug, Clone)]
pub struct RadauTableau {
    pub c: [f64; 3],
    pub a: Matrix3<f64>,
    pub a_inv: Matrix3<f64>,
    /// Real eigenvalue of `a_inv` first, then the complex pair (positive imaginary part first).
    pub lambda: [Complex64; 3],
    pub v: Matrix3<Complex64>,
    pub v_inv: Matrix3<Complex64>,
    /// Weights of the embedded error estimate applied to the stage increments.
    pub error_weights: [f64; 3],
}

impl RadauTableau {
    pub fn get() -> &'static RadauTableau {
        static T: OnceLock<RadauTableau> = OnceLock::new();
        T.get_or_init(Self::build)
    }

    fn build() -> Self {
        let s6 = 6f64.sqrt();
        let c = [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0];
        #[rustfmt::skip]
        let a = Matrix3::new(
            (88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0,
            (296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0,
            (16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0,
        );
        let a_inv = a.try_inverse().expect("Radau matrix is invertible");

        let mut ev: Vec<Complex64> = a_inv.complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|p, q| p.im.abs().total_cmp(&q.im.abs()));
        let real = Complex64::new(ev[0].re, 0.0);
        let pair = if ev[1].im > 0.0 { ev[1] } else { ev[2] };
        let lambda = [real, pair, pair.conj()];

        let ac = a_inv.map(|x| Complex64::new(x, 0.0));
        let v0 = null_vector(&ac, real).map(|z| Complex64::new(z.re, 0.0));
        let v1 = null_vector(&ac, pair);
        let v = Matrix3::from_columns(&[v0, v1, v1.map(|z| z.conj())]);
        let v_inv = v.try_inverse().expect("eigenvectors are independent");

        // embedded weights: gamma0 at the left endpoint plus the collocation nodes
        let gamma0 = 1.0 / real.re;
        let vander = Matrix3::from_fn(|k, i| c[i].powi(k as i32));
        let rhs = Vector3::new(1.0 - gamma0, 0.5, 1.0 / 3.0);
        let b_hat = vander.try_inverse().expect("distinct nodes") * rhs;
        let b = Vector3::new(a[(2, 0)], a[(2, 1)], a[(2, 2)]);
        let e = a_inv.transpose() * (b_hat - b);
        let error_weights = [real.re * e[0], real.re * e[1], real.re * e[2]];

        Self {
            c,
            a,
            a_inv,
            lambda,
            v,
            v_inv,
            error_weights,
        }
    }
}

/// A vector spanning the kernel of `m - lambda I` (rank two), from row cross products.
fn null_vector(m: &Matrix3<Complex64>, lambda: Complex64) -> Vector3<Complex64> {
    let s = m - Matrix3::identity() * lambda;
    let rows: Vec<Vector3<Complex64>> = (0..3).map(|i| s.row(i).transpose()).collect();
    let cross = |p: &Vector3<Complex64>, q: &Vector3<Complex64>| {
        Vector3::new(
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        )
    };
    [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| cross(&rows[i], &rows[j]))
        .max_by(|p, q| p.norm().total_cmp(&q.norm()))
        .map(|v| v / Complex64::new(v.norm(), 0.0))
        .expect("three candidates")
}

struct Work {
    z: [Vec<f64>; 3],
    f: [Vec<f64>; 3],
    tmp: Vec<f64>,
    f0: Vec<f64>,
    w: [Vec<Complex64>; 2],
    y1: Vec<f64>,
    err: Vec<f64>,
    scale: Vec<f64>,
}

enum Outcome {
    Accepted { err: f64, newton_iters: usize },
    Rejected { err: f64, newton_iters: usize },
    NewtonFailed,
}

pub(super) fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y: &mut Vec<f64>,
    samples: &[f64],
    opts: &OdeOptions,
    stats: &mut Stats,
    mut observe: F,
) -> Result<()>
where
    S: ShiftedSolve,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let d = sys.dim();
    let tab = RadauTableau::get();
    let mut w = Work {
        z: std::array::from_fn(|_| vec![0.0; d]),
        f: std::array::from_fn(|_| vec![0.0; d]),
        tmp: vec![0.0; d],
        f0: vec![0.0; d],
        w: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); d]),
        y1: vec![0.0; d],
        err: vec![0.0; d],
        scale: vec![0.0; d],
    };
    let mut t = t0;
    let mut h = samples.first().map_or(0.0, |&s| initial_step(t0, s));
    let mut last_rejected = false;
    let mut first = true;
    // previous accepted stage values and step, for the starting guess
    let mut prev: Option<([Vec<f64>; 3], f64)> = None;
    let mut jac: Option<S::Jacobian> = None;

    for &target in samples {
        while t < target {
            let remaining = target - t;
            let clipped = h >= remaining || remaining - h < 1e-12 * target.abs();
            let step = if clipped { remaining } else { h };
            if step <= 1e-15 * t.abs().max(1e-300) {
                return Err(Error::StepSizeUnderflow { t, h: step });
            }
            if stats.steps + stats.rejected >= opts.max_steps {
                return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
            }
            if jac.is_none() {
                jac = Some(sys.jacobian(t, y));
                sys.rhs(t, y, &mut w.f0);
                stats.rhs_evals += 1;
            }
            let j = jac.as_ref().expect("jacobian just computed");
            match &prev {
                Some((z_old, h_old)) => extrapolate(tab, z_old, step / h_old, &mut w.z),
                None => w.z.iter_mut().for_each(|z| z.fill(0.0)),
            }
            let outcome = attempt(sys, j, tab, t, y, step, opts, stats, &mut w, first || last_rejected);
            match outcome {
                Outcome::Accepted { err, newton_iters } => {
                    stats.steps += 1;
                    t = if clipped { target } else { t + step };
                    std::mem::swap(y, &mut w.y1);
                    enforce_nonnegative(sys, t, y, opts, stats)?;
                    let mut next = step / quotient(err, newton_iters);
                    if last_rejected {
                        next = next.min(step);
                    }
                    if !clipped || step >= h {
                        h = next;
                    } else {
                        h = h.max(next);
                    }
                    prev = Some((w.z.clone(), step));
                    jac = None;
                    last_rejected = false;
                    first = false;
                }
                Outcome::Rejected { err, newton_iters } => {
                    stats.rejected += 1;
                    h = if first { 0.1 * step } else { step / quotient(err, newton_iters) };
                    last_rejected = true;
                }
                Outcome::NewtonFailed => {
                    stats.rejected += 1;
                    h = 0.5 * step;
                    prev = None;
                    last_rejected = true;
                }
            }
        }
        observe(t, y)?;
    }
    Ok(())
}

/// Ratio of the current to the next step size.
fn quotient(err: f64, newton_iters: usize) -> f64 {
    let fac = SAFETY.min(SAFETY * (1.0 + 2.0 * MAX_NEWTON as f64) / (newton_iters as f64 + 2.0 * MAX_NEWTON as f64));
    let err = if err.is_finite() { err.max(1e-10) } else { 1e10 };
    (err.powf(0.25) / fac).clamp(0.125, 5.0)
}

/// Starting stage values from the previous step's collocation polynomial.
fn extrapolate(tab: &RadauTableau, z_old: &[Vec<f64>; 3], ratio: f64, z: &mut [Vec<f64>; 3]) {
    let nodes = [0.0, tab.c[0], tab.c[1], tab.c[2]];
    let lagrange = |s: f64| -> [f64; 4] {
        std::array::from_fn(|k| {
            (0..4)
                .filter(|&m| m != k)
                .map(|m| (s - nodes[m]) / (nodes[k] - nodes[m]))
                .product()
        })
    };
    for (i, zi) in z.iter_mut().enumerate() {
        let l = lagrange(1.0 + tab.c[i] * ratio);
        for (q, out) in zi.iter_mut().enumerate() {
            // value at node 0 is zero; subtract u(1) = z_old[2]
            let u = l[1] * z_old[0][q] + l[2] * z_old[1][q] + l[3] * z_old[2][q];
            *out = u - z_old[2][q];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attempt<S: ShiftedSolve>(
    sys: &S,
    jac: &S::Jacobian,
    tab: &RadauTableau,
    t: f64,
    y: &[f64],
    h: f64,
    opts: &OdeOptions,
    stats: &mut Stats,
    w: &mut Work,
    cautious: bool,
) -> Outcome {
    let d = y.len();
    for i in 0..d {
        w.scale[i] = opts.atol + opts.rtol * y[i].abs();
    }
    let newton_tol = (10.0 * f64::EPSILON / opts.rtol).max(0.03f64.min(opts.rtol.sqrt()));
    let sigma: [Complex64; 2] = [tab.lambda[0] / h, tab.lambda[1] / h];

    let mut converged = false;
    let mut iters = 0;
    let mut prev_norm = f64::NAN;
    let mut rate = f64::NAN;
    for it in 0..MAX_NEWTON {
        iters = it + 1;
        for s in 0..3 {
            for q in 0..d {
                w.tmp[q] = y[q] + w.z[s][q];
            }
            sys.rhs(t + tab.c[s] * h, &w.tmp, &mut w.f[s]);
        }
        stats.rhs_evals += 3;
        if w.f.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Outcome::NewtonFailed;
        }
        // residuals transformed to the eigenbasis; only the first two are independent
        for k in 0..2 {
            for q in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for s in 0..3 {
                    let r = w.f[s][q]
                        - (tab.a_inv[(s, 0)] * w.z[0][q]
                            + tab.a_inv[(s, 1)] * w.z[1][q]
                            + tab.a_inv[(s, 2)] * w.z[2][q])
                            / h;
                    acc += tab.v_inv[(k, s)] * r;
                }
                w.w[k][q] = acc;
            }
            sys.solve_shifted(jac, sigma[k], &mut w.w[k]);
            stats.solves += 1;
        }
        let mut sum = 0.0;
        for s in 0..3 {
            for q in 0..d {
                let dz = (tab.v[(s, 0)] * w.w[0][q]).re + 2.0 * (tab.v[(s, 1)] * w.w[1][q]).re;
                w.z[s][q] += dz;
                sum += (dz / w.scale[q]).powi(2);
            }
        }
        let norm = (sum / (3 * d) as f64).sqrt();
        if !norm.is_finite() {
            return Outcome::NewtonFailed;
        }
        if it > 0 {
            rate = norm / prev_norm;
            if rate >= 1.0 {
                return Outcome::NewtonFailed;
            }
            let remaining = (MAX_NEWTON - 1 - it) as i32;
            if rate.powi(remaining) / (1.0 - rate) * norm > newton_tol {
                return Outcome::NewtonFailed;
            }
        }
        let eta = if it == 0 { 1.0 } else { rate / (1.0 - rate) };
        if eta * norm <= newton_tol || norm <= 1e-3 * newton_tol {
            converged = true;
            break;
        }
        prev_norm = norm;
    }
    if !converged {
        return Outcome::NewtonFailed;
    }

    for q in 0..d {
        w.y1[q] = y[q] + w.z[2][q];
    }
    let gamma = tab.lambda[0];
    let ew = tab.error_weights;
    let estimate = |w: &mut Work, f_left: &[f64], stats: &mut Stats| {
        for q in 0..d {
            let v = f_left[q] + (ew[0] * w.z[0][q] + ew[1] * w.z[1][q] + ew[2] * w.z[2][q]) / h;
            w.w[0][q] = Complex64::new(v, 0.0);
        }
        sys.solve_shifted(jac, gamma / h, &mut w.w[0]);
        stats.solves += 1;
        for q in 0..d {
            w.err[q] = w.w[0][q].re;
        }
    };
    let f0 = std::mem::take(&mut w.f0);
    estimate(w, &f0, stats);
    let mut err = error_norm(&w.err, y, &w.y1, opts);
    if err >= 1.0 && cautious {
        for q in 0..d {
            w.tmp[q] = y[q] + w.err[q];
        }
        let mut f_shift = vec![0.0; d];
        sys.rhs(t, &w.tmp, &mut f_shift);
        stats.rhs_evals += 1;
        estimate(w, &f_shift, stats);
        err = error_norm(&w.err, y, &w.y1, opts);
    }
    w.f0 = f0;
    if err.is_finite() && err <= 1.0 {
        Outcome::Accepted { err, newton_iters: iters }
    } else {
        Outcome::Rejected { err, newton_iters: iters }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collocation_conditions_hold() {
        let tab = RadauTableau::get();
        for i in 0..3 {
            for k in 1..=3 {
                let lhs: f64 = (0..3).map(|j| tab.a[(i, j)] * tab.c[j].powi(k - 1)).sum();
                let rhs = tab.c[i].powi(k) / k as f64;
                assert!((lhs - rhs).abs() < 1e-14, "row {i} k {k}");
            }
        }
    }

    #[test]
    fn eigen_decomposition_reconstructs_inverse() {
        let tab = RadauTableau::get();
        let d = Matrix3::from_diagonal(&Vector3::new(tab.lambda[0], tab.lambda[1], tab.lambda[2]));
        let back = tab.v * d * tab.v_inv;
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[(i, j)].re - tab.a_inv[(i, j)]).abs() < 1e-11);
                assert!(back[(i, j)].im.abs() < 1e-11);
            }
        }
        assert!((tab.lambda[0].re - 3.637_834_252_744_496).abs() < 1e-10);
        assert!((tab.lambda[1].re - 2.681_082_873_627_752).abs() < 1e-10);
        assert!((tab.lambda[1].im - 3.050_430_199_247_411).abs() < 1e-10);
    }

    #[test]
    fn error_weights_match_closed_form() {
        let s6 = 6f64.sqrt();
        let expected = [-(13.0 + 7.0 * s6) / 3.0, (-13.0 + 7.0 * s6) / 3.0, -1.0 / 3.0];
        let got = RadauTableau::get().error_weights;
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-11, "{g} vs {e}");
        }
    }
}
