//! Log-space special functions and Gauss-Legendre rules.

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `ln(m!)` extended to real `m > -1`.
pub fn ln_factorial(m: f64) -> f64 {
    ln_gamma(m + 1.0)
}

/// `ln(sum exp(v))` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `sum_{j >= first} j^(-mu)` for `mu > 1`.
///
/// Direct summation up to a cut-off followed by an Euler-Maclaurin tail.
pub fn power_tail_sum(mu: f64, first: usize) -> f64 {
    assert!(mu > 1.0, "power tail sum diverges for mu <= 1");
    let first = first.max(1);
    let cut = first.max(2000);
    let direct: f64 = (first..cut).rev().map(|j| (j as f64).powf(-mu)).sum();
    direct + euler_maclaurin_tail(mu, cut as f64)
}

fn euler_maclaurin_tail(mu: f64, m: f64) -> f64 {
    let f = m.powf(-mu);
    let d1 = mu * f / m;
    let d3 = mu * (mu + 1.0) * (mu + 2.0) * f / m.powi(3);
    let d5 = mu * (mu + 1.0) * (mu + 2.0) * (mu + 3.0) * (mu + 4.0) * f / m.powi(5);
    m * f / (mu - 1.0) + 0.5 * f + d1 / 12.0 - d3 / 720.0 + d5 / 30240.0
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let nf = order as f64;
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = order as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factorials_are_exact_through_twenty() {
        let mut fact = 1.0f64;
        for m in 0..=20u32 {
            if m > 0 {
                fact *= m as f64;
            }
            let got = ln_factorial(m as f64).exp();
            assert_relative_eq!(got, fact, max_relative = 1e-13);
        }
    }

    #[test]
    fn known_zeta_values() {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert_relative_eq!(power_tail_sum(2.0, 1), pi2 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(power_tail_sum(1.5, 1), 2.612_375_348_685_488, max_relative = 1e-14);
        assert_relative_eq!(power_tail_sum(3.0, 1), 1.202_056_903_159_594_2, max_relative = 1e-14);
        // slowly decaying tail
        assert_relative_eq!(power_tail_sum(1.1, 1), 10.584_448_464_950_81, max_relative = 1e-12);
    }

    #[test]
    fn tail_sum_shift_identity() {
        for &mu in &[1.25, 1.5, 2.7] {
            for first in [2usize, 5, 1999, 2000, 2001, 10_000] {
                let a = power_tail_sum(mu, first);
                let b = power_tail_sum(mu, first + 1) + (first as f64).powf(-mu);
                assert_relative_eq!(a, b, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_add_exp(0.0, 0.0), 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for order in [1usize, 2, 5, 8, 16, 31] {
            let gl = GaussLegendre::new(order);
            let wsum: f64 = gl.weights.iter().sum();
            assert_relative_eq!(wsum, 2.0, max_relative = 1e-14);
            for deg in 0..(2 * order) {
                let got = gl.integrate(0.0, 2.0, |x| x.powi(deg as i32));
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert_relative_eq!(got, exact, max_relative = 1e-12);
            }
        }
    }
}
