//! Right-hand sides and structured shifted solves for the two kinetic systems.

use std::ops::Range;

use num_complex::Complex64;

use crate::model::ModelParams;
use crate::ode::{OdeSystem, ShiftedSolve};

/// The cluster hierarchy truncated to sizes `n..=J`.
///
/// State layout: `[c1, c_n, ..., c_J, tau, zeta, leaked, gained]`. Clusters that
/// leave the window through size `J` are counted in `leaked`, and clusters that
/// start beyond `J` are a frozen count, so the bulk seen by the monomers is exact.
/// `gained` is the mass accumulated outside the window.
#[derive(Debug, Clone)]
pub struct FullSystem {
    pub params: ModelParams,
    pub truncation: usize,
    /// `sum_{j > J} c_j(0)`.
    pub frozen_tail: f64,
    pub zeta_active: bool,
}

impl FullSystem {
    pub fn window_len(&self) -> usize {
        self.truncation - self.params.n() + 1
    }

    pub fn tau_index(&self) -> usize {
        self.window_len() + 1
    }

    pub fn zeta_index(&self) -> usize {
        self.window_len() + 2
    }

    pub fn leaked_index(&self) -> usize {
        self.window_len() + 3
    }

    pub fn gained_index(&self) -> usize {
        self.window_len() + 4
    }

    /// Total cluster count `sum_{j >= n} c_j`.
    pub fn bulk(&self, y: &[f64]) -> f64 {
        let m = self.window_len();
        y[1..=m].iter().sum::<f64>() + self.frozen_tail + y[self.leaked_index()]
    }

    /// `c1 + sum_{j=n}^{J} j c_j`.
    pub fn window_mass(&self, y: &[f64]) -> f64 {
        let n = self.params.n();
        y[0] + y[1..=self.window_len()]
            .iter()
            .enumerate()
            .map(|(k, c)| (n + k) as f64 * c)
            .sum::<f64>()
    }
}

impl OdeSystem for FullSystem {
    fn dim(&self) -> usize {
        self.window_len() + 5
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let m = self.window_len();
        let alpha = self.params.alpha();
        let nf = self.params.nf();
        let c1 = y[0];
        let c1n = c1.powi(self.params.n() as i32);
        let bulk = self.bulk(y);
        dy[0] = alpha - nf * c1n - c1 * bulk;
        dy[1] = c1n - c1 * y[1];
        for k in 2..=m {
            dy[k] = c1 * (y[k - 1] - y[k]);
        }
        let cj = y[m];
        let outside = self.frozen_tail + y[self.leaked_index()];
        dy[self.tau_index()] = c1;
        dy[self.zeta_index()] = if self.zeta_active { 1.0 / c1 } else { 0.0 };
        dy[self.leaked_index()] = c1 * cj;
        dy[self.gained_index()] = (self.truncation as f64 + 1.0) * c1 * cj + c1 * outside;
    }

    fn nonnegative(&self) -> Range<usize> {
        0..self.window_len() + 1
    }
}

impl ShiftedSolve for FullSystem {
    /// The state at which the Jacobian is taken.
    type Jacobian = Vec<f64>;

    fn jacobian(&self, _t: f64, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn solve_shifted(&self, y: &Vec<f64>, sigma: Complex64, b: &mut [Complex64]) {
        let m = self.window_len();
        let n = self.params.n();
        let nf = self.params.nf();
        let c1 = y[0];
        let c1nm1 = c1.powi(n as i32 - 1);
        let bulk = self.bulk(y);
        let cj = y[m];
        let outside = self.frozen_tail + y[self.leaked_index()];
        let diag = sigma + c1;

        // coupling of window row k to the monomer component
        let g = |k: usize| if k == 1 { nf * c1nm1 - y[1] } else { y[k - 1] - y[k] };

        // every window component is p + q u with u the monomer component
        let (mut p, mut q) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let (mut sum_p, mut sum_q) = (p, q);
        for k in 1..=m {
            p = (b[k] + c1 * p) / diag;
            q = (g(k) + c1 * q) / diag;
            sum_p += p;
            sum_q += q;
        }
        let li = self.leaked_index();
        let pl = (b[li] + c1 * p) / sigma;
        let ql = (cj + c1 * q) / sigma;
        let lhs = sigma + nf * nf * c1nm1 + bulk + c1 * (sum_q + ql);
        let u = (b[0] - c1 * (sum_p + pl)) / lhs;

        b[0] = u;
        let mut prev = Complex64::new(0.0, 0.0);
        for k in 1..=m {
            let x = (b[k] + c1 * prev + g(k) * u) / diag;
            b[k] = x;
            prev = x;
        }
        let xl = pl + ql * u;
        let ti = self.tau_index();
        b[ti] = (b[ti] + u) / sigma;
        let zi = self.zeta_index();
        let dz = if self.zeta_active { -1.0 / (c1 * c1) } else { 0.0 };
        b[zi] = (b[zi] + dz * u) / sigma;
        let gi = self.gained_index();
        let jp1 = self.truncation as f64 + 1.0;
        b[gi] = (b[gi] + (jp1 * cj + outside) * u + jp1 * c1 * prev + c1 * xl) / sigma;
        b[li] = xl;
    }
}

/// Closed monomer-bulk system with state `[x, y, tau, zeta]`.
#[derive(Debug, Clone)]
pub struct MonomerBulkSystem {
    pub params: ModelParams,
    pub zeta_active: bool,
}

impl OdeSystem for MonomerBulkSystem {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, s: &[f64], ds: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        let xn = x.powi(self.params.n() as i32);
        ds[0] = self.params.alpha() - self.params.nf() * xn - x * y;
        ds[1] = xn;
        ds[2] = x;
        ds[3] = if self.zeta_active { 1.0 / x } else { 0.0 };
    }

    fn nonnegative(&self) -> Range<usize> {
        0..2
    }
}

impl ShiftedSolve for MonomerBulkSystem {
    type Jacobian = [f64; 2];

    fn jacobian(&self, _t: f64, s: &[f64]) -> [f64; 2] {
        [s[0], s[1]]
    }

    fn solve_shifted(&self, s: &[f64; 2], sigma: Complex64, b: &mut [Complex64]) {
        let [x, y] = *s;
        let nf = self.params.nf();
        let xnm1 = x.powi(self.params.n() as i32 - 1);
        // sigma I - J on the (x, y) block
        let a11 = sigma + nf * nf * xnm1 + y;
        let a12 = Complex64::new(x, 0.0);
        let a21 = Complex64::new(-nf * xnm1, 0.0);
        let a22 = sigma;
        let det = a11 * a22 - a12 * a21;
        let u = (b[0] * a22 - a12 * b[1]) / det;
        let v = (a11 * b[1] - a21 * b[0]) / det;
        b[0] = u;
        b[1] = v;
        b[2] = (b[2] + u) / sigma;
        let dz = if self.zeta_active { -1.0 / (x * x) } else { 0.0 };
        b[3] = (b[3] + dz * u) / sigma;
    }
}
