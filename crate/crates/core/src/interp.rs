//! Piecewise cubic Hermite interpolation with known knot derivatives.

/// Cubic Hermite interpolant through `(x_i, y_i)` with slopes `d_i`.
///
/// Slopes are limited per interval with the Fritsch-Carlson rule, so on every
/// interval where the data are monotone the interpolant is monotone too and stays
/// between the two knot values. Across a local extremum of the data the interval
/// is flattened to the same bound.
#[derive(Debug, Clone)]
pub struct MonotoneHermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneHermite {
    /// `x` must be strictly increasing and all three slices of equal length.
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert_eq!(x.len(), d.len());
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        Self { x, y, d }
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn first(&self) -> Option<(f64, f64)> {
        Some((*self.x.first()?, *self.y.first()?))
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.x.last()?, *self.y.last()?))
    }

    /// Value at `x`, which must lie within the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        assert!(n > 0, "empty interpolant");
        if n == 1 || x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        if x == x0 {
            return y0;
        }
        let h = x1 - x0;
        let delta = (y1 - y0) / h;
        let (mut d0, mut d1) = (self.d[k], self.d[k + 1]);
        if delta == 0.0 {
            d0 = 0.0;
            d1 = 0.0;
        } else {
            if d0 * delta < 0.0 {
                d0 = 0.0;
            }
            if d1 * delta < 0.0 {
                d1 = 0.0;
            }
            let a = d0 / delta;
            let b = d1 / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let s = 3.0 / r.sqrt();
                d0 *= s;
                d1 *= s;
            }
        }
        let s = (x - x0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }
}
