use super::{enforce_nonnegative, error_norm, initial_step, OdeOptions, OdeSystem, Stats};
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
    err: Vec<f64>,
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
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let d = sys.dim();
    let mut w = Work {
        k: std::array::from_fn(|_| vec![0.0; d]),
        tmp: vec![0.0; d],
        y1: vec![0.0; d],
        err: vec![0.0; d],
    };
    let mut t = t0;
    let mut h = samples.first().map_or(0.0, |&s| initial_step(t0, s));
    let mut err_old: f64 = 1e-4;
    let mut fsal = false;
    let mut last_rejected = false;

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
            if !fsal {
                sys.rhs(t, y, &mut w.k[0]);
                stats.rhs_evals += 1;
            }
            attempt(sys, t, y, step, &mut w);
            stats.rhs_evals += 6;
            let err = error_norm(&w.err, y, &w.y1, opts);
            if err.is_finite() && err <= 1.0 {
                stats.steps += 1;
                t = if clipped { target } else { t + step };
                std::mem::swap(y, &mut w.y1);
                let clamped_before = stats.clamped;
                enforce_nonnegative(sys, t, y, opts, stats)?;
                w.k.swap(0, 6);
                // the last stage is f(t, y) unless clamping moved y
                fsal = stats.clamped == clamped_before;
                let err = err.max(1e-10);
                let fac = err.powf(0.2 - 0.75 * BETA) * err_old.powf(-BETA) / SAFETY;
                let mut grow = 1.0 / fac.clamp(0.2, 10.0);
                if last_rejected {
                    grow = grow.min(1.0);
                }
                err_old = err;
                // a clipped step says nothing about the natural step size
                if !clipped || step >= h {
                    h = step * grow;
                } else {
                    h = h.max(step * grow);
                }
                last_rejected = false;
            } else {
                stats.rejected += 1;
                fsal = true;
                let shrink = if err.is_finite() {
                    (SAFETY * err.powf(-0.2)).max(0.2)
                } else {
                    0.1
                };
                h = step * shrink;
                last_rejected = true;
            }
        }
        observe(t, y)?;
    }
    Ok(())
}

fn attempt<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64, w: &mut Work) {
    let d = y.len();
    let [k1, k2, k3, k4, k5, k6, k7] = &mut w.k;
    let tmp = &mut w.tmp;
    for i in 0..d {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    sys.rhs(t + C2 * h, tmp, k2);
    for i in 0..d {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.rhs(t + C3 * h, tmp, k3);
    for i in 0..d {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.rhs(t + C4 * h, tmp, k4);
    for i in 0..d {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.rhs(t + C5 * h, tmp, k5);
    for i in 0..d {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.rhs(t + h, tmp, k6);
    for i in 0..d {
        w.y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    sys.rhs(t + h, &w.y1, k7);
    for i in 0..d {
        w.err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_is_consistent() {
        let rows = [
            (C2, A21),
            (C3, A31 + A32),
            (C4, A41 + A42 + A43),
            (C5, A51 + A52 + A53 + A54),
            (1.0, A61 + A62 + A63 + A64 + A65),
            (1.0, A71 + A73 + A74 + A75 + A76),
        ];
        for (c, s) in rows {
            assert!((c - s).abs() < 1e-14, "{c} vs {s}");
        }
        assert!((E1 + E3 + E4 + E5 + E6 + E7).abs() < 1e-15);
    }
}
