use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneHermite;
use crate::model::{ClusterState, ModelParams};
use crate::ode::Stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub tau: f64,
    pub zeta: f64,
    pub c1: f64,
    pub y: f64,
}

/// Recorded solution of either kinetic system, with interpolants in both time scales.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: ModelParams,
    records: Vec<Record>,
    mass_defect: Option<Vec<f64>>,
    snapshots: Vec<ClusterState>,
    truncation: Option<usize>,
    stats: Stats,
    c1_of_tau: MonotoneHermite,
    t_of_tau: MonotoneHermite,
    tau_of_t: MonotoneHermite,
}

impl Trajectory {
    pub(crate) fn new(
        params: ModelParams,
        records: Vec<Record>,
        mass_defect: Option<Vec<f64>>,
        snapshots: Vec<ClusterState>,
        truncation: Option<usize>,
        stats: Stats,
    ) -> Self {
        let alpha = params.alpha();
        let nf = params.nf();
        let n = params.n() as i32;
        let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();
        let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
        let c1s: Vec<f64> = records.iter().map(|r| r.c1).collect();
        // dc1/dtau = (dc1/dt) / c1
        let dc1: Vec<f64> = records
            .iter()
            .map(|r| (alpha - nf * r.c1.powi(n) - r.c1 * r.y) / r.c1)
            .collect();
        let inv_c1: Vec<f64> = c1s.iter().map(|c| 1.0 / c).collect();
        Self {
            params,
            c1_of_tau: MonotoneHermite::new(taus.clone(), c1s.clone(), dc1),
            t_of_tau: MonotoneHermite::new(taus.clone(), ts.clone(), inv_c1),
            tau_of_t: MonotoneHermite::new(ts, taus, c1s),
            records,
            mass_defect,
            snapshots,
            truncation,
            stats,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Relative mass-balance defect per record (full system only).
    pub fn mass_defect(&self) -> Option<&[f64]> {
        self.mass_defect.as_deref()
    }

    pub fn snapshots(&self) -> &[ClusterState] {
        &self.snapshots
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&ClusterState> {
        self.snapshots.iter().find(|s| s.t == t)
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Recorded `tau` values.
    pub fn tau_knots(&self) -> &[f64] {
        self.c1_of_tau.knots()
    }

    pub fn tau_max(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.tau)
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        let max = self.tau_max();
        if self.records.is_empty() || !(0.0..=max).contains(&tau) {
            return Err(Error::OutOfRange { tau, min: 0.0, max });
        }
        Ok(())
    }

    /// Monomer concentration as a function of `tau`.
    ///
    /// Below the first recorded `tau` the first recorded value is held.
    pub fn c1_of_tau(&self, tau: f64) -> Result<f64> {
        self.check_tau(tau)?;
        Ok(self.c1_of_tau.eval(tau))
    }

    /// Physical time at which `tau` is reached. Below the first record the
    /// monomer concentration is taken as constant.
    pub fn t_of_tau(&self, tau: f64) -> Result<f64> {
        self.check_tau(tau)?;
        let (tau0, t0) = self.t_of_tau.first().expect("checked non-empty");
        if tau < tau0 {
            return Ok(t0 * tau / tau0);
        }
        Ok(self.t_of_tau.eval(tau))
    }

    pub fn tau_of_t(&self, t: f64) -> Result<f64> {
        let (t0, tau0) = self.tau_of_t.first().ok_or(Error::OutOfRange {
            tau: t,
            min: 0.0,
            max: 0.0,
        })?;
        let (t1, _) = self.tau_of_t.last().expect("non-empty");
        if !(0.0..=t1).contains(&t) {
            return Err(Error::OutOfRange { tau: t, min: 0.0, max: t1 });
        }
        if t < t0 {
            return Ok(tau0 * t / t0);
        }
        Ok(self.tau_of_t.eval(t))
    }

    /// Record closest in time to `t`.
    pub fn nearest(&self, t: f64) -> Option<&Record> {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// CSV with header `t,tau,zeta,c1,y` (and `mass_defect` when requested).
    pub fn write_csv<W: Write>(&self, out: W, with_mass: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_mass = with_mass && self.mass_defect.is_some();
        let mut header = vec!["t", "tau", "zeta", "c1", "y"];
        if with_mass {
            header.push("mass_defect");
        }
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![fmt(r.t), fmt(r.tau), fmt(r.zeta), fmt(r.c1), fmt(r.y)];
            if with_mass {
                row.push(fmt(self.mass_defect.as_ref().expect("checked")[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<Record>> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for row in rdr.deserialize::<Record>() {
            out.push(row?);
        }
        Ok(out)
    }
}

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Trajectory {
        let params = ModelParams::new(1.0, 2).unwrap();
        let records: Vec<Record> = (1..=50)
            .map(|k| {
                let t = 0.1 * 1.2f64.powi(k);
                Record {
                    t,
                    tau: t.powf(2.0 / 3.0),
                    zeta: t.powf(4.0 / 3.0),
                    c1: (3.0 * t).powf(-1.0 / 3.0),
                    y: (3.0 * t).powf(1.0 / 3.0),
                }
            })
            .collect();
        Trajectory::new(params, records, None, Vec::new(), None, Stats::default())
    }

    #[test]
    fn c1_reproduces_knots_and_holds_below() {
        let traj = sample();
        for r in traj.records() {
            assert_eq!(traj.c1_of_tau(r.tau).unwrap(), r.c1);
        }
        let first = traj.records()[0];
        assert_eq!(traj.c1_of_tau(0.5 * first.tau).unwrap(), first.c1);
        assert!(matches!(traj.c1_of_tau(1.01 * traj.tau_max()), Err(Error::OutOfRange { .. })));
        assert!(traj.c1_of_tau(-1.0).is_err());
    }

    #[test]
    fn csv_header_and_round_trip() {
        let traj = sample();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,tau,zeta,c1,y\n"));
        let back = Trajectory::read_records(buf.as_slice()).unwrap();
        assert_eq!(back, traj.records().to_vec());
    }

    proptest! {
        #[test]
        fn float_format_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
    }
}
