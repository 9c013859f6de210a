//! Submonolayer deposition with critical cluster size `n`: simulation of the cluster
//! hierarchy, its exact representation in the `tau` time scale, long-time
//! asymptotics and measurement of the rate of convergence to the similarity profile.

pub mod asymptotics;
pub mod error;
pub mod fit;
pub mod harness;
pub mod integrator;
pub mod interp;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod representation;
pub mod special;

pub use error::{Error, Result};
pub use harness::{measure_convergence, regime_classify, MeasureOptions, RateMeasurement, Regime, SweepConfig};
pub use integrator::{integrate_full, integrate_monomer_bulk, IntegratorOptions, Trajectory, Truncation};
pub use model::{ClusterState, InitialData, ModelParams, SimilarityPoint};
pub use representation::{MonomerProfile, Representation};
