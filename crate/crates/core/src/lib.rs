//! Reservoir-computing dictionaries for Koopman system identification, with
//! EDMD and Hankel-delay baselines and the diagnostics that go with them.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! experiment pipeline runs in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod koopman;
pub mod lifting;
pub mod linalg;
pub mod reservoir;
pub mod scalar;
mod serde_util;

pub use diagnostics::{
    autocorrelation, conditioning, eigenvalue_lifetime, eigenvalue_lifetimes, observability_scan,
    select_spectral_radius, AcfMode, ConditioningReport, ObservabilityPoint, ObservabilityScan, RhoSelection,
};
pub use dynamics::{generate_batch, generate_trajectory, InputSignal, SystemKind, SystemSpec, TrajectoryData};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Method, RhoChoice};
pub use koopman::{identify, KoopmanModel, Lineage, Reconstruction, Rollout, Spectrum};
pub use lifting::{Dictionary, DictionaryKind, LiftedSnapshots};
pub use reservoir::{memory_horizon, Activation, EspReport, MemoryHorizon, Reservoir, ReservoirConfig};
pub use scalar::{Extended, Real};

pub type SystemSpec64 = SystemSpec<f64>;
pub type TrajectoryData64 = TrajectoryData<f64>;
pub type Reservoir64 = Reservoir<f64>;
pub type ReservoirConfig64 = ReservoirConfig<f64>;
pub type Dictionary64 = Dictionary<f64>;
pub type LiftedSnapshots64 = LiftedSnapshots<f64>;
pub type KoopmanModel64 = KoopmanModel<f64>;
pub type ConditioningReport64 = ConditioningReport<f64>;

pub type Reservoir32 = Reservoir<f32>;
pub type LiftedSnapshots32 = LiftedSnapshots<f32>;
pub type KoopmanModel32 = KoopmanModel<f32>;
