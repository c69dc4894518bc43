//! Simulation core for Raman multiphoton generation of Fock states in a
//! two-mode cavity and the Ramsey probe of the prepared field.

pub mod analytic;
pub mod dump;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod fockspace;
pub mod model;

pub use error::{Error, Result};
pub use evolve::{
    evolve_density, evolve_density_traced, evolve_unitary, DensityOutcome, Method, Order, StepperSettings,
    TraceOptions, TracePoint, UnitaryOutcome,
};
pub use fockspace::{
    AtomLevel, BasisLabel, DensityOperator, FieldDensity, FieldKind, FockSpace, JointDistribution,
    LinearOperator, Mode, ModeState, StateVector,
};
pub use model::{
    khz, to_khz, us, CouplingProfile, DetuningSchedule, LindbladModel, SystemParams,
};
