//! Simulation and control-synthesis toolkit for a magnetically levitated
//! planar stage modeled as a single rigid body with six degrees of freedom
//! (three translations, three small tilt/yaw rotations).
//!
//! The crate covers the full experiment pipeline:
//!
//! * [`dynamics`]: closed-form mass matrix, Coriolis matrix, Christoffel
//!   symbols, positive-definiteness tests, forward dynamics.
//! * [`sched`], [`lpv`]: scheduling variables and affine parameter-varying
//!   embeddings of the nonlinear model (a local mass-frozen form and a global
//!   descriptor form).
//! * [`trajectory`]: rest-to-rest reference profiles with bounded jerk and
//!   analytic derivatives, plus torque disturbance pulses.
//! * [`feedforward`]: five feedforward families, from a rigid-mass inversion
//!   up to exact inversion of the descriptor embedding as a parameter-varying
//!   state-space realization.
//! * [`feedback`]: a discrete PID stabilizer with filtered derivative, and
//!   Lyapunov machinery that certifies closed-loop stability by searching for
//!   a feasible energy-mixing parameter epsilon.
//! * [`sim`]: a deterministic fixed-step integrator (classic Runge-Kutta with
//!   zero-order-hold feedback) and the open/closed-loop experiment runners.
//! * [`config`], [`report`], [`cli`]: TOML experiment configuration, CSV and
//!   JSON artifact writers, and the `maglev` command-line front end.
//!
//! Everything is double precision, SI units, radians. No randomness is used
//! anywhere in the simulation path, so reruns are bitwise reproducible.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod feedback;
pub mod feedforward;
pub mod linalg;
pub mod lpv;
pub mod report;
pub mod sched;
pub mod sim;
pub mod trajectory;

/// Column vector of the six generalized coordinates or their derivatives.
pub type Vector6 = nalgebra::Vector6<f64>;
/// Square matrix on the six generalized coordinates.
pub type Matrix6 = nalgebra::Matrix6<f64>;
/// Stacked state (positions and velocities) of the first-order form.
pub type Vector12 = nalgebra::SVector<f64, 12>;
/// Square matrix on the stacked state.
pub type Matrix12 = nalgebra::SMatrix<f64, 12, 12>;
/// Generalized force/torque vector conjugate to the coordinates.
pub type GeneralizedForces = Vector6;

pub use config::ExperimentConfig;
pub use dynamics::{forward_dynamics, mass_matrix, GeneralizedState, PlantParams};
pub use feedforward::MethodKind;
pub use sim::{run_closed_loop, run_open_loop, ErrorMetrics, SimulationRecord};

/// Unified error type for the whole toolkit.
///
/// Numerical routines fail loudly instead of propagating NaNs: a singular
/// mass matrix, a rank-deficient input map, or an infeasible stability
/// certificate each carry enough context to diagnose the offending state.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The mass matrix lost positive definiteness (the pitch angle reached
    /// the representation boundary at pi/2). Carries the six leading
    /// principal minors at the offending configuration.
    #[error("mass matrix not positive definite; leading principal minors {minors:?}")]
    SingularMass { minors: [f64; 6] },

    /// A matrix that must have full rank for inversion-based synthesis is
    /// numerically rank deficient.
    #[error(
        "rank-deficient input map: sigma_min/sigma_max = {ratio:.3e} (threshold {threshold:.1e})"
    )]
    RankDeficientInput { ratio: f64, threshold: f64 },

    /// Feedthrough terms appeared below the expected differentiation order,
    /// so the inverse realization ansatz does not apply.
    #[error("relative degree violation at order {order}: residual magnitude {magnitude:.3e}")]
    RelativeDegreeViolation { order: usize, magnitude: f64 },

    /// The chosen scheduling basis cannot reproduce the model matrices
    /// affinely; the residual at a probe configuration is reported.
    #[error("scheduling basis cannot express the model affinely; residual {residual:.3e}")]
    AffinityViolation { residual: f64 },

    /// A scheduling point was queried for a derivative order it does not
    /// carry.
    #[error("scheduling derivative of order {needed} requested, only {available} available")]
    SchedulingOrder { needed: usize, available: usize },

    /// Matrices handed to a block quadratic-form test disagree in shape.
    #[error("matrix shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// The epsilon bisection found no value in (0, epsilon_max] for which
    /// both Lyapunov block tests pass on every supplied sample.
    #[error("no feasible epsilon in (0, {epsilon_max}] over {samples} samples")]
    NoFeasibleEpsilon { epsilon_max: f64, samples: usize },

    /// A metrics or certificate routine was handed an empty record.
    #[error("empty simulation record")]
    EmptyRecord,

    /// A feedforward method required an input (measurement or scheduling
    /// point) that the caller did not supply.
    #[error("missing feedforward input: {0}")]
    MissingInput(&'static str),

    /// Configuration file or command-line argument rejected.
    #[error("config error: {0}")]
    Config(String),

    /// Simulation-time failure that is not one of the structured cases.
    #[error("simulation error: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
