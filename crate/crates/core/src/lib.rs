//! Locational screening of fast frequency reserves on linearized
//! multi-machine grid models.
//!
//! The crate turns a declarative [`Scenario`] into a linear state-space
//! plant, closes droop loops for inverter-based resources and evaluates
//! the disturbance response ratio, time-domain trajectories, modal damping
//! and a ratio-constrained droop allocation.

pub mod allocator;
pub mod eigen;
pub mod error;
pub mod freq;
pub mod linalg;
pub mod linearizer;
pub mod modal;
pub mod network;
pub mod report;
pub mod reproduce;
pub mod scenario;
pub mod timesim;

pub use allocator::{allocate_droop, AllocationProblem, AllocationResult, AllocationStep};
pub use error::{Error, Result};
pub use freq::{
    crossover_frequency, disturbance_response_ratio, evaluate_tf, nyquist_margin, peak,
    sensitivity, CurveKind, FrequencyGrid, FrequencyResponseCurve, NyquistMargin,
};
pub use linearizer::{close_loop, linearize, ClosedLoopModel, StateSpaceModel};
pub use modal::{damping_sweep, eigenvalues, Mode, ModeSet, SweepResult};
pub use network::build_network;
pub use reproduce::{reproduce, Format, Reproduction, StudyOverrides};
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use timesim::{metrics, step_response, Oscillation, OscillationKind, Trajectory, TrajectoryMetrics};
