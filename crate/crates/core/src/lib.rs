//! Distributed H∞ consensus observers over a Round-Robin sampled network.
//!
//! The crate covers the whole pipeline:
//!
//! * [`network`] — observer graph, shift permutation and Round-Robin schedule;
//! * [`model`] — plant/sensor data, synthesis options, JSON configuration and
//!   detectability tests;
//! * [`lmi`] — block assembly of the analysis and synthesis matrix
//!   inequalities on top of an affine matrix-expression layer;
//! * [`sdp`] — scalarization into a conic program and the interior-point
//!   backend;
//! * [`synthesis`] — solve, gain recovery, certificate and sweeps;
//! * [`sim`] — hybrid simulation and trajectory functionals;
//! * [`verify`] — certification of a design against a disturbance battery.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below fix the usual double-precision instantiation.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod lmi;
pub mod model;
pub mod network;
pub mod scalar;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod verify;

pub use model::{load_problem, GainSet, GammaMode, ModelError, Problem, ProblemConfig, SynthesisOptions};
pub use network::{NetworkError, ObserverGraph, RoundRobinSchedule};
pub use scalar::Real;
pub use sdp::{ClarabelSolver, ConicSolver, SolveStatus};
pub use sim::{simulate, DisturbanceSignal, SignalShape, SimError, Trajectory};
pub use synthesis::{sweep_delta, synthesize, verify_theorem2, GainsFile, SynthesisError, SynthesisSolution};
pub use verify::{certify, CertificationReport, CertifyOptions};

pub type ProblemF64 = Problem<f64>;
pub type GainSetF64 = GainSet<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type SynthesisSolutionF64 = SynthesisSolution<f64>;
pub type ScheduleF64 = RoundRobinSchedule<f64>;

pub type ProblemF32 = Problem<f32>;
pub type GainSetF32 = GainSet<f32>;
pub type TrajectoryF32 = Trajectory<f32>;

/// Environment variable capping the worker threads of sweeps and batteries.
pub const THREADS_ENV: &str = "RRHINF_THREADS";

/// Sizes the global worker pool from `RRHINF_THREADS`, if set.
///
/// Returns the thread count applied, `None` when the variable is unset.
/// Must run before the first parallel section.
pub fn init_threads_from_env() -> Result<Option<usize>, String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(Some(threads))
}
