//! Optimization of objectives evaluated at the fixed point of a parameterized
//! contraction.
//!
//! Given a step map `f(x, w)` that contracts in `x` and a loss `e` on states,
//! the library minimizes `E(w) = e(x*(w))` over the parameters, where `x*(w)`
//! is the fixed point of `f(·, w)`. Instead of re-solving the system and its
//! sensitivities from scratch at every parameter value, an auxiliary system
//! carrying the state and an adjoint covector is relaxed just far enough
//! after each update — the required depth is set dynamically from the
//! magnitude of the previous gradient estimate.
//!
//! Modules:
//! - [`norms`]: norms as data, duals, induced-operator-norm bounds.
//! - [`contraction`]: inner relaxation loop, deep solver, Banach tail bounds.
//! - [`adjoint`]: the auxiliary system, certified schedule constants, and
//!   independent gradient oracles.
//! - [`optimizer`]: the outer loop, trace recording, descent checks.
//! - [`models`]: bundled applications (chemical reaction rates, attractor
//!   networks) plus a scalar test family with exact constants.
//! - [`rng`]: the seeded generator behind every synthetic dataset.

pub mod adjoint;
pub mod contraction;
pub mod error;
pub mod models;
pub mod norms;
pub mod optimizer;
pub mod rng;

pub use adjoint::{
    adjoint_gradient, adjoint_step, certified_constants, fd_gradient, implicit_gradient,
    weight_p1, AdjointState, AdjointSystem, DifferentiableSystem, LipschitzBundle, LossFunction,
    LossLipschitz, RateBounds, ScheduleConstants, SystemLipschitz,
};
pub use contraction::{
    banach_tail_bound, deep_solve, iterate_to_tolerance, measure_contraction_ratio,
    InnerLoopResult, StepMap, DEFAULT_MAX_STEPS,
};
pub use error::{FixoptError, Result};
pub use norms::{operator_norm_upper, NormSpec};
pub use optimizer::{
    check_descent, check_direction_quality, run, run_detailed, Mode, OptimizationTrace, RunConfig,
    RunOutput, StopReason, TraceRow,
};
