//! The outer optimization loop with a dynamically scaled inner relaxation.
//!
//! Each outer iteration relaxes the auxiliary system until successive
//! iterates differ by at most a threshold `c_n`, applies one gradient-estimate
//! step to the parameters, and sets the next threshold proportional to the
//! estimate's magnitude:
//!
//! ```text
//! z_n   : iterate T(·, w_{n−1}) from z_{n−1} until ‖z^i − z^{i−1}‖_Z ≤ c_n
//! w_n   = w_{n−1} − ε g(z_n, w_{n−1})
//! c_{n+1} = δ ‖g(z_n, w_{n−1})‖_W
//! ```
//!
//! The auxiliary state is carried over between parameter updates, so once the
//! parameters move slowly the inner loop typically accepts after one step.
//!
//! A threshold of exactly zero means the previous gradient estimate vanished;
//! in that case the inner loop takes a single step and accepts. When the
//! tracking premises hold, a zero threshold only occurs with the state
//! already at equilibrium, where the single step changes nothing; it also
//! keeps runs started far from equilibrium with a zero covector (so the
//! first read-out vanishes) well-defined, where demanding a bitwise-zero
//! increment instead would stall in rounding noise.

use std::io::{self, Write};

use crate::adjoint::{AdjointState, AdjointSystem, DifferentiableSystem, LossFunction, ScheduleConstants};
use crate::contraction::{iterate_to_tolerance, DEFAULT_MAX_STEPS};
use crate::error::{FixoptError, Result};

/// How the step size, threshold gain, and product-norm weight are chosen.
#[derive(Debug, Clone)]
pub enum Mode {
    /// Constants derived from a Lipschitz bundle; tracking and descent are
    /// guaranteed when the bundle is valid.
    Certified(ScheduleConstants),
    /// Constants chosen experimentally; no Lipschitz data is consulted and
    /// the product norm weighs both components equally.
    Empirical { epsilon: f64, delta: f64 },
}

impl Mode {
    pub fn epsilon(&self) -> f64 {
        match self {
            Mode::Certified(c) => c.step_size,
            Mode::Empirical { epsilon, .. } => *epsilon,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            Mode::Certified(c) => c.threshold_gain,
            Mode::Empirical { delta, .. } => *delta,
        }
    }

    /// Primal weight of the product norm the inner loop measures in.
    pub fn p1(&self) -> f64 {
        match self {
            Mode::Certified(c) => c.p1,
            Mode::Empirical { .. } => 1.0,
        }
    }
}

/// Inputs to a run. `initial_state` seeds the auxiliary system and is carried
/// across parameter updates.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub max_outer_iterations: usize,
    pub inner_max_steps: usize,
    pub initial_params: Vec<f64>,
    pub initial_state: AdjointState,
    /// Stop early once the gradient-estimate norm falls to this value.
    pub gradient_tolerance: Option<f64>,
    /// Record a deep-solved objective estimate on the first iteration and
    /// every this-many iterations thereafter. `None` disables sampling.
    pub objective_stride: Option<usize>,
    /// Increment tolerance for objective-estimate solves.
    pub objective_tol: f64,
}

impl RunConfig {
    pub fn new(mode: Mode, initial_params: Vec<f64>, initial_state: AdjointState) -> Self {
        RunConfig {
            mode,
            max_outer_iterations: 1000,
            inner_max_steps: DEFAULT_MAX_STEPS,
            initial_params,
            initial_state,
            gradient_tolerance: None,
            objective_stride: Some(50),
            objective_tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.mode.epsilon() > 0.0) {
            return Err(FixoptError::invalid("step size must be positive"));
        }
        if !(self.mode.delta() > 0.0) {
            return Err(FixoptError::invalid("threshold gain must be positive"));
        }
        if self.max_outer_iterations == 0 || self.inner_max_steps == 0 {
            return Err(FixoptError::invalid("iteration budgets must be at least 1"));
        }
        if self.objective_stride == Some(0) {
            return Err(FixoptError::invalid("objective stride must be at least 1"));
        }
        Ok(())
    }
}

/// One row per outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Outer iteration index, starting at 1.
    pub iteration: usize,
    /// Threshold `c_n` the inner loop had to meet.
    pub threshold: f64,
    /// Inner steps taken to meet it.
    pub inner_steps: usize,
    /// `‖g(z_n, w_{n−1})‖` in the parameter norm.
    pub grad_norm: f64,
    /// `‖w_n‖` in the parameter norm, after the update.
    pub param_norm: f64,
    /// Deep-solved objective estimate at `w_n`, on sampled iterations.
    pub objective: Option<f64>,
    /// Model-specific contraction-coefficient bound at `w_n`, when a bound
    /// function was supplied. May exceed one; recorded, never enforced.
    pub contraction_bound: Option<f64>,
}

/// Full per-iteration record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationTrace {
    pub rows: Vec<TraceRow>,
}

impl OptimizationTrace {
    pub const CSV_HEADER: &'static str =
        "iter,c_n,inner_steps,grad_norm,param_norm,objective,contraction_bound";

    /// Write the trace as CSV. Floats are printed in shortest round-trip
    /// form; unsampled objectives and absent bounds are empty fields.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for row in &self.rows {
            write!(
                out,
                "{},{},{},{},{},",
                row.iteration, row.threshold, row.inner_steps, row.grad_norm, row.param_norm
            )?;
            if let Some(e) = row.objective {
                write!(out, "{e}")?;
            }
            write!(out, ",")?;
            if let Some(b) = row.contraction_bound {
                write!(out, "{b}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// Ran the full outer-iteration budget.
    IterationBudget,
    /// Gradient-estimate norm reached the configured tolerance.
    GradientTolerance,
    /// The inner loop exhausted its step budget; the trace covers completed
    /// iterations only.
    InnerLoopFailure { last_increment_norm: f64 },
    /// A non-finite value appeared (overflow or a lost contraction).
    Diverged { context: &'static str },
}

/// Result of a run: the trace, the final parameters and auxiliary state, and
/// why it stopped.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: OptimizationTrace,
    pub params: Vec<f64>,
    pub state: AdjointState,
    pub stop: StopReason,
}

/// Everything an observer may inspect after one outer iteration.
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub threshold: f64,
    pub inner_steps: usize,
    /// Accepted auxiliary state `z_n`.
    pub state: &'a AdjointState,
    /// Parameters the inner loop ran at (`w_{n−1}`).
    pub params_before: &'a [f64],
    /// Parameters after the update (`w_n`).
    pub params_after: &'a [f64],
    /// Gradient estimate `g(z_n, w_{n−1})`.
    pub gradient: &'a [f64],
}

/// Run the loop with no per-iteration hooks.
pub fn run<S, L>(sys: &S, loss: &L, config: &RunConfig) -> Result<RunOutput>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    run_detailed(sys, loss, config, None, &mut |_| {})
}

/// Run the loop, optionally recording a model-specific contraction bound at
/// each new parameter vector and calling an observer after each iteration.
pub fn run_detailed<S, L>(
    sys: &S,
    loss: &L,
    config: &RunConfig,
    contraction_bound: Option<&dyn Fn(&[f64]) -> f64>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutput>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    config.validate()?;
    let d = sys.state_dim();
    if config.initial_state.dim() != d {
        return Err(FixoptError::LengthMismatch {
            expected: d,
            got: config.initial_state.dim(),
        });
    }
    if config.initial_params.len() != sys.param_dim() {
        return Err(FixoptError::LengthMismatch {
            expected: sys.param_dim(),
            got: config.initial_params.len(),
        });
    }

    let epsilon = config.mode.epsilon();
    let delta = config.mode.delta();
    let aux = AdjointSystem::new(sys, loss, config.mode.p1())?;
    let param_norm = DifferentiableSystem::param_norm(sys);

    let mut w = config.initial_params.clone();
    let mut w_prev = w.clone();
    let mut z = config.initial_state.flatten();

    let mut trace = OptimizationTrace::default();
    let mut stop = StopReason::IterationBudget;

    // c_1 from the read-out at the initial state, before any relaxation.
    let g0 = sys.vjp_param(&z[..d], &w, &z[d..]);
    let g0_norm = param_norm.norm(&g0)?;
    if !g0_norm.is_finite() {
        return Err(FixoptError::NonFinite {
            context: "initial gradient estimate",
        });
    }
    let mut threshold = delta * g0_norm;

    for n in 1..=config.max_outer_iterations {
        // c_n = 0: single-step rule (see module docs). Accept after one step
        // by running with an unmissable threshold.
        let (effective_threshold, inner_budget) = if threshold == 0.0 {
            (f64::INFINITY, 1)
        } else {
            (threshold, config.inner_max_steps)
        };
        let inner = match iterate_to_tolerance(&aux, &z, &w, effective_threshold, inner_budget) {
            Ok(inner) => inner,
            Err(FixoptError::NonConvergence {
                last_increment_norm,
                ..
            }) => {
                stop = StopReason::InnerLoopFailure {
                    last_increment_norm,
                };
                break;
            }
            Err(FixoptError::NonFinite { context }) => {
                stop = StopReason::Diverged { context };
                break;
            }
            Err(other) => return Err(other),
        };
        z = inner.final_state;

        let gradient = sys.vjp_param(&z[..d], &w, &z[d..]);
        let grad_norm = param_norm.norm(&gradient)?;
        if !grad_norm.is_finite() {
            stop = StopReason::Diverged {
                context: "gradient estimate",
            };
            break;
        }

        w_prev.copy_from_slice(&w);
        for (wk, gk) in w.iter_mut().zip(&gradient) {
            *wk -= epsilon * gk;
        }
        let param_norm_value = param_norm.norm(&w)?;
        if !param_norm_value.is_finite() {
            stop = StopReason::Diverged {
                context: "parameter update",
            };
            break;
        }

        let objective = match config.objective_stride {
            Some(stride) if n == 1 || n % stride == 0 => {
                crate::adjoint::objective_value(sys, loss, &w, &z[..d], config.objective_tol).ok()
            }
            _ => None,
        };
        let bound = contraction_bound.map(|f| f(&w));

        trace.rows.push(TraceRow {
            iteration: n,
            threshold,
            inner_steps: inner.steps_taken,
            grad_norm,
            param_norm: param_norm_value,
            objective,
            contraction_bound: bound,
        });

        let record = IterationRecord {
            iteration: n,
            threshold,
            inner_steps: inner.steps_taken,
            state: &AdjointState {
                x: z[..d].to_vec(),
                y: z[d..].to_vec(),
            },
            params_before: &w_prev,
            params_after: &w,
            gradient: &gradient,
        };
        observer(&record);

        threshold = delta * grad_norm;

        if let Some(tol) = config.gradient_tolerance {
            if grad_norm <= tol {
                stop = StopReason::GradientTolerance;
                break;
            }
        }
    }

    Ok(RunOutput {
        trace,
        params: w,
        state: AdjointState::from_flat(&z)?,
        stop,
    })
}

/// A single violation of the per-step descent inequality.
#[derive(Debug, Clone)]
pub struct DescentViolation {
    /// Index `n` of the step from `objectives[n]` to `objectives[n + 1]`.
    pub index: usize,
    pub observed: f64,
    pub allowed: f64,
}

/// Outcome of [`check_descent`].
#[derive(Debug, Clone)]
pub struct DescentReport {
    /// The guaranteed per-step decrease factor
    /// `k = ε(1−α)(1 − (L/2)ε(1−α))`.
    pub k: f64,
    pub violations: Vec<DescentViolation>,
}

impl DescentReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the descent inequality `E(w_{n+1}) ≤ E(w_n) − k‖∇E(w_n)‖²` along a
/// run. `objectives[n]` and `gradient_norms[n]` are the deep-solved objective
/// and true gradient norm at `w_n`; `alpha` is the relative error the
/// gradient estimates are allowed against the truth.
pub fn check_descent(
    objectives: &[f64],
    gradient_norms: &[f64],
    step_size: f64,
    gradient_lipschitz: f64,
    alpha: f64,
    slack: f64,
) -> Result<DescentReport> {
    if objectives.len() != gradient_norms.len() {
        return Err(FixoptError::LengthMismatch {
            expected: objectives.len(),
            got: gradient_norms.len(),
        });
    }
    let k = step_size
        * (1.0 - alpha)
        * (1.0 - 0.5 * gradient_lipschitz * step_size * (1.0 - alpha));
    let mut violations = Vec::new();
    for n in 0..objectives.len().saturating_sub(1) {
        let allowed = objectives[n] - k * gradient_norms[n] * gradient_norms[n] + slack;
        if objectives[n + 1] > allowed {
            violations.push(DescentViolation {
                index: n,
                observed: objectives[n + 1],
                allowed,
            });
        }
    }
    Ok(DescentReport { k, violations })
}

/// Whether an estimate is a usable descent direction:
/// `‖estimate − truth‖₂ ≤ alpha · ‖estimate‖₂` (up to round-off slack).
pub fn check_direction_quality(estimate: &[f64], truth: &[f64], alpha: f64) -> Result<bool> {
    if estimate.len() != truth.len() {
        return Err(FixoptError::LengthMismatch {
            expected: estimate.len(),
            got: truth.len(),
        });
    }
    let diff: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = estimate.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(diff <= alpha * scale + 1e-12 * (1.0 + scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::{certified_constants, implicit_gradient};
    use crate::contraction::deep_solve;
    use crate::models::scalar::{QuadraticLoss, ScalarLinear};

    fn scalar_problem() -> (ScalarLinear, QuadraticLoss) {
        (ScalarLinear::new(0.5), QuadraticLoss::new(100.0))
    }

    struct FlatLoss;
    impl LossFunction for FlatLoss {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, _x: &[f64]) -> f64 {
            1.0
        }
        fn gradient(&self, _x: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
    }

    #[test]
    fn stationary_start_never_moves() {
        // Zero loss gradient and a zero covector: the read-out vanishes, the
        // first threshold is zero, and the state is already exactly fixed
        // with w = 0, so every inner loop accepts after a single step.
        let sys = ScalarLinear::new(0.5);
        let config = RunConfig {
            max_outer_iterations: 10,
            mode: Mode::Empirical {
                epsilon: 0.1,
                delta: 0.1,
            },
            ..RunConfig::new(
                Mode::Empirical {
                    epsilon: 0.1,
                    delta: 0.1,
                },
                vec![0.0],
                AdjointState::zeros(1),
            )
        };
        let out = run(&sys, &FlatLoss, &config).unwrap();
        assert_eq!(out.stop, StopReason::IterationBudget);
        assert_eq!(out.params, vec![0.0]);
        for row in &out.trace.rows {
            assert_eq!(row.threshold, 0.0);
            assert_eq!(row.inner_steps, 1);
            assert_eq!(row.grad_norm, 0.0);
        }
    }

    #[test]
    fn scalar_empirical_run_decreases_gradient_and_parameter() {
        let (sys, loss) = scalar_problem();
        // Equilibrium start: x* = 2, y* = x*/(1 − a) = 4.
        let z0 = AdjointState::new(vec![2.0], vec![4.0]).unwrap();
        let mut config = RunConfig::new(
            Mode::Empirical {
                epsilon: 0.1,
                delta: 0.1,
            },
            vec![1.0],
            z0,
        );
        config.max_outer_iterations = 200;
        config.objective_stride = None;
        let out = run(&sys, &loss, &config).unwrap();
        assert_eq!(out.stop, StopReason::IterationBudget);
        let norms: Vec<f64> = out.trace.rows.iter().map(|r| r.grad_norm).collect();
        for pair in norms.windows(2) {
            assert!(pair[1] < pair[0] + 1e-15, "gradient norms not decreasing");
        }
        assert!(out.params[0].abs() < 1e-6, "w did not approach 0");
    }

    #[test]
    fn trace_is_self_consistent_bitwise() {
        let (sys, loss) = scalar_problem();
        let mut config = RunConfig::new(
            Mode::Empirical {
                epsilon: 0.07,
                delta: 0.03,
            },
            vec![1.0],
            AdjointState::zeros(1),
        );
        config.max_outer_iterations = 100;
        config.objective_stride = None;

        let mut gradients: Vec<Vec<f64>> = Vec::new();
        let mut params_after: Vec<Vec<f64>> = Vec::new();
        let out = run_detailed(&sys, &loss, &config, None, &mut |rec| {
            gradients.push(rec.gradient.to_vec());
            params_after.push(rec.params_after.to_vec());
        })
        .unwrap();

        let pnorm = DifferentiableSystem::param_norm(&sys);
        let delta = 0.03_f64;
        let epsilon = 0.07_f64;
        let mut w = vec![1.0_f64];
        for (n, row) in out.trace.rows.iter().enumerate() {
            // c_{n+1} = δ‖g_n‖ exactly.
            if n + 1 < out.trace.rows.len() {
                assert_eq!(
                    out.trace.rows[n + 1].threshold.to_bits(),
                    (delta * row.grad_norm).to_bits()
                );
            }
            // w_n = w_{n−1} − ε g_n exactly.
            for (wk, gk) in w.iter_mut().zip(&gradients[n]) {
                *wk -= epsilon * gk;
            }
            assert_eq!(w, params_after[n]);
            assert_eq!(
                row.param_norm.to_bits(),
                pnorm.norm(&w).unwrap().to_bits()
            );
            assert_eq!(
                row.grad_norm.to_bits(),
                pnorm.norm(&gradients[n]).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn certified_scalar_run_tracks_equilibrium() {
        let (sys, loss) = scalar_problem();
        let bundle = sys.exact_bundle(100.0).unwrap();
        let constants = certified_constants(&bundle, 0.4, 0.5, 0.5).unwrap();
        let c = constants.tracking_ratio;
        let p1 = constants.p1;

        // Start at the solved equilibrium so the tracking premise holds at n = 0.
        let w0 = vec![1.0];
        let x0 = deep_solve(&sys, &[0.0], &w0, 1e-14, DEFAULT_MAX_STEPS).unwrap();
        let y_star = x0[0] / (1.0 - 0.5);
        let z0 = AdjointState::new(x0.clone(), vec![y_star]).unwrap();

        let mut config = RunConfig::new(Mode::Certified(constants), w0, z0);
        config.max_outer_iterations = 300;
        config.objective_stride = None;

        let mut checked = 0usize;
        let out = run_detailed(&sys, &loss, &config, None, &mut |rec| {
            // ‖z_n − z*_{n−1}‖_Z ≤ c ‖g(z_n, w_{n−1})‖_W with z* deep-solved
            // at the pre-update parameters.
            let aux = AdjointSystem::new(&sys, &loss, p1).unwrap();
            let z_star = deep_solve(
                &aux,
                &rec.state.flatten(),
                rec.params_before,
                1e-13,
                DEFAULT_MAX_STEPS,
            )
            .unwrap();
            let diff: Vec<f64> = rec
                .state
                .flatten()
                .iter()
                .zip(&z_star)
                .map(|(a, b)| a - b)
                .collect();
            let lag = aux.z_norm().norm(&diff).unwrap();
            let gnorm = DifferentiableSystem::param_norm(&sys)
                .norm(rec.gradient)
                .unwrap();
            assert!(
                lag <= c * gnorm + 1e-12,
                "iteration {}: lag {lag} > c·‖g‖ {}",
                rec.iteration,
                c * gnorm
            );
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, out.trace.rows.len());
        assert_eq!(out.stop, StopReason::IterationBudget);
    }

    #[test]
    fn oracle_relaxation_matches_exact_gradient_descent() {
        // Replacing the accepted iterate by the solved equilibrium turns the
        // loop into plain gradient descent on E(w) = 2w².
        let (sys, loss) = scalar_problem();
        let epsilon = 0.05;
        let mut w = 1.0_f64;
        let mut w_exact = 1.0_f64;
        for _ in 0..50 {
            let g = implicit_gradient(&sys, &loss, &[w], 1e-14).unwrap()[0];
            w -= epsilon * g;
            w_exact -= epsilon * (4.0 * w_exact);
            assert!((w - w_exact).abs() <= 1e-10 * (1.0 + w_exact.abs()));
        }
    }

    #[test]
    fn divergent_problem_is_flagged() {
        // An expanding map: the inner loop cannot meet its threshold.
        let sys = ScalarLinear::new(1.5);
        let loss = QuadraticLoss::new(100.0);
        let mut config = RunConfig::new(
            Mode::Empirical {
                epsilon: 0.1,
                delta: 0.1,
            },
            vec![1.0],
            AdjointState::new(vec![1.0], vec![1.0]).unwrap(),
        );
        config.max_outer_iterations = 5;
        config.inner_max_steps = 50;
        let out = run(&sys, &loss, &config).unwrap();
        match out.stop {
            StopReason::InnerLoopFailure { .. } | StopReason::Diverged { .. } => {}
            other => panic!("expected failure stop, got {other:?}"),
        }
    }

    #[test]
    fn gradient_tolerance_stops_early() {
        let (sys, loss) = scalar_problem();
        let mut config = RunConfig::new(
            Mode::Empirical {
                epsilon: 0.1,
                delta: 0.1,
            },
            vec![1.0],
            AdjointState::zeros(1),
        );
        config.max_outer_iterations = 100_000;
        config.gradient_tolerance = Some(1e-6);
        config.objective_stride = None;
        let out = run(&sys, &loss, &config).unwrap();
        assert_eq!(out.stop, StopReason::GradientTolerance);
        assert!(out.trace.rows.last().unwrap().grad_norm <= 1e-6);
        assert!(out.trace.rows.len() < 1000);
    }

    #[test]
    fn csv_has_header_and_empty_optional_fields() {
        let trace = OptimizationTrace {
            rows: vec![
                TraceRow {
                    iteration: 1,
                    threshold: 0.5,
                    inner_steps: 3,
                    grad_norm: 1.25,
                    param_norm: 2.0,
                    objective: Some(0.125),
                    contraction_bound: None,
                },
                TraceRow {
                    iteration: 2,
                    threshold: 0.125,
                    inner_steps: 1,
                    grad_norm: 0.5,
                    param_norm: 1.75,
                    objective: None,
                    contraction_bound: Some(1.0625),
                },
            ],
        };
        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), OptimizationTrace::CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "1,0.5,3,1.25,2,0.125,");
        assert_eq!(lines.next().unwrap(), "2,0.125,1,0.5,1.75,,1.0625");
    }

    #[test]
    fn descent_check_reports_increases_only() {
        // Constant objectives with zero gradients: no violations.
        let report = check_descent(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0], 0.1, 1.0, 0.0, 0.0).unwrap();
        assert!(report.passed());

        // Strictly increasing objective: every step violates.
        let report =
            check_descent(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0], 0.1, 1.0, 0.0, 1e-12).unwrap();
        assert_eq!(report.violations.len(), 2);
        assert_eq!(report.violations[0].index, 0);
    }

    #[test]
    fn direction_quality_examples() {
        assert!(check_direction_quality(&[1.0, 2.0], &[1.0, 2.0], 0.0).unwrap());
        // Estimate nonzero but truth zero: fails any alpha below one.
        assert!(!check_direction_quality(&[1.0, 0.0], &[0.0, 0.0], 0.4).unwrap());
        // Scalar boundary case: |est − truth| = 0.1·truth against α‖est‖.
        assert!(check_direction_quality(&[1.1], &[1.0], 0.1).unwrap());
    }
}
