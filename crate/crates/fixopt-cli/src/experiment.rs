//! Experiment configuration and execution.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fixopt::adjoint::objective_value;
use fixopt::models::{generate_dataset, make_parallel, CrnNetwork, ModelKind, NnNetwork};
use fixopt::models::scalar::{QuadraticLoss, ScalarLinear};
use fixopt::{
    certified_constants, deep_solve, run_detailed, AdjointState, AdjointSystem,
    DifferentiableSystem, LossFunction, Mode, NormSpec, RunConfig, RunOutput, StopReason,
    DEFAULT_MAX_STEPS,
};

use crate::CliError;

/// Slope of the affine system in the certified scalar experiment.
pub const SCALAR_SLOPE: f64 = 0.5;
/// Starting parameter of the certified scalar experiment.
pub const SCALAR_W0: f64 = 1.0;
/// Loss-gradient bound used in the scalar bundle; valid while |x| ≤ 10, far
/// beyond the interval the run visits.
pub const SCALAR_GRADIENT_BOUND: f64 = 10.0;
/// Tuning fractions of the certified scalar schedule.
pub const SCALAR_ALPHA_C: f64 = 0.4;
pub const SCALAR_ALPHA_EPSILON: f64 = 0.5;
pub const SCALAR_ALPHA_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Reaction-rate fitting for the heterodimerization network.
    Crn,
    /// Attractor-network weight fitting.
    Nn,
    /// Affine scalar system with an exact Lipschitz bundle, run certified.
    ScalarCertified,
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "crn" => Ok(ExperimentKind::Crn),
            "nn" => Ok(ExperimentKind::Nn),
            "scalar-certified" => Ok(ExperimentKind::ScalarCertified),
            other => Err(format!(
                "unknown experiment {other:?}; expected crn, nn, or scalar-certified"
            )),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Crn => "crn",
            ExperimentKind::Nn => "nn",
            ExperimentKind::ScalarCertified => "scalar-certified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// Step size and threshold gain chosen by hand.
    Empirical,
    /// Constants derived from an exact Lipschitz bundle.
    Certified,
}

impl FromStr for ExperimentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "empirical" => Ok(ExperimentMode::Empirical),
            "certified" => Ok(ExperimentMode::Certified),
            other => Err(format!(
                "unknown mode {other:?}; expected empirical or certified"
            )),
        }
    }
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentMode::Empirical => "empirical",
            ExperimentMode::Certified => "certified",
        })
    }
}

/// A fully specified experiment. [`ExperimentConfig::defaults`] reproduces
/// the reference runs: both model experiments use five species or nodes, ten
/// instances, `ε = 0.4`, `δ = 0.01`, a zero auxiliary start, 50000
/// iterations, and the Frobenius parameter norm.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Species (reaction network) or nodes (attractor network).
    pub size: usize,
    /// Instances in the parallel combination.
    pub instances: usize,
    pub seed: u64,
    pub mode: ExperimentMode,
    pub epsilon: f64,
    pub delta: f64,
    pub iterations: usize,
    pub objective_stride: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let out_dir = PathBuf::from(format!("runs/{kind}"));
        match kind {
            ExperimentKind::Crn | ExperimentKind::Nn => ExperimentConfig {
                kind,
                size: 5,
                instances: 10,
                seed: 1,
                mode: ExperimentMode::Empirical,
                epsilon: 0.4,
                delta: 0.01,
                iterations: 50_000,
                objective_stride: 50,
                out_dir,
            },
            ExperimentKind::ScalarCertified => ExperimentConfig {
                kind,
                size: 1,
                instances: 1,
                seed: 1,
                mode: ExperimentMode::Certified,
                // Unused in certified mode; the schedule is derived.
                epsilon: 0.4,
                delta: 0.01,
                iterations: 1000,
                objective_stride: 50,
                out_dir,
            },
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.size == 0 || self.instances == 0 || self.iterations == 0 {
            return Err(CliError::Config(
                "size, instances, and iterations must be at least 1".into(),
            ));
        }
        if self.objective_stride == 0 {
            return Err(CliError::Config("objective stride must be at least 1".into()));
        }
        match (self.kind, self.mode) {
            (ExperimentKind::Crn | ExperimentKind::Nn, ExperimentMode::Certified) => {
                Err(CliError::Config(format!(
                    "the {} experiment has no exact Lipschitz bundle; use --mode empirical",
                    self.kind
                )))
            }
            (ExperimentKind::ScalarCertified, ExperimentMode::Empirical) => {
                Err(CliError::Config(
                    "scalar-certified runs with derived constants; use --mode certified".into(),
                ))
            }
            _ => {
                if self.mode == ExperimentMode::Empirical
                    && (!(self.epsilon > 0.0) || !(self.delta > 0.0))
                {
                    return Err(CliError::Config(
                        "epsilon and delta must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// End-of-run numbers, also written to `summary.txt`.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub rows: usize,
    pub stop: StopReason,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub total_inner_steps: usize,
    pub wall_seconds: f64,
    pub trace_path: PathBuf,
}

impl ExperimentSummary {
    /// Whether the run ended by budget or tolerance rather than a failure.
    pub fn completed(&self) -> bool {
        matches!(
            self.stop,
            StopReason::IterationBudget | StopReason::GradientTolerance
        )
    }
}

fn stop_label(stop: &StopReason) -> String {
    match stop {
        StopReason::IterationBudget => "iteration budget".into(),
        StopReason::GradientTolerance => "gradient tolerance".into(),
        StopReason::InnerLoopFailure {
            last_increment_norm,
        } => format!("inner loop failure (last increment {last_increment_norm:e})"),
        StopReason::Diverged { context } => format!("diverged ({context})"),
    }
}

/// Run one experiment, writing dataset files, the per-iteration trace, and a
/// summary into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(CliError::io(&config.out_dir))?;

    let started = Instant::now();
    match config.kind {
        ExperimentKind::Crn => {
            let dataset = generate_dataset(ModelKind::Crn, config.size, config.instances, config.seed)?;
            let net = CrnNetwork::complete(config.size);
            write_dataset_files(config, "species", &dataset.inputs, &dataset.targets)?;
            write_matrix(
                &config.out_dir.join("w_true.csv"),
                &net.expand_symmetric(&dataset.params_true)?,
                config.size,
            )?;
            write_matrix(
                &config.out_dir.join("w0.csv"),
                &net.expand_symmetric(&dataset.params_init)?,
                config.size,
            )?;

            let inputs_for_bound = dataset.inputs.clone();
            let bound_net = net.clone();
            let bound = move |w: &[f64]| {
                let refs: Vec<&[f64]> = inputs_for_bound.iter().map(|b| b.as_slice()).collect();
                bound_net
                    .contraction_bound(w, &refs)
                    .unwrap_or(f64::NAN)
            };
            let (system, loss) = make_parallel(net, dataset.inputs.clone(), dataset.targets)?;
            let run_config = RunConfig {
                max_outer_iterations: config.iterations,
                objective_stride: Some(config.objective_stride),
                ..RunConfig::new(
                    Mode::Empirical {
                        epsilon: config.epsilon,
                        delta: config.delta,
                    },
                    dataset.params_init,
                    AdjointState::zeros(config.size * config.instances),
                )
            };
            finish_run(config, &system, &loss, run_config, Some(&bound), started)
        }
        ExperimentKind::Nn => {
            let dataset = generate_dataset(ModelKind::Nn, config.size, config.instances, config.seed)?;
            let net = NnNetwork::new(config.size);
            write_dataset_files(config, "node", &dataset.inputs, &dataset.targets)?;
            write_matrix(
                &config.out_dir.join("w_true.csv"),
                &dataset.params_true,
                config.size,
            )?;
            write_matrix(&config.out_dir.join("w0.csv"), &dataset.params_init, config.size)?;

            let bound_net = net.clone();
            let bound = move |w: &[f64]| {
                bound_net
                    .contraction_bound(w, &NormSpec::MaxAbs)
                    .unwrap_or(f64::NAN)
            };
            let (system, loss) = make_parallel(net, dataset.inputs.clone(), dataset.targets)?;
            let run_config = RunConfig {
                max_outer_iterations: config.iterations,
                objective_stride: Some(config.objective_stride),
                ..RunConfig::new(
                    Mode::Empirical {
                        epsilon: config.epsilon,
                        delta: config.delta,
                    },
                    dataset.params_init,
                    AdjointState::zeros(config.size * config.instances),
                )
            };
            finish_run(config, &system, &loss, run_config, Some(&bound), started)
        }
        ExperimentKind::ScalarCertified => {
            let system = ScalarLinear::new(SCALAR_SLOPE);
            let loss = QuadraticLoss::new(SCALAR_GRADIENT_BOUND);
            let constants = certified_constants(
                &system.exact_bundle(SCALAR_GRADIENT_BOUND)?,
                SCALAR_ALPHA_C,
                SCALAR_ALPHA_EPSILON,
                SCALAR_ALPHA_DELTA,
            )?;
            // Start the auxiliary state at the solved equilibrium for w0 so
            // the tracking premise holds from the first iteration.
            let w0 = vec![SCALAR_W0];
            let aux = AdjointSystem::new(&system, &loss, constants.p1)?;
            let z0 = deep_solve(&aux, &[0.0, 0.0], &w0, 1e-13, DEFAULT_MAX_STEPS)?;
            let beta = system
                .contraction_coefficient(&w0)
                .expect("slope below one");
            let bound = move |_w: &[f64]| beta;
            let run_config = RunConfig {
                max_outer_iterations: config.iterations,
                objective_stride: Some(config.objective_stride),
                ..RunConfig::new(
                    Mode::Certified(constants),
                    w0,
                    AdjointState::from_flat(&z0)?,
                )
            };
            finish_run(config, &system, &loss, run_config, Some(&bound), started)
        }
    }
}

fn finish_run<S, L>(
    config: &ExperimentConfig,
    system: &S,
    loss: &L,
    run_config: RunConfig,
    bound: Option<&dyn Fn(&[f64]) -> f64>,
    started: Instant,
) -> Result<ExperimentSummary, CliError>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    let zeros = vec![0.0; system.state_dim()];
    let initial_objective = objective_value(
        system,
        loss,
        &run_config.initial_params,
        &zeros,
        run_config.objective_tol,
    )?;

    let output: RunOutput = run_detailed(system, loss, &run_config, bound, &mut |_| {})?;

    let final_objective =
        objective_value(system, loss, &output.params, &zeros, run_config.objective_tol)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let trace_path = config.out_dir.join("trace.csv");
    let mut file = fs::File::create(&trace_path).map_err(CliError::io(&trace_path))?;
    output
        .trace
        .write_csv(&mut file)
        .map_err(CliError::io(&trace_path))?;

    let summary = ExperimentSummary {
        kind: config.kind,
        seed: config.seed,
        rows: output.trace.rows.len(),
        stop: output.stop.clone(),
        initial_objective,
        final_objective,
        final_grad_norm: output.trace.rows.last().map_or(f64::NAN, |r| r.grad_norm),
        total_inner_steps: output.trace.rows.iter().map(|r| r.inner_steps).sum(),
        wall_seconds,
        trace_path,
    };
    write_summary(config, &summary)?;
    Ok(summary)
}

fn write_summary(config: &ExperimentConfig, summary: &ExperimentSummary) -> Result<(), CliError> {
    let path = config.out_dir.join("summary.txt");
    let mut out = fs::File::create(&path).map_err(CliError::io(&path))?;
    let text = format!(
        "experiment: {}\nseed: {}\nsize: {}\ninstances: {}\nmode: {}\nepsilon: {}\ndelta: {}\n\
         iterations: {}\nobjective_stride: {}\nrows: {}\nstop: {}\ninitial_objective: {}\n\
         final_objective: {}\nfinal_grad_norm: {}\ntotal_inner_steps: {}\nwall_seconds: {:.3}\n",
        config.kind,
        config.seed,
        config.size,
        config.instances,
        config.mode,
        config.epsilon,
        config.delta,
        config.iterations,
        config.objective_stride,
        summary.rows,
        stop_label(&summary.stop),
        summary.initial_objective,
        summary.final_objective,
        summary.final_grad_norm,
        summary.total_inner_steps,
        summary.wall_seconds,
    );
    out.write_all(text.as_bytes()).map_err(CliError::io(&path))
}

fn write_dataset_files(
    config: &ExperimentConfig,
    column: &str,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(), CliError> {
    let header: Vec<String> = (1..=config.size).map(|i| format!("{column}_{i}")).collect();
    write_rows(&config.out_dir.join("inputs.csv"), &header, inputs)?;
    write_rows(&config.out_dir.join("targets.csv"), &header, targets)
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(CliError::io(path))
}

fn write_matrix(path: &Path, flat: &[f64], n: usize) -> Result<(), CliError> {
    let mut text = String::new();
    for i in 0..n {
        let fields: Vec<String> = flat[i * n..(i + 1) * n].iter().map(|v| format!("{v}")).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(CliError::io(path))
}
