//! Adjoint-versus-finite-difference gradient comparison.

use fixopt::adjoint::{fd_gradient, gradient_relative_error, implicit_gradient, FD_BASE_STEP, FD_DEEP_TOL};
use fixopt::contraction::{deep_solve, DEFAULT_MAX_STEPS};
use fixopt::models::scalar::{QuadraticLoss, ScalarLinear};
use fixopt::models::{generate_dataset, make_parallel, CrnNetwork, ModelKind, NnNetwork, Stacked};
use fixopt::rng::SplitMix64;
use fixopt::DifferentiableSystem;

use crate::{CliError, ExperimentKind};

/// Maximum relative error between the implicit (deep-solved adjoint) gradient
/// and the central-difference gradient on one seeded instance, at the
/// instance's starting parameters.
///
/// Reaction-network instances come straight from the dataset generator. For
/// attractor networks the generator's standard-normal weights routinely sit
/// above the `‖w‖∞ < 4` contraction bound once `n` is moderate, which leaves
/// the fixed point (and hence the gradient) outside the supported regime, so
/// gradient-check instances scale the weight draws by `1/n`.
pub fn gradcheck(
    kind: ExperimentKind,
    size: usize,
    instances: usize,
    seed: u64,
) -> Result<f64, CliError> {
    if size == 0 || instances == 0 {
        return Err(CliError::Config("size and instances must be at least 1".into()));
    }
    match kind {
        ExperimentKind::Crn => {
            let dataset = generate_dataset(ModelKind::Crn, size, instances, seed)?;
            let (system, loss) =
                make_parallel(CrnNetwork::complete(size), dataset.inputs, dataset.targets)?;
            compare(&system, &loss, &dataset.params_init)
        }
        ExperimentKind::Nn => {
            let net = NnNetwork::new(size);
            let mut rng = SplitMix64::new(seed);
            let scale = 1.0 / size as f64;
            let params_true: Vec<f64> =
                (0..size * size).map(|_| scale * rng.standard_normal()).collect();
            let inputs: Vec<Vec<f64>> = (0..instances).map(|_| rng.normal_vec(size)).collect();
            let targets: Vec<Vec<f64>> = inputs
                .iter()
                .map(|u| {
                    let single = Stacked::new(net.clone(), vec![u.clone()])?;
                    deep_solve(&single, &vec![0.0; size], &params_true, 1e-12, DEFAULT_MAX_STEPS)
                })
                .collect::<Result<_, _>>()?;
            let params_init: Vec<f64> =
                (0..size * size).map(|_| scale * rng.standard_normal()).collect();
            let (system, loss) = make_parallel(net, inputs, targets)?;
            compare(&system, &loss, &params_init)
        }
        ExperimentKind::ScalarCertified => {
            let system = ScalarLinear::new(crate::experiment::SCALAR_SLOPE);
            let loss = QuadraticLoss::new(crate::experiment::SCALAR_GRADIENT_BOUND);
            let mut rng = SplitMix64::new(seed);
            compare(&system, &loss, &[rng.standard_normal()])
        }
    }
}

fn compare<S, L>(system: &S, loss: &L, params: &[f64]) -> Result<f64, CliError>
where
    S: DifferentiableSystem,
    L: fixopt::LossFunction,
{
    let implicit = implicit_gradient(system, loss, params, FD_DEEP_TOL)?;
    let fd = fd_gradient(system, loss, params, FD_BASE_STEP, FD_DEEP_TOL)?;
    Ok(gradient_relative_error(&implicit, &fd))
}
