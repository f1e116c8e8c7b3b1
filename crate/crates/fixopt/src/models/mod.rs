//! Bundled applications: the reaction-network and attractor-network models,
//! their parallel combination over a batch of inputs, the mean-squared
//! target loss, and seeded synthetic-dataset generation.

pub mod crn;
pub mod nn;
pub mod scalar;

pub use crn::CrnNetwork;
pub use nn::NnNetwork;

use crate::adjoint::{
    DifferentiableSystem, LossFunction, LossLipschitz, SystemLipschitz,
};
use crate::contraction::{deep_solve, DEFAULT_MAX_STEPS};
use crate::error::{FixoptError, Result};
use crate::norms::NormSpec;
use crate::rng::SplitMix64;

/// A single sub-system that can be replicated over per-instance inputs while
/// sharing one parameter vector.
pub trait BlockModel {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn param_norm(&self) -> NormSpec;
    fn step_block(&self, x: &[f64], w: &[f64], input: &[f64], out: &mut [f64]);
    fn vjp_state_block(&self, x: &[f64], w: &[f64], input: &[f64], y: &[f64], out: &mut [f64]);
    /// Add this block's parameter-space vector–Jacobian product into `acc`.
    fn vjp_param_accumulate(&self, x: &[f64], w: &[f64], input: &[f64], y: &[f64], acc: &mut [f64]);
    /// Contraction-coefficient bound for the stacked system; may be ≥ 1.
    fn contraction_bound_stacked(&self, w: &[f64], inputs: &[Vec<f64>]) -> Option<f64>;
    fn system_lipschitz_stacked(&self, w: &[f64], inputs: &[Vec<f64>]) -> Option<SystemLipschitz>;
}

/// Parallel combination of `m` instances of a block model, one input vector
/// per instance, sharing a single parameter vector. The state is the
/// concatenation of the per-instance states and its norm is the sum of the
/// blockwise ∞-norms.
#[derive(Debug, Clone)]
pub struct Stacked<M: BlockModel> {
    model: M,
    inputs: Vec<Vec<f64>>,
}

impl<M: BlockModel> Stacked<M> {
    pub fn new(model: M, inputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(FixoptError::invalid(
                "a parallel combination needs at least one instance",
            ));
        }
        let d = model.state_dim();
        for input in &inputs {
            if input.len() != d {
                return Err(FixoptError::LengthMismatch {
                    expected: d,
                    got: input.len(),
                });
            }
        }
        Ok(Stacked { model, inputs })
    }

    pub fn instances(&self) -> usize {
        self.inputs.len()
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn block_dim(&self) -> usize {
        self.model.state_dim()
    }
}

impl<M: BlockModel> DifferentiableSystem for Stacked<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim() * self.inputs.len()
    }

    fn param_dim(&self) -> usize {
        self.model.param_dim()
    }

    fn step(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        let d = self.model.state_dim();
        for (i, input) in self.inputs.iter().enumerate() {
            self.model
                .step_block(&x[i * d..(i + 1) * d], w, input, &mut out[i * d..(i + 1) * d]);
        }
    }

    fn vjp_state(&self, x: &[f64], w: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.model.state_dim();
        let mut out = vec![0.0; x.len()];
        for (i, input) in self.inputs.iter().enumerate() {
            self.model.vjp_state_block(
                &x[i * d..(i + 1) * d],
                w,
                input,
                &y[i * d..(i + 1) * d],
                &mut out[i * d..(i + 1) * d],
            );
        }
        out
    }

    fn vjp_param(&self, x: &[f64], w: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.model.state_dim();
        let mut acc = vec![0.0; self.model.param_dim()];
        // Blocks are reduced in instance order so runs reproduce exactly.
        for (i, input) in self.inputs.iter().enumerate() {
            self.model.vjp_param_accumulate(
                &x[i * d..(i + 1) * d],
                w,
                input,
                &y[i * d..(i + 1) * d],
                &mut acc,
            );
        }
        acc
    }

    fn state_norm(&self) -> NormSpec {
        NormSpec::stacked_sum(NormSpec::MaxAbs, self.inputs.len(), self.model.state_dim())
    }

    fn param_norm(&self) -> NormSpec {
        self.model.param_norm()
    }

    fn system_lipschitz(&self, w: &[f64]) -> Option<SystemLipschitz> {
        self.model.system_lipschitz_stacked(w, &self.inputs)
    }

    fn contraction_coefficient(&self, w: &[f64]) -> Option<f64> {
        self.model
            .contraction_bound_stacked(w, &self.inputs)
            .filter(|beta| *beta < 1.0)
    }
}

/// Mean squared distance to per-instance targets:
/// `(1/m) Σ_i ‖x^i − target^i‖₂²` with blockwise gradient `(2/m)(x^i − target^i)`.
#[derive(Debug, Clone)]
pub struct MseLoss {
    targets: Vec<Vec<f64>>,
    block_dim: usize,
    lipschitz: Option<LossLipschitz>,
}

impl MseLoss {
    pub fn new(targets: Vec<Vec<f64>>) -> Result<Self> {
        let block_dim = match targets.first() {
            Some(t) => t.len(),
            None => {
                return Err(FixoptError::invalid("loss needs at least one target"));
            }
        };
        if targets.iter().any(|t| t.len() != block_dim) {
            return Err(FixoptError::invalid("targets must share one dimension"));
        }
        Ok(MseLoss {
            targets,
            block_dim,
            lipschitz: None,
        })
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Attach gradient bounds valid while every block stays within ∞-distance
    /// `radius` of its target: the dual-norm gradient bound is `2·n·radius/m`
    /// and the gradient Lipschitz constant is `2·n/m`.
    pub fn with_lipschitz_radius(mut self, radius: f64) -> Self {
        let n = self.block_dim as f64;
        let m = self.targets.len() as f64;
        self.lipschitz = Some(LossLipschitz {
            gradient_bound: 2.0 * n * radius / m,
            gradient_lipschitz: 2.0 * n / m,
        });
        self
    }
}

impl LossFunction for MseLoss {
    fn dim(&self) -> usize {
        self.block_dim * self.targets.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.block_dim;
        let mut total = 0.0;
        for (i, target) in self.targets.iter().enumerate() {
            total += x[i * d..(i + 1) * d]
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        total / self.targets.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.block_dim;
        let scale = 2.0 / self.targets.len() as f64;
        let mut out = vec![0.0; x.len()];
        for (i, target) in self.targets.iter().enumerate() {
            for j in 0..d {
                out[i * d + j] = scale * (x[i * d + j] - target[j]);
            }
        }
        out
    }

    fn lipschitz(&self) -> Option<LossLipschitz> {
        self.lipschitz
    }
}

/// Assemble the stacked system and its target loss from one shared model, a
/// batch of inputs, and matching observed fixed points.
pub fn make_parallel<M: BlockModel>(
    model: M,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
) -> Result<(Stacked<M>, MseLoss)> {
    if inputs.len() != targets.len() {
        return Err(FixoptError::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let d = model.state_dim();
    if targets.iter().any(|t| t.len() != d) {
        return Err(FixoptError::invalid("target dimension mismatch"));
    }
    let system = Stacked::new(model, inputs)?;
    let loss = MseLoss::new(targets)?;
    Ok((system, loss))
}

/// Which bundled application a dataset or experiment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Crn,
    Nn,
}

/// Deep-solve tolerance used when generating target fixed points.
pub const TARGET_TOL: f64 = 1e-12;

/// A synthetic inverse problem: true parameters, per-instance inputs, the
/// fixed points they produce, and a fresh starting parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub params_true: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub params_init: Vec<f64>,
}

/// Generate a dataset from standard-normal draws: true parameters (symmetrized
/// as `(A + Aᵀ)/2` for the reaction network), `m` input vectors, deep-solved
/// targets at [`TARGET_TOL`], and an independent initial parameter vector.
/// Fully determined by the seed.
pub fn generate_dataset(kind: ModelKind, n: usize, m: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || m == 0 {
        return Err(FixoptError::invalid("n and m must be at least 1"));
    }
    let mut rng = SplitMix64::new(seed);
    match kind {
        ModelKind::Crn => {
            let net = CrnNetwork::complete(n);
            let params_true = symmetric_normal_params(&mut rng, &net);
            let inputs: Vec<Vec<f64>> = (0..m).map(|_| rng.normal_vec(n)).collect();
            let targets = solve_targets(&net, &params_true, &inputs)?;
            let params_init = symmetric_normal_params(&mut rng, &net);
            Ok(Dataset {
                params_true,
                inputs,
                targets,
                params_init,
            })
        }
        ModelKind::Nn => {
            let net = NnNetwork::new(n);
            let params_true = rng.normal_vec(n * n);
            let inputs: Vec<Vec<f64>> = (0..m).map(|_| rng.normal_vec(n)).collect();
            let targets = solve_targets(&net, &params_true, &inputs)?;
            let params_init = rng.normal_vec(n * n);
            Ok(Dataset {
                params_true,
                inputs,
                targets,
                params_init,
            })
        }
    }
}

/// Draw a full row-major standard-normal matrix, symmetrize it, and read off
/// the free pair parameters.
fn symmetric_normal_params(rng: &mut SplitMix64, net: &CrnNetwork) -> Vec<f64> {
    let n = net.species();
    let full = rng.normal_vec(n * n);
    net.pairs()
        .iter()
        .map(|&(i, j)| 0.5 * (full[i * n + j] + full[j * n + i]))
        .collect()
}

fn solve_targets<M: BlockModel + Clone>(
    model: &M,
    w: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let d = model.state_dim();
    inputs
        .iter()
        .map(|input| {
            let single = Stacked::new(model.clone(), vec![input.clone()])?;
            deep_solve(&single, &vec![0.0; d], w, TARGET_TOL, DEFAULT_MAX_STEPS)
        })
        .collect()
}
