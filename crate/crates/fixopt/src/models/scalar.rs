//! One-dimensional affine test system with a quadratic loss.
//!
//! `f(x, w) = a·x + w` has the fixed point `x*(w) = w/(1−a)` and, with
//! `e(x) = x²/2`, the closed-form objective `E(w) = w²/(2(1−a)²)`. Every
//! derivative bound is exact, which makes this the verification vehicle for
//! certified schedules: the bundle is not an estimate.

use crate::adjoint::{
    DifferentiableSystem, LipschitzBundle, LossFunction, LossLipschitz, SystemLipschitz,
};
use crate::error::{FixoptError, Result};
use crate::norms::NormSpec;

#[derive(Debug, Clone)]
pub struct ScalarLinear {
    slope: f64,
}

impl ScalarLinear {
    pub fn new(slope: f64) -> Self {
        ScalarLinear { slope }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// The exact bundle, paired with a quadratic loss whose gradient is
    /// bounded by `gradient_bound` on the operating interval.
    pub fn exact_bundle(&self, gradient_bound: f64) -> Result<LipschitzBundle> {
        if self.slope.abs() >= 1.0 {
            return Err(FixoptError::InvalidBeta(self.slope.abs()));
        }
        LipschitzBundle::new(
            SystemLipschitz {
                beta_x: self.slope.abs(),
                state_jacobian_lipschitz: 0.0,
                param_jacobian_bound: 1.0,
                param_jacobian_param_lipschitz: 0.0,
                param_jacobian_state_lipschitz: 0.0,
            },
            LossLipschitz {
                gradient_bound,
                gradient_lipschitz: 1.0,
            },
        )
    }
}

impl DifferentiableSystem for ScalarLinear {
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = self.slope * x[0] + w[0];
    }
    fn vjp_state(&self, _x: &[f64], _w: &[f64], y: &[f64]) -> Vec<f64> {
        vec![self.slope * y[0]]
    }
    fn vjp_param(&self, _x: &[f64], _w: &[f64], y: &[f64]) -> Vec<f64> {
        vec![y[0]]
    }
    fn state_norm(&self) -> NormSpec {
        NormSpec::MaxAbs
    }
    fn param_norm(&self) -> NormSpec {
        NormSpec::Euclidean
    }
    fn system_lipschitz(&self, _w: &[f64]) -> Option<SystemLipschitz> {
        Some(SystemLipschitz {
            beta_x: self.slope.abs(),
            state_jacobian_lipschitz: 0.0,
            param_jacobian_bound: 1.0,
            param_jacobian_param_lipschitz: 0.0,
            param_jacobian_state_lipschitz: 0.0,
        })
    }
    fn contraction_coefficient(&self, _w: &[f64]) -> Option<f64> {
        (self.slope.abs() < 1.0).then(|| self.slope.abs())
    }
}

/// `e(x) = x²/2` on a one-dimensional state.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    gradient_bound: f64,
}

impl QuadraticLoss {
    /// `gradient_bound` must dominate `|x|` over the interval the run will
    /// visit; it enters dual-ball radii but none of the schedule constants of
    /// this system.
    pub fn new(gradient_bound: f64) -> Self {
        QuadraticLoss { gradient_bound }
    }
}

impl LossFunction for QuadraticLoss {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0]
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
    fn lipschitz(&self) -> Option<LossLipschitz> {
        Some(LossLipschitz {
            gradient_bound: self.gradient_bound,
            gradient_lipschitz: 1.0,
        })
    }
}
