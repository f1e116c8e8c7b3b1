//! The auxiliary adjoint system and its certified schedule constants.
//!
//! For a parameterized contraction `x ↦ f(x, w)` and a loss `e` on states, the
//! auxiliary map
//!
//! ```text
//! T((x, y), w) = ( f(x, w),  (∂f/∂x(x, w))ᵀ y + ∂e/∂x(x) )
//! ```
//!
//! is again a contraction in a weighted product norm, and the read-out
//! `g((x, y), w) = (∂f/∂w(x, w))ᵀ y` evaluates, at the fixed point of `T`, to
//! the exact gradient of `w ↦ e(x*(w))`. This module builds that system from
//! vector–Jacobian products, derives the schedule constants `(c, ε, δ)` that
//! make the outer loop track equilibrium, and provides independent gradient
//! oracles (deep-solved implicit gradient, central finite differences).

use crate::contraction::{deep_solve, StepMap, DEFAULT_MAX_STEPS};
use crate::error::{FixoptError, Result};
use crate::norms::NormSpec;

/// A parameterized step map with reverse-mode derivatives.
///
/// Derivatives are exposed as vector–Jacobian products only; Jacobians are
/// never formed. `vjp_state` computes `(∂f/∂x)ᵀ y` and `vjp_param` computes
/// `(∂f/∂w)ᵀ y` flattened into parameter space.
pub trait DifferentiableSystem {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;

    /// `out = f(x, w)`.
    fn step(&self, x: &[f64], w: &[f64], out: &mut [f64]);

    /// `(∂f/∂x(x, w))ᵀ y`.
    fn vjp_state(&self, x: &[f64], w: &[f64], y: &[f64]) -> Vec<f64>;

    /// `(∂f/∂w(x, w))ᵀ y`, flattened to parameter space.
    fn vjp_param(&self, x: &[f64], w: &[f64], y: &[f64]) -> Vec<f64>;

    /// Norm on the state space.
    fn state_norm(&self) -> NormSpec;

    /// Norm on the parameter space.
    fn param_norm(&self) -> NormSpec;

    /// Derivative bounds valid on the system's operating domain, if known.
    fn system_lipschitz(&self, _w: &[f64]) -> Option<SystemLipschitz> {
        None
    }

    /// Contraction coefficient of the step in the state norm at `w`, if a
    /// bound below one is known.
    fn contraction_coefficient(&self, _w: &[f64]) -> Option<f64> {
        None
    }
}

/// Every differentiable system is a step map on its state space.
impl<S: DifferentiableSystem + ?Sized> StepMap for S {
    fn dim(&self) -> usize {
        self.state_dim()
    }
    fn apply(&self, state: &[f64], params: &[f64], out: &mut [f64]) {
        self.step(state, params, out);
    }
    fn state_norm(&self) -> NormSpec {
        DifferentiableSystem::state_norm(self)
    }
    fn declared_beta(&self, params: &[f64]) -> Option<f64> {
        self.contraction_coefficient(params)
    }
}

/// An objective on states with its gradient.
pub trait LossFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// `∂e/∂x(x)` as a covector.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Gradient bounds valid on the operating domain, if known.
    fn lipschitz(&self) -> Option<LossLipschitz> {
        None
    }
}

/// Derivative bounds for a step map, valid on its operating domain.
#[derive(Debug, Clone, Copy)]
pub struct SystemLipschitz {
    /// Contraction coefficient of the step in the state norm (`< 1`).
    pub beta_x: f64,
    /// Lipschitz constant of `x ↦ ∂f/∂x(x, w)` in the induced state norm.
    pub state_jacobian_lipschitz: f64,
    /// Bound on `∂f/∂w` as a map from parameter 2-norm to state norm.
    pub param_jacobian_bound: f64,
    /// Lipschitz constant of `w ↦ ∂f/∂w(x, w)`.
    pub param_jacobian_param_lipschitz: f64,
    /// Lipschitz constant of `x ↦ ∂f/∂w(x, w)`.
    pub param_jacobian_state_lipschitz: f64,
}

/// Gradient bounds for a loss, in the dual of the state norm.
#[derive(Debug, Clone, Copy)]
pub struct LossLipschitz {
    /// Bound on `‖∂e/∂x(x)‖` in the dual norm.
    pub gradient_bound: f64,
    /// Lipschitz constant of `x ↦ ∂e/∂x(x)` (state norm to dual norm).
    pub gradient_lipschitz: f64,
}

/// The full set of derivative bounds needed to certify a run.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzBundle {
    pub system: SystemLipschitz,
    pub loss: LossLipschitz,
}

impl LipschitzBundle {
    /// Validates that every entry is finite and nonnegative and that
    /// `beta_x < 1`. A `beta_x` of exactly zero (a step constant in the
    /// state) is accepted as a degenerate case.
    pub fn new(system: SystemLipschitz, loss: LossLipschitz) -> Result<Self> {
        let entries = [
            system.beta_x,
            system.state_jacobian_lipschitz,
            system.param_jacobian_bound,
            system.param_jacobian_param_lipschitz,
            system.param_jacobian_state_lipschitz,
            loss.gradient_bound,
            loss.gradient_lipschitz,
        ];
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FixoptError::invalid(
                "Lipschitz bundle entries must be finite and nonnegative",
            ));
        }
        if system.beta_x >= 1.0 {
            return Err(FixoptError::InvalidBeta(system.beta_x));
        }
        Ok(LipschitzBundle { system, loss })
    }

    /// Radius of the invariant dual-norm ball for the adjoint covector:
    /// `‖∂e/∂x‖-bound / (1 − beta_x)`.
    pub fn dual_ball_radius(&self) -> f64 {
        self.loss.gradient_bound / (1.0 - self.system.beta_x)
    }
}

/// The auxiliary state `z = (x, y)`: primal state plus adjoint covector of the
/// same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AdjointState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(FixoptError::LengthMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(AdjointState { x, y })
    }

    pub fn zeros(dim: usize) -> Self {
        AdjointState {
            x: vec![0.0; dim],
            y: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.x.len());
        z.extend_from_slice(&self.x);
        z.extend_from_slice(&self.y);
        z
    }

    pub fn from_flat(z: &[f64]) -> Result<Self> {
        if z.len() % 2 != 0 {
            return Err(FixoptError::invalid(
                "flattened auxiliary state must have even length",
            ));
        }
        let d = z.len() / 2;
        Ok(AdjointState {
            x: z[..d].to_vec(),
            y: z[d..].to_vec(),
        })
    }
}

fn check_adjoint_dims<S, L>(sys: &S, loss: &L, z: &AdjointState, w: &[f64]) -> Result<()>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    if z.dim() != sys.state_dim() || loss.dim() != sys.state_dim() {
        return Err(FixoptError::LengthMismatch {
            expected: sys.state_dim(),
            got: z.dim(),
        });
    }
    if w.len() != sys.param_dim() {
        return Err(FixoptError::LengthMismatch {
            expected: sys.param_dim(),
            got: w.len(),
        });
    }
    Ok(())
}

/// One step of the auxiliary system. Both components read the incoming
/// `(x, y)`: the primal advances through `f` while the covector is updated
/// with the Jacobian transposed at the pre-step state.
pub fn adjoint_step<S, L>(sys: &S, loss: &L, z: &AdjointState, w: &[f64]) -> Result<AdjointState>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    check_adjoint_dims(sys, loss, z, w)?;
    let mut x_next = vec![0.0; sys.state_dim()];
    sys.step(&z.x, w, &mut x_next);
    let mut y_next = sys.vjp_state(&z.x, w, &z.y);
    for (yn, g) in y_next.iter_mut().zip(loss.gradient(&z.x)) {
        *yn += g;
    }
    Ok(AdjointState {
        x: x_next,
        y: y_next,
    })
}

/// The gradient read-out `g((x, y), w) = (∂f/∂w(x, w))ᵀ y`.
pub fn adjoint_gradient<S>(sys: &S, z: &AdjointState, w: &[f64]) -> Result<Vec<f64>>
where
    S: DifferentiableSystem + ?Sized,
{
    if z.dim() != sys.state_dim() {
        return Err(FixoptError::LengthMismatch {
            expected: sys.state_dim(),
            got: z.dim(),
        });
    }
    if w.len() != sys.param_dim() {
        return Err(FixoptError::LengthMismatch {
            expected: sys.param_dim(),
            got: w.len(),
        });
    }
    Ok(sys.vjp_param(&z.x, w, &z.y))
}

/// Primal weight of the product norm `‖(x, y)‖ = p1‖x‖ + ‖y‖*` in which the
/// auxiliary system contracts with coefficient `(beta_x + 1)/2`:
///
/// ```text
/// p1 = 2 ( Lxx_f · Lx_e / (1 − beta_x)² + Lxx_e / (1 − beta_x) )
/// ```
///
/// When both curvature constants vanish (affine step, linear loss gradient)
/// the formula degenerates to zero, which would collapse the product norm;
/// any positive weight preserves the hierarchical contraction argument, so
/// the weight is floored at one.
pub fn weight_p1(bundle: &LipschitzBundle) -> Result<f64> {
    let bx = bundle.system.beta_x;
    if bx >= 1.0 {
        return Err(FixoptError::InvalidBeta(bx));
    }
    let gap = 1.0 - bx;
    let p1 = 2.0
        * (bundle.system.state_jacobian_lipschitz * bundle.loss.gradient_bound / (gap * gap)
            + bundle.loss.gradient_lipschitz / gap);
    Ok(if p1 == 0.0 { 1.0 } else { p1 })
}

/// Lipschitz data for the auxiliary map and gradient read-out, either derived
/// from a [`LipschitzBundle`] or supplied directly.
#[derive(Debug, Clone, Copy)]
pub struct RateBounds {
    /// Contraction coefficient of the auxiliary map in the product norm.
    pub beta: f64,
    /// Lipschitz constant of the auxiliary map in the parameters.
    pub aux_param_lipschitz: f64,
    /// Lipschitz constant of the read-out in the auxiliary state.
    pub readout_state_lipschitz: f64,
    /// Lipschitz constant of the read-out in the parameters.
    pub readout_param_lipschitz: f64,
}

/// The schedule bundle: tuning fractions, the rate bounds they were derived
/// from, and the resulting tracking ratio `c`, step size `ε`, and threshold
/// gain `δ`.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleConstants {
    pub alpha_c: f64,
    pub alpha_epsilon: f64,
    pub alpha_delta: f64,
    pub rates: RateBounds,
    /// Primal weight of the product norm (1 when constructed from raw rates).
    pub p1: f64,
    /// Tracking ratio `c = alpha_c / Lz_g`: equilibrium lag is kept below
    /// `c · ‖gradient estimate‖`.
    pub tracking_ratio: f64,
    /// Parameter step size `ε`.
    pub step_size: f64,
    /// Threshold gain `δ`: the next inner threshold is `δ · ‖gradient
    /// estimate‖`.
    pub threshold_gain: f64,
}

impl ScheduleConstants {
    /// Compute `(c, ε, δ)` from rate bounds and tuning fractions:
    ///
    /// ```text
    /// c = αc / Lz_g
    /// ε = αε (1 − αc) / (Lw_g + Lz_g · Lw_T / (1 − β))
    /// δ = αδ · αc (1 − αc)(1 − αε)(1 − β) / ((1 + αc) Lz_g β)
    /// ```
    ///
    /// All three fractions must lie in `(0, 1)`. Runs that must also satisfy
    /// the approximate-descent property additionally require
    /// `alpha_c < 1/2`; see [`ScheduleConstants::descent_grade`].
    pub fn from_rates(
        rates: RateBounds,
        alpha_c: f64,
        alpha_epsilon: f64,
        alpha_delta: f64,
    ) -> Result<Self> {
        for (name, a) in [
            ("alpha_c", alpha_c),
            ("alpha_epsilon", alpha_epsilon),
            ("alpha_delta", alpha_delta),
        ] {
            if !(a > 0.0 && a < 1.0) {
                return Err(FixoptError::invalid(format!(
                    "{name} must lie in (0, 1), got {a}"
                )));
            }
        }
        if !(rates.beta > 0.0 && rates.beta < 1.0) {
            return Err(FixoptError::InvalidBeta(rates.beta));
        }
        if !(rates.readout_state_lipschitz > 0.0) {
            return Err(FixoptError::invalid(
                "readout state Lipschitz constant must be positive",
            ));
        }
        let beta = rates.beta;
        let l_zg = rates.readout_state_lipschitz;
        let l_wg = rates.readout_param_lipschitz;
        let l_wt = rates.aux_param_lipschitz;

        let tracking_ratio = alpha_c / l_zg;
        let denom = l_wg + l_zg * l_wt / (1.0 - beta);
        if !(denom > 0.0) {
            return Err(FixoptError::invalid(
                "step-size denominator must be positive; the read-out and auxiliary map \
                 cannot both be parameter-independent",
            ));
        }
        let step_size = alpha_epsilon * (1.0 - alpha_c) / denom;
        let threshold_gain = alpha_delta
            * (alpha_c * (1.0 - alpha_c) * (1.0 - alpha_epsilon) * (1.0 - beta))
            / ((1.0 + alpha_c) * l_zg * beta);

        let constants = ScheduleConstants {
            alpha_c,
            alpha_epsilon,
            alpha_delta,
            rates,
            p1: 1.0,
            tracking_ratio,
            step_size,
            threshold_gain,
        };
        let a = constants.composite_update_gain();
        if !(a < 1.0) {
            return Err(FixoptError::invalid(format!(
                "composite update gain {a} is not below one"
            )));
        }
        Ok(constants)
    }

    /// The quantity `A = (Lw_g + Lz_g Lw_T/(1−β)) ε + Lz_g c + Lz_g β/(1−β) δ`
    /// controlling how much of one gradient-estimate magnitude carries into
    /// the next. Tracking requires `A < 1`.
    pub fn composite_update_gain(&self) -> f64 {
        let beta = self.rates.beta;
        let l_zg = self.rates.readout_state_lipschitz;
        (self.rates.readout_param_lipschitz + l_zg * self.rates.aux_param_lipschitz / (1.0 - beta))
            * self.step_size
            + l_zg * self.tracking_ratio
            + l_zg * beta / (1.0 - beta) * self.threshold_gain
    }

    /// Upper bound on the composite gain with the threshold term taken at its
    /// allowed maximum (`alpha_delta` at one). This is the quantity whose
    /// complement has the closed form
    /// [`ScheduleConstants::one_minus_gain_closed_form`]; the actual gain is
    /// never larger.
    pub fn composite_update_gain_bound(&self) -> f64 {
        let beta = self.rates.beta;
        let l_zg = self.rates.readout_state_lipschitz;
        (self.rates.readout_param_lipschitz + l_zg * self.rates.aux_param_lipschitz / (1.0 - beta))
            * self.step_size
            + l_zg * self.tracking_ratio
            + l_zg * beta / (1.0 - beta) * (self.threshold_gain / self.alpha_delta)
    }

    /// Closed form of `1 − A` (with `A` the gain bound above) in terms of the
    /// tuning fractions alone.
    pub fn one_minus_gain_closed_form(&self) -> f64 {
        (1.0 - self.alpha_c)
            * (1.0 - self.alpha_epsilon)
            * (1.0 - self.alpha_c / (1.0 + self.alpha_c))
    }

    /// A Lipschitz constant for the objective gradient `w ↦ ∂E/∂w`:
    /// `L = Lz_g · Lw_T / (1 − β) + Lw_g`. The step size always satisfies
    /// `ε ≤ 1/L`.
    pub fn objective_gradient_lipschitz(&self) -> f64 {
        self.rates.readout_state_lipschitz * self.rates.aux_param_lipschitz
            / (1.0 - self.rates.beta)
            + self.rates.readout_param_lipschitz
    }

    /// Whether the schedule also meets the approximate-descent requirement
    /// `alpha_c < 1/2` (tracking alone only needs `alpha_c < 1`).
    pub fn descent_grade(&self) -> bool {
        self.alpha_c < 0.5
    }
}

/// Derive the full certified schedule from derivative bounds:
///
/// ```text
/// β    = (beta_x + 1)/2
/// Lw_T = p1·Lw_f + Lxw_f · Lx_e/(1 − beta_x)
/// Lz_g = max{ Lw_f, (1 − beta_x) Lxw_f / (2 Lxx_f) }   (Lw_f alone when Lxx_f = 0)
/// Lw_g = Lww_f · Lx_e/(1 − beta_x)
/// ```
///
/// then `(c, ε, δ)` as in [`ScheduleConstants::from_rates`].
pub fn certified_constants(
    bundle: &LipschitzBundle,
    alpha_c: f64,
    alpha_epsilon: f64,
    alpha_delta: f64,
) -> Result<ScheduleConstants> {
    let sys = &bundle.system;
    let bx = sys.beta_x;
    if bx >= 1.0 {
        return Err(FixoptError::InvalidBeta(bx));
    }
    let gap = 1.0 - bx;
    let p1 = weight_p1(bundle)?;
    let beta = (bx + 1.0) / 2.0;
    let aux_param_lipschitz = p1 * sys.param_jacobian_bound
        + sys.param_jacobian_state_lipschitz * bundle.loss.gradient_bound / gap;
    let readout_state_lipschitz = if sys.state_jacobian_lipschitz > 0.0 {
        sys.param_jacobian_bound.max(
            gap * sys.param_jacobian_state_lipschitz / (2.0 * sys.state_jacobian_lipschitz),
        )
    } else {
        sys.param_jacobian_bound
    };
    let readout_param_lipschitz =
        sys.param_jacobian_param_lipschitz * bundle.loss.gradient_bound / gap;

    let mut constants = ScheduleConstants::from_rates(
        RateBounds {
            beta,
            aux_param_lipschitz,
            readout_state_lipschitz,
            readout_param_lipschitz,
        },
        alpha_c,
        alpha_epsilon,
        alpha_delta,
    )?;
    constants.p1 = p1;
    Ok(constants)
}

/// The auxiliary map over the flattened state `[x, y]`, measured in the
/// product norm `p1‖x‖ + ‖y‖*`.
pub struct AdjointSystem<'a, S: ?Sized, L: ?Sized> {
    system: &'a S,
    loss: &'a L,
    z_norm: NormSpec,
}

impl<'a, S, L> AdjointSystem<'a, S, L>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    pub fn new(system: &'a S, loss: &'a L, p1: f64) -> Result<Self> {
        let d = system.state_dim();
        if loss.dim() != d {
            return Err(FixoptError::LengthMismatch {
                expected: d,
                got: loss.dim(),
            });
        }
        let state = DifferentiableSystem::state_norm(system);
        let dual = state.dual()?;
        let z_norm = NormSpec::weighted_pair(p1, 1.0, state, d, dual, d)?;
        Ok(AdjointSystem {
            system,
            loss,
            z_norm,
        })
    }

    pub fn z_norm(&self) -> &NormSpec {
        &self.z_norm
    }
}

impl<S, L> StepMap for AdjointSystem<'_, S, L>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    fn dim(&self) -> usize {
        2 * self.system.state_dim()
    }

    fn apply(&self, state: &[f64], params: &[f64], out: &mut [f64]) {
        let d = self.system.state_dim();
        let (x, y) = state.split_at(d);
        let (out_x, out_y) = out.split_at_mut(d);
        self.system.step(x, params, out_x);
        let vjp = self.system.vjp_state(x, params, y);
        let grad = self.loss.gradient(x);
        for ((o, v), g) in out_y.iter_mut().zip(vjp).zip(grad) {
            *o = v + g;
        }
    }

    fn state_norm(&self) -> NormSpec {
        self.z_norm.clone()
    }
}

/// The covector recursion with the primal frozen at a solved fixed point:
/// `y ↦ (∂f/∂x(x*, w))ᵀ y + ∂e/∂x(x*)`, a contraction in the dual norm.
struct FrozenAdjoint<'a, S: ?Sized, L: ?Sized> {
    system: &'a S,
    loss: &'a L,
    x_star: &'a [f64],
    dual_norm: NormSpec,
}

impl<S, L> StepMap for FrozenAdjoint<'_, S, L>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    fn dim(&self) -> usize {
        self.system.state_dim()
    }
    fn apply(&self, state: &[f64], params: &[f64], out: &mut [f64]) {
        let vjp = self.system.vjp_state(self.x_star, params, state);
        let grad = self.loss.gradient(self.x_star);
        for ((o, v), g) in out.iter_mut().zip(vjp).zip(grad) {
            *o = v + g;
        }
    }
    fn state_norm(&self) -> NormSpec {
        self.dual_norm.clone()
    }
}

/// Deep-solve the objective value `E(w) = e(x*(w))`, iterating the primal
/// from `x0` until the increment norm falls to `tol`.
pub fn objective_value<S, L>(sys: &S, loss: &L, w: &[f64], x0: &[f64], tol: f64) -> Result<f64>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    let x = deep_solve(sys, x0, w, tol, DEFAULT_MAX_STEPS)?;
    Ok(loss.value(&x))
}

/// Gradient of `w ↦ e(x*(w))` via implicit differentiation: deep-solve the
/// primal, deep-solve the covector recursion at the fixed primal, then apply
/// the read-out. Exact up to the solve tolerances.
pub fn implicit_gradient<S, L>(sys: &S, loss: &L, w: &[f64], tol: f64) -> Result<Vec<f64>>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    let d = sys.state_dim();
    let x_star = deep_solve(sys, &vec![0.0; d], w, tol, DEFAULT_MAX_STEPS)?;
    let frozen = FrozenAdjoint {
        system: sys,
        loss,
        x_star: &x_star,
        dual_norm: DifferentiableSystem::state_norm(sys).dual()?,
    };
    let y_star = deep_solve(&frozen, &vec![0.0; d], w, tol, DEFAULT_MAX_STEPS)?;
    let z = AdjointState::new(x_star, y_star)?;
    adjoint_gradient(sys, &z, w)
}

/// Base relative step for [`fd_gradient`].
pub const FD_BASE_STEP: f64 = 1e-5;
/// Deep-solve tolerance used alongside [`FD_BASE_STEP`]; it sits far below
/// the squared step so fixed-point noise does not dominate the differences.
pub const FD_DEEP_TOL: f64 = 1e-13;

/// Central-difference estimate of the gradient of `w ↦ e(x*(w))`, one
/// coordinate at a time, with per-coordinate step `h · max(1, |w_k|)` and a
/// fresh deep solve per evaluation. Entirely independent of the adjoint path.
pub fn fd_gradient<S, L>(sys: &S, loss: &L, w: &[f64], h: f64, tol: f64) -> Result<Vec<f64>>
where
    S: DifferentiableSystem + ?Sized,
    L: LossFunction + ?Sized,
{
    if !(h > 0.0) {
        return Err(FixoptError::invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let d = sys.state_dim();
    let x0 = vec![0.0; d];
    let mut grad = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for k in 0..w.len() {
        let hk = h * w[k].abs().max(1.0);
        probe[k] = w[k] + hk;
        let e_plus = {
            let x = deep_solve(sys, &x0, &probe, tol, DEFAULT_MAX_STEPS)?;
            loss.value(&x)
        };
        probe[k] = w[k] - hk;
        let e_minus = {
            let x = deep_solve(sys, &x0, &probe, tol, DEFAULT_MAX_STEPS)?;
            loss.value(&x)
        };
        probe[k] = w[k];
        grad[k] = (e_plus - e_minus) / (2.0 * hk);
    }
    Ok(grad)
}

/// `‖a − b‖∞ / ‖b‖∞`, with an exact zero when both vanish. Used to compare
/// gradient routes.
pub fn gradient_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::scalar::{QuadraticLoss, ScalarLinear};

    fn scalar_setup() -> (ScalarLinear, QuadraticLoss) {
        (ScalarLinear::new(0.5), QuadraticLoss::new(10.0))
    }

    #[test]
    fn adjoint_step_matches_hand_substitution() {
        // f(x, w) = a·x + w, e(x) = x²/2 maps (x, y) to (a·x + w, a·y + x).
        let (sys, loss) = scalar_setup();
        let z = AdjointState::new(vec![3.0], vec![2.0]).unwrap();
        let next = adjoint_step(&sys, &loss, &z, &[0.25]).unwrap();
        assert_eq!(next.x, vec![0.5 * 3.0 + 0.25]);
        assert_eq!(next.y, vec![0.5 * 2.0 + 3.0]);
    }

    #[test]
    fn adjoint_step_with_zero_covector_returns_loss_gradient() {
        let (sys, loss) = scalar_setup();
        let z = AdjointState::new(vec![-1.5], vec![0.0]).unwrap();
        let next = adjoint_step(&sys, &loss, &z, &[0.0]).unwrap();
        assert_eq!(next.y, loss.gradient(&[-1.5]));
    }

    #[test]
    fn gradient_readout_is_linear_in_covector() {
        let (sys, _) = scalar_setup();
        let z = AdjointState::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(adjoint_gradient(&sys, &z, &[0.3]).unwrap(), vec![0.0]);
        // ∂f/∂w = 1, so the read-out is the covector itself.
        let z = AdjointState::new(vec![1.0], vec![7.5]).unwrap();
        assert_eq!(adjoint_gradient(&sys, &z, &[0.3]).unwrap(), vec![7.5]);
    }

    #[test]
    fn weight_p1_formula_and_floor() {
        let bundle = |bx: f64, lxxf: f64, lxe: f64, lxxe: f64| {
            LipschitzBundle::new(
                SystemLipschitz {
                    beta_x: bx,
                    state_jacobian_lipschitz: lxxf,
                    param_jacobian_bound: 1.0,
                    param_jacobian_param_lipschitz: 0.0,
                    param_jacobian_state_lipschitz: 0.0,
                },
                LossLipschitz {
                    gradient_bound: lxe,
                    gradient_lipschitz: lxxe,
                },
            )
            .unwrap()
        };
        // Both curvature terms vanish: floored to 1.
        assert_eq!(weight_p1(&bundle(0.5, 0.0, 1.0, 0.0)).unwrap(), 1.0);
        // Direct evaluation: 2(1/0.25 + 1/0.5) = 12.
        assert_eq!(weight_p1(&bundle(0.5, 1.0, 1.0, 1.0)).unwrap(), 12.0);
        // First term is homogeneous in the loss-gradient bound.
        let single = weight_p1(&bundle(0.5, 1.0, 1.0, 0.0)).unwrap();
        let double = weight_p1(&bundle(0.5, 1.0, 2.0, 0.0)).unwrap();
        assert_eq!(double, 2.0 * single);
    }

    #[test]
    fn toy_schedule_values_are_exact() {
        let rates = RateBounds {
            beta: 0.5,
            aux_param_lipschitz: 1.0,
            readout_state_lipschitz: 1.0,
            readout_param_lipschitz: 1.0,
        };
        let c = ScheduleConstants::from_rates(rates, 0.5, 0.5, 0.5).unwrap();
        assert_eq!(c.tracking_ratio, 0.5);
        assert_eq!(c.step_size, 1.0 / 12.0);
        assert_eq!(c.threshold_gain, 1.0 / 24.0);
        assert!(c.composite_update_gain() < 1.0);
        assert!(!c.descent_grade());
    }

    #[test]
    fn certified_constants_from_unit_bundle_match_toy_rates() {
        // beta_x = 0 with unit Lw_f, Lww_f and unit loss-gradient bound
        // reproduces the raw rates (β, Lw_T, Lz_g, Lw_g) = (1/2, 1, 1, 1).
        let bundle = LipschitzBundle::new(
            SystemLipschitz {
                beta_x: 0.0,
                state_jacobian_lipschitz: 0.0,
                param_jacobian_bound: 1.0,
                param_jacobian_param_lipschitz: 1.0,
                param_jacobian_state_lipschitz: 0.0,
            },
            LossLipschitz {
                gradient_bound: 1.0,
                gradient_lipschitz: 0.0,
            },
        )
        .unwrap();
        let c = certified_constants(&bundle, 0.5, 0.5, 0.5).unwrap();
        assert_eq!(c.rates.beta, 0.5);
        assert_eq!(c.rates.aux_param_lipschitz, 1.0);
        assert_eq!(c.rates.readout_state_lipschitz, 1.0);
        assert_eq!(c.rates.readout_param_lipschitz, 1.0);
        assert_eq!(c.p1, 1.0);
        assert_eq!(c.tracking_ratio, 0.5);
        assert_eq!(c.step_size, 1.0 / 12.0);
        assert_eq!(c.threshold_gain, 1.0 / 24.0);
    }

    #[test]
    fn composite_gain_matches_closed_form_on_random_fractions() {
        let mut rng = crate::rng::SplitMix64::new(0xa1fa);
        for _ in 0..100 {
            let rates = RateBounds {
                beta: rng.uniform_in(0.05, 0.95),
                aux_param_lipschitz: rng.uniform_in(0.1, 5.0),
                readout_state_lipschitz: rng.uniform_in(0.1, 5.0),
                readout_param_lipschitz: rng.uniform_in(0.0, 5.0),
            };
            let c = ScheduleConstants::from_rates(
                rates,
                rng.uniform_in(0.01, 0.99),
                rng.uniform_in(0.01, 0.99),
                rng.uniform_in(0.01, 0.99),
            )
            .unwrap();
            let direct = 1.0 - c.composite_update_gain_bound();
            let closed = c.one_minus_gain_closed_form();
            assert!(
                (direct - closed).abs() <= 1e-14,
                "direct {direct} vs closed {closed}"
            );
            assert!(c.composite_update_gain() <= c.composite_update_gain_bound() + 1e-15);
            assert!(c.step_size <= 1.0 / c.objective_gradient_lipschitz() + 1e-15);
        }
    }

    #[test]
    fn invalid_fractions_and_rates_rejected() {
        let rates = RateBounds {
            beta: 0.5,
            aux_param_lipschitz: 1.0,
            readout_state_lipschitz: 1.0,
            readout_param_lipschitz: 1.0,
        };
        assert!(ScheduleConstants::from_rates(rates, 0.0, 0.5, 0.5).is_err());
        assert!(ScheduleConstants::from_rates(rates, 0.5, 1.0, 0.5).is_err());
        assert!(ScheduleConstants::from_rates(rates, 0.5, 0.5, -0.1).is_err());
        let bad_beta = RateBounds { beta: 1.0, ..rates };
        assert!(ScheduleConstants::from_rates(bad_beta, 0.5, 0.5, 0.5).is_err());
        let zero_lzg = RateBounds {
            readout_state_lipschitz: 0.0,
            ..rates
        };
        assert!(ScheduleConstants::from_rates(zero_lzg, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn implicit_gradient_matches_closed_form_scalar() {
        // x*(w) = w/(1-a), E(w) = x*²/2, ∂E/∂w = w/(1-a)².
        let (sys, loss) = scalar_setup();
        for w in [1.0, -0.7, 0.3] {
            let g = implicit_gradient(&sys, &loss, &[w], 1e-13).unwrap();
            let expected = w / (0.5 * 0.5);
            assert!((g[0] - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn implicit_gradient_vanishes_for_flat_loss() {
        struct FlatLoss;
        impl LossFunction for FlatLoss {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _x: &[f64]) -> f64 {
                4.0
            }
            fn gradient(&self, _x: &[f64]) -> Vec<f64> {
                vec![0.0]
            }
        }
        let sys = ScalarLinear::new(0.5);
        let g = implicit_gradient(&sys, &FlatLoss, &[1.0], 1e-13).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn fd_gradient_matches_closed_form_scalar() {
        let (sys, loss) = scalar_setup();
        let g = fd_gradient(&sys, &loss, &[1.0], FD_BASE_STEP, FD_DEEP_TOL).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-7, "got {}", g[0]);
        assert!(fd_gradient(&sys, &loss, &[1.0], 0.0, FD_DEEP_TOL).is_err());
    }

    #[test]
    fn implicit_and_fd_agree_on_scalar_family() {
        let mut rng = crate::rng::SplitMix64::new(0xfd);
        for _ in 0..20 {
            let sys = ScalarLinear::new(rng.uniform_in(-0.9, 0.9));
            let loss = QuadraticLoss::new(100.0);
            let w = [rng.standard_normal()];
            let imp = implicit_gradient(&sys, &loss, &w, FD_DEEP_TOL).unwrap();
            let fd = fd_gradient(&sys, &loss, &w, FD_BASE_STEP, FD_DEEP_TOL).unwrap();
            assert!(gradient_relative_error(&imp, &fd) <= 1e-5);
        }
    }

    #[test]
    fn flat_state_rejects_odd_lengths() {
        assert!(AdjointState::from_flat(&[1.0, 2.0, 3.0]).is_err());
        let z = AdjointState::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(AdjointState::from_flat(&z.flatten()).unwrap(), z);
    }
}
