//! Attractor network with logistic units.
//!
//! Each node applies `σ(Σ_j w_ij x_j + u_i)` to its neighbours' states plus an
//! external input. Since `‖σ'‖∞ = 1/4`, the update contracts in any absolute
//! norm whenever `‖w‖ < 4`; training can push the weights past that bound, so
//! the coefficient is reported rather than assumed.

use crate::adjoint::SystemLipschitz;
use crate::error::{FixoptError, Result};
use crate::models::BlockModel;
use crate::norms::{operator_norm_upper, NormSpec};

/// Peak slope of the logistic function.
pub const LOGISTIC_SLOPE_MAX: f64 = 0.25;
/// Peak curvature of the logistic function, `1/(6√3)`.
pub const LOGISTIC_CURVATURE_MAX: f64 = 0.096_225_044_864_937_62;

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fully connected attractor network on `n` nodes. The parameter vector is
/// the full weight matrix, row-major, so `w[i*n + j]` scales the influence of
/// node `j` on node `i`.
#[derive(Debug, Clone)]
pub struct NnNetwork {
    n: usize,
}

impl NnNetwork {
    pub fn new(n: usize) -> Self {
        NnNetwork { n }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn param_len(&self) -> usize {
        self.n * self.n
    }

    fn check(&self, x: &[f64], w: &[f64], u: &[f64]) -> Result<()> {
        for (len, expected) in [(x.len(), self.n), (u.len(), self.n), (w.len(), self.n * self.n)] {
            if len != expected {
                return Err(FixoptError::LengthMismatch { expected, got: len });
            }
        }
        Ok(())
    }

    /// One network update; outputs lie in `(0, 1)` and saturate smoothly for
    /// extreme pre-activations.
    pub fn step(&self, x: &[f64], w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check(x, w, u)?;
        let mut out = vec![0.0; self.n];
        self.step_into(x, w, u, &mut out);
        Ok(out)
    }

    fn step_into(&self, x: &[f64], w: &[f64], u: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &w[i * self.n..(i + 1) * self.n];
            let pre: f64 = u[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            out[i] = logistic(pre);
        }
    }

    /// Diagonal of the activation derivative, `σ'(pre_i) = s(1 − s)`.
    fn slopes(&self, x: &[f64], w: &[f64], u: &[f64], d: &mut [f64]) {
        for i in 0..self.n {
            let row = &w[i * self.n..(i + 1) * self.n];
            let pre: f64 = u[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let s = logistic(pre);
            d[i] = s * (1.0 - s);
        }
    }

    /// Both vector–Jacobian products: `wᵀ(D y)` against the state and the
    /// outer product `(D y) xᵀ` flattened against the weights.
    pub fn vjps(&self, x: &[f64], w: &[f64], u: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x, w, u)?;
        if y.len() != self.n {
            return Err(FixoptError::LengthMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        let mut vjp_x = vec![0.0; self.n];
        let mut vjp_w = vec![0.0; self.n * self.n];
        self.vjp_state_into(x, w, u, y, &mut vjp_x);
        self.vjp_param_accum(x, w, u, y, &mut vjp_w);
        Ok((vjp_x, vjp_w))
    }

    fn vjp_state_into(&self, x: &[f64], w: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut d = vec![0.0; self.n];
        self.slopes(x, w, u, &mut d);
        for i in 0..self.n {
            let scale = d[i] * y[i];
            if scale == 0.0 {
                continue;
            }
            let row = &w[i * self.n..(i + 1) * self.n];
            for (o, wij) in out.iter_mut().zip(row) {
                *o += wij * scale;
            }
        }
    }

    fn vjp_param_accum(&self, x: &[f64], w: &[f64], u: &[f64], y: &[f64], acc: &mut [f64]) {
        let mut d = vec![0.0; self.n];
        self.slopes(x, w, u, &mut d);
        for i in 0..self.n {
            let scale = d[i] * y[i];
            if scale == 0.0 {
                continue;
            }
            let row = &mut acc[i * self.n..(i + 1) * self.n];
            for (a, xj) in row.iter_mut().zip(x) {
                *a += scale * xj;
            }
        }
    }

    /// `‖w‖/4` in the matrix norm induced by the given absolute vector norm
    /// (max row sum for ∞, max column sum for 1). May exceed one; callers
    /// decide what to do with a coefficient at or above one.
    pub fn contraction_bound(&self, w: &[f64], norm: &NormSpec) -> Result<f64> {
        if w.len() != self.n * self.n {
            return Err(FixoptError::LengthMismatch {
                expected: self.n * self.n,
                got: w.len(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| w[i * self.n..(i + 1) * self.n].to_vec())
            .collect();
        Ok(LOGISTIC_SLOPE_MAX * operator_norm_upper(&rows, norm)?)
    }

    /// Derivative bounds for the parallel combination over `m` inputs, valid
    /// on states in `[0, 1]` per node. `None` when the ∞-norm coefficient is
    /// not below one.
    pub fn stack_lipschitz(&self, w: &[f64], m: usize) -> Result<Option<SystemLipschitz>> {
        let beta = self.contraction_bound(w, &NormSpec::MaxAbs)?;
        if beta >= 1.0 {
            return Ok(None);
        }
        let w_inf = 4.0 * beta;
        let sqrt_n = (self.n as f64).sqrt();
        let m = m as f64;
        Ok(Some(SystemLipschitz {
            beta_x: beta,
            state_jacobian_lipschitz: LOGISTIC_CURVATURE_MAX * w_inf * w_inf,
            param_jacobian_bound: m * sqrt_n * LOGISTIC_SLOPE_MAX,
            param_jacobian_param_lipschitz: m * self.n as f64 * LOGISTIC_CURVATURE_MAX,
            param_jacobian_state_lipschitz: m
                * sqrt_n
                * (LOGISTIC_CURVATURE_MAX * w_inf + LOGISTIC_SLOPE_MAX),
        }))
    }
}

impl BlockModel for NnNetwork {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn param_dim(&self) -> usize {
        self.n * self.n
    }
    fn param_norm(&self) -> NormSpec {
        NormSpec::Frobenius {
            upper_triangle: false,
        }
    }
    fn step_block(&self, x: &[f64], w: &[f64], input: &[f64], out: &mut [f64]) {
        self.step_into(x, w, input, out);
    }
    fn vjp_state_block(&self, x: &[f64], w: &[f64], input: &[f64], y: &[f64], out: &mut [f64]) {
        self.vjp_state_into(x, w, input, y, out);
    }
    fn vjp_param_accumulate(&self, x: &[f64], w: &[f64], input: &[f64], y: &[f64], acc: &mut [f64]) {
        self.vjp_param_accum(x, w, input, y, acc);
    }
    fn contraction_bound_stacked(&self, w: &[f64], _inputs: &[Vec<f64>]) -> Option<f64> {
        self.contraction_bound(w, &NormSpec::MaxAbs).ok()
    }
    fn system_lipschitz_stacked(&self, w: &[f64], inputs: &[Vec<f64>]) -> Option<SystemLipschitz> {
        self.stack_lipschitz(w, inputs.len()).ok().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::measure_contraction_ratio;
    use crate::rng::SplitMix64;

    #[test]
    fn zero_weights_give_input_driven_output() {
        let net = NnNetwork::new(3);
        let w = vec![0.0; 9];
        let out = net.step(&[0.9, 0.1, 0.5], &w, &[0.0, 0.0, 0.0]).unwrap();
        assert!(out.iter().all(|v| (*v - 0.5).abs() < 1e-15));

        // State-independent when w = 0.
        let u = [1.0, -2.0, 0.3];
        let a = net.step(&[0.0; 3], &w, &u).unwrap();
        let b = net.step(&[0.9, 0.2, 0.7], &w, &u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturation_does_not_underflow() {
        let net = NnNetwork::new(2);
        let out = net
            .step(&[0.5, 0.5], &[0.0; 4], &[-100.0, 100.0])
            .unwrap();
        assert!(out[0] > 0.0 && out[0] < 1e-40);
        // σ(100) rounds to exactly 1.0 in f64.
        assert!(out[1] <= 1.0 && out[1] > 1.0 - 1e-15);
    }

    #[test]
    fn hand_checked_vjps() {
        // n = 1, w = 0, u = 0, y = 1: slope 1/4, so vjp_x = 0 and vjp_w = x/4.
        let net = NnNetwork::new(1);
        let x = [0.7];
        let (vjp_x, vjp_w) = net.vjps(&x, &[0.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(vjp_x, vec![0.0]);
        assert!((vjp_w[0] - 0.7 / 4.0).abs() < 1e-15);

        let (vx, vw) = net.vjps(&x, &[0.3], &[0.1], &[0.0]).unwrap();
        assert!(vx.iter().all(|v| *v == 0.0));
        assert!(vw.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vjps_match_directional_finite_differences() {
        let net = NnNetwork::new(4);
        let mut rng = SplitMix64::new(0x99);
        let h = 1e-6;
        for _ in 0..100 {
            let w = rng.normal_vec(16);
            let u = rng.normal_vec(4);
            let x: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let y = rng.normal_vec(4);
            let (vjp_x, vjp_w) = net.vjps(&x, &w, &u, &y).unwrap();

            let dir = rng.normal_vec(4);
            let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
            let fd: f64 = net
                .step(&xp, &w, &u)
                .unwrap()
                .iter()
                .zip(net.step(&xm, &w, &u).unwrap().iter())
                .zip(&y)
                .map(|((p, m), yi)| yi * (p - m) / (2.0 * h))
                .sum();
            let analytic: f64 = vjp_x.iter().zip(&dir).map(|(v, d)| v * d).sum();
            assert!((fd - analytic).abs() <= 1e-6 * (1.0 + fd.abs()));

            let dir = rng.normal_vec(16);
            let wp: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            let wm: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
            let fd: f64 = net
                .step(&x, &wp, &u)
                .unwrap()
                .iter()
                .zip(net.step(&x, &wm, &u).unwrap().iter())
                .zip(&y)
                .map(|((p, m), yi)| yi * (p - m) / (2.0 * h))
                .sum();
            let analytic: f64 = vjp_w.iter().zip(&dir).map(|(v, d)| v * d).sum();
            assert!((fd - analytic).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn contraction_bound_examples() {
        let net = NnNetwork::new(3);
        assert_eq!(
            net.contraction_bound(&vec![0.0; 9], &NormSpec::MaxAbs).unwrap(),
            0.0
        );
        // w = 4·I: every row sums to 4, so the coefficient sits at one.
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 4.0;
        }
        assert_eq!(net.contraction_bound(&w, &NormSpec::MaxAbs).unwrap(), 1.0);
        assert_eq!(net.contraction_bound(&w, &NormSpec::SumAbs).unwrap(), 1.0);
        assert!(net.contraction_bound(&w, &NormSpec::Euclidean).is_err());
    }

    #[test]
    fn measured_ratio_respects_bound_below_one() {
        let mut rng = SplitMix64::new(0x7777);
        let net = NnNetwork::new(3);
        for _ in 0..200 {
            let scale = rng.uniform_in(0.05, 1.2);
            let w: Vec<f64> = (0..9).map(|_| scale * rng.standard_normal()).collect();
            let bound = net.contraction_bound(&w, &NormSpec::MaxAbs).unwrap();
            if bound >= 1.0 {
                continue;
            }
            let u = rng.normal_vec(3);
            let stacked = crate::models::Stacked::new(net.clone(), vec![u]).unwrap();
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
                .map(|_| {
                    (
                        (0..3).map(|_| rng.uniform()).collect(),
                        (0..3).map(|_| rng.uniform()).collect(),
                    )
                })
                .collect();
            let ratio = measure_contraction_ratio(&stacked, &w, &pairs).unwrap();
            assert!(ratio <= bound + 1e-9);
        }
    }
}
