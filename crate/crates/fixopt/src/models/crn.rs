//! Heterodimerization reaction network in log-concentration space.
//!
//! Simple species pair up into complexes at rate `exp(w_ij)` and complexes
//! degrade at unit rate. At equilibrium the simple-species log-concentrations
//! satisfy the fixed-point equation
//!
//! ```text
//! x_i = b_i − log(1 + Σ_{j≠i} exp(w_ij + x_j))
//! ```
//!
//! where `b_i` is the log total concentration of species `i`. The step map is
//! a contraction in the ∞-norm for every `(w, b)`, which makes it a robust
//! base system for fixed-point optimization. A cross-check map in original
//! concentration space is provided as well.

use crate::adjoint::SystemLipschitz;
use crate::contraction::StepMap;
use crate::error::{FixoptError, Result};
use crate::models::BlockModel;
use crate::norms::NormSpec;

/// Reaction topology: `n` simple species and the set of unordered reacting
/// pairs. The free parameters are the log rates, one per pair, in the order
/// of `pairs`.
#[derive(Debug, Clone)]
pub struct CrnNetwork {
    n: usize,
    pairs: Vec<(usize, usize)>,
    /// Flat n×n lookup from an ordered species pair to its parameter index.
    pair_index: Vec<Option<usize>>,
}

impl CrnNetwork {
    /// All pairs react: `pairs = {(i, j) : i < j}` in lexicographic order.
    pub fn complete(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
            }
        }
        Self::with_pairs(n, pairs).expect("complete pair set is valid")
    }

    /// Restricted reacting-pair set. Pairs must satisfy `i < j < n` and be
    /// distinct.
    pub fn with_pairs(n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut pair_index = vec![None; n * n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if i >= j || j >= n {
                return Err(FixoptError::invalid(format!(
                    "pair ({i}, {j}) is not an ordered pair of distinct species below {n}"
                )));
            }
            if pair_index[i * n + j].is_some() {
                return Err(FixoptError::invalid(format!("duplicate pair ({i}, {j})")));
            }
            pair_index[i * n + j] = Some(k);
            pair_index[j * n + i] = Some(k);
        }
        Ok(CrnNetwork {
            n,
            pairs,
            pair_index,
        })
    }

    pub fn species(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn param_len(&self) -> usize {
        self.pairs.len()
    }

    fn param_of(&self, i: usize, j: usize) -> Option<usize> {
        self.pair_index[i * self.n + j]
    }

    /// Expand the flat pair parameters into the full symmetric matrix with
    /// zero diagonal (and zeros on non-reacting pairs), row-major.
    pub fn expand_symmetric(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_params(w)?;
        let mut full = vec![0.0; self.n * self.n];
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            full[i * self.n + j] = w[k];
            full[j * self.n + i] = w[k];
        }
        Ok(full)
    }

    fn check_params(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.pairs.len() {
            return Err(FixoptError::LengthMismatch {
                expected: self.pairs.len(),
                got: w.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(FixoptError::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// One equilibrium-iteration step in log space. Rejects non-finite
    /// inputs; the output always satisfies `out_i ≤ b_i`.
    pub fn step(&self, x: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        self.check_state(b)?;
        self.check_params(w)?;
        if x.iter().chain(w).chain(b).any(|v| !v.is_finite()) {
            return Err(FixoptError::NonFinite {
                context: "reaction-network step input",
            });
        }
        let mut out = vec![0.0; self.n];
        self.step_into(x, w, b, &mut out);
        Ok(out)
    }

    fn step_into(&self, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = b[i] - self.log1p_sum_exp(i, x, w);
        }
    }

    /// `log(1 + Σ_{j≠i} exp(w_ij + x_j))`, shifted so no exponential
    /// overflows.
    fn log1p_sum_exp(&self, i: usize, x: &[f64], w: &[f64]) -> f64 {
        let mut shift = 0.0_f64;
        for j in 0..self.n {
            if let Some(k) = self.param_of(i, j) {
                shift = shift.max(w[k] + x[j]);
            }
        }
        let mut sum = 0.0;
        for j in 0..self.n {
            if let Some(k) = self.param_of(i, j) {
                sum += (w[k] + x[j] - shift).exp();
            }
        }
        if shift == 0.0 {
            sum.ln_1p()
        } else {
            shift + ((-shift).exp() + sum).ln()
        }
    }

    /// Reaction probabilities `p_ij = exp(w_ij + x_j) / (1 + Σ_k exp(w_ik + x_k))`
    /// for row `i`; `−p_ij` is both `∂f_i/∂x_j` and `∂f_i/∂w_ij`.
    fn row_fractions(&self, i: usize, x: &[f64], w: &[f64], p: &mut [f64]) {
        let mut shift = 0.0_f64;
        for j in 0..self.n {
            if let Some(k) = self.param_of(i, j) {
                shift = shift.max(w[k] + x[j]);
            }
        }
        let mut denom = (-shift).exp();
        for j in 0..self.n {
            p[j] = match self.param_of(i, j) {
                Some(k) => {
                    let e = (w[k] + x[j] - shift).exp();
                    denom += e;
                    e
                }
                None => 0.0,
            };
        }
        for v in p.iter_mut() {
            *v /= denom;
        }
    }

    /// Both vector–Jacobian products at `(x, w; b)`: against the state and
    /// against the shared symmetric parameters. The parameter product sums
    /// the `(i, j)` and `(j, i)` contributions into the single free rate.
    pub fn vjps(&self, x: &[f64], w: &[f64], b: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(x)?;
        self.check_state(b)?;
        self.check_state(y)?;
        self.check_params(w)?;
        let mut vjp_x = vec![0.0; self.n];
        let mut vjp_w = vec![0.0; self.pairs.len()];
        self.vjp_state_into(x, w, y, &mut vjp_x);
        self.vjp_param_accum(x, w, y, &mut vjp_w);
        Ok((vjp_x, vjp_w))
    }

    fn vjp_state_into(&self, x: &[f64], w: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut p = vec![0.0; self.n];
        for i in 0..self.n {
            if y[i] == 0.0 {
                continue;
            }
            self.row_fractions(i, x, w, &mut p);
            for j in 0..self.n {
                out[j] -= p[j] * y[i];
            }
        }
    }

    fn vjp_param_accum(&self, x: &[f64], w: &[f64], y: &[f64], acc: &mut [f64]) {
        let mut p = vec![0.0; self.n];
        for i in 0..self.n {
            if y[i] == 0.0 {
                continue;
            }
            self.row_fractions(i, x, w, &mut p);
            for j in 0..self.n {
                if let Some(k) = self.param_of(i, j) {
                    acc[k] -= p[j] * y[i];
                }
            }
        }
    }

    /// Contraction coefficient `M/(1 + M)` with
    /// `M = (max_i Σ_{j≠i} exp(w_ij)) · max_b ‖exp(b)‖∞` over the given total
    /// concentration vectors. Valid on the states reachable after one step
    /// (`x ≤ b` componentwise). Always below one; evaluated in log space so
    /// large rates saturate instead of overflowing.
    pub fn contraction_bound(&self, w: &[f64], b_list: &[&[f64]]) -> Result<f64> {
        self.check_params(w)?;
        if b_list.is_empty() {
            return Err(FixoptError::invalid(
                "contraction bound needs at least one total-concentration vector",
            ));
        }
        for b in b_list {
            self.check_state(b)?;
        }
        let mut max_log_row = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut shift = f64::NEG_INFINITY;
            for j in 0..self.n {
                if let Some(k) = self.param_of(i, j) {
                    shift = shift.max(w[k]);
                }
            }
            if shift == f64::NEG_INFINITY {
                continue; // isolated species, empty row
            }
            let mut sum = 0.0;
            for j in 0..self.n {
                if let Some(k) = self.param_of(i, j) {
                    sum += (w[k] - shift).exp();
                }
            }
            max_log_row = max_log_row.max(shift + sum.ln());
        }
        let max_b = b_list
            .iter()
            .flat_map(|b| b.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        // β = M/(1+M) = σ(log M) with log M = log(max row sum) + max b. For
        // extreme rates the true value 1 − tiny rounds to 1.0.
        Ok(logistic(max_log_row + max_b))
    }

    /// Derivative bounds for the parallel combination over `m` inputs, on the
    /// domain `x ≤ b` blockwise. The parameter-side constants carry a factor
    /// `m` because the stacked state norm sums the blocks.
    pub fn stack_lipschitz(&self, w: &[f64], inputs: &[Vec<f64>]) -> Result<SystemLipschitz> {
        let refs: Vec<&[f64]> = inputs.iter().map(|b| b.as_slice()).collect();
        let beta = self.contraction_bound(w, &refs)?;
        let m = inputs.len() as f64;
        Ok(SystemLipschitz {
            beta_x: beta,
            // (2M² + M)/(1+M)² written in terms of β alone.
            state_jacobian_lipschitz: beta * (1.0 + beta),
            param_jacobian_bound: m * beta,
            param_jacobian_param_lipschitz: 2.0 * m * beta,
            param_jacobian_state_lipschitz: 2.0 * m * beta,
        })
    }

    /// Equilibrium complex-species concentrations `exp(w_ij + x_i + x_j)`,
    /// one per reacting pair, from a log-space fixed point.
    pub fn equilibrium_concentrations(&self, x_star: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x_star)?;
        self.check_params(w)?;
        Ok(self
            .pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| (w[k] + x_star[i] + x_star[j]).exp())
            .collect())
    }

    /// One step of the equilibrium map in original concentration space:
    /// `F_i(x) = B_i / (1 + Σ_j x_j exp(w_ij))`. Cross-check oracle for the
    /// log-space step; inputs must be strictly positive.
    pub fn equilibrium_map(&self, x: &[f64], w: &[f64], totals: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        self.check_state(totals)?;
        self.check_params(w)?;
        if x.iter().any(|v| !(*v > 0.0)) || totals.iter().any(|v| !(*v > 0.0)) {
            return Err(FixoptError::invalid(
                "concentrations and totals must be strictly positive",
            ));
        }
        let mut out = vec![0.0; self.n];
        self.equilibrium_map_into(x, w, totals, &mut out);
        Ok(out)
    }

    fn equilibrium_map_into(&self, x: &[f64], w: &[f64], totals: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut denom = 1.0;
            for j in 0..self.n {
                if let Some(k) = self.param_of(i, j) {
                    denom += x[j] * w[k].exp();
                }
            }
            out[i] = totals[i] / denom;
        }
    }

    /// The concentration-space map as a solvable step map.
    pub fn concentration_map<'a>(&'a self, totals: Vec<f64>) -> Result<ConcentrationMap<'a>> {
        self.check_state(&totals)?;
        if totals.iter().any(|v| !(*v > 0.0)) {
            return Err(FixoptError::invalid(
                "total concentrations must be strictly positive",
            ));
        }
        Ok(ConcentrationMap {
            network: self,
            totals,
        })
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl BlockModel for CrnNetwork {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn param_dim(&self) -> usize {
        self.pairs.len()
    }
    fn param_norm(&self) -> NormSpec {
        // Frobenius norm of the full symmetric rate matrix.
        NormSpec::Frobenius {
            upper_triangle: true,
        }
    }
    fn step_block(&self, x: &[f64], w: &[f64], input: &[f64], out: &mut [f64]) {
        self.step_into(x, w, input, out);
    }
    fn vjp_state_block(&self, x: &[f64], w: &[f64], _input: &[f64], y: &[f64], out: &mut [f64]) {
        self.vjp_state_into(x, w, y, out);
    }
    fn vjp_param_accumulate(&self, x: &[f64], w: &[f64], _input: &[f64], y: &[f64], acc: &mut [f64]) {
        self.vjp_param_accum(x, w, y, acc);
    }
    fn contraction_bound_stacked(&self, w: &[f64], inputs: &[Vec<f64>]) -> Option<f64> {
        let refs: Vec<&[f64]> = inputs.iter().map(|b| b.as_slice()).collect();
        self.contraction_bound(w, &refs).ok()
    }
    fn system_lipschitz_stacked(&self, w: &[f64], inputs: &[Vec<f64>]) -> Option<SystemLipschitz> {
        self.stack_lipschitz(w, inputs).ok()
    }
}

/// Fixed-point map over strictly positive concentrations, parameterized by
/// the log rates.
pub struct ConcentrationMap<'a> {
    network: &'a CrnNetwork,
    totals: Vec<f64>,
}

impl StepMap for ConcentrationMap<'_> {
    fn dim(&self) -> usize {
        self.network.n
    }
    fn apply(&self, state: &[f64], params: &[f64], out: &mut [f64]) {
        self.network
            .equilibrium_map_into(state, params, &self.totals, out);
    }
    fn state_norm(&self) -> NormSpec {
        NormSpec::MaxAbs
    }
}
