//! Fixed-point machinery: the inner relaxation loop, Banach-style distance
//! bounds, a deep solver used as ground truth, and empirical contraction
//! measurement.

use crate::error::{FixoptError, Result};
use crate::norms::NormSpec;

/// Default step budget for solvers. The underlying maps are assumed to
/// contract; when that assumption breaks the solver must fail loudly rather
/// than run forever.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// A parameterized step map `z ↦ T(z, w)` together with the norm in which its
/// increments are measured.
pub trait StepMap {
    fn dim(&self) -> usize;

    /// Apply one step: `out = T(state, params)`.
    fn apply(&self, state: &[f64], params: &[f64], out: &mut [f64]);

    /// Norm used for increments and distances on the state space.
    fn state_norm(&self) -> NormSpec;

    /// Claimed contraction coefficient in (0, 1), if one is known. Callers
    /// verify claims against [`measure_contraction_ratio`]; nothing here
    /// assumes them.
    fn declared_beta(&self, _params: &[f64]) -> Option<f64> {
        None
    }
}

/// Outcome of [`iterate_to_tolerance`].
#[derive(Debug, Clone)]
pub struct InnerLoopResult {
    pub final_state: Vec<f64>,
    pub steps_taken: usize,
    pub last_increment_norm: f64,
}

/// Repeatedly apply the map until the increment `‖z^i − z^{i−1}‖` falls to
/// `threshold` or below, in the map's state norm. At least one step is always
/// taken; in particular with `threshold = 0` the loop accepts only an exactly
/// unchanged state.
pub fn iterate_to_tolerance<M: StepMap + ?Sized>(
    map: &M,
    state0: &[f64],
    params: &[f64],
    threshold: f64,
    max_steps: usize,
) -> Result<InnerLoopResult> {
    if !(threshold >= 0.0) {
        return Err(FixoptError::invalid(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    if max_steps == 0 {
        return Err(FixoptError::invalid("max_steps must be at least 1"));
    }
    if state0.len() != map.dim() {
        return Err(FixoptError::LengthMismatch {
            expected: map.dim(),
            got: state0.len(),
        });
    }

    let norm = map.state_norm();
    let mut prev2 = vec![0.0; state0.len()];
    let mut prev = state0.to_vec();
    let mut next = vec![0.0; state0.len()];
    let mut diff = vec![0.0; state0.len()];
    let mut last_increment = f64::INFINITY;

    for step in 1..=max_steps {
        map.apply(&prev, params, &mut next);
        for ((d, a), b) in diff.iter_mut().zip(&next).zip(&prev) {
            *d = a - b;
        }
        let inc = norm.norm(&diff)?;
        if !inc.is_finite() {
            return Err(FixoptError::NonFinite {
                context: "fixed-point iteration increment",
            });
        }
        if inc <= threshold {
            return Ok(InnerLoopResult {
                final_state: next,
                steps_taken: step,
                last_increment_norm: inc,
            });
        }
        // The map is deterministic, so revisiting the state from two steps
        // ago proves the iteration sits on a rounding-level period-2 cycle
        // and the threshold can never be met. Give up now rather than at
        // max_steps. This only triggers below the threshold check, i.e. on
        // thresholds under the cycle's amplitude.
        if step >= 2 && next == prev2 {
            return Err(FixoptError::NonConvergence {
                steps: step,
                last_increment_norm: inc,
            });
        }
        last_increment = inc;
        std::mem::swap(&mut prev, &mut prev2);
        std::mem::swap(&mut prev, &mut next);
    }

    Err(FixoptError::NonConvergence {
        steps: max_steps,
        last_increment_norm: last_increment,
    })
}

/// Distance bound from an accepted iterate to the true fixed point of a
/// β-contraction: `β/(1−β) · ‖last increment‖`.
pub fn banach_tail_bound(beta: f64, increment_norm: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(FixoptError::InvalidBeta(beta));
    }
    Ok(beta / (1.0 - beta) * increment_norm)
}

/// Iterate until the increment norm falls to `tol`; the returned point `z`
/// satisfies `‖z − T(z, w)‖ ≤ tol` for contracting maps. Used as the
/// ground-truth fixed-point oracle.
pub fn deep_solve<M: StepMap + ?Sized>(
    map: &M,
    state0: &[f64],
    params: &[f64],
    tol: f64,
    max_steps: usize,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(FixoptError::invalid(format!(
            "deep_solve tolerance must be positive, got {tol}"
        )));
    }
    Ok(iterate_to_tolerance(map, state0, params, tol, max_steps)?.final_state)
}

/// Largest observed ratio `‖T(u) − T(v)‖ / ‖u − v‖` over the sample pairs, in
/// the map's state norm. Identical pairs are skipped; a sample with no
/// distinct pair is rejected.
pub fn measure_contraction_ratio<M: StepMap + ?Sized>(
    map: &M,
    params: &[f64],
    sample_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64> {
    let norm = map.state_norm();
    let mut best: Option<f64> = None;
    let mut tu = vec![0.0; map.dim()];
    let mut tv = vec![0.0; map.dim()];
    let mut diff = vec![0.0; map.dim()];
    for (u, v) in sample_pairs {
        for ((d, a), b) in diff.iter_mut().zip(u.iter()).zip(v.iter()) {
            *d = a - b;
        }
        let denom = norm.norm(&diff)?;
        if denom == 0.0 {
            continue;
        }
        map.apply(u, params, &mut tu);
        map.apply(v, params, &mut tv);
        for ((d, a), b) in diff.iter_mut().zip(&tu).zip(&tv) {
            *d = a - b;
        }
        let num = norm.norm(&diff)?;
        let ratio = num / denom;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| FixoptError::invalid("no distinct pair in contraction-ratio sample"))
}

#[cfg(test)]
pub(crate) mod test_maps {
    use super::*;

    /// `T(z) = k` for every input.
    pub struct ConstantMap(pub Vec<f64>);

    impl StepMap for ConstantMap {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, _state: &[f64], _params: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&self.0);
        }
        fn state_norm(&self) -> NormSpec {
            NormSpec::MaxAbs
        }
        fn declared_beta(&self, _params: &[f64]) -> Option<f64> {
            None
        }
    }

    /// `T(z) = A z + b` with `A` dense row-major; β is the max row sum.
    pub struct LinearMap {
        pub matrix: Vec<Vec<f64>>,
        pub offset: Vec<f64>,
    }

    impl StepMap for LinearMap {
        fn dim(&self) -> usize {
            self.offset.len()
        }
        fn apply(&self, state: &[f64], _params: &[f64], out: &mut [f64]) {
            for (i, row) in self.matrix.iter().enumerate() {
                out[i] = self.offset[i] + row.iter().zip(state).map(|(a, x)| a * x).sum::<f64>();
            }
        }
        fn state_norm(&self) -> NormSpec {
            NormSpec::MaxAbs
        }
        fn declared_beta(&self, _params: &[f64]) -> Option<f64> {
            let beta = self
                .matrix
                .iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0_f64, f64::max);
            (beta < 1.0).then_some(beta)
        }
    }

    pub fn halving() -> LinearMap {
        LinearMap {
            matrix: vec![vec![0.5]],
            offset: vec![0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_maps::*;
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn constant_map_confirms_fixed_point_in_two_steps() {
        let map = ConstantMap(vec![3.0, -1.0]);
        let r = iterate_to_tolerance(&map, &[0.0, 0.0], &[], 0.0, 10).unwrap();
        assert_eq!(r.final_state, vec![3.0, -1.0]);
        assert_eq!(r.steps_taken, 2);
        assert_eq!(r.last_increment_norm, 0.0);

        // Already at the fixed point: a single confirming step.
        let r = iterate_to_tolerance(&map, &[3.0, -1.0], &[], 0.0, 10).unwrap();
        assert_eq!(r.steps_taken, 1);
    }

    #[test]
    fn halving_map_hand_iterated_thresholds() {
        let map = halving();
        // Increments from z0 = 1 are 0.5, 0.25, ...
        let r = iterate_to_tolerance(&map, &[1.0], &[], 0.25, 10).unwrap();
        assert_eq!(r.final_state, vec![0.25]);
        assert_eq!(r.steps_taken, 2);

        // With threshold 0.3 the first increment (0.5) still exceeds the
        // threshold, so the loop stops at the second step.
        let r = iterate_to_tolerance(&map, &[1.0], &[], 0.3, 10).unwrap();
        assert_eq!(r.final_state, vec![0.25]);
        assert_eq!(r.steps_taken, 2);
        assert!(r.last_increment_norm <= 0.3);
    }

    #[test]
    fn threshold_cannot_be_negative_and_budget_must_be_positive() {
        let map = halving();
        assert!(iterate_to_tolerance(&map, &[1.0], &[], -0.1, 10).is_err());
        assert!(iterate_to_tolerance(&map, &[1.0], &[], 0.1, 0).is_err());
    }

    #[test]
    fn non_convergence_reports_last_increment() {
        // Expanding map: never meets the threshold.
        let map = LinearMap {
            matrix: vec![vec![2.0]],
            offset: vec![1.0],
        };
        match iterate_to_tolerance(&map, &[1.0], &[], 1e-3, 20) {
            Err(FixoptError::NonConvergence {
                steps,
                last_increment_norm,
            }) => {
                assert_eq!(steps, 20);
                assert!(last_increment_norm > 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn banach_tail_bound_values() {
        assert!((banach_tail_bound(0.5, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((banach_tail_bound(0.9, 1.0).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(banach_tail_bound(0.3, 0.0).unwrap(), 0.0);
        assert!(banach_tail_bound(1.0, 0.1).is_err());
        assert!(banach_tail_bound(0.0, 0.1).is_err());
        assert!(banach_tail_bound(-0.5, 0.1).is_err());
    }

    #[test]
    fn deep_solve_halving_map() {
        let map = halving();
        let z = deep_solve(&map, &[1.0], &[], 1e-12, 100).unwrap();
        assert!(z[0].abs() <= 2e-12);
    }

    #[test]
    fn deep_solve_constant_map_exact() {
        let map = ConstantMap(vec![2.5]);
        let z = deep_solve(&map, &[0.0], &[], 1e-15, 10).unwrap();
        assert_eq!(z, vec![2.5]);
    }

    #[test]
    fn measured_ratio_of_linear_map_is_exact() {
        let map = halving();
        let pairs = vec![
            (vec![1.0], vec![0.0]),
            (vec![-3.0], vec![2.0]),
            (vec![5.0], vec![5.0]), // identical; skipped
        ];
        let ratio = measure_contraction_ratio(&map, &[], &pairs).unwrap();
        assert!((ratio - 0.5).abs() < 1e-15);

        let constant = ConstantMap(vec![1.0]);
        let ratio = measure_contraction_ratio(&constant, &[], &pairs).unwrap();
        assert_eq!(ratio, 0.0);

        let identical = vec![(vec![1.0], vec![1.0])];
        assert!(measure_contraction_ratio(&map, &[], &identical).is_err());
    }

    fn random_contraction(rng: &mut SplitMix64, dim: usize) -> LinearMap {
        // Scale rows to a max-row-sum strictly below 1.
        let target = rng.uniform_in(0.2, 0.9);
        let mut matrix: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.standard_normal()).collect())
            .collect();
        let row_sum = matrix
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        for row in &mut matrix {
            for x in row {
                *x *= target / row_sum;
            }
        }
        LinearMap {
            matrix,
            offset: (0..dim).map(|_| rng.standard_normal()).collect(),
        }
    }

    #[test]
    fn banach_bound_dominates_true_distance_on_random_instances() {
        let mut rng = SplitMix64::new(0xbaac);
        for _ in 0..100 {
            let dim = 1 + (rng.next_u64() % 4) as usize;
            let map = random_contraction(&mut rng, dim);
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..8)
                .map(|_| (rng.normal_vec(dim), rng.normal_vec(dim)))
                .collect();
            let measured = measure_contraction_ratio(&map, &[], &pairs).unwrap();
            let declared = map.declared_beta(&[]).unwrap();
            assert!(measured <= declared + 1e-12);

            let z0 = rng.normal_vec(dim);
            let threshold = rng.uniform_in(1e-6, 1e-2);
            let accepted =
                iterate_to_tolerance(&map, &z0, &[], threshold, DEFAULT_MAX_STEPS).unwrap();
            let truth = deep_solve(&map, &z0, &[], 1e-14, DEFAULT_MAX_STEPS).unwrap();
            let dist: Vec<f64> = accepted
                .final_state
                .iter()
                .zip(&truth)
                .map(|(a, b)| a - b)
                .collect();
            let dist = map.state_norm().norm(&dist).unwrap();
            let bound = banach_tail_bound(declared, accepted.last_increment_norm).unwrap();
            // Allow room for the oracle's own 1e-14 tolerance.
            assert!(
                dist <= bound + 1e-12,
                "distance {dist} exceeded bound {bound}"
            );
        }
    }

    #[test]
    fn looser_thresholds_never_take_more_steps() {
        let mut rng = SplitMix64::new(0x5073);
        for _ in 0..50 {
            let map = random_contraction(&mut rng, 3);
            let z0 = rng.normal_vec(3);
            let t2 = rng.uniform_in(1e-8, 1e-3);
            let t1 = t2 * rng.uniform_in(1.0, 100.0);
            let s1 = iterate_to_tolerance(&map, &z0, &[], t1, DEFAULT_MAX_STEPS)
                .unwrap()
                .steps_taken;
            let s2 = iterate_to_tolerance(&map, &z0, &[], t2, DEFAULT_MAX_STEPS)
                .unwrap()
                .steps_taken;
            assert!(s1 <= s2);
        }
    }

    #[test]
    fn deep_solve_is_start_invariant() {
        let mut rng = SplitMix64::new(0x111);
        for _ in 0..20 {
            let map = random_contraction(&mut rng, 3);
            let tol = 1e-11;
            let a = deep_solve(&map, &rng.normal_vec(3), &[], tol, DEFAULT_MAX_STEPS).unwrap();
            let b = deep_solve(&map, &rng.normal_vec(3), &[], tol, DEFAULT_MAX_STEPS).unwrap();
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            assert!(map.state_norm().norm(&diff).unwrap() <= 2.0 * tol);
        }
    }
}
