//! Norms as data.
//!
//! Solvers, the auxiliary system, and contraction estimates all measure
//! vectors in different norms (state, dual, product, parameter), so the norm
//! in use is carried around as a [`NormSpec`] value rather than baked into
//! code. This also lets traces record which norm produced each number.

use crate::error::{FixoptError, Result};

/// Description of a norm on flat `f64` vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    /// `max_i |v_i|` (the ∞-norm).
    MaxAbs,
    /// `Σ_i |v_i|` (the 1-norm).
    SumAbs,
    /// `sqrt(Σ_i v_i²)` (the 2-norm).
    Euclidean,
    /// Frobenius norm of a matrix stored in a flat vector. With
    /// `upper_triangle = true` the vector holds the strict upper triangle of a
    /// symmetric matrix with unused diagonal, so every stored entry counts
    /// twice: `sqrt(2 Σ_k v_k²)`.
    Frobenius { upper_triangle: bool },
    /// Sum over consecutive blocks of the inner norm of each block.
    StackedSum {
        inner: Box<NormSpec>,
        block_sizes: Vec<usize>,
    },
    /// Maximum over consecutive blocks of the inner norm of each block.
    /// Arises as the dual of [`NormSpec::StackedSum`].
    StackedMax {
        inner: Box<NormSpec>,
        block_sizes: Vec<usize>,
    },
    /// `p1 · first(v[..first_len]) + p2 · second(v[first_len..])`, the norm on
    /// a product space of a primal block and a covector block.
    WeightedPair {
        p1: f64,
        p2: f64,
        first: Box<NormSpec>,
        second: Box<NormSpec>,
        first_len: usize,
        second_len: usize,
    },
}

impl NormSpec {
    /// Uniform stacked sum: `blocks` blocks of `block_len` entries each.
    pub fn stacked_sum(inner: NormSpec, blocks: usize, block_len: usize) -> Self {
        NormSpec::StackedSum {
            inner: Box::new(inner),
            block_sizes: vec![block_len; blocks],
        }
    }

    /// Product norm `p1·first + p2·second` over two consecutive blocks.
    pub fn weighted_pair(
        p1: f64,
        p2: f64,
        first: NormSpec,
        first_len: usize,
        second: NormSpec,
        second_len: usize,
    ) -> Result<Self> {
        if !(p1 > 0.0) || !(p2 > 0.0) {
            return Err(FixoptError::invalid(format!(
                "weighted-pair weights must be positive, got p1={p1}, p2={p2}"
            )));
        }
        Ok(NormSpec::WeightedPair {
            p1,
            p2,
            first: Box::new(first),
            second: Box::new(second),
            first_len,
            second_len,
        })
    }

    /// Total vector length this spec prescribes, if it prescribes one.
    /// Elementwise kinds accept any length.
    pub fn expected_len(&self) -> Option<usize> {
        match self {
            NormSpec::MaxAbs
            | NormSpec::SumAbs
            | NormSpec::Euclidean
            | NormSpec::Frobenius { .. } => None,
            NormSpec::StackedSum { block_sizes, .. } | NormSpec::StackedMax { block_sizes, .. } => {
                Some(block_sizes.iter().sum())
            }
            NormSpec::WeightedPair {
                first_len,
                second_len,
                ..
            } => Some(first_len + second_len),
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if let Some(expected) = self.expected_len() {
            if v.len() != expected {
                return Err(FixoptError::LengthMismatch {
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Evaluate the norm of `v`.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        Ok(self.norm_unchecked(v))
    }

    fn norm_unchecked(&self, v: &[f64]) -> f64 {
        match self {
            NormSpec::MaxAbs => v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
            NormSpec::SumAbs => v.iter().map(|x| x.abs()).sum(),
            NormSpec::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormSpec::Frobenius { upper_triangle } => {
                let ssq: f64 = v.iter().map(|x| x * x).sum();
                if *upper_triangle {
                    (2.0 * ssq).sqrt()
                } else {
                    ssq.sqrt()
                }
            }
            NormSpec::StackedSum { inner, block_sizes } => {
                let mut offset = 0;
                let mut total = 0.0;
                for &len in block_sizes {
                    total += inner.norm_unchecked(&v[offset..offset + len]);
                    offset += len;
                }
                total
            }
            NormSpec::StackedMax { inner, block_sizes } => {
                let mut offset = 0;
                let mut best = 0.0_f64;
                for &len in block_sizes {
                    best = best.max(inner.norm_unchecked(&v[offset..offset + len]));
                    offset += len;
                }
                best
            }
            NormSpec::WeightedPair {
                p1,
                p2,
                first,
                second,
                first_len,
                ..
            } => {
                p1 * first.norm_unchecked(&v[..*first_len])
                    + p2 * second.norm_unchecked(&v[*first_len..])
            }
        }
    }

    /// The dual norm specification: ∞ ↔ 1, 2 ↔ 2, and a stacked sum of blocks
    /// dualizes to the stacked max of the blockwise duals (and back).
    ///
    /// Frobenius and weighted-pair norms have no dual here; nothing downstream
    /// needs one.
    pub fn dual(&self) -> Result<NormSpec> {
        match self {
            NormSpec::MaxAbs => Ok(NormSpec::SumAbs),
            NormSpec::SumAbs => Ok(NormSpec::MaxAbs),
            NormSpec::Euclidean => Ok(NormSpec::Euclidean),
            NormSpec::StackedSum { inner, block_sizes } => Ok(NormSpec::StackedMax {
                inner: Box::new(inner.dual()?),
                block_sizes: block_sizes.clone(),
            }),
            NormSpec::StackedMax { inner, block_sizes } => Ok(NormSpec::StackedSum {
                inner: Box::new(inner.dual()?),
                block_sizes: block_sizes.clone(),
            }),
            NormSpec::Frobenius { .. } => {
                Err(FixoptError::UnsupportedNorm("frobenius (dual)".into()))
            }
            NormSpec::WeightedPair { .. } => {
                Err(FixoptError::UnsupportedNorm("weighted-pair (dual)".into()))
            }
        }
    }

    /// Whether the norm depends only on componentwise absolute values.
    pub fn is_absolute(&self) -> bool {
        matches!(
            self,
            NormSpec::MaxAbs | NormSpec::SumAbs | NormSpec::Euclidean
        )
    }
}

/// Upper bound on the operator norm of a dense matrix, induced by the given
/// vector norm: max absolute row sum for ∞, max absolute column sum for 1.
/// Other kinds are rejected.
pub fn operator_norm_upper(rows: &[Vec<f64>], spec: &NormSpec) -> Result<f64> {
    match spec {
        NormSpec::MaxAbs => Ok(rows
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)),
        NormSpec::SumAbs => {
            let cols = rows.first().map_or(0, |r| r.len());
            for (i, r) in rows.iter().enumerate() {
                if r.len() != cols {
                    return Err(FixoptError::invalid(format!(
                        "row {i} has {} entries, expected {cols}",
                        r.len()
                    )));
                }
            }
            let mut best = 0.0_f64;
            for j in 0..cols {
                best = best.max(rows.iter().map(|r| r[j].abs()).sum::<f64>());
            }
            Ok(best)
        }
        other => Err(FixoptError::UnsupportedNorm(format!(
            "{other:?} (induced operator norm)"
        ))),
    }
}
