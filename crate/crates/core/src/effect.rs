//! Dynamic causal effect of the treatment on the outcome at `t+1`, and a
//! Monte-Carlo interventional oracle to check it against.
//!
//! With `B_{t+1}` partitioned into `γ` (treatment to outcome), `α`
//! (treatment to mediators), `β` (mediators to outcome) and `C` (among
//! mediators), the effect of setting the treatment to `a` versus 0 is
//! `(γ + βᵀ (I - Cᵀ)⁻¹ αᵀ) · a`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::{
    causal_order, derive_seed, simulate_from_truth, structural_step, GroundTruth, NoiseKind,
};
use crate::error::{Error, Result};
use crate::model::{partition_weights, GraphSequence, PartitionedWeights};

/// `(I - Cᵀ)⁻¹ αᵀ` for a square mediator block.
///
/// Uses the finite Neumann series `Σ_{k<q} (Cᵀ)^k αᵀ` when `C` is
/// nilpotent (acyclic mediators) and falls back to an LU solve otherwise.
fn mediator_propagation(c: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    let q = alpha.len();
    if q == 0 {
        return Ok(DVector::zeros(0));
    }
    let ct = c.transpose();
    let mut term = alpha.clone();
    let mut sum = alpha.clone();
    let mut pow = DMatrix::identity(q, q);
    for _ in 1..q {
        term = &ct * term;
        sum += &term;
        pow = &ct * pow;
    }
    pow = &ct * pow;
    if pow.iter().all(|&v| v == 0.0) {
        return Ok(sum);
    }
    let m = DMatrix::identity(q, q) - ct;
    m.lu().solve(alpha).ok_or(Error::SingularMediatorBlock)
}

/// Mediator part `βᵀ Σ_{k=0}^{q-1} (Cᵀ)^k αᵀ` by the explicit power sum.
pub fn mediated_series(pw: &PartitionedWeights) -> f64 {
    let q = pw.alpha.len();
    let ct = pw.c.transpose();
    let mut term = pw.alpha.clone();
    let mut total = pw.beta.dot(&term);
    for _ in 1..q {
        term = &ct * term;
        total += pw.beta.dot(&term);
    }
    total
}

/// Effect per unit of treatment for a partitioned slice.
pub fn effect_coefficient(pw: &PartitionedWeights) -> Result<f64> {
    let prop = mediator_propagation(&pw.c, &pw.alpha)?;
    Ok(pw.gamma + pw.beta.dot(&prop))
}

/// `(γ + βᵀ (I - Cᵀ)⁻¹ αᵀ) · a` from a partitioned slice.
pub fn dynamic_effect_partitioned(pw: &PartitionedWeights, a: f64) -> Result<f64> {
    Ok(effect_coefficient(pw)? * a)
}

/// Effect at the slice with contemporaneous weights `b` (that is, `B_{t+1}`).
pub fn dynamic_effect(b: &DMatrix<f64>, a: f64) -> Result<f64> {
    dynamic_effect_partitioned(&partition_weights(b)?, a)
}

/// Effect realized at `t + 1`, looked up by time in `graphs` (which may be
/// the predicted slot).
pub fn dynamic_effect_at(graphs: &GraphSequence, t: f64, a: f64) -> Result<f64> {
    let i = graphs
        .times
        .iter()
        .position(|&s| s == t + 1.0)
        .ok_or_else(|| Error::InvalidArgument(format!("no graph at t + 1 = {}", t + 1.0)))?;
    dynamic_effect(&graphs.b[i], a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    /// Time at which the effect is realized.
    pub t: f64,
    pub effect: f64,
    pub is_predicted: bool,
}

/// Effect at every graph in the sequence, including predicted slots.
///
/// Small structural-zero violations in estimated graphs are tolerated by
/// reading only the blocks the formula uses.
pub fn effect_trajectory(graphs: &GraphSequence, a: f64) -> Result<Vec<EffectPoint>> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty graph sequence".into()));
    }
    graphs
        .b
        .iter()
        .enumerate()
        .map(|(i, b)| {
            Ok(EffectPoint {
                t: graphs.times[i],
                effect: dynamic_effect_partitioned(&blocks(b)?, a)?,
                is_predicted: graphs.predicted[i],
            })
        })
        .collect()
}

fn blocks(b: &DMatrix<f64>) -> Result<PartitionedWeights> {
    let p = b.ncols();
    let mut clean = b.clone();
    if p >= 2 && b.nrows() == p {
        clean.column_mut(0).fill(0.0);
        clean.row_mut(p - 1).fill(0.0);
    }
    partition_weights(&clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OracleArms {
    /// Both arms share every noise draw.
    Common,
    /// Each arm gets its own noise draws.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// `|value - mean| <= k · SE`, with a floor of `1e-12 · max(1, |mean|)`
    /// for the zero-variance common-noise case in linear models.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        let floor = 1e-12 * self.mean.abs().max(1.0);
        (value - self.mean).abs() <= k * self.std_error + floor
    }
}

/// History `X_t, X_{t-1}, ..., X_{t-d+1}` (most recent first) of one unit
/// simulated from `truth` with the given seed.
pub fn sample_history(truth: &GroundTruth, t: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let x = simulate_from_truth(truth, 1, 1.0, NoiseKind::Gaussian, None, seed)?;
    Ok((0..truth.d)
        .map(|lag| (0..truth.p()).map(|v| x.get(t - lag, 0, v)).collect())
        .collect())
}

/// Monte-Carlo estimate of `E[Y_{t+1} | do(A_{t+1} = a)] - E[Y_{t+1} | do(A_{t+1} = 0)]`
/// with a history drawn from `seed`.
pub fn mc_effect_oracle(
    truth: &GroundTruth,
    t: usize,
    a: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let history = if truth.d > 0 {
        sample_history(truth, t, derive_seed(seed, 7))?
    } else {
        Vec::new()
    };
    mc_effect_oracle_with_history(
        truth,
        t,
        a,
        n_samples,
        seed,
        &history,
        OracleArms::Common,
        1.0,
    )
}

/// Oracle with an explicit history, arm coupling and noise scale.
///
/// Simulates `X_{t+1} = X_{t+1} B_{t+1} + Z_{t+1} W_{t+1} + E` forward in
/// causal order with the treatment clamped, for `n_samples` draws of `E`.
#[allow(clippy::too_many_arguments)]
pub fn mc_effect_oracle_with_history(
    truth: &GroundTruth,
    t: usize,
    a: f64,
    n_samples: usize,
    seed: u64,
    history: &[Vec<f64>],
    arms: OracleArms,
    noise_std: f64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let p = truth.p();
    let d = truth.d;
    let tn = t + 1;
    if tn > truth.t_len() || (d > 0 && t < d) {
        return Err(Error::InvalidArgument(format!(
            "t + 1 = {tn} must lie in {}..={}",
            d + 1,
            truth.t_len()
        )));
    }
    if history.len() != d || history.iter().any(|h| h.len() != p) {
        return Err(Error::DimensionMismatch(format!(
            "history must hold {d} rows of length {p}"
        )));
    }
    let b = truth.b_at(tn);
    let order = causal_order(b, tn as f64)?;
    let w = truth.w_at(tn);
    let z: Vec<f64> = history.iter().flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut draw = |e: &mut [f64]| {
        for v in e.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = noise_std * g;
        }
    };
    let (mut e1, mut e0) = (vec![0.0; p], vec![0.0; p]);
    // Neumaier-compensated sum for the mean, Welford update for the spread
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let (mut run_mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n_samples {
        draw(&mut e1);
        match arms {
            OracleArms::Common => e0.copy_from_slice(&e1),
            OracleArms::Independent => draw(&mut e0),
        }
        let y1 = structural_step(b, &order, w, &z, &e1, Some((0, a)))[p - 1];
        let y0 = structural_step(b, &order, w, &z, &e0, Some((0, 0.0)))[p - 1];
        let diff = y1 - y0;
        let next = sum + diff;
        comp += if sum.abs() >= diff.abs() {
            (sum - next) + diff
        } else {
            (diff - next) + sum
        };
        sum = next;
        let delta = diff - run_mean;
        run_mean += delta / (i + 1) as f64;
        m2 += delta * (diff - run_mean);
    }
    let n = n_samples as f64;
    let mean = (sum + comp) / n;
    let var = if n_samples > 1 { m2 / (n - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DMatrix<f64> {
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 0.4;
        b[(1, 2)] = 0.25;
        b[(0, 2)] = 0.5;
        b
    }

    #[test]
    fn direct_edge_only() {
        let mut b = DMatrix::zeros(5, 5);
        b[(0, 4)] = 0.8;
        assert_eq!(dynamic_effect(&b, 1.0).unwrap(), 0.8);
    }

    #[test]
    fn chain_example() {
        assert!((dynamic_effect(&chain(), 1.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(dynamic_effect(&chain(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cyclic_mediators_fall_back_to_solve() {
        let mut b = DMatrix::zeros(4, 4);
        b[(0, 1)] = 1.0;
        b[(1, 2)] = 0.5;
        b[(2, 1)] = 0.5;
        b[(2, 3)] = 1.0;
        // (I - Cᵀ)⁻¹ with C = [[0, .5], [.5, 0]] maps (1, 0) to (4/3, 2/3)
        assert!((dynamic_effect(&b, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_mediator_block() {
        let mut b = DMatrix::zeros(4, 4);
        b[(0, 1)] = 1.0;
        b[(1, 2)] = 1.0;
        b[(2, 1)] = 1.0;
        assert!(matches!(
            dynamic_effect(&b, 1.0),
            Err(Error::SingularMediatorBlock)
        ));
    }
}
