//! Synthetic ground truth: random DAGs, time-varying strengths and forward
//! simulation of the dynamic LSEM (`X_t = X_t B_t + E_t`) and the dynamic
//! SVAR (`X_t = X_t B_t + Z_t W_t + E_t`).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dag::Adjacency;
use crate::error::{Error, Result};
use crate::model::{GraphSequence, PanelTensor};
use crate::DEFAULT_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrengthFn {
    /// `0.8 cos(t / 4π)`
    Cosine,
    /// `(-10 + (5 - t)^2) / 20`
    QuadraticLsem,
    /// `(-15 + (5 - t)^2) / 25`
    QuadraticSvar,
    /// `0.8 cos(t / 30π)`, used for long single-unit series.
    SlowCosine,
    Constant(f64),
}

impl StrengthFn {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            StrengthFn::Cosine => (t / (4.0 * PI)).cos() * 0.8,
            StrengthFn::QuadraticLsem => (-10.0 + (5.0 - t).powi(2)) / 20.0,
            StrengthFn::QuadraticSvar => (-15.0 + (5.0 - t).powi(2)) / 25.0,
            StrengthFn::SlowCosine => (t / (30.0 * PI)).cos() * 0.8,
            StrengthFn::Constant(c) => c,
        }
    }
}

pub fn strength(f: StrengthFn, t: f64) -> f64 {
    f.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// A single treatment -> outcome edge with a time-varying weight.
    S1,
    /// Masked Erdős–Rényi DAG, each edge time-varying or static.
    S2,
    /// Lag-1 SVAR: single treatment -> outcome edge plus the unit-diagonal
    /// lag matrix (zero for the treatment).
    Svar1,
    /// Lag-1 SVAR with an S2-style random contemporaneous DAG.
    Svar2,
}

impl Scenario {
    pub fn is_svar(self) -> bool {
        matches!(self, Scenario::Svar1 | Scenario::Svar2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Gaussian,
    /// Uniform with the same standard deviation.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub strength: StrengthFn,
    pub p: usize,
    pub m: usize,
    pub t_len: usize,
    pub d: usize,
    pub noise_std: f64,
    pub noise: NoiseKind,
    /// Optional per-variable multipliers on `noise_std`.
    pub noise_scales: Option<Vec<f64>>,
    pub expected_degree: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Desk-scale defaults: `p = 5`, `m = 30`, `T = 10`, unit Gaussian noise.
    pub fn new(scenario: Scenario, strength: StrengthFn, seed: u64) -> Self {
        Self {
            scenario,
            strength,
            p: 5,
            m: 30,
            t_len: 10,
            d: usize::from(scenario.is_svar()),
            noise_std: 1.0,
            noise: NoiseKind::Gaussian,
            noise_scales: None,
            expected_degree: 4.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidArgument("scenarios need p >= 2".into()));
        }
        if self.m == 0 || self.t_len == 0 {
            return Err(Error::InvalidArgument("m and T must be positive".into()));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::InvalidArgument("noise_std must be positive".into()));
        }
        if self.scenario.is_svar() != (self.d >= 1) {
            return Err(Error::InvalidArgument(format!(
                "{:?} requires {}",
                self.scenario,
                if self.scenario.is_svar() {
                    "d >= 1"
                } else {
                    "d = 0"
                }
            )));
        }
        if self.d >= self.t_len {
            return Err(Error::InvalidArgument("lag order must be below T".into()));
        }
        if let Some(s) = &self.noise_scales {
            if s.len() != self.p || s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "noise_scales must be p non-negative values".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeKind {
    TimeVarying,
    Static(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True `B_t` (and `W_t`) at every time stamp `1..=T`.
    pub graphs: GraphSequence,
    /// Contemporaneous edge kinds, row-major `p x p`.
    pub edge_kinds: Vec<Option<EdgeKind>>,
    pub d: usize,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.graphs.p()
    }

    pub fn b_at(&self, t: usize) -> &DMatrix<f64> {
        &self.graphs.b[t - 1]
    }

    pub fn w_at(&self, t: usize) -> Option<&DMatrix<f64>> {
        self.graphs.w.as_ref().map(|w| &w[t - 1])
    }

    pub fn t_len(&self) -> usize {
        self.graphs.len()
    }
}

/// SplitMix64 step, used to derive independent seeds from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Masked Erdős–Rényi DAG.
///
/// Draws a uniformly random topological order, keeps each order-respecting
/// pair with probability `expected_degree / (p - 1)`, then removes edges into
/// the treatment (0) and out of the outcome (`p - 1`).
pub fn random_dag<R: Rng + ?Sized>(p: usize, expected_degree: f64, rng: &mut R) -> Adjacency {
    let prob = if p > 1 {
        (expected_degree / (p - 1) as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    let mut adj = Adjacency::empty(p, p);
    for i in 0..p {
        for j in i + 1..p {
            // one draw per ordered pair keeps the stream layout independent of masks
            if rng.random::<f64>() < prob {
                adj.set(order[i], order[j], true);
            }
        }
    }
    for v in 0..p {
        adj.set(v, 0, false);
        adj.set(p - 1, v, false);
    }
    adj
}

pub fn random_dag_seeded(p: usize, expected_degree: f64, seed: u64) -> Adjacency {
    random_dag(p, expected_degree, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Lag matrix with a unit diagonal except for the treatment, on lag 1 only.
pub fn unit_diagonal_lag(p: usize, d: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(p * d, p);
    for v in 1..p {
        w[(v, v)] = 1.0;
    }
    w
}

/// True graphs for a scenario. Uses a stream derived from the seed that is
/// disjoint from the noise stream.
pub fn ground_truth(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let p = spec.p;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let mut kinds: Vec<Option<EdgeKind>> = vec![None; p * p];
    match spec.scenario {
        Scenario::S1 | Scenario::Svar1 => kinds[p - 1] = Some(EdgeKind::TimeVarying),
        Scenario::S2 | Scenario::Svar2 => {
            let adj = random_dag(p, spec.expected_degree, &mut rng);
            for (r, c) in adj.edges() {
                kinds[r * p + c] = Some(if rng.random::<bool>() {
                    EdgeKind::TimeVarying
                } else {
                    let mag = rng.random_range(0.5..=1.0);
                    EdgeKind::Static(if rng.random::<bool>() { mag } else { -mag })
                });
            }
        }
    }
    let times: Vec<f64> = (1..=spec.t_len).map(|t| t as f64).collect();
    let b: Vec<DMatrix<f64>> = times
        .iter()
        .map(|&t| {
            DMatrix::from_fn(p, p, |r, c| match kinds[r * p + c] {
                None => 0.0,
                Some(EdgeKind::TimeVarying) => spec.strength.eval(t),
                Some(EdgeKind::Static(v)) => v,
            })
        })
        .collect();
    let w = spec
        .scenario
        .is_svar()
        .then(|| vec![unit_diagonal_lag(p, spec.d); spec.t_len]);
    Ok(GroundTruth {
        graphs: GraphSequence::new(times, b, w, DEFAULT_THRESHOLD)?,
        edge_kinds: kinds,
        d: spec.d,
    })
}

/// Draws one noise value with unit variance before scaling.
fn draw_unit_noise<R: Rng + ?Sized>(kind: NoiseKind, rng: &mut R) -> f64 {
    match kind {
        NoiseKind::Gaussian => StandardNormal.sample(rng),
        NoiseKind::Uniform => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
    }
}

/// Noise panel drawn time-major, then unit, then variable, from a stream
/// derived from `seed` (disjoint from the graph stream).
pub fn draw_noise(
    t_len: usize,
    m: usize,
    p: usize,
    noise_std: f64,
    kind: NoiseKind,
    noise_scales: Option<&[f64]>,
    seed: u64,
) -> Result<PanelTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    PanelTensor::from_fn(t_len, m, p, |_, _, v| {
        let scale = noise_scales.map_or(1.0, |s| s[v]);
        noise_std * scale * draw_unit_noise(kind, &mut rng)
    })
}

/// One structural step: solves `x = x B + z W + e` in topological order.
///
/// `z` is the stacked lag vector `[x_{t-1}, ..., x_{t-d}]` (empty when no
/// lag term applies). `clamp` fixes one variable to a value, as under an
/// intervention.
pub(crate) fn structural_step(
    b: &DMatrix<f64>,
    order: &[usize],
    w: Option<&DMatrix<f64>>,
    z: &[f64],
    e: &[f64],
    clamp: Option<(usize, f64)>,
) -> Vec<f64> {
    let p = b.ncols();
    let mut x = vec![0.0; p];
    for &v in order {
        if let Some((cv, val)) = clamp {
            if cv == v {
                x[v] = val;
                continue;
            }
        }
        let mut s = e[v];
        for i in 0..p {
            let bw = b[(i, v)];
            if bw != 0.0 {
                s += x[i] * bw;
            }
        }
        if let Some(w) = w {
            for (r, &zr) in z.iter().enumerate() {
                let ww = w[(r, v)];
                if ww != 0.0 {
                    s += zr * ww;
                }
            }
        }
        x[v] = s;
    }
    x
}

pub(crate) fn causal_order(b: &DMatrix<f64>, t: f64) -> Result<Vec<usize>> {
    Adjacency::from_weights(b, 0.0)
        .topological_order()
        .ok_or(Error::Cyclic(t))
}

/// Forward-simulates from fixed true graphs with the given noise panel.
///
/// Time stamps `t <= d` have no lagged input.
pub fn simulate_with_noise(truth: &GroundTruth, noise: &PanelTensor) -> Result<PanelTensor> {
    let p = truth.p();
    let t_len = truth.t_len();
    let d = truth.d;
    if noise.p() != p || noise.t_len() != t_len {
        return Err(Error::DimensionMismatch(format!(
            "noise panel is T={} p={}, truth is T={t_len} p={p}",
            noise.t_len(),
            noise.p()
        )));
    }
    let m = noise.m();
    let mut values: Vec<f64> = Vec::with_capacity(t_len * m * p);
    let mut z = Vec::with_capacity(p * d);
    for t in 1..=t_len {
        let b = truth.b_at(t);
        let order = causal_order(b, t as f64)?;
        let w = truth.w_at(t).filter(|_| t > d);
        let base = (t - 1) * m * p;
        for u in 0..m {
            z.clear();
            if w.is_some() {
                for lag in 1..=d {
                    let o = ((t - 1 - lag) * m + u) * p;
                    z.extend_from_slice(&values[o..o + p]);
                }
            }
            let e = &noise.values()[base + u * p..base + (u + 1) * p];
            values.extend(structural_step(b, &order, w, &z, e, None));
        }
    }
    PanelTensor::new(t_len, m, p, values)
}

/// Forward-simulates `m` units from fixed true graphs with noise drawn by
/// [`draw_noise`].
pub fn simulate_from_truth(
    truth: &GroundTruth,
    m: usize,
    noise_std: f64,
    noise: NoiseKind,
    noise_scales: Option<&[f64]>,
    seed: u64,
) -> Result<PanelTensor> {
    let e = draw_noise(
        truth.t_len(),
        m,
        truth.p(),
        noise_std,
        noise,
        noise_scales,
        seed,
    )?;
    simulate_with_noise(truth, &e)
}

fn simulate(spec: &ScenarioSpec) -> Result<(PanelTensor, GroundTruth)> {
    let truth = ground_truth(spec)?;
    let data = simulate_from_truth(
        &truth,
        spec.m,
        spec.noise_std,
        spec.noise,
        spec.noise_scales.as_deref(),
        spec.seed,
    )?;
    Ok((data, truth))
}

pub fn simulate_lsem(spec: &ScenarioSpec) -> Result<(PanelTensor, GroundTruth)> {
    if spec.d != 0 || spec.scenario.is_svar() {
        return Err(Error::InvalidArgument(
            "simulate_lsem needs an LSEM scenario with d = 0".into(),
        ));
    }
    simulate(spec)
}

pub fn simulate_svar(spec: &ScenarioSpec) -> Result<(PanelTensor, GroundTruth)> {
    if spec.d == 0 || !spec.scenario.is_svar() {
        return Err(Error::InvalidArgument(
            "simulate_svar needs an SVAR scenario with d >= 1".into(),
        ));
    }
    simulate(spec)
}

/// Dispatches on the scenario kind.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<(PanelTensor, GroundTruth)> {
    simulate(spec)
}
