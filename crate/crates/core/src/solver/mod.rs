//! Constrained estimation of the basis coefficients.
//!
//! Minimizes the Gaussian reconstruction score
//! `(1/2N) Σ_t ||X_t - D_t Γ - G_t Τ||²_F` plus an L1 penalty, subject to
//! `h1(Γ) = 0`, with an augmented Lagrangian outer loop and projected Adam
//! inner steps on the split `θ = θ⁺ - θ⁻`. Structural zeros (no edges into
//! the treatment, none out of the outcome, no contemporaneous self-loops)
//! are enforced by masking.

mod acyclicity;
mod adam;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use acyclicity::{h1, h1_gradient, h_value, h_value_and_grad};

use crate::basis::BasisConfig;
use crate::dag::{break_cycles, Adjacency};
use crate::error::{Error, Result};
use crate::model::{
    build_design_contemporaneous, build_design_lagged, CoefficientSet, GraphSequence, LaggedPanel,
    PanelTensor,
};
use crate::DEFAULT_THRESHOLD;
use adam::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `α` in the acyclicity measure; `None` means `1/p`.
    pub acyclicity_alpha: Option<f64>,
    pub threshold: f64,
    pub max_outer_iters: usize,
    /// Adam steps between convergence checks of a subproblem.
    pub inner_steps: usize,
    /// Cap on the number of `inner_steps` blocks per subproblem.
    pub max_inner_blocks: usize,
    /// Relative change of the augmented objective between blocks below
    /// which a subproblem counts as solved.
    pub inner_tol: f64,
    pub learning_rate: f64,
    pub rho_init: f64,
    pub rho_mult: f64,
    pub rho_max: f64,
    pub h_decrease_factor: f64,
    pub h_tol: f64,
    /// L1 weight on all free coefficients.
    pub l1: f64,
    /// Re-estimate the selected edges by least squares after the
    /// constrained fit.
    pub refit: bool,
    /// Share Adam's second-moment estimate across coordinates.
    pub shared_moments: bool,
    /// Stop once feasible and the penalized score changes by less than this
    /// (relative) between outer iterations.
    pub stationarity_tol: f64,
    /// Standard deviation of the random start; 0 starts from zero.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            acyclicity_alpha: None,
            threshold: DEFAULT_THRESHOLD,
            max_outer_iters: 100,
            inner_steps: 200,
            max_inner_blocks: 1,
            inner_tol: 1e-5,
            learning_rate: 0.003,
            rho_init: 1.0,
            rho_mult: 10.0,
            rho_max: 1e16,
            h_decrease_factor: 0.25,
            h_tol: 1e-8,
            l1: 0.005,
            refit: true,
            stationarity_tol: 1e-6,
            shared_moments: true,
            init_std: 0.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn alpha(&self, p: usize) -> f64 {
        self.acyclicity_alpha.unwrap_or(1.0 / p as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        if let Some(a) = self.acyclicity_alpha {
            pos("acyclicity_alpha", a)?;
        }
        pos("learning_rate", self.learning_rate)?;
        pos("rho_init", self.rho_init)?;
        pos("rho_max", self.rho_max)?;
        pos("h_tol", self.h_tol)?;
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidArgument("threshold must be >= 0".into()));
        }
        if !(self.rho_mult > 1.0) {
            return Err(Error::InvalidArgument("rho_mult must exceed 1".into()));
        }
        if !(self.h_decrease_factor > 0.0 && self.h_decrease_factor < 1.0) {
            return Err(Error::InvalidArgument(
                "h_decrease_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.l1 >= 0.0) || !(self.stationarity_tol >= 0.0) || !(self.init_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "l1, stationarity_tol and init_std must be >= 0".into(),
            ));
        }
        if !(self.inner_tol >= 0.0) {
            return Err(Error::InvalidArgument("inner_tol must be >= 0".into()));
        }
        if self.max_outer_iters == 0 || self.inner_steps == 0 || self.max_inner_blocks == 0 {
            return Err(Error::InvalidArgument(
                "iteration counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One outer iteration of the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub score: f64,
    pub h1: f64,
    pub min_h1: f64,
    pub rho: f64,
    pub lambda: f64,
}

/// An edge dropped from a thresholded output graph to break a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRepair {
    pub t: f64,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub coef: CoefficientSet,
    /// Estimates at `t = d+1..=T`.
    pub graphs: GraphSequence,
    /// `B_{T+1}`.
    pub predicted_b: DMatrix<f64>,
    /// `W_{T+1}` when `d >= 1`.
    pub predicted_w: Option<DMatrix<f64>>,
    pub final_score: f64,
    pub final_h1: f64,
    pub converged: bool,
    pub refit_applied: bool,
    pub trace: Vec<TraceRecord>,
    pub repairs: Vec<CycleRepair>,
    pub t_len: usize,
}

impl FitResult {
    /// Fitted graphs followed by the flagged prediction at `T+1`.
    pub fn graphs_with_prediction(&self) -> GraphSequence {
        let mut g = self.graphs.clone();
        g.push_predicted(
            (self.t_len + 1) as f64,
            self.predicted_b.clone(),
            self.predicted_w.clone(),
        )
        .expect("prediction has the fitted shapes");
        g
    }
}

/// `(B_{T+1}, W_{T+1})` with cycle repair applied as for the fitted graphs.
pub fn predict_next(result: &FitResult) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    (result.predicted_b.clone(), result.predicted_w.clone())
}

/// Zeroes column 0 of `gamma`, the outcome row of every basis block of
/// `gamma`, and column 0 of `tau`.
pub fn enforce_treatment_mask(coef: &CoefficientSet) -> CoefficientSet {
    let mut out = coef.clone();
    let p = out.p();
    out.gamma.column_mut(0).fill(0.0);
    for k in 0..out.basis.n_basis() {
        out.gamma.row_mut(k * p + p - 1).fill(0.0);
    }
    if let Some(tau) = out.tau.as_mut() {
        tau.column_mut(0).fill(0.0);
    }
    out
}

fn gamma_masked(row: usize, col: usize, p: usize) -> bool {
    col == 0 || row % p == p - 1
}

/// Sum of absolute values over the treatment-constraint coordinates of
/// `gamma`; each coordinate counted once.
pub fn h2(coef: &CoefficientSet) -> f64 {
    let p = coef.p();
    let g = &coef.gamma;
    let mut s = 0.0;
    for r in 0..g.nrows() {
        for c in 0..p {
            if gamma_masked(r, c, p) {
                s += g[(r, c)].abs();
            }
        }
    }
    s
}

/// `h2` plus column 0 of `tau`.
pub fn h2_star(coef: &CoefficientSet) -> f64 {
    h2(coef) + coef.tau.as_ref().map_or(0.0, |t| t.column(0).abs().sum())
}

fn fit_times(d: usize, t_len: usize) -> Vec<usize> {
    (d + 1..=t_len).collect()
}

/// Stacked design `[D_t | G_t]` at time `t`.
fn design(data: &PanelTensor, basis: &BasisConfig, d: usize, t: usize) -> Result<DMatrix<f64>> {
    let dt = build_design_contemporaneous(data, basis, t)?;
    if d == 0 {
        return Ok(dt);
    }
    let lagged = LaggedPanel::new(data, d)?;
    let gt = build_design_lagged(&lagged, basis, t)?;
    let mut h = DMatrix::zeros(dt.nrows(), dt.ncols() + gt.ncols());
    h.columns_mut(0, dt.ncols()).copy_from(&dt);
    h.columns_mut(dt.ncols(), gt.ncols()).copy_from(&gt);
    Ok(h)
}

fn stack(coef: &CoefficientSet) -> DMatrix<f64> {
    match &coef.tau {
        None => coef.gamma.clone(),
        Some(tau) => {
            let (a, b) = (coef.gamma.nrows(), tau.nrows());
            let mut th = DMatrix::zeros(a + b, coef.p());
            th.rows_mut(0, a).copy_from(&coef.gamma);
            th.rows_mut(a, b).copy_from(tau);
            th
        }
    }
}

fn unstack(theta: &DMatrix<f64>, basis: &BasisConfig, d: usize) -> CoefficientSet {
    let p = theta.ncols();
    let pk = p * basis.n_basis();
    CoefficientSet {
        gamma: theta.rows(0, pk).into_owned(),
        tau: (d > 0).then(|| theta.rows(pk, theta.nrows() - pk).into_owned()),
        basis: basis.clone(),
        d,
    }
}

fn check_shapes(coef: &CoefficientSet, data: &PanelTensor) -> Result<()> {
    let p = data.p();
    let k = coef.basis.n_basis();
    if coef.p() != p || coef.gamma.nrows() != p * k {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are for p = {}, K = {k}; data has p = {p}",
            coef.p()
        )));
    }
    if let Some(tau) = &coef.tau {
        if tau.nrows() != p * coef.d * k || tau.ncols() != p {
            return Err(Error::DimensionMismatch(
                "tau shape does not match p, d, K".into(),
            ));
        }
    }
    if coef.d >= data.t_len() {
        return Err(Error::DimensionMismatch(format!(
            "lag order {} needs more than {} time stamps",
            coef.d,
            data.t_len()
        )));
    }
    Ok(())
}

/// `(1/2N) Σ_{t=d+1}^{T} ||X_t - D_t Γ - G_t Τ||²_F` with `N = m p (T-d)`.
pub fn score(coef: &CoefficientSet, data: &PanelTensor) -> Result<f64> {
    check_shapes(coef, data)?;
    let theta = stack(coef);
    let times = fit_times(coef.d, data.t_len());
    let n = (data.m() * data.p() * times.len()) as f64;
    let mut total = 0.0;
    for &t in &times {
        let h = design(data, &coef.basis, coef.d, t)?;
        let r = data.matrix_at(t)? - h * &theta;
        total += r.norm_squared();
    }
    Ok(total / (2.0 * n))
}

/// Gradient of [`score`] with respect to `gamma` and `tau`, returned in the
/// same layout. Structural zeros are not applied.
pub fn score_gradient(coef: &CoefficientSet, data: &PanelTensor) -> Result<CoefficientSet> {
    check_shapes(coef, data)?;
    let theta = stack(coef);
    let times = fit_times(coef.d, data.t_len());
    let n = (data.m() * data.p() * times.len()) as f64;
    let mut g = DMatrix::zeros(theta.nrows(), theta.ncols());
    for &t in &times {
        let h = design(data, &coef.basis, coef.d, t)?;
        let r = data.matrix_at(t)? - &h * &theta;
        g -= h.tr_mul(&r);
    }
    g /= n;
    Ok(unstack(&g, &coef.basis, coef.d))
}

/// Precomputed quadratic form of the score and the basis values used by the
/// acyclicity term.
struct Problem {
    p: usize,
    pk: usize,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    /// `Σ ||X_t||² / 2N`
    offset: f64,
    f_at: Vec<Vec<f64>>,
    alpha: f64,
    free: DMatrix<bool>,
}

impl Problem {
    fn new(data: &PanelTensor, basis: &BasisConfig, d: usize, alpha: f64) -> Result<Self> {
        let p = data.p();
        let k = basis.n_basis();
        let pk = p * k;
        let q = pk * (1 + d);
        let times = fit_times(d, data.t_len());
        let n = (data.m() * p * times.len()) as f64;
        let mut gram = DMatrix::zeros(q, q);
        let mut cross = DMatrix::zeros(q, p);
        let mut offset = 0.0;
        let mut f_at = Vec::with_capacity(times.len());
        for &t in &times {
            let h = design(data, basis, d, t)?;
            let x = data.matrix_at(t)?;
            gram += h.tr_mul(&h);
            cross += h.tr_mul(&x);
            offset += x.norm_squared();
            f_at.push(basis.eval(t as f64)?);
        }
        gram /= n;
        cross /= n;
        offset /= 2.0 * n;
        let free = DMatrix::from_fn(q, p, |r, c| {
            if c == 0 {
                false
            } else if r < pk {
                !(r % p == p - 1 || r % p == c)
            } else {
                true
            }
        });
        Ok(Self {
            p,
            pk,
            gram,
            cross,
            offset,
            f_at,
            alpha,
            free,
        })
    }

    fn score(&self, theta: &DMatrix<f64>) -> f64 {
        let gt = &self.gram * theta;
        let quad = gt.dot(theta) * 0.5;
        (quad - self.cross.dot(theta) + self.offset).max(0.0)
    }

    fn score_grad(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.gram * theta - &self.cross
    }

    fn b_at(&self, theta: &DMatrix<f64>, f: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let mut b = DMatrix::zeros(p, p);
        for (k, &fk) in f.iter().enumerate() {
            if fk != 0.0 {
                b += theta.rows(k * p, p) * fk;
            }
        }
        b
    }

    fn h1(&self, theta: &DMatrix<f64>) -> f64 {
        self.f_at
            .iter()
            .map(|f| h_value(&self.b_at(theta, f), self.alpha).abs())
            .sum()
    }

    /// `h1` and its gradient with respect to the stacked parameters.
    fn h1_and_grad(&self, theta: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let p = self.p;
        let mut grad = DMatrix::zeros(theta.nrows(), p);
        let mut total = 0.0;
        for f in &self.f_at {
            let (h, g) = h_value_and_grad(&self.b_at(theta, f), self.alpha);
            total += h.abs();
            let s = acyclicity::sign(h);
            if s == 0.0 {
                continue;
            }
            for (k, &fk) in f.iter().enumerate() {
                if fk != 0.0 {
                    let mut blk = grad.rows_mut(k * p, p);
                    blk += &g * (s * fk);
                }
            }
        }
        (total, grad)
    }
}

/// Fits the dynamic model with lag order `d` (0 for the LSEM).
///
/// The basis must cover `d+1..=T+1` so the one-step-ahead prediction can be
/// evaluated.
pub fn fit(
    data: &PanelTensor,
    basis: &BasisConfig,
    d: usize,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    fit_impl(data, basis, d, cfg, None)
}

/// Like [`fit`], starting from the given coefficients (masked first).
pub fn fit_from(
    data: &PanelTensor,
    init: &CoefficientSet,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    check_shapes(init, data)?;
    fit_impl(data, &init.basis, init.d, cfg, Some(init))
}

fn fit_impl(
    data: &PanelTensor,
    basis: &BasisConfig,
    d: usize,
    cfg: &SolverConfig,
    init: Option<&CoefficientSet>,
) -> Result<FitResult> {
    cfg.validate()?;
    let (p, t_len) = (data.p(), data.t_len());
    if p < 2 {
        return Err(Error::InvalidArgument("fitting needs p >= 2".into()));
    }
    if d >= t_len {
        return Err(Error::InvalidArgument(format!(
            "lag order {d} leaves no time stamps for T = {t_len}"
        )));
    }
    let k = basis.n_basis();
    if k > t_len - d {
        return Err(Error::InvalidArgument(format!(
            "K = {k} basis functions exceed the T - d = {} fitted time stamps",
            t_len - d
        )));
    }
    for t in [(d + 1) as f64, (t_len + 1) as f64] {
        if !basis.contains(t) {
            let (lo, hi) = basis.domain();
            return Err(Error::OutOfDomain { t, lo, hi });
        }
    }

    let alpha = cfg.alpha(p);
    let prob = Problem::new(data, basis, d, alpha)?;
    let (q, n) = (prob.gram.nrows(), prob.gram.nrows() * p);
    let free: Vec<bool> = prob.free.as_slice().to_vec();

    let mut pos = vec![0.0; n];
    let mut neg = vec![0.0; n];
    if let Some(init) = init {
        for (i, &v) in stack(init).as_slice().iter().enumerate() {
            if free[i] {
                if v > 0.0 {
                    pos[i] = v;
                } else {
                    neg[i] = -v;
                }
            }
        }
    } else if cfg.init_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.init_std).expect("validated standard deviation");
        for i in 0..n {
            let v: f64 = normal.sample(&mut rng);
            if free[i] {
                if v > 0.0 {
                    pos[i] = v;
                } else {
                    neg[i] = -v;
                }
            }
        }
    }
    let theta_of =
        |pos: &[f64], neg: &[f64]| DMatrix::from_fn(q, p, |r, c| pos[r + c * q] - neg[r + c * q]);

    let mut opt_pos = Adam::new(n, cfg.learning_rate, cfg.shared_moments);
    let mut opt_neg = Adam::new(n, cfg.learning_rate, cfg.shared_moments);
    let mut rho = cfg.rho_init;
    let mut lambda = 0.0;
    let mut h_prev = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    let mut prev_obj = f64::INFINITY;
    let mut trace = Vec::new();
    let mut gp = vec![0.0; n];
    let mut gn = vec![0.0; n];

    for it in 0..cfg.max_outer_iters {
        opt_pos.reset();
        opt_neg.reset();
        let mut prev_al = f64::INFINITY;
        for _ in 0..cfg.max_inner_blocks {
            for _ in 0..cfg.inner_steps {
                let theta = theta_of(&pos, &neg);
                let mut g = prob.score_grad(&theta);
                let (h, gh) = prob.h1_and_grad(&theta);
                let w = lambda + rho * h;
                if w != 0.0 {
                    g += &gh * w;
                }
                for (i, &gi) in g.as_slice().iter().enumerate() {
                    gp[i] = gi + cfg.l1;
                    gn[i] = -gi + cfg.l1;
                }
                opt_pos.step(&mut pos, &gp, &free);
                opt_neg.step(&mut neg, &gn, &free);
            }
            let theta = theta_of(&pos, &neg);
            let h = prob.h1(&theta);
            let al =
                prob.score(&theta) + cfg.l1 * theta.abs().sum() + lambda * h + 0.5 * rho * h * h;
            if (prev_al - al).abs() <= cfg.inner_tol * al.abs().max(1e-12) {
                break;
            }
            prev_al = al;
        }
        let theta = theta_of(&pos, &neg);
        let s = prob.score(&theta);
        let h = prob.h1(&theta);
        let obj = s + cfg.l1 * theta.abs().sum();
        lambda += rho * h;
        if h > cfg.h_decrease_factor * h_prev {
            rho = (rho * cfg.rho_mult).min(cfg.rho_max);
        }
        h_prev = h;
        min_h = min_h.min(h);
        trace.push(TraceRecord {
            iteration: it + 1,
            score: s,
            h1: h,
            min_h1: min_h,
            rho,
            lambda,
        });
        let stationary = (prev_obj - obj).abs() <= cfg.stationarity_tol * obj.abs().max(1e-12);
        if h <= cfg.h_tol && stationary {
            break;
        }
        prev_obj = obj;
    }

    let mut theta = theta_of(&pos, &neg);
    let mut refit_applied = false;
    if cfg.refit {
        if let Some(refit) = refit_selected(&prob, &theta, d, cfg.threshold) {
            if prob.h1(&refit) <= prob.h1(&theta).max(cfg.h_tol) {
                theta = refit;
                refit_applied = true;
            }
        }
    }

    let coef = unstack(&theta, basis, d);
    let final_score = prob.score(&theta);
    let final_h1 = prob.h1(&theta);
    let times: Vec<f64> = fit_times(d, t_len).into_iter().map(|t| t as f64).collect();
    let mut graphs = coef.to_graphs(&times, cfg.threshold)?;
    let mut repairs = Vec::new();
    for (i, b) in graphs.b.iter_mut().enumerate() {
        for (row, col, value) in break_cycles(b, cfg.threshold) {
            repairs.push(CycleRepair {
                t: times[i],
                row,
                col,
                value,
            });
        }
    }
    let t_next = (t_len + 1) as f64;
    let mut predicted_b = coef.b_at(t_next)?;
    for (row, col, value) in break_cycles(&mut predicted_b, cfg.threshold) {
        repairs.push(CycleRepair {
            t: t_next,
            row,
            col,
            value,
        });
    }
    let predicted_w = coef.w_at(t_next)?;

    Ok(FitResult {
        coef,
        graphs,
        predicted_b,
        predicted_w,
        final_score,
        final_h1,
        converged: final_h1 <= cfg.h_tol,
        refit_applied,
        trace,
        repairs,
        t_len,
    })
}

/// Least-squares re-estimate of every basis coefficient of the edges whose
/// fitted weight exceeds `threshold` at some time. `None` when the selected
/// contemporaneous edges form a cycle across time.
fn refit_selected(
    prob: &Problem,
    theta: &DMatrix<f64>,
    d: usize,
    threshold: f64,
) -> Option<DMatrix<f64>> {
    let p = prob.p;
    let k = prob.f_at.first().map_or(0, |f| f.len());
    let rows_per_lag_block = p * d;
    let mut sel_b = Adjacency::empty(p, p);
    let mut sel_w = Adjacency::empty(rows_per_lag_block, p);
    for f in &prob.f_at {
        let b = prob.b_at(theta, f);
        for r in 0..p {
            for c in 0..p {
                if b[(r, c)].abs() > threshold {
                    sel_b.set(r, c, true);
                }
            }
        }
        if d > 0 {
            let mut w = DMatrix::zeros(rows_per_lag_block, p);
            for (kk, &fk) in f.iter().enumerate() {
                if fk != 0.0 {
                    w += theta.rows(prob.pk + kk * rows_per_lag_block, rows_per_lag_block) * fk;
                }
            }
            for r in 0..rows_per_lag_block {
                for c in 0..p {
                    if w[(r, c)].abs() > threshold {
                        sel_w.set(r, c, true);
                    }
                }
            }
        }
    }
    if !sel_b.is_acyclic() {
        return None;
    }
    let mut out = DMatrix::zeros(theta.nrows(), p);
    for c in 0..p {
        let mut idx = Vec::new();
        for a in 0..p {
            if sel_b.has_edge(a, c) {
                idx.extend((0..k).map(|kk| kk * p + a));
            }
        }
        for r in 0..rows_per_lag_block {
            if sel_w.has_edge(r, c) {
                idx.extend((0..k).map(|kk| prob.pk + kk * rows_per_lag_block + r));
            }
        }
        idx.retain(|&i| prob.free[(i, c)]);
        if idx.is_empty() {
            continue;
        }
        let g = DMatrix::from_fn(idx.len(), idx.len(), |i, j| prob.gram[(idx[i], idx[j])]);
        let rhs = DVector::from_fn(idx.len(), |i, _| prob.cross[(idx[i], c)]);
        let sol = g.svd(true, true).solve(&rhs, 1e-12).ok()?;
        for (i, &row) in idx.iter().enumerate() {
            out[(row, c)] = sol[i];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_knots;
    use rand::{Rng, SeedableRng};

    #[test]
    fn mask_is_idempotent() {
        let basis = build_knots(1.0, 5.0, 0, 1).unwrap();
        let mut coef = CoefficientSet::zeros(3, 1, basis);
        coef.gamma.fill(1.0);
        coef.tau.as_mut().unwrap().fill(1.0);
        let once = enforce_treatment_mask(&coef);
        assert_eq!(enforce_treatment_mask(&once), once);
        assert_eq!(h2(&once), 0.0);
        assert_eq!(h2_star(&once), 0.0);
    }

    #[test]
    fn mask_counts_on_all_ones() {
        let basis = build_knots(1.0, 5.0, 0, 1).unwrap();
        assert_eq!(basis.n_basis(), 2);
        let mut coef = CoefficientSet::zeros(3, 0, basis);
        coef.gamma.fill(1.0);
        assert_eq!(h2(&coef), 10.0);
        let masked = enforce_treatment_mask(&coef);
        let zeroed = masked.gamma.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeroed, 10);
    }

    #[test]
    fn score_of_zero_is_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = PanelTensor::from_fn(4, 3, 2, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let basis = build_knots(1.0, 4.0, 0, 0).unwrap();
        let coef = CoefficientSet::zeros(2, 0, basis);
        let expected = data.values().iter().map(|v| v * v).sum::<f64>() / (2.0 * 24.0);
        assert!((score(&coef, &data).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_too_many_basis_functions() {
        let data = PanelTensor::from_fn(4, 3, 2, |t, u, v| (t + u + v) as f64).unwrap();
        let basis = BasisConfig::for_fit(1, 4, 3, 2).unwrap();
        assert!(fit(&data, &basis, 0, &SolverConfig::default()).is_err());
    }
}
