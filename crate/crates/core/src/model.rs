//! Panel data, Kronecker designs, basis coefficients and weighted graphs.
//!
//! Time stamps are 1-based (`1..=T`), matching how panels are written to
//! disk. Coefficient matrices use a basis-major layout: rows
//! `k*p .. (k+1)*p` of `gamma` hold the contribution of basis function `k`,
//! so `B_t[a][b] = sum_k F_k(t) * gamma[k*p + a][b]`.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisConfig;
use crate::dag::Adjacency;
use crate::error::{Error, Result};
use crate::DEFAULT_THRESHOLD;

/// Observed values indexed `[t][unit][variable]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTensor {
    t_len: usize,
    m: usize,
    p: usize,
    values: Vec<f64>,
    names: Option<Vec<String>>,
}

impl PanelTensor {
    /// `values` is laid out time-major, then unit, then variable.
    pub fn new(t_len: usize, m: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if t_len == 0 || m == 0 || p == 0 {
            return Err(Error::DimensionMismatch(format!(
                "panel dimensions must be positive, got T={t_len}, m={m}, p={p}"
            )));
        }
        if values.len() != t_len * m * p {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for T={t_len}, m={m}, p={p}, got {}",
                t_len * m * p,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: i / (m * p) + 1,
                unit: (i / p) % m + 1,
                var: i % p,
            });
        }
        Ok(Self {
            t_len,
            m,
            p,
            values,
            names: None,
        })
    }

    pub fn from_fn(
        t_len: usize,
        m: usize,
        p: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(t_len * m * p);
        for t in 1..=t_len {
            for u in 0..m {
                for v in 0..p {
                    values.push(f(t, u, v));
                }
            }
        }
        Self::new(t_len, m, p, values)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "{} variable names for {} variables",
                names.len(),
                self.p
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at time stamp `t` (1-based), unit `u` and variable `v` (0-based).
    pub fn get(&self, t: usize, u: usize, v: usize) -> f64 {
        self.values[self.offset(t, u, v)]
    }

    fn offset(&self, t: usize, u: usize, v: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.t_len && u < self.m && v < self.p);
        ((t - 1) * self.m + u) * self.p + v
    }

    /// `X_t` as an `m x p` matrix.
    pub fn matrix_at(&self, t: usize) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        let base = (t - 1) * self.m * self.p;
        Ok(DMatrix::from_row_slice(
            self.m,
            self.p,
            &self.values[base..base + self.m * self.p],
        ))
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_len {
            return Err(Error::InvalidArgument(format!(
                "time stamp {t} outside 1..={}",
                self.t_len
            )));
        }
        Ok(())
    }

    /// Sub-panel with the given units, in the given order.
    pub fn select_units(&self, units: &[usize]) -> PanelTensor {
        let mut values = Vec::with_capacity(self.t_len * units.len() * self.p);
        for t in 1..=self.t_len {
            for &u in units {
                let o = self.offset(t, u, 0);
                values.extend_from_slice(&self.values[o..o + self.p]);
            }
        }
        PanelTensor {
            t_len: self.t_len,
            m: units.len(),
            p: self.p,
            values,
            names: self.names.clone(),
        }
    }

    /// Panel with variable columns reordered: column `j` of the result is
    /// column `perm[j]` of `self`.
    pub fn permute_variables(&self, perm: &[usize]) -> Result<PanelTensor> {
        check_permutation(perm, self.p)?;
        let values = self
            .values
            .chunks(self.p)
            .flat_map(|row| perm.iter().map(move |&j| row[j]))
            .collect();
        Ok(PanelTensor {
            t_len: self.t_len,
            m: self.m,
            p: self.p,
            values,
            names: self
                .names
                .as_ref()
                .map(|n| perm.iter().map(|&j| n[j].clone()).collect()),
        })
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n
        || perm
            .iter()
            .any(|&j| j >= n || std::mem::replace(&mut seen[j], true))
    {
        return Err(Error::InvalidArgument(format!(
            "{perm:?} is not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

/// A panel together with a lag order `d`; `Z_t` concatenates
/// `X_{t-1}, ..., X_{t-d}` per unit.
#[derive(Debug, Clone)]
pub struct LaggedPanel<'a> {
    base: &'a PanelTensor,
    d: usize,
}

impl<'a> LaggedPanel<'a> {
    pub fn new(base: &'a PanelTensor, d: usize) -> Result<Self> {
        if d >= base.t_len() {
            return Err(Error::InvalidArgument(format!(
                "lag order {d} leaves no fitting time stamps for T={}",
                base.t_len()
            )));
        }
        Ok(Self { base, d })
    }

    pub fn base(&self) -> &PanelTensor {
        self.base
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `Z_t` as an `m x pd` matrix; defined for `t > d`.
    pub fn z_at(&self, t: usize) -> Result<DMatrix<f64>> {
        if t <= self.d || t > self.base.t_len() {
            return Err(Error::InvalidArgument(format!(
                "lagged design needs {} < t <= {}, got {t}",
                self.d,
                self.base.t_len()
            )));
        }
        let (m, p) = (self.base.m(), self.base.p());
        Ok(DMatrix::from_fn(m, p * self.d, |u, c| {
            let lag = c / p + 1;
            self.base.get(t - lag, u, c % p)
        }))
    }
}

/// Row-wise Kronecker product `f ⊗ x`: row `u` is
/// `[f_1 x_u, f_2 x_u, ..., f_K x_u]`.
pub fn kron_rows(f: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = x.ncols();
    DMatrix::from_fn(x.nrows(), f.len() * c, |u, j| f[j / c] * x[(u, j % c)])
}

/// `D_t = F_t ⊗ X_t`, an `m x pK` matrix.
pub fn build_design_contemporaneous(
    data: &PanelTensor,
    basis: &BasisConfig,
    t: usize,
) -> Result<DMatrix<f64>> {
    let x = data.matrix_at(t)?;
    let f = basis.eval(t as f64)?;
    Ok(kron_rows(&f, &x))
}

/// `G_t = F_t ⊗ Z_t`, an `m x pdK` matrix.
pub fn build_design_lagged(
    lagged: &LaggedPanel<'_>,
    basis: &BasisConfig,
    t: usize,
) -> Result<DMatrix<f64>> {
    let z = lagged.z_at(t)?;
    let f = basis.eval(t as f64)?;
    Ok(kron_rows(&f, &z))
}

/// Collapses basis-major coefficients into the weight matrix at one time:
/// `out[a][b] = sum_k f[k] * coef[k*rows + a][b]`.
pub fn expand_coefficients(coef: &DMatrix<f64>, f: &[f64]) -> DMatrix<f64> {
    let rows = coef.nrows() / f.len();
    let mut out = DMatrix::zeros(rows, coef.ncols());
    for (k, &fk) in f.iter().enumerate() {
        if fk != 0.0 {
            out += coef.rows(k * rows, rows) * fk;
        }
    }
    out
}

/// Basis coefficients `gamma` (`pK x p`) and, when `d >= 1`, `tau` (`pdK x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub gamma: DMatrix<f64>,
    pub tau: Option<DMatrix<f64>>,
    pub basis: BasisConfig,
    pub d: usize,
}

impl CoefficientSet {
    pub fn zeros(p: usize, d: usize, basis: BasisConfig) -> Self {
        let k = basis.n_basis();
        Self {
            gamma: DMatrix::zeros(p * k, p),
            tau: (d > 0).then(|| DMatrix::zeros(p * d * k, p)),
            basis,
            d,
        }
    }

    pub fn new(
        gamma: DMatrix<f64>,
        tau: Option<DMatrix<f64>>,
        basis: BasisConfig,
        d: usize,
    ) -> Result<Self> {
        let k = basis.n_basis();
        let p = gamma.ncols();
        if gamma.nrows() != p * k {
            return Err(Error::DimensionMismatch(format!(
                "gamma is {}x{}, expected {}x{p}",
                gamma.nrows(),
                gamma.ncols(),
                p * k
            )));
        }
        match (&tau, d) {
            (None, 0) => {}
            (Some(t), d) if d > 0 && t.nrows() == p * d * k && t.ncols() == p => {}
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "tau must be present with shape {}x{p} iff d > 0 (d = {d})",
                    p * d * k
                )))
            }
        }
        Ok(Self {
            gamma,
            tau,
            basis,
            d,
        })
    }

    pub fn p(&self) -> usize {
        self.gamma.ncols()
    }

    /// Contemporaneous weights `B_t`.
    pub fn b_at(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(expand_coefficients(&self.gamma, &self.basis.eval(t)?))
    }

    /// Lagged weights `W_t`, or `None` when `d = 0`.
    pub fn w_at(&self, t: f64) -> Result<Option<DMatrix<f64>>> {
        match &self.tau {
            None => Ok(None),
            Some(tau) => Ok(Some(expand_coefficients(tau, &self.basis.eval(t)?))),
        }
    }

    /// Materializes the weighted graphs at `times`.
    pub fn to_graphs(&self, times: &[f64], threshold: f64) -> Result<GraphSequence> {
        let mut b = Vec::with_capacity(times.len());
        let mut w = self.tau.as_ref().map(|_| Vec::with_capacity(times.len()));
        for &t in times {
            let f = self.basis.eval(t)?;
            b.push(expand_coefficients(&self.gamma, &f));
            if let (Some(ws), Some(tau)) = (w.as_mut(), self.tau.as_ref()) {
                ws.push(expand_coefficients(tau, &f));
            }
        }
        GraphSequence::new(times.to_vec(), b, w, threshold)
    }
}

/// Alias kept for callers that think in terms of the mapping rather than
/// the method.
pub fn coefficients_to_graphs(
    coef: &CoefficientSet,
    times: &[f64],
    threshold: f64,
) -> Result<GraphSequence> {
    coef.to_graphs(times, threshold)
}

/// Weighted contemporaneous (and optionally lagged) graphs over time.
///
/// Binary adjacency is never stored; it is derived from the weights and the
/// threshold on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    pub times: Vec<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub w: Option<Vec<DMatrix<f64>>>,
    pub threshold: f64,
    /// Marks entries that are extrapolated predictions rather than fits.
    pub predicted: Vec<bool>,
}

impl GraphSequence {
    pub fn new(
        times: Vec<f64>,
        b: Vec<DMatrix<f64>>,
        w: Option<Vec<DMatrix<f64>>>,
        threshold: f64,
    ) -> Result<Self> {
        if times.len() != b.len() || w.as_ref().is_some_and(|w| w.len() != b.len()) {
            return Err(Error::DimensionMismatch(
                "times, B and W lengths differ".into(),
            ));
        }
        if let Some(first) = b.first() {
            let p = first.ncols();
            if b.iter().any(|m| m.nrows() != p || m.ncols() != p) {
                return Err(Error::DimensionMismatch("every B_t must be p x p".into()));
            }
            if let Some(ws) = &w {
                let rows = ws.first().map_or(0, |m| m.nrows());
                if rows % p != 0 || ws.iter().any(|m| m.nrows() != rows || m.ncols() != p) {
                    return Err(Error::DimensionMismatch("every W_t must be pd x p".into()));
                }
            }
        }
        let predicted = vec![false; times.len()];
        Ok(Self {
            times,
            b,
            w,
            threshold,
            predicted,
        })
    }

    pub fn with_default_threshold(
        times: Vec<f64>,
        b: Vec<DMatrix<f64>>,
        w: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        Self::new(times, b, w, DEFAULT_THRESHOLD)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn p(&self) -> usize {
        self.b.first().map_or(0, |m| m.ncols())
    }

    /// Lag order implied by the shape of `W`.
    pub fn d(&self) -> usize {
        match &self.w {
            Some(ws) if !ws.is_empty() && self.p() > 0 => ws[0].nrows() / self.p(),
            _ => 0,
        }
    }

    pub fn adjacency(&self, i: usize) -> Adjacency {
        Adjacency::from_weights(&self.b[i], self.threshold)
    }

    pub fn lagged_adjacency(&self, i: usize) -> Option<Adjacency> {
        self.w
            .as_ref()
            .map(|w| Adjacency::from_weights(&w[i], self.threshold))
    }

    /// Entries at the listed positions, in order.
    pub fn select(&self, idx: &[usize]) -> GraphSequence {
        GraphSequence {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            b: idx.iter().map(|&i| self.b[i].clone()).collect(),
            w: self
                .w
                .as_ref()
                .map(|w| idx.iter().map(|&i| w[i].clone()).collect()),
            threshold: self.threshold,
            predicted: idx.iter().map(|&i| self.predicted[i]).collect(),
        }
    }

    /// Entries whose time lies in `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> GraphSequence {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= lo && self.times[i] <= hi)
            .collect();
        self.select(&idx)
    }

    /// Appends one entry, flagged as a prediction.
    pub fn push_predicted(
        &mut self,
        t: f64,
        b: DMatrix<f64>,
        w: Option<DMatrix<f64>>,
    ) -> Result<()> {
        if b.nrows() != self.p() && !self.is_empty() {
            return Err(Error::DimensionMismatch(
                "predicted B has wrong shape".into(),
            ));
        }
        match (&mut self.w, w) {
            (Some(ws), Some(w)) => ws.push(w),
            (None, None) => {}
            _ => {
                return Err(Error::DimensionMismatch(
                    "predicted W presence differs".into(),
                ))
            }
        }
        self.times.push(t);
        self.b.push(b);
        self.predicted.push(true);
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

/// Role-partitioned view of one time slice.
///
/// With `X_t = [A_t, M_t, Y_t]` the contemporaneous matrix is
///
/// ```text
/// [ 0  alpha  gamma ]
/// [ 0  C      beta  ]
/// [ 0  0      0     ]
/// ```
///
/// and every lag block `i` of `W_t` is
///
/// ```text
/// [ 0  alpha_i  gamma_i ]
/// [ 0  C_i      beta_i  ]
/// [ 0  d_i      f_i     ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedWeights {
    pub gamma: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub c: DMatrix<f64>,
    pub lags: Vec<LagBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagBlock {
    pub gamma: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub c: DMatrix<f64>,
    /// Lagged outcome to current mediators.
    pub d: DVector<f64>,
    /// Lagged outcome to current outcome.
    pub f: f64,
}

/// Tolerance for structural zeros when partitioning.
pub const STRUCTURAL_ZERO_TOL: f64 = 1e-8;

/// Splits `B_t` into treatment/mediator/outcome blocks.
pub fn partition_weights(b: &DMatrix<f64>) -> Result<PartitionedWeights> {
    let p = b.ncols();
    if p < 2 || b.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "B_t must be square with p >= 2, got {}x{}",
            b.nrows(),
            p
        )));
    }
    for r in 0..p {
        check_zero(b, r, 0)?;
        check_zero(b, p - 1, r)?;
    }
    let q = p - 2;
    Ok(PartitionedWeights {
        gamma: b[(0, p - 1)],
        alpha: DVector::from_fn(q, |j, _| b[(0, j + 1)]),
        beta: DVector::from_fn(q, |j, _| b[(j + 1, p - 1)]),
        c: b.view((1, 1), (q, q)).into_owned(),
        lags: Vec::new(),
    })
}

/// Splits `B_t` and the stacked lag matrix `W_t` (`pd x p`).
pub fn partition_weights_lagged(b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<PartitionedWeights> {
    let mut out = partition_weights(b)?;
    let p = b.ncols();
    if w.ncols() != p || !w.nrows().is_multiple_of(p) {
        return Err(Error::DimensionMismatch(format!(
            "W_t must be pd x {p}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let q = p - 2;
    for lag in 0..w.nrows() / p {
        let blk = w.rows(lag * p, p);
        for r in 0..p {
            if blk[(r, 0)].abs() > STRUCTURAL_ZERO_TOL {
                return Err(Error::StructuralZero {
                    row: lag * p + r,
                    col: 0,
                    value: blk[(r, 0)],
                    tol: STRUCTURAL_ZERO_TOL,
                });
            }
        }
        out.lags.push(LagBlock {
            gamma: blk[(0, p - 1)],
            alpha: DVector::from_fn(q, |j, _| blk[(0, j + 1)]),
            beta: DVector::from_fn(q, |j, _| blk[(j + 1, p - 1)]),
            c: blk.view((1, 1), (q, q)).into_owned(),
            d: DVector::from_fn(q, |j, _| blk[(p - 1, j + 1)]),
            f: blk[(p - 1, p - 1)],
        });
    }
    Ok(out)
}

fn check_zero(b: &DMatrix<f64>, r: usize, c: usize) -> Result<()> {
    let v = b[(r, c)];
    if v.abs() > STRUCTURAL_ZERO_TOL {
        return Err(Error::StructuralZero {
            row: r,
            col: c,
            value: v,
            tol: STRUCTURAL_ZERO_TOL,
        });
    }
    Ok(())
}

impl PartitionedWeights {
    pub fn p(&self) -> usize {
        self.alpha.len() + 2
    }

    /// Rebuilds `B_t` and, when lag blocks are present, `W_t`.
    pub fn assemble(&self) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let p = self.p();
        let q = p - 2;
        let mut b = DMatrix::zeros(p, p);
        b[(0, p - 1)] = self.gamma;
        for j in 0..q {
            b[(0, j + 1)] = self.alpha[j];
            b[(j + 1, p - 1)] = self.beta[j];
        }
        b.view_mut((1, 1), (q, q)).copy_from(&self.c);
        if self.lags.is_empty() {
            return (b, None);
        }
        let mut w = DMatrix::zeros(p * self.lags.len(), p);
        for (i, lag) in self.lags.iter().enumerate() {
            let o = i * p;
            w[(o, p - 1)] = lag.gamma;
            w[(o + p - 1, p - 1)] = lag.f;
            for j in 0..q {
                w[(o, j + 1)] = lag.alpha[j];
                w[(o + j + 1, p - 1)] = lag.beta[j];
                w[(o + p - 1, j + 1)] = lag.d[j];
            }
            w.view_mut((o + 1, 1), (q, q)).copy_from(&lag.c);
        }
        (b, Some(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_knots, BasisConfig};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(rng: &mut ChaCha8Rng, t: usize, m: usize, p: usize) -> PanelTensor {
        PanelTensor::from_fn(t, m, p, |_, _, _| rng.random_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn kron_example_row() {
        let x = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let d = kron_rows(&[1.0, 2.0], &x);
        assert_eq!(
            d.as_slice().to_vec(),
            DMatrix::from_row_slice(1, 4, &[3.0, 4.0, 6.0, 8.0]).as_slice()
        );
    }

    #[test]
    fn indicator_basis_pads_with_zero_blocks() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = kron_rows(&[1.0, 0.0, 0.0], &x);
        assert_eq!(d.columns(0, 2), x.columns(0, 2));
        assert!(d.columns(2, 4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn design_reconstructs_x_times_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_panel(&mut rng, 6, 4, 3);
        let basis = build_knots(1.0, 6.0, 1, 2).unwrap();
        let k = basis.n_basis();
        let gamma = DMatrix::from_fn(3 * k, 3, |_, _| rng.random_range(-1.0..1.0));
        let coef = CoefficientSet::new(gamma.clone(), None, basis.clone(), 0).unwrap();
        for t in 1..=6 {
            let d = build_design_contemporaneous(&data, &basis, t).unwrap();
            let lhs = &d * &gamma;
            // B_t from the element-wise sum, not from expand_coefficients
            let f = basis.eval(t as f64).unwrap();
            let b = DMatrix::from_fn(3, 3, |a, bb| {
                (0..k).map(|kk| f[kk] * gamma[(kk * 3 + a, bb)]).sum()
            });
            let rhs = data.matrix_at(t).unwrap() * &b;
            assert!((lhs - rhs).abs().max() < 1e-12);
            assert!((coef.b_at(t as f64).unwrap() - b).abs().max() < 1e-12);
        }
    }

    #[test]
    fn lagged_design_reconstructs_z_times_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_panel(&mut rng, 7, 3, 3);
        let lagged = LaggedPanel::new(&data, 2).unwrap();
        let basis = build_knots(3.0, 7.0, 1, 1).unwrap();
        let k = basis.n_basis();
        let tau = DMatrix::from_fn(6 * k, 3, |_, _| rng.random_range(-1.0..1.0));
        for t in 3..=7 {
            let g = build_design_lagged(&lagged, &basis, t).unwrap();
            let z = lagged.z_at(t).unwrap();
            let w = expand_coefficients(&tau, &basis.eval(t as f64).unwrap());
            assert!((&g * &tau - z * w).abs().max() < 1e-12);
        }
        assert!(build_design_lagged(&lagged, &basis, 2).is_err());
    }

    #[test]
    fn lag_one_rows_are_previous_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_panel(&mut rng, 4, 2, 3);
        let lagged = LaggedPanel::new(&data, 1).unwrap();
        assert_eq!(lagged.z_at(3).unwrap(), data.matrix_at(2).unwrap());
        let basis = build_knots(1.0, 4.0, 0, 0).unwrap();
        assert_eq!(
            build_design_lagged(&lagged, &basis, 3).unwrap(),
            data.matrix_at(2).unwrap()
        );
    }

    #[test]
    fn zero_coefficients_give_empty_graphs() {
        let basis = BasisConfig::for_fit(1, 10, 2, 2).unwrap();
        let coef = CoefficientSet::zeros(4, 0, basis);
        let times: Vec<f64> = (1..=11).map(f64::from).collect();
        let g = coef.to_graphs(&times, 0.2).unwrap();
        for i in 0..g.len() {
            assert!(g.b[i].iter().all(|&v| v == 0.0));
            assert_eq!(g.adjacency(i).edge_count(), 0);
        }
    }

    #[test]
    fn single_coefficient_single_edge() {
        let basis = build_knots(1.0, 10.0, 0, 0).unwrap();
        let mut coef = CoefficientSet::zeros(3, 0, basis);
        coef.gamma[(0, 2)] = 0.7;
        let g = coef.to_graphs(&[2.0, 9.5], 0.2).unwrap();
        for i in 0..2 {
            let adj = g.adjacency(i);
            assert_eq!(adj.edge_count(), 1);
            assert!(adj.has_edge(0, 2));
            assert_eq!(g.b[i][(0, 2)], 0.7);
        }
    }

    #[test]
    fn linear_basis_interpolates_endpoints() {
        let basis = build_knots(1.0, 10.0, 0, 1).unwrap();
        assert_eq!(basis.n_basis(), 2);
        let mut coef = CoefficientSet::zeros(3, 0, basis);
        coef.gamma[(0, 2)] = 0.2;
        coef.gamma[(3, 2)] = 0.8;
        assert_abs_diff_eq!(coef.b_at(1.0).unwrap()[(0, 2)], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(coef.b_at(10.0).unwrap()[(0, 2)], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(coef.b_at(5.5).unwrap()[(0, 2)], 0.5, epsilon = 1e-15);
        assert!(coef.to_graphs(&[11.0], 0.2).is_err());
    }

    #[test]
    fn partition_smallest() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.0, 0.0]);
        let pw = partition_weights(&b).unwrap();
        assert_eq!(pw.gamma, 0.6);
        assert!(pw.alpha.is_empty() && pw.beta.is_empty() && pw.c.is_empty());
        assert_eq!(pw.assemble().0, b);
    }

    #[test]
    fn partition_single_mediator_edge() {
        let mut b = DMatrix::zeros(4, 4);
        b[(0, 1)] = 0.4;
        let pw = partition_weights(&b).unwrap();
        assert_eq!(pw.alpha.as_slice(), &[0.4, 0.0]);
        assert_eq!(pw.gamma, 0.0);
        assert!(pw.beta.iter().all(|&v| v == 0.0));
        assert!(pw.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn partition_rejects_structural_violations() {
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.3;
        assert!(matches!(
            partition_weights(&b),
            Err(Error::StructuralZero { row: 1, col: 0, .. })
        ));
        let mut b = DMatrix::zeros(3, 3);
        b[(2, 1)] = 1e-6;
        assert!(partition_weights(&b).is_err());
        let mut b = DMatrix::zeros(3, 3);
        b[(2, 1)] = 1e-9;
        assert!(partition_weights(&b).is_ok());
    }

    #[test]
    fn partition_round_trip_with_lags() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 5;
        let mut b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        b.column_mut(0).fill(0.0);
        b.row_mut(p - 1).fill(0.0);
        let mut w = DMatrix::from_fn(2 * p, p, |_, _| rng.random_range(-1.0..1.0));
        w.column_mut(0).fill(0.0);
        let pw = partition_weights_lagged(&b, &w).unwrap();
        assert_eq!(pw.lags.len(), 2);
        let (b2, w2) = pw.assemble();
        assert_eq!(b2, b);
        assert_eq!(w2.unwrap(), w);
    }

    #[test]
    fn panel_rejects_non_finite() {
        let err = PanelTensor::new(1, 1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinite {
                t: 1,
                unit: 1,
                var: 1
            }
        ));
    }
}
