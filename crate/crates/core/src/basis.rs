//! B-spline basis systems over the time axis.
//!
//! `order` is the polynomial degree of the pieces (order 0 = indicators,
//! order 2 = quadratics). Boundary knots are clamped with multiplicity
//! `order + 1`, so a system with `n_interior` interior knots has
//! `K = n_interior + order + 1` functions and sums to one everywhere on its
//! domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PanelTensor;
use crate::solver::{self, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    order: usize,
    knots: Vec<f64>,
    n_basis: usize,
    /// Distance between the last fitting time stamp and the right end of the
    /// knot range. The one-step-ahead prediction is evaluated there.
    domain_end_extension: f64,
}

/// Clamped knots on `[t_min, t_max]` with `n_interior` equally spaced
/// interior knots.
pub fn build_knots(t_min: f64, t_max: f64, n_interior: usize, order: usize) -> Result<BasisConfig> {
    build_knots_extended(t_min, t_max, 0.0, n_interior, order)
}

/// Like [`build_knots`], but the knot range runs to `t_max + extension` so
/// that time stamps past the last observation stay inside the spline domain.
/// Interior knots are spread over the whole extended range.
pub fn build_knots_extended(
    t_min: f64,
    t_max: f64,
    extension: f64,
    n_interior: usize,
    order: usize,
) -> Result<BasisConfig> {
    if !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(Error::InvalidRange { t_min, t_max });
    }
    if !(extension >= 0.0) || !extension.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "domain extension must be finite and >= 0, got {extension}"
        )));
    }
    let hi = t_max + extension;
    let step = (hi - t_min) / (n_interior + 1) as f64;
    let mut knots = Vec::with_capacity(n_interior + 2 * (order + 1));
    knots.extend(std::iter::repeat_n(t_min, order + 1));
    knots.extend((1..=n_interior).map(|i| t_min + step * i as f64));
    knots.extend(std::iter::repeat_n(hi, order + 1));
    let mut cfg = BasisConfig::from_knots(order, knots)?;
    cfg.domain_end_extension = extension;
    Ok(cfg)
}

impl BasisConfig {
    /// Basis used for fitting time stamps `first..=last` with room for a
    /// one-step-ahead prediction at `last + 1`.
    pub fn for_fit(first: usize, last: usize, n_interior: usize, order: usize) -> Result<Self> {
        build_knots_extended(first as f64, last as f64, 1.0, n_interior, order)
    }

    /// Validates an arbitrary non-decreasing knot vector.
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if knots.len() < order + 2 {
            return Err(Error::InvalidKnots(format!(
                "order {order} needs at least {} knots, got {}",
                order + 2,
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if !(last > first) {
            return Err(Error::InvalidKnots("knot range has zero width".into()));
        }
        // Interior knots with multiplicity above order + 1 would produce
        // identically zero functions.
        let mut run = 1;
        for w in knots.windows(2) {
            if w[1] == w[0] {
                run += 1;
                if run > order + 1 {
                    return Err(Error::InvalidKnots(format!(
                        "knot {} repeated more than order + 1 = {} times",
                        w[0],
                        order + 1
                    )));
                }
            } else {
                run = 1;
            }
        }
        let n_basis = knots.len() - order - 1;
        Ok(Self {
            order,
            knots,
            n_basis,
            domain_end_extension: 0.0,
        })
    }

    pub fn with_domain_end_extension(mut self, extension: f64) -> Self {
        self.domain_end_extension = extension;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `K`.
    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn domain_end_extension(&self) -> f64 {
        self.domain_end_extension
    }

    pub fn n_interior(&self) -> usize {
        self.n_basis - self.order - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        t >= lo && t <= hi
    }

    /// Evaluates `[F_1(t), ..., F_K(t)]` with the Cox-de Boor recursion.
    ///
    /// Order-0 pieces are right-continuous half-open intervals `[k_i, k_{i+1})`
    /// except the last non-degenerate one, which is closed so the right end of
    /// the domain is covered.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let k = &self.knots;
        let span = self.span_index(t);
        let mut vals = vec![0.0; k.len() - 1];
        vals[span] = 1.0;
        for r in 1..=self.order {
            for i in 0..k.len() - 1 - r {
                let left = ratio(t - k[i], k[i + r] - k[i]);
                let right = 1.0 - ratio(t - k[i + 1], k[i + r + 1] - k[i + 1]);
                vals[i] = left * vals[i] + right * vals[i + 1];
            }
            vals[k.len() - 1 - r] = 0.0;
        }
        vals.truncate(self.n_basis);
        Ok(vals)
    }

    fn span_index(&self, t: f64) -> usize {
        let k = &self.knots;
        let last_open = (0..k.len() - 1)
            .rev()
            .find(|&i| k[i] < k[i + 1])
            .expect("validated knot range has positive width");
        if t >= k[last_open + 1] {
            return last_open;
        }
        // Largest i with k[i] <= t < k[i+1].
        let upper = k.partition_point(|&x| x <= t);
        upper - 1
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Held-out reconstruction error of each candidate interior-knot count.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub candidates: Vec<usize>,
    pub errors: Vec<f64>,
    pub selected: usize,
    pub basis: BasisConfig,
}

/// Picks the interior-knot count with the lowest mean held-out score.
///
/// Folds partition units (replicates), so every fold still observes every
/// time stamp. Candidates whose error is within a relative `1e-9` of the
/// best are treated as ties and the smallest count wins.
pub fn select_knots_cv(
    data: &PanelTensor,
    candidate_counts: &[usize],
    folds: usize,
    order: usize,
    lag: usize,
    solver_cfg: &SolverConfig,
) -> Result<CvReport> {
    if candidate_counts.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let t_len = data.t_len();
    if t_len < 2 {
        return Err(Error::InvalidArgument("need at least 2 time stamps".into()));
    }
    let first = lag + 1;
    let mk = |n: usize| BasisConfig::for_fit(first, t_len, n, order);

    if candidate_counts.len() == 1 {
        let basis = mk(candidate_counts[0])?;
        return Ok(CvReport {
            candidates: candidate_counts.to_vec(),
            errors: vec![f64::NAN],
            selected: candidate_counts[0],
            basis,
        });
    }
    if data.m() < folds {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds need at least {folds} units, panel has {}",
            data.m()
        )));
    }

    let mut errors = Vec::with_capacity(candidate_counts.len());
    for &n in candidate_counts {
        let basis = mk(n)?;
        if basis.n_basis() > t_len - lag {
            return Err(Error::InvalidArgument(format!(
                "candidate {n} gives K = {} > T - d = {}",
                basis.n_basis(),
                t_len - lag
            )));
        }
        let mut total = 0.0;
        for fold in 0..folds {
            let (train_units, test_units): (Vec<usize>, Vec<usize>) =
                (0..data.m()).partition(|u| u % folds != fold);
            let train = data.select_units(&train_units);
            let test = data.select_units(&test_units);
            let res = solver::fit(&train, &basis, lag, solver_cfg)?;
            total += solver::score(&res.coef, &test)?;
        }
        errors.push(total / folds as f64);
    }

    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order_idx: Vec<usize> = (0..candidate_counts.len()).collect();
    order_idx.sort_by_key(|&i| candidate_counts[i]);
    let pick = order_idx
        .into_iter()
        .find(|&i| errors[i] <= best + 1e-9 * best.abs().max(1e-300))
        .expect("at least one candidate attains the minimum");
    let selected = candidate_counts[pick];
    Ok(CvReport {
        candidates: candidate_counts.to_vec(),
        errors,
        selected,
        basis: mk(selected)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_interval_order_zero() {
        let b = build_knots(1.0, 10.0, 0, 0).unwrap();
        assert_eq!(b.n_basis(), 1);
        assert_eq!(b.eval(1.0).unwrap(), vec![1.0]);
        assert_eq!(b.eval(10.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn quadratic_with_two_interior_knots() {
        let b = build_knots(1.0, 10.0, 2, 2).unwrap();
        assert_eq!(b.n_basis(), 5);
        assert_eq!(b.knots(), &[1.0, 1.0, 1.0, 4.0, 7.0, 10.0, 10.0, 10.0]);
        assert_eq!(b.n_interior(), 2);
    }

    #[test]
    fn order_zero_splits_at_midpoint() {
        let b = build_knots(0.0, 10.0, 1, 0).unwrap();
        assert_eq!(b.knots(), &[0.0, 5.0, 10.0]);
        assert_eq!(b.eval(2.0).unwrap(), vec![1.0, 0.0]);
        // right-continuous at the interior knot
        assert_eq!(b.eval(5.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(b.eval(4.999999).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn partition_of_unity_at_five() {
        let b = build_knots(1.0, 10.0, 2, 2).unwrap();
        let s: f64 = b.eval(5.0).unwrap().iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_range_and_out_of_domain() {
        assert!(matches!(
            build_knots(3.0, 3.0, 1, 2),
            Err(Error::InvalidRange { .. })
        ));
        assert!(matches!(
            build_knots(5.0, 1.0, 1, 2),
            Err(Error::InvalidRange { .. })
        ));
        let b = build_knots(1.0, 10.0, 2, 2).unwrap();
        assert!(matches!(b.eval(0.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(b.eval(10.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn extended_domain_covers_prediction_point() {
        let b = BasisConfig::for_fit(1, 10, 2, 2).unwrap();
        assert_eq!(b.domain(), (1.0, 11.0));
        assert_eq!(b.domain_end_extension(), 1.0);
        let v = b.eval(11.0).unwrap();
        assert_abs_diff_eq!(v[4], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_overly_repeated_interior_knot() {
        let err = BasisConfig::from_knots(1, vec![0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(err.is_err());
    }
}
