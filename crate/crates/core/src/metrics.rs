//! Graph-recovery and weight-accuracy metrics over time.
//!
//! Counts are pooled over time stamps, so `fdr` and `tpr` can be recomputed
//! exactly from the reported counts. SHD is computed per time stamp and
//! averaged. A reversed edge counts once in SHD and as a false positive (it
//! is not a true positive) and a false negative in the confusion counts.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dag::Adjacency;
use crate::error::{Error, Result};
use crate::model::GraphSequence;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub reversed: usize,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.reversed += o.reversed;
    }

    /// `FP / (TP + FP)`, 0 when nothing is predicted.
    pub fn fdr(&self) -> f64 {
        ratio_or(self.fp, self.tp + self.fp, 0.0)
    }

    /// `TP / (TP + FN)`, 1 when there is nothing to find.
    pub fn tpr(&self) -> f64 {
        ratio_or(self.tp, self.tp + self.fn_, 1.0)
    }
}

fn ratio_or(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub t: f64,
    pub counts: Counts,
    pub shd: usize,
    pub sq_err_sum: f64,
    pub n_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fdr: f64,
    pub tpr: f64,
    pub shd: f64,
    pub mse: f64,
    pub counts: Counts,
    pub per_time: Vec<TimeBreakdown>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "fdr,tpr,shd,mse,tp,fp,fn,reversed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt17(self.fdr),
            fmt17(self.tpr),
            fmt17(self.shd),
            fmt17(self.mse),
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.counts.reversed
        )
    }
}

fn fmt17(v: f64) -> String {
    crate::io::format_f64(v)
}

/// Which weight entries enter the MSE.
#[derive(Debug, Clone, PartialEq)]
pub enum MsePositions {
    /// Union of true and estimated thresholded supports at each time.
    Union,
    /// True support only.
    Truth,
    All,
    Fixed(Vec<(usize, usize)>),
}

/// Confusion counts of `est` against `truth`.
pub fn confusion(est: &Adjacency, truth: &Adjacency) -> Counts {
    confusion_impl(est, truth, est.n_rows() == est.n_cols())
}

fn confusion_impl(est: &Adjacency, truth: &Adjacency, square: bool) -> Counts {
    let mut c = Counts::default();
    for r in 0..est.n_rows() {
        for col in 0..est.n_cols() {
            let (e, t) = (est.has_edge(r, col), truth.has_edge(r, col));
            match (e, t) {
                (true, true) => c.tp += 1,
                (true, false) => {
                    c.fp += 1;
                    if square && r != col && truth.has_edge(col, r) {
                        c.reversed += 1;
                    }
                }
                (false, true) => c.fn_ += 1,
                _ => {}
            }
        }
    }
    c
}

/// Structural Hamming distance for square adjacencies: one per unordered
/// pair whose edge state differs (so a reversal costs 1), plus one per
/// differing self-loop. Non-square inputs use the plain entrywise Hamming
/// distance.
pub fn shd(est: &Adjacency, truth: &Adjacency) -> usize {
    shd_impl(est, truth, est.n_rows() == est.n_cols())
}

fn shd_impl(est: &Adjacency, truth: &Adjacency, square: bool) -> usize {
    if !square {
        return (0..est.n_rows())
            .flat_map(|r| (0..est.n_cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| est.has_edge(r, c) != truth.has_edge(r, c))
            .count();
    }
    let n = est.n_rows();
    let mut d = 0;
    for i in 0..n {
        if est.has_edge(i, i) != truth.has_edge(i, i) {
            d += 1;
        }
        for j in i + 1..n {
            let es = (est.has_edge(i, j), est.has_edge(j, i));
            let ts = (truth.has_edge(i, j), truth.has_edge(j, i));
            if es != ts {
                d += 1;
            }
        }
    }
    d
}

fn align(est: &GraphSequence, truth: &GraphSequence) -> Result<Vec<(usize, usize)>> {
    if est.p() != truth.p() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has p = {}, truth has p = {}",
            est.p(),
            truth.p()
        )));
    }
    let mut pairs = Vec::new();
    for (i, &t) in est.times.iter().enumerate() {
        if est.predicted[i] {
            continue;
        }
        let j =
            truth.times.iter().position(|&s| s == t).ok_or_else(|| {
                Error::DimensionMismatch(format!("truth has no graph at t = {t}"))
            })?;
        pairs.push((i, j));
    }
    if pairs.is_empty() {
        return Err(Error::DimensionMismatch("no common time stamps".into()));
    }
    Ok(pairs)
}

fn union_positions(e: &Adjacency, t: &Adjacency) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for r in 0..e.n_rows() {
        for c in 0..e.n_cols() {
            if e.has_edge(r, c) || t.has_edge(r, c) {
                v.push((r, c));
            }
        }
    }
    v
}

fn evaluate_mats(
    times: &[f64],
    est: &[(&DMatrix<f64>, f64)],
    truth: &[(&DMatrix<f64>, f64)],
    contemporaneous: bool,
) -> Result<EvalReport> {
    let mut total = Counts::default();
    let mut per_time = Vec::with_capacity(times.len());
    let (mut shd_sum, mut sq_sum, mut n_sq) = (0usize, 0.0, 0usize);
    for (i, &t) in times.iter().enumerate() {
        let (ew, ethr) = est[i];
        let (tw, tthr) = truth[i];
        if ew.shape() != tw.shape() {
            return Err(Error::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ at t = {t}",
                ew.shape(),
                tw.shape()
            )));
        }
        let ea = Adjacency::from_weights(ew, ethr);
        let ta = Adjacency::from_weights(tw, tthr);
        let counts = confusion_impl(&ea, &ta, contemporaneous);
        let s = shd_impl(&ea, &ta, contemporaneous);
        let pos = union_positions(&ea, &ta);
        let sq: f64 = pos.iter().map(|&rc| (ew[rc] - tw[rc]).powi(2)).sum();
        total.add(&counts);
        shd_sum += s;
        sq_sum += sq;
        n_sq += pos.len();
        per_time.push(TimeBreakdown {
            t,
            counts,
            shd: s,
            sq_err_sum: sq,
            n_entries: pos.len(),
        });
    }
    Ok(EvalReport {
        fdr: total.fdr(),
        tpr: total.tpr(),
        shd: shd_sum as f64 / times.len() as f64,
        mse: if n_sq == 0 { 0.0 } else { sq_sum / n_sq as f64 },
        counts: total,
        per_time,
    })
}

/// Compares contemporaneous graphs. Every non-predicted estimate time must
/// exist in `truth`; each side is thresholded at its own threshold.
pub fn evaluate(est: &GraphSequence, truth: &GraphSequence) -> Result<EvalReport> {
    let pairs = align(est, truth)?;
    let times: Vec<f64> = pairs.iter().map(|&(i, _)| est.times[i]).collect();
    let e: Vec<_> = pairs
        .iter()
        .map(|&(i, _)| (&est.b[i], est.threshold))
        .collect();
    let t: Vec<_> = pairs
        .iter()
        .map(|&(_, j)| (&truth.b[j], truth.threshold))
        .collect();
    evaluate_mats(&times, &e, &t, true)
}

/// Compares the lagged matrices `W_t`; SHD is the entrywise Hamming
/// distance since lagged edges have a fixed direction.
pub fn evaluate_lagged(est: &GraphSequence, truth: &GraphSequence) -> Result<EvalReport> {
    let (Some(ew), Some(tw)) = (&est.w, &truth.w) else {
        return Err(Error::DimensionMismatch(
            "both sequences need lagged matrices".into(),
        ));
    };
    let pairs = align(est, truth)?;
    let times: Vec<f64> = pairs.iter().map(|&(i, _)| est.times[i]).collect();
    let e: Vec<_> = pairs
        .iter()
        .map(|&(i, _)| (&ew[i], est.threshold))
        .collect();
    let t: Vec<_> = pairs
        .iter()
        .map(|&(_, j)| (&tw[j], truth.threshold))
        .collect();
    evaluate_mats(&times, &e, &t, false)
}

/// Mean of `(B̂_t - B_t)²` over the requested positions and aligned times.
pub fn mse_weights(
    est: &GraphSequence,
    truth: &GraphSequence,
    positions: &MsePositions,
) -> Result<f64> {
    let pairs = align(est, truth)?;
    let p = est.p();
    let (mut sum, mut n) = (0.0, 0usize);
    for &(i, j) in &pairs {
        let (ew, tw) = (&est.b[i], &truth.b[j]);
        let pos: Vec<(usize, usize)> = match positions {
            MsePositions::Union => union_positions(&est.adjacency(i), &truth.adjacency(j)),
            MsePositions::Truth => truth.adjacency(j).edges().collect(),
            MsePositions::All => (0..p).flat_map(|r| (0..p).map(move |c| (r, c))).collect(),
            MsePositions::Fixed(v) => v.clone(),
        };
        for rc in pos {
            if rc.0 >= p || rc.1 >= p {
                return Err(Error::DimensionMismatch(format!(
                    "position {rc:?} outside {p}x{p}"
                )));
            }
            sum += (ew[rc] - tw[rc]).powi(2);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
