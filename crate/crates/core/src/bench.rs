//! Replicated simulation studies: simulate, fit, evaluate, aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::datagen::{
    derive_seed, simulate_scenario, GroundTruth, Scenario, ScenarioSpec, StrengthFn,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, evaluate_lagged, EvalReport};
use crate::solver::{fit, FitResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchTable {
    Lsem,
    Svar,
    SvarLagged,
    LongSingleUnit,
    VaryP,
}

impl BenchTable {
    pub const ALL: [BenchTable; 5] = [
        BenchTable::Lsem,
        BenchTable::Svar,
        BenchTable::SvarLagged,
        BenchTable::LongSingleUnit,
        BenchTable::VaryP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchTable::Lsem => "lsem",
            BenchTable::Svar => "svar",
            BenchTable::SvarLagged => "svar_lagged",
            BenchTable::LongSingleUnit => "long_single_unit",
            BenchTable::VaryP => "vary_p",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown table {s:?}")))
    }

    /// Metrics reported for the table.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            BenchTable::SvarLagged => &["fdr", "tpr", "shd"],
            _ => &["fdr", "tpr", "shd", "mse"],
        }
    }
}

/// One scenario column of a table.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub spec: ScenarioSpec,
    /// Score the lagged matrices instead of the contemporaneous ones.
    pub lagged: bool,
    /// Overrides the solver's L1 weight for this cell.
    pub l1: Option<f64>,
}

fn cell(label: &str, scenario: Scenario, strength: StrengthFn) -> Cell {
    Cell {
        label: label.to_string(),
        spec: ScenarioSpec::new(scenario, strength, 0),
        lagged: false,
        l1: None,
    }
}

/// Scenario grid of a table at the standard sizes.
pub fn cells(table: BenchTable) -> Vec<Cell> {
    match table {
        BenchTable::Lsem => vec![
            cell("S1F1", Scenario::S1, StrengthFn::Cosine),
            cell("S1F2", Scenario::S1, StrengthFn::QuadraticLsem),
            cell("S2", Scenario::S2, StrengthFn::Cosine),
        ],
        BenchTable::Svar => vec![
            cell("F1", Scenario::Svar1, StrengthFn::Cosine),
            cell("F2", Scenario::Svar1, StrengthFn::QuadraticSvar),
        ],
        BenchTable::SvarLagged => cells(BenchTable::Svar)
            .into_iter()
            .map(|c| Cell { lagged: true, ..c })
            .collect(),
        BenchTable::LongSingleUnit => {
            let mut c = cell("S1", Scenario::S1, StrengthFn::SlowCosine);
            c.spec.m = 1;
            c.spec.t_len = 100;
            // a third of the observations per coefficient of the m=30 panels
            c.l1 = Some(0.015);
            vec![c]
        }
        BenchTable::VaryP => [5, 8, 10]
            .into_iter()
            .map(|p| {
                let mut c = cell(&format!("p={p}"), Scenario::S1, StrengthFn::Cosine);
                c.spec.p = p;
                c
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub reps: usize,
    pub seed: u64,
    pub n_interior: usize,
    pub order: usize,
    pub solver: SolverConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reps: 30,
            seed: 0,
            n_interior: 2,
            order: 2,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub converged: bool,
    pub error: Option<String>,
}

impl RepOutcome {
    pub fn success(&self) -> bool {
        self.report.is_some() && self.converged
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub label: String,
    pub reps: Vec<RepOutcome>,
}

/// Contemporaneous report and, when both sides have lags, the lagged one.
pub fn evaluate_fit(
    result: &FitResult,
    truth: &GroundTruth,
) -> Result<(EvalReport, Option<EvalReport>)> {
    let b = evaluate(&result.graphs, &truth.graphs)?;
    let w = if result.graphs.w.is_some() && truth.graphs.w.is_some() {
        Some(evaluate_lagged(&result.graphs, &truth.graphs)?)
    } else {
        None
    };
    Ok((b, w))
}

/// Simulates and fits one replicate of a scenario.
pub fn fit_replicate(spec: &ScenarioSpec, cfg: &BenchConfig) -> Result<(FitResult, GroundTruth)> {
    let (data, truth) = simulate_scenario(spec)?;
    let basis = BasisConfig::for_fit(spec.d + 1, spec.t_len, cfg.n_interior, cfg.order)?;
    let res = fit(&data, &basis, spec.d, &cfg.solver)?;
    Ok((res, truth))
}

/// Runs `cfg.reps` replicates of `cell` in parallel. Replicate `r` uses the
/// seed `derive_seed(cfg.seed, r)`.
pub fn run_cell(cell: &Cell, cfg: &BenchConfig) -> CellResult {
    let reps = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, r as u64);
            let spec = ScenarioSpec {
                seed,
                ..cell.spec.clone()
            };
            let cfg = match cell.l1 {
                Some(l1) => BenchConfig {
                    solver: SolverConfig {
                        l1,
                        ..cfg.solver.clone()
                    },
                    ..cfg.clone()
                },
                None => cfg.clone(),
            };
            let outcome = fit_replicate(&spec, &cfg).and_then(|(res, truth)| {
                let (b, w) = evaluate_fit(&res, &truth)?;
                let report = if cell.lagged {
                    w.ok_or_else(|| {
                        Error::InvalidArgument("lagged table needs a lagged model".into())
                    })?
                } else {
                    b
                };
                Ok((report, res.converged))
            });
            match outcome {
                Ok((report, converged)) => RepOutcome {
                    seed,
                    report: Some(report),
                    converged,
                    error: None,
                },
                Err(e) => RepOutcome {
                    seed,
                    report: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    CellResult {
        label: cell.label.clone(),
        reps,
    }
}

pub fn run_table(table: BenchTable, cfg: &BenchConfig) -> Result<Vec<CellResult>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    Ok(cells(table).iter().map(|c| run_cell(c, cfg)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub table: String,
    pub scenario: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
    /// One `1`/`0` per replicate: evaluated and converged.
    pub success_flags: String,
}

pub fn metric_value(r: &EvalReport, metric: &str) -> f64 {
    match metric {
        "fdr" => r.fdr,
        "tpr" => r.tpr,
        "shd" => r.shd,
        "mse" => r.mse,
        _ => f64::NAN,
    }
}

/// Mean and sample standard deviation; `NaN` for an empty slice.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl CellResult {
    /// Metric values of the replicates that produced a report.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.reps
            .iter()
            .filter_map(|r| r.report.as_ref())
            .map(|r| metric_value(r, metric))
            .collect()
    }

    pub fn mean(&self, metric: &str) -> f64 {
        mean_sd(&self.values(metric)).0
    }

    pub fn success_flags(&self) -> String {
        self.reps
            .iter()
            .map(|r| if r.success() { '1' } else { '0' })
            .collect()
    }
}

pub fn summarize(table: BenchTable, results: &[CellResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for cell in results {
        for &metric in table.metrics() {
            let (mean, sd) = mean_sd(&cell.values(metric));
            rows.push(SummaryRow {
                table: table.name().to_string(),
                scenario: cell.label.clone(),
                metric: metric.to_string(),
                mean,
                sd,
                reps: cell.reps.len(),
                success_flags: cell.success_flags(),
            });
        }
    }
    rows
}

pub const SUMMARY_HEADER: &str = "table,scenario,metric,mean,sd,reps,success_flags";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.table,
            r.scenario,
            r.metric,
            crate::io::format_f64(r.mean),
            crate::io::format_f64(r.sd),
            r.reps,
            r.success_flags
        ));
    }
    out
}
