mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dyncausal::basis::select_knots_cv;
use dyncausal::bench::{run_table, summarize, summary_csv, BenchConfig, BenchTable};
use dyncausal::datagen::{simulate_scenario, NoiseKind, Scenario, ScenarioSpec, StrengthFn};
use dyncausal::effect::effect_trajectory;
use dyncausal::io::{
    effect_csv, panel_to_csv, read_json, read_panel_csv, to_json_string, trace_jsonl,
    variable_names, write_atomic, GraphDocument,
};
use dyncausal::metrics::{evaluate, evaluate_lagged, EvalReport};
use dyncausal::{fit, BasisConfig, SolverConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "dyncausal",
    version,
    about = "Time-varying causal DAGs and dynamic effects"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Flat key=value file; keys are flag names, flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (a directory for `simulate`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate a scenario; writes data.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit a panel CSV; writes the fit JSON.
    Fit(FitArgs),
    /// Effect trajectory of a fit (or truth) JSON.
    Effect(EffectArgs),
    /// Compare a fit JSON with a truth JSON.
    Eval(EvalArgs),
    /// Replicated simulation study; writes the summary CSV.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScenarioArg {
    S1,
    S2,
    Svar1,
    Svar2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NoiseArg {
    Gaussian,
    Uniform,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "s1")]
    scenario: ScenarioArg,
    /// f1, f2, slow, or a constant weight.
    #[arg(long, default_value = "f1")]
    strength: String,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long = "t-len", default_value_t = 10)]
    t_len: usize,
    /// Lag order of SVAR scenarios.
    #[arg(long, default_value_t = 1)]
    lag: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    #[arg(long = "noise-std", default_value_t = 1.0)]
    noise_std: f64,
    /// Expected degree of random DAGs.
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
}

#[derive(clap::Args, Debug)]
struct FitArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    lag: usize,
    /// Interior knot count, or `cv` to choose among 0..=4 by cross-validation.
    #[arg(long, default_value = "2")]
    knots: String,
    #[arg(long = "cv-folds", default_value_t = 5)]
    cv_folds: usize,
    /// Spline degree.
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = dyncausal::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Acyclicity alpha; defaults to 1/p.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "max-outer", default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 0.003)]
    lr: f64,
    #[arg(long, default_value_t = 0.005)]
    l1: f64,
    /// Writes the outer-iteration trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct EffectArgs {
    /// Fit or truth JSON.
    #[arg(long)]
    fit: PathBuf,
    /// Treatment level contrasted with 0.
    #[arg(long, default_value_t = 1.0)]
    treatment: f64,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Re-threshold the estimate.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    /// lsem, svar, svar_lagged, long_single_unit or vary_p.
    #[arg(long)]
    table: String,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    knots: usize,
    #[arg(long, default_value_t = 2)]
    order: usize,
}

#[derive(Serialize)]
struct EvalOutput {
    contemporaneous: EvalReport,
    lagged: Option<EvalReport>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(write_atomic(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn strength(s: &str, scenario: Scenario) -> Result<StrengthFn> {
    Ok(match s {
        "f1" => StrengthFn::Cosine,
        "f2" if scenario.is_svar() => StrengthFn::QuadraticSvar,
        "f2" => StrengthFn::QuadraticLsem,
        "slow" => StrengthFn::SlowCosine,
        _ => StrengthFn::Constant(s.parse().with_context(|| {
            format!("--strength: expected f1, f2, slow or a number, got {s:?}")
        })?),
    })
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<u8> {
    let scenario = match a.scenario {
        ScenarioArg::S1 => Scenario::S1,
        ScenarioArg::S2 => Scenario::S2,
        ScenarioArg::Svar1 => Scenario::Svar1,
        ScenarioArg::Svar2 => Scenario::Svar2,
    };
    let spec = ScenarioSpec {
        p: a.p,
        m: a.m,
        t_len: a.t_len,
        d: if scenario.is_svar() { a.lag } else { 0 },
        noise_std: a.noise_std,
        noise: match a.noise {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Uniform => NoiseKind::Uniform,
        },
        expected_degree: a.degree,
        ..ScenarioSpec::new(scenario, strength(&a.strength, scenario)?, cli.seed)
    };
    let Some(dir) = &cli.out else {
        bail!("simulate needs --out <directory>");
    };
    let (data, truth) = simulate_scenario(&spec)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(&dir.join("data.csv"), panel_to_csv(&data).as_bytes())?;
    let doc = GraphDocument::from_truth(&truth, Some(variable_names(&data)));
    write_atomic(&dir.join("truth.json"), to_json_string(&doc).as_bytes())?;
    Ok(0)
}

fn run_fit(cli: &Cli, a: &FitArgs) -> Result<u8> {
    let data = read_panel_csv(&a.data)?;
    let cfg = SolverConfig {
        acyclicity_alpha: a.alpha,
        threshold: a.threshold,
        max_outer_iters: a.max_outer,
        learning_rate: a.lr,
        l1: a.l1,
        seed: cli.seed,
        ..SolverConfig::default()
    };
    let basis = if a.knots == "cv" {
        let cv = select_knots_cv(&data, &[0, 1, 2, 3, 4], a.cv_folds, a.order, a.lag, &cfg)
            .context("--knots cv")?;
        eprintln!("cross-validation selected {} interior knots", cv.selected);
        cv.basis
    } else {
        let n: usize = a
            .knots
            .parse()
            .with_context(|| format!("--knots: expected a count or `cv`, got {:?}", a.knots))?;
        BasisConfig::for_fit(a.lag + 1, data.t_len(), n, a.order)?
    };
    let res =
        fit(&data, &basis, a.lag, &cfg).with_context(|| format!("fitting {}", a.data.display()))?;
    if let Some(path) = &a.trace {
        write_atomic(path, trace_jsonl(&res.trace).as_bytes())?;
    }
    let doc = GraphDocument::from_fit(&res, Some(variable_names(&data)));
    emit(cli.out.as_deref(), &to_json_string(&doc))?;
    if res.converged {
        Ok(0)
    } else {
        eprintln!("solver did not converge: final h1 = {:e}", res.final_h1);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn read_doc(path: &Path) -> Result<GraphDocument> {
    Ok(read_json(path)?)
}

fn run_effect(cli: &Cli, a: &EffectArgs) -> Result<u8> {
    let graphs = read_doc(&a.fit)?
        .graphs()
        .with_context(|| a.fit.display().to_string())?;
    let points = effect_trajectory(&graphs, a.treatment)?;
    emit(cli.out.as_deref(), &effect_csv(&points))?;
    Ok(0)
}

fn run_eval(cli: &Cli, a: &EvalArgs) -> Result<u8> {
    let mut est = read_doc(&a.est)?
        .graphs()
        .with_context(|| a.est.display().to_string())?;
    if let Some(thr) = a.threshold {
        est = est.with_threshold(thr);
    }
    let truth = read_doc(&a.truth)?
        .graphs()
        .with_context(|| a.truth.display().to_string())?;
    let report = EvalOutput {
        contemporaneous: evaluate(&est, &truth)?,
        lagged: if est.w.is_some() && truth.w.is_some() {
            Some(evaluate_lagged(&est, &truth)?)
        } else {
            None
        },
    };
    let csv = cli
        .out
        .as_deref()
        .is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    let text = if csv {
        let mut s = format!("kind,{}\n", EvalReport::CSV_HEADER);
        s.push_str(&format!(
            "contemporaneous,{}\n",
            report.contemporaneous.csv_row()
        ));
        if let Some(l) = &report.lagged {
            s.push_str(&format!("lagged,{}\n", l.csv_row()));
        }
        s
    } else {
        to_json_string(&report)
    };
    emit(cli.out.as_deref(), &text)?;
    Ok(0)
}

fn run_bench(cli: &Cli, a: &BenchArgs) -> Result<u8> {
    let table = BenchTable::parse(&a.table)?;
    let cfg = BenchConfig {
        reps: a.reps,
        seed: cli.seed,
        n_interior: a.knots,
        order: a.order,
        ..BenchConfig::default()
    };
    let results = run_table(table, &cfg)?;
    for cell in &results {
        for rep in &cell.reps {
            if let Some(e) = &rep.error {
                eprintln!("{} seed {}: {e}", cell.label, rep.seed);
            }
        }
    }
    emit(
        cli.out.as_deref(),
        &summary_csv(&summarize(table, &results)),
    )?;
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Cmd::Simulate(a) => simulate(cli, a),
        Cmd::Fit(a) => run_fit(cli, a),
        Cmd::Effect(a) => run_effect(cli, a),
        Cmd::Eval(a) => run_eval(cli, a),
        Cmd::Bench(a) => run_bench(cli, a),
    }
}

fn args_with_config() -> Result<Vec<OsString>> {
    let args: Vec<OsString> = std::env::args_os().collect();
    let Some(path) = config::config_path(&args) else {
        return Ok(args);
    };
    let path = PathBuf::from(path);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let entries = config::parse_config(&text, &path)?;
    config::merge(&Cli::command(), args, &entries).with_context(|| path.display().to_string())
}

/// Error chain joined by `: `, skipping causes a message already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let args = match args_with_config() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_ERROR)
        }
    }
}
