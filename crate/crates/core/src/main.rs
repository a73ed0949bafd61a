use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gslope::bench::{
    build_problem, emit_report, make_synthetic, run_experiment_on, Arms, DataSource, ExperimentSpec,
    ReportFormat,
};
use gslope::data::{write_libsvm, WeightScheme};
use gslope::solvers::{solve, Algorithm, Screening, ScreeningGate, SolverConfig};
use gslope::GslopeError;

#[derive(Parser)]
#[command(name = "gslope", version, about = "Group SLOPE with doubly dynamic safe screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and print a summary.
    Solve(SolveArgs),
    /// Time solvers with and without screening over several trials.
    Bench(BenchArgs),
    /// Write a synthetic dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy)]
struct SyntheticParams {
    n: usize,
    d0: usize,
    k: usize,
    sigma: f64,
}

impl FromStr for SyntheticParams {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected n,d0,k,sigma, got {s:?}"));
        }
        let int = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Self {
            n: int(parts[0])?,
            d0: int(parts[1])?,
            k: int(parts[2])?,
            sigma: parts[3].parse().map_err(|e| format!("{:?}: {e}", parts[3]))?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Gate(ScreeningGate);

impl FromStr for Gate {
    type Err = String;

    /// `always`, `gap:<value>` or `fraction:<value>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let number = |v: &str| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
        match s.split_once(':') {
            None if s == "always" => Ok(Gate(ScreeningGate::Always)),
            Some(("gap", v)) => Ok(Gate(ScreeningGate::GapBelow(number(v)?))),
            Some(("fraction", v)) => Ok(Gate(ScreeningGate::PrimalFraction(number(v)?))),
            _ => Err(format!("expected always, gap:<v> or fraction:<f>, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Apgd,
    Spgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Unit,
    Sqrt,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmsArg {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct ProblemArgs {
    /// LIBSVM dataset.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic data `n,d0,k,sigma`.
    #[arg(long)]
    synthetic: Option<SyntheticParams>,
    /// Largest group size `s` for column replication.
    #[arg(long, default_value_t = 10)]
    group_max_size: usize,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    /// `i` in `p_i = i·e^{−τ}`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=3))]
    sparsity_index: u32,
    /// Rescale columns to unit norm before expansion.
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum, default_value = "unit")]
    weights: WeightsArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "apgd")]
    solver: SolverArg,
    /// SPGD step size; derived from the data when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 30)]
    batch_size: usize,
    #[arg(long, default_value_t = 30)]
    inner_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// SPGD: scale the mini-batch correction by 1/l as printed in the original algorithm.
    #[arg(long)]
    paper_literal: bool,
    /// When screening starts: `always`, `gap:<v>` or `fraction:<f>` of the initial objective.
    #[arg(long, default_value = "always")]
    screen_gate: Gate,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "on")]
    screening: OnOff,
    /// Directory for `solution.json` and `trace.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "both")]
    screening: ArmsArg,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Report identifier; derived from the data and settings when omitted.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    synthetic: SyntheticParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `synthetic.libsvm` and `truth.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn make_spec(problem: &ProblemArgs, solver: &SolverArgs) -> ExperimentSpec {
    let source = match (&problem.data, problem.synthetic) {
        (Some(path), _) => DataSource::Libsvm(path.clone()),
        (None, Some(s)) => DataSource::Synthetic {
            n: s.n,
            d0: s.d0,
            k: s.k,
            sigma: s.sigma,
        },
        (None, None) => unreachable!("clap requires --data or --synthetic"),
    };
    let algorithm = match solver.solver {
        SolverArg::Apgd => Algorithm::Apgd,
        SolverArg::Spgd => Algorithm::Spgd,
    };
    let mut spec = ExperimentSpec::new(source, algorithm);
    spec.group_max_size = problem.group_max_size;
    spec.tau = problem.tau;
    spec.sparsity_index = problem.sparsity_index;
    spec.standardize = problem.standardize;
    spec.weights = match problem.weights {
        WeightsArg::Unit => WeightScheme::Unit,
        WeightsArg::Sqrt => WeightScheme::SqrtSize,
    };
    spec.seed = problem.seed;
    spec.gate = solver.screen_gate.0;
    spec.config = SolverConfig {
        max_iter: solver.max_iter,
        gap_tol: solver.gap_tol,
        gamma: solver.gamma,
        batch_size: solver.batch_size,
        inner_iters: solver.inner_iters,
        paper_literal: solver.paper_literal,
        ..SolverConfig::default()
    };
    spec.id = spec.default_id();
    spec
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    solver: Algorithm,
    screening: bool,
    n: usize,
    d: usize,
    m: usize,
    iterations: usize,
    converged: bool,
    gap: f64,
    objective: f64,
    active_groups: usize,
    nonzero_groups: usize,
    decouple_s: f64,
    wall_s: f64,
    beta: &'a [f64],
}

fn run_solve(args: SolveArgs) -> gslope::Result<()> {
    let spec = make_spec(&args.problem, &args.solver);
    spec.validate()?;
    let built = build_problem(&spec)?;
    let screened = matches!(args.screening, OnOff::On);
    let config = SolverConfig {
        screening: if screened { Screening::On(spec.gate) } else { Screening::Off },
        seed: spec.trial_seed(0),
        ..spec.config.clone()
    };
    let run = solve(&built.decoupled, spec.solver, &config)?;
    let effects = built.grouped.group_effects(&run.beta_final);
    let summary = SolveSummary {
        solver: spec.solver,
        screening: screened,
        n: built.decoupled.n(),
        d: built.decoupled.partition.d(),
        m: built.decoupled.m(),
        iterations: run.iterations,
        converged: run.converged,
        gap: run.final_gap(),
        objective: built.grouped.objective(&run.beta_final)?,
        active_groups: run.active.len(),
        nonzero_groups: effects.iter().filter(|&&e| e > 0.0).count(),
        decouple_s: built.decouple_s,
        wall_s: run.wall_time_s,
        beta: &run.beta_final,
    };
    println!(
        "{} screening={} iterations={} converged={} gap={:e} objective={} active_groups={}/{} nonzero_groups={} wall_s={:.4}",
        summary.solver,
        if screened { "on" } else { "off" },
        summary.iterations,
        summary.converged,
        summary.gap,
        summary.objective,
        summary.active_groups,
        summary.m,
        summary.nonzero_groups,
        summary.wall_s
    );
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("solution.json"))?), &summary)?;
        run.trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> gslope::Result<()> {
    let mut spec = make_spec(&args.problem, &args.solver);
    spec.trials = args.trials;
    spec.arms = match args.screening {
        ArmsArg::On => Arms::On,
        ArmsArg::Off => Arms::Off,
        ArmsArg::Both => Arms::Both,
    };
    if let Some(id) = args.id {
        spec.id = id;
    }
    spec.validate()?;
    let built = build_problem(&spec)?;
    let report = run_experiment_on(&spec, &built)?;
    println!(
        "{}: n={} d={} m={} decouple_s={:.4}",
        report.spec_id, report.n, report.d, report.m, report.decouple_s
    );
    for arm in &report.arms {
        let rate = arm
            .final_screening_rate
            .map(|r| format!(" final_rate={r:.3}"))
            .unwrap_or_default();
        println!(
            "  screening={:<3} mean_s={:.4} std_s={:.4} iters={:.1} rel={:.1}% speedup={:.2}{}",
            arm.screening, arm.mean_wall_s, arm.std_wall_s, arm.mean_iters, arm.rel_time_pct, arm.speedup, rate
        );
    }
    if let Some(diff) = report.max_solution_diff {
        println!("  max |beta_on - beta_off| = {diff:e}");
    }
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    for path in emit_report(std::slice::from_ref(&report), format, &args.out)? {
        println!("  wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth {
    n: usize,
    d0: usize,
    sigma: f64,
    seed: u64,
    support: Vec<usize>,
    beta: Vec<f64>,
}

fn run_synth(args: SynthArgs) -> gslope::Result<()> {
    let p = args.synthetic;
    let s = make_synthetic(p.n, p.d0, p.k, p.sigma, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let data_path = args.out.join("synthetic.libsvm");
    write_libsvm(&s.dataset, BufWriter::new(File::create(&data_path)?))?;
    let truth = Truth {
        n: p.n,
        d0: p.d0,
        sigma: p.sigma,
        seed: args.seed,
        support: s.support,
        beta: s.beta,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(args.out.join("truth.json"))?), &truth)?;
    println!("wrote {}", data_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (GslopeError::SolutionMismatch { .. } | GslopeError::SafenessViolation { .. })) => {
            eprintln!("gslope: safeness check failed: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("gslope: {e}");
            ExitCode::from(1)
        }
    }
}
