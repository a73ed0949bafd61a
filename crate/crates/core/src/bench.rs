//! Runtime and screening-rate experiments: problem construction, the
//! screened/unscreened solver matrix, and CSV/JSON reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    expand_groups, oscar_lambdas, parse_libsvm, sparsity_factor, Dataset, GroupedProblem,
    WeightScheme,
};
use crate::decouple::{decouple, DecoupledProblem};
use crate::error::{GslopeError, Result};
use crate::screening::ScreeningTrace;
use crate::solvers::{solve, zero_groups, Algorithm, Screening, ScreeningGate, SolverConfig, SolverRun};

/// Largest ∞-norm difference tolerated between screened and unscreened solutions.
pub const SAFENESS_TOL: f64 = 1e-5;

/// Gap used for the reference solve that defines the optimal inactive groups.
pub const REFERENCE_GAP_TOL: f64 = 1e-10;

/// A synthetic regression dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub beta: Vec<f64>,
    /// Original features carrying the signal, increasing.
    pub support: Vec<usize>,
}

/// `X0` with i.i.d. `N(0,1)` entries, `k` random features with coefficients
/// `±1`, and `y = X0 β + σ ε`.
pub fn make_synthetic(n: usize, d0: usize, k: usize, sigma: f64, seed: u64) -> Result<Synthetic> {
    if n == 0 || d0 == 0 {
        return Err(GslopeError::InvalidArgument(format!(
            "synthetic data needs n, d0 >= 1, got n={n}, d0={d0}"
        )));
    }
    if k > d0 {
        return Err(GslopeError::InvalidArgument(format!(
            "{k} active features requested but only {d0} exist"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(GslopeError::InvalidArgument(format!("noise level must be >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d0, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut support = rand::seq::index::sample(&mut rng, d0, k).into_vec();
    support.sort_unstable();
    let mut beta = vec![0.0; d0];
    for &j in &support {
        beta[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * DVector::from_column_slice(&beta) + noise * sigma;
    Ok(Synthetic {
        dataset: Dataset::new(x, y)?,
        beta,
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Libsvm(PathBuf),
    Synthetic { n: usize, d0: usize, k: usize, sigma: f64 },
}

/// Which screening variants to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arms {
    On,
    Off,
    Both,
}

impl Arms {
    /// Variants in report order; the unscreened baseline comes first.
    pub fn variants(self) -> Vec<bool> {
        match self {
            Arms::On => vec![true],
            Arms::Off => vec![false],
            Arms::Both => vec![false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub source: DataSource,
    pub group_max_size: usize,
    pub tau: f64,
    pub sparsity_index: u32,
    pub solver: Algorithm,
    pub arms: Arms,
    pub trials: usize,
    pub seed: u64,
    pub standardize: bool,
    pub weights: WeightScheme,
    pub gate: ScreeningGate,
    /// Solver settings; `screening` and `seed` are set per run.
    pub config: SolverConfig,
}

impl ExperimentSpec {
    pub fn new(source: DataSource, solver: Algorithm) -> Self {
        let mut spec = Self {
            id: String::new(),
            source,
            group_max_size: 10,
            tau: 3.0,
            sparsity_index: 1,
            solver,
            arms: Arms::Both,
            trials: 5,
            seed: 0,
            standardize: false,
            weights: WeightScheme::Unit,
            gate: ScreeningGate::Always,
            config: SolverConfig::default(),
        };
        spec.id = spec.default_id();
        spec
    }

    /// `<data>_s<s>_i<i>_<solver>`, e.g. `synth-n100-d2000_s10_i1_apgd`.
    pub fn default_id(&self) -> String {
        let data = match &self.source {
            DataSource::Libsvm(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into()),
            DataSource::Synthetic { n, d0, .. } => format!("synth-n{n}-d{d0}"),
        };
        format!("{data}_s{}_i{}_{}", self.group_max_size, self.sparsity_index, self.solver)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(GslopeError::InvalidArgument("trials must be at least 1".into()));
        }
        if !(1..=3).contains(&self.sparsity_index) {
            return Err(GslopeError::InvalidArgument(format!(
                "sparsity index must be 1, 2 or 3, got {}",
                self.sparsity_index
            )));
        }
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(GslopeError::InvalidArgument(format!("unusable spec id {:?}", self.id)));
        }
        Ok(())
    }

    /// Seed for trial `t`; problem construction always uses `seed` itself.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64 + 1);
        rng.random()
    }
}

/// The grouped and decoupled problem of a spec.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub grouped: GroupedProblem,
    pub decoupled: DecoupledProblem,
    pub decouple_s: f64,
    /// Ground-truth original features for synthetic data.
    pub support: Option<Vec<usize>>,
}

pub fn build_problem(spec: &ExperimentSpec) -> Result<BuiltProblem> {
    let (mut dataset, support) = match &spec.source {
        DataSource::Libsvm(path) => (parse_libsvm(BufReader::new(File::open(path)?), None)?, None),
        DataSource::Synthetic { n, d0, k, sigma } => {
            let s = make_synthetic(*n, *d0, *k, *sigma, spec.seed)?;
            (s.dataset, Some(s.support))
        }
    };
    if spec.standardize {
        dataset.normalize_columns();
    }
    let design = expand_groups(&dataset, spec.group_max_size, spec.seed, spec.weights)?;
    let lambda = oscar_lambdas(&design, sparsity_factor(spec.sparsity_index, spec.tau))?;
    let grouped = design.with_lambda(lambda)?;
    let start = Instant::now();
    let decoupled = decouple(&grouped)?;
    Ok(BuiltProblem {
        grouped,
        decoupled,
        decouple_s: start.elapsed().as_secs_f64(),
        support,
    })
}

/// One solver run of a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub spec_id: String,
    pub solver: Algorithm,
    pub screening: String,
    pub trial: usize,
    pub wall_s: f64,
    pub iters: usize,
    pub gap: f64,
    pub active_groups: usize,
    /// Wall time relative to the mean of the first configuration.
    pub rel_time_pct: f64,
}

/// Aggregate over the trials of one screening variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub screening: String,
    pub trials: usize,
    pub mean_wall_s: f64,
    pub std_wall_s: f64,
    pub mean_iters: f64,
    pub rel_time_pct: f64,
    /// Baseline mean time over this variant's mean time.
    pub speedup: f64,
    /// Screening rate at the last iterate of trial 0, screened variant only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_screening_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub spec_id: String,
    pub solver: Algorithm,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    /// Decoupling time, not included in `wall_s`.
    pub decouple_s: f64,
    pub arms: Vec<ArmSummary>,
    /// Largest ∞-norm difference between screened and unscreened `β` over trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_solution_diff: Option<f64>,
    pub rows: Vec<TrialRow>,
    /// Trace of trial 0 of the screened variant, with screening rates.
    #[serde(skip)]
    pub trace: Option<ScreeningTrace>,
}

fn thread_count() -> usize {
    std::env::var("GSLOPE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1)
}

fn label(screened: bool) -> String {
    if screened { "on" } else { "off" }.to_string()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (trial, variant) pair of the spec.
///
/// Trials run on a pool of `GSLOPE_THREADS` threads (default 1, so timings
/// do not compete). When both variants run, every trial's solutions must
/// agree within [`SAFENESS_TOL`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let built = build_problem(spec)?;
    run_experiment_on(spec, &built)
}

/// [`run_experiment`] on an already built problem.
pub fn run_experiment_on(spec: &ExperimentSpec, built: &BuiltProblem) -> Result<Report> {
    spec.validate()?;
    let problem = &built.decoupled;
    let variants = spec.arms.variants();
    let jobs: Vec<(usize, bool)> = (0..spec.trials)
        .flat_map(|t| variants.iter().map(move |&v| (t, v)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| GslopeError::InvalidArgument(format!("thread pool: {e}")))?;
    let runs: Vec<SolverRun> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, screened)| {
                let config = SolverConfig {
                    screening: if screened { Screening::On(spec.gate) } else { Screening::Off },
                    seed: spec.trial_seed(t),
                    ..spec.config.clone()
                };
                solve(problem, spec.solver, &config)
            })
            .collect::<Result<_>>()
    })?;

    let max_solution_diff = if variants.len() == 2 {
        let mut worst: f64 = 0.0;
        for pair in runs.chunks(2) {
            let diff = pair[0]
                .beta_final
                .iter()
                .zip(&pair[1].beta_final)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        if worst > SAFENESS_TOL {
            return Err(GslopeError::SolutionMismatch {
                max_diff: worst,
                tol: SAFENESS_TOL,
            });
        }
        Some(worst)
    } else {
        None
    };

    let mut trace = None;
    let mut final_rate = None;
    if let Some(pos) = variants.iter().position(|&v| v) {
        let run = &runs[pos];
        let reference = solve(
            problem,
            spec.solver,
            &SolverConfig {
                gap_tol: REFERENCE_GAP_TOL.min(spec.config.gap_tol),
                screening: Screening::Off,
                seed: spec.trial_seed(0),
                ..spec.config.clone()
            },
        )?;
        let inactive = zero_groups(&reference.b_final, problem);
        let mut t = run.trace.clone();
        t.fill_rates(run.active.removed_log(), &inactive)?;
        final_rate = t.records.last().and_then(|r| r.rate);
        trace = Some(t);
    }

    let baseline_mean = {
        let times: Vec<f64> = runs.iter().step_by(variants.len()).map(|r| r.wall_time_s).collect();
        mean_std(&times).0
    };
    let rows: Vec<TrialRow> = jobs
        .iter()
        .zip(&runs)
        .map(|(&(trial, screened), run)| TrialRow {
            spec_id: spec.id.clone(),
            solver: spec.solver,
            screening: label(screened),
            trial,
            wall_s: run.wall_time_s,
            iters: run.iterations,
            gap: run.final_gap(),
            active_groups: run.active.len(),
            rel_time_pct: 100.0 * run.wall_time_s / baseline_mean,
        })
        .collect();
    let arms = variants
        .iter()
        .enumerate()
        .map(|(i, &screened)| {
            let of_arm: Vec<&SolverRun> = runs.iter().skip(i).step_by(variants.len()).collect();
            let times: Vec<f64> = of_arm.iter().map(|r| r.wall_time_s).collect();
            let (mean, std) = mean_std(&times);
            let iters: Vec<f64> = of_arm.iter().map(|r| r.iterations as f64).collect();
            ArmSummary {
                screening: label(screened),
                trials: of_arm.len(),
                mean_wall_s: mean,
                std_wall_s: std,
                mean_iters: mean_std(&iters).0,
                rel_time_pct: if i == 0 { 100.0 } else { 100.0 * mean / baseline_mean },
                speedup: if i == 0 { 1.0 } else { baseline_mean / mean },
                final_screening_rate: if screened { final_rate } else { None },
            }
        })
        .collect();

    Ok(Report {
        spec_id: spec.id.clone(),
        solver: spec.solver,
        n: problem.n(),
        d: problem.partition.d(),
        m: problem.m(),
        decouple_s: built.decouple_s,
        arms,
        max_solution_diff,
        rows,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str = "spec_id,solver,screening,trial,wall_s,iters,gap,active_groups,rel_time_pct";

/// Writes `report.csv` (one row per run) or `report.json` (one aggregate
/// object per spec) into `out_dir`, plus `<spec_id>_trace.csv` for every
/// spec with a screened variant. Returns the files written.
pub fn emit_report(reports: &[Report], format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let path = out_dir.join("report.csv");
            let mut out = BufWriter::new(File::create(&path)?);
            write_rows_csv(reports, &mut out)?;
            out.flush()?;
            written.push(path);
        }
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            let mut out = BufWriter::new(File::create(&path)?);
            serde_json::to_writer_pretty(&mut out, reports)?;
            writeln!(out)?;
            out.flush()?;
            written.push(path);
        }
    }
    for r in reports {
        if let Some(trace) = &r.trace {
            let path = out_dir.join(format!("{}_trace.csv", r.spec_id));
            let mut out = BufWriter::new(File::create(&path)?);
            trace.write_csv(&mut out)?;
            out.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// The per-run CSV body, header first.
pub fn write_rows_csv<W: Write>(reports: &[Report], out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in reports.iter().flat_map(|r| &r.rows) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.spec_id,
            row.solver,
            row.screening,
            row.trial,
            row.wall_s,
            row.iters,
            row.gap,
            row.active_groups,
            row.rel_time_pct
        )?;
    }
    Ok(())
}
