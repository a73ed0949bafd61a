//! Proximal solvers for the decoupled problem: accelerated batch (APGD) and
//! variance-reduced stochastic (SPGD), both with optional safe screening.

mod apgd;
mod lipschitz;
mod spgd;

pub use apgd::apgd_solve;
pub use lipschitz::{lipschitz_estimate, spectral_norm_sq};
pub use spgd::{spgd_solve, variance_reduced_direction, GradientScaling};

use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decouple::DecoupledProblem;
use crate::duality::{residual_gap, GapCertificate, ResidualGap};
use crate::error::{GslopeError, Result};
use crate::screening::{fixpoint_positions, ActiveSet, ScreeningTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// Step `1/L` with `L` from [`lipschitz_estimate`].
    Fixed,
    /// Step `1/L` with a caller-supplied `L`.
    Lipschitz(f64),
    /// Start from `L₀` and multiply by `eta` until the quadratic model majorizes.
    Backtracking { eta: f64, l0: f64 },
}

/// When screening starts during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScreeningGate {
    Always,
    /// Once the gap falls to the given value.
    GapBelow(f64),
    /// Once the gap falls to this fraction of the starting objective `P(b⁰)`.
    PrimalFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Screening {
    Off,
    On(ScreeningGate),
}

impl Screening {
    pub fn is_on(&self) -> bool {
        matches!(self, Screening::On(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub step_rule: StepRule,
    /// SPGD step; derived from the data when `None`.
    pub gamma: Option<f64>,
    pub batch_size: usize,
    pub inner_iters: usize,
    pub screening: Screening,
    pub seed: u64,
    /// SPGD only: divide the mini-batch correction by `l` instead of scaling it by `n/l`.
    pub paper_literal: bool,
    /// APGD only: reset the momentum scalar to `t = 1` whenever screening removes a group.
    pub momentum_restart: bool,
    /// Re-estimate `L` on the shrunken design after screening.
    pub reestimate_lipschitz: bool,
    /// Starting point `b⁰` in the decoupled layout.
    pub warm_start: Option<Vec<f64>>,
    /// Keep the dual point `θ^k` of every iterate in the run.
    pub record_duals: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            gap_tol: 1e-6,
            step_rule: StepRule::Fixed,
            gamma: None,
            batch_size: 30,
            inner_iters: 30,
            screening: Screening::Off,
            seed: 0,
            paper_literal: false,
            momentum_restart: true,
            reestimate_lipschitz: false,
            warm_start: None,
            record_duals: false,
        }
    }
}

impl SolverConfig {
    pub fn with_screening(mut self, screening: Screening) -> Self {
        self.screening = screening;
        self
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Extra checks for the stochastic solver.
    pub(crate) fn validate_stochastic(&self, problem: &DecoupledProblem) -> Result<()> {
        self.validate(problem)?;
        if self.inner_iters == 0 {
            return Err(GslopeError::InvalidArgument("inner_iters must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > problem.n() {
            return Err(GslopeError::InvalidArgument(format!(
                "batch size {} must lie in 1..={}",
                self.batch_size,
                problem.n()
            )));
        }
        Ok(())
    }

    pub(crate) fn validate(&self, problem: &DecoupledProblem) -> Result<()> {
        if self.gap_tol.is_nan() || self.gap_tol <= 0.0 {
            return Err(GslopeError::InvalidArgument(format!(
                "gap_tol must be positive, got {}",
                self.gap_tol
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(GslopeError::InvalidArgument(format!("gamma must be positive, got {g}")));
            }
        }
        match self.step_rule {
            StepRule::Lipschitz(l) if !(l > 0.0 && l.is_finite()) => {
                return Err(GslopeError::InvalidArgument(format!("Lipschitz constant must be positive, got {l}")))
            }
            StepRule::Backtracking { eta, l0 } if !(eta > 1.0 && l0 > 0.0) => {
                return Err(GslopeError::InvalidArgument(format!(
                    "backtracking needs eta > 1 and L0 > 0, got eta={eta}, L0={l0}"
                )))
            }
            _ => {}
        }
        if let Screening::On(ScreeningGate::PrimalFraction(f)) = self.screening {
            if f.is_nan() || f <= 0.0 {
                return Err(GslopeError::InvalidArgument(format!("screening gate fraction must be positive, got {f}")));
            }
        }
        if let Some(w) = &self.warm_start {
            if w.len() != problem.d() {
                return Err(GslopeError::DimensionMismatch {
                    what: "warm start length",
                    expected: problem.d(),
                    found: w.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverRun {
    /// Decoupled coefficients in the full layout, zero on screened groups.
    pub b_final: Vec<f64>,
    /// Coefficients of the original variables.
    pub beta_final: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` was hit before the gap reached `gap_tol`.
    pub converged: bool,
    /// One certificate per iterate, on the working problem at that iterate.
    pub certificates: Vec<GapCertificate>,
    pub trace: ScreeningTrace,
    pub active: ActiveSet,
    /// Iterations after which momentum was reset by screening (APGD).
    pub momentum_restarts: Vec<usize>,
    /// Dual points `θ^k`, filled when `record_duals` is set.
    pub duals: Vec<Vec<f64>>,
    /// Dual point at the returned solution.
    pub theta_final: Vec<f64>,
    /// Step constant used: `L` for APGD, `γ` for SPGD.
    pub step_constant: f64,
    pub wall_time_s: f64,
}

impl SolverRun {
    pub fn final_gap(&self) -> f64 {
        self.certificates.last().map_or(f64::NAN, |c| c.gap)
    }

    /// Smallest primal value seen up to each iterate.
    pub fn best_objective_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.certificates
            .iter()
            .map(|c| {
                best = best.min(c.primal);
                best
            })
            .collect()
    }
}

/// Groups whose block of `b` (full decoupled layout) is exactly zero.
pub fn zero_groups(b: &[f64], problem: &DecoupledProblem) -> Vec<usize> {
    (0..problem.m())
        .filter(|&i| b[problem.block(i)].iter().all(|&v| v == 0.0))
        .collect()
}

/// The design restricted to the active groups, with contiguous blocks.
#[derive(Debug, Clone)]
pub(crate) struct WorkingSet {
    pub groups: Vec<usize>,
    pub blocks: Vec<Range<usize>>,
    pub xhat: DMatrix<f64>,
}

impl WorkingSet {
    pub fn full(problem: &DecoupledProblem) -> Self {
        Self {
            groups: (0..problem.m()).collect(),
            blocks: problem.blocks(),
            xhat: problem.xhat.clone(),
        }
    }

    pub fn d(&self) -> usize {
        self.xhat.ncols()
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    /// Keeps the groups flagged in `keep` (aligned with `groups`).
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut groups = Vec::new();
        let mut blocks = Vec::new();
        let mut cols = Vec::new();
        for (pos, &g) in self.groups.iter().enumerate() {
            if !keep[pos] {
                continue;
            }
            let r = self.blocks[pos].clone();
            blocks.push(cols.len()..cols.len() + r.len());
            cols.extend(r);
            groups.push(g);
        }
        Self {
            groups,
            blocks,
            xhat: self.xhat.select_columns(cols.iter()),
        }
    }

    /// Restricts a coefficient vector to the groups kept in `next`.
    pub fn gather(&self, keep: &[bool], v: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for (pos, r) in self.blocks.iter().enumerate() {
            if keep[pos] {
                out.extend_from_slice(&v[r.clone()]);
            }
        }
        out
    }

    /// Expands working coefficients to the full layout.
    pub fn scatter(&self, v: &[f64], problem: &DecoupledProblem) -> Vec<f64> {
        let mut out = vec![0.0; problem.d()];
        for (pos, &g) in self.groups.iter().enumerate() {
            out[problem.block(g)].copy_from_slice(&v[self.blocks[pos].clone()]);
        }
        out
    }
}

/// Fit quantities at a point: `r = X̂b − y` and `X̂ᵀr`.
#[derive(Debug, Clone)]
pub(crate) struct Residual {
    pub resid: DVector<f64>,
    pub corr: DVector<f64>,
}

impl Residual {
    pub fn at(xhat: &DMatrix<f64>, y: &DVector<f64>, b: &[f64]) -> Self {
        let resid = xhat * DVector::from_column_slice(b) - y;
        let corr = xhat.tr_mul(&resid);
        Self { resid, corr }
    }
}

/// Per-iterate bookkeeping shared by both solvers: gap certificates,
/// screening gate, trace and active set.
pub(crate) struct Monitor<'a> {
    problem: &'a DecoupledProblem,
    config: &'a SolverConfig,
    pub active: ActiveSet,
    pub certificates: Vec<GapCertificate>,
    pub trace: ScreeningTrace,
    pub duals: Vec<Vec<f64>>,
    gate_open: bool,
    start: Instant,
}

pub(crate) enum Check {
    Converged,
    Continue,
}

impl<'a> Monitor<'a> {
    pub fn new(problem: &'a DecoupledProblem, config: &'a SolverConfig) -> Self {
        Self {
            problem,
            config,
            active: ActiveSet::full(problem.m()),
            certificates: Vec::new(),
            trace: ScreeningTrace::default(),
            duals: Vec::new(),
            gate_open: matches!(config.screening, Screening::On(ScreeningGate::Always)),
            start: Instant::now(),
        }
    }

    fn lambda(&self) -> &[f64] {
        &self.problem.lambda.values()[..self.active.len()]
    }

    /// Certificate at `b` on the working problem; records it and reports whether to stop.
    pub fn certify(&mut self, iter: usize, ws: &WorkingSet, b: &[f64], fit: &Residual) -> Result<(Check, ResidualGap)> {
        let rg = residual_gap(
            b,
            fit.resid.as_slice(),
            fit.corr.as_slice(),
            self.problem.y.as_slice(),
            &ws.blocks,
            self.lambda(),
        )?;
        if !rg.certificate.gap.is_finite() {
            return Err(GslopeError::Diverged { iteration: iter });
        }
        self.certificates.push(rg.certificate);
        self.trace.push(iter, self.active.len(), rg.certificate.gap);
        if self.config.record_duals {
            self.duals.push((&fit.resid * rg.scale).as_slice().to_vec());
        }
        let check = if rg.certificate.gap <= self.config.gap_tol {
            Check::Converged
        } else {
            Check::Continue
        };
        Ok((check, rg))
    }

    /// Runs the fixpoint test when screening is on and the gate has opened.
    /// Returns the keep mask (aligned with the working set) if anything was removed.
    pub fn screen(&mut self, iter: usize, ws: &WorkingSet, rg: &ResidualGap) -> Option<Vec<bool>> {
        let gate = match self.config.screening {
            Screening::Off => return None,
            Screening::On(g) => g,
        };
        if !self.gate_open {
            let gap = rg.certificate.gap;
            self.gate_open = match gate {
                ScreeningGate::Always => true,
                ScreeningGate::GapBelow(t) => gap <= t,
                ScreeningGate::PrimalFraction(f) => gap <= f * self.certificates[0].primal,
            };
            if !self.gate_open {
                return None;
            }
        }
        let dual_norms: Vec<f64> = rg.rho.iter().map(|r| r * rg.scale).collect();
        let inv_w: Vec<f64> = ws
            .groups
            .iter()
            .map(|&g| 1.0 / self.problem.partition.weights()[g])
            .collect();
        let (keep, _) = fixpoint_positions(&dual_norms, &inv_w, rg.certificate.radius, self.problem.lambda.values());
        if keep.iter().all(|&k| k) {
            return None;
        }
        self.active.retain_positions(&keep, iter);
        if let Some(last) = self.trace.records.last_mut() {
            last.active_groups = self.active.len();
        }
        Some(keep)
    }

    /// Certificate for `b = 0` on the full problem, appended when screening
    /// empties the active set.
    pub fn certify_zero(&mut self, iter: usize) -> Result<Vec<f64>> {
        let zero = vec![0.0; self.problem.d()];
        let fit = Residual::at(&self.problem.xhat, &self.problem.y, &zero);
        let rg = residual_gap(
            &zero,
            fit.resid.as_slice(),
            fit.corr.as_slice(),
            self.problem.y.as_slice(),
            &self.problem.blocks(),
            self.problem.lambda.values(),
        )?;
        self.certificates.push(rg.certificate);
        self.trace.push(iter, 0, rg.certificate.gap);
        let theta = (&fit.resid * rg.scale).as_slice().to_vec();
        if self.config.record_duals {
            self.duals.push(theta.clone());
        }
        Ok(theta)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        ws: &WorkingSet,
        b: &[f64],
        theta_final: Vec<f64>,
        iterations: usize,
        converged: bool,
        momentum_restarts: Vec<usize>,
        step_constant: f64,
    ) -> Result<SolverRun> {
        let b_final = ws.scatter(b, self.problem);
        let beta_final = self.problem.recover_beta(&b_final)?;
        Ok(SolverRun {
            b_final,
            beta_final,
            iterations,
            converged,
            certificates: self.certificates,
            trace: self.trace,
            active: self.active,
            momentum_restarts,
            duals: self.duals,
            theta_final,
            step_constant,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        })
    }
}

pub(crate) fn check_finite(v: &[f64], iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GslopeError::Diverged { iteration })
    }
}

/// Which solver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Apgd,
    Spgd,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Apgd => "apgd",
            Algorithm::Spgd => "spgd",
        })
    }
}

pub fn solve(problem: &DecoupledProblem, algorithm: Algorithm, config: &SolverConfig) -> Result<SolverRun> {
    match algorithm {
        Algorithm::Apgd => apgd_solve(problem, config),
        Algorithm::Spgd => spgd_solve(problem, config),
    }
}
