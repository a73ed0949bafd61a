//! Doubly dynamic safe screening.
//!
//! A group `i` of the active set `A` is discarded when
//!
//! ```text
//! θ̃_i + ‖X̂_{I_i}‖₂ · √(2G) < λ_{|A|}
//! ```
//!
//! The left side shrinks with the duality gap `G`. The right side grows:
//! discarded groups take the smallest entries of `λ`, so after every removal
//! the test is rerun against `λ_{|A|}` for the smaller `A` until a pass
//! removes nothing. Ties are kept.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decouple::DecoupledProblem;
use crate::duality::{DualState, GapCertificate};
use crate::error::{GslopeError, Result};

/// Groups that survived screening so far, in increasing index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    active: Vec<usize>,
    m: usize,
    /// `(iteration, group)` for every removal, in order.
    removed_log: Vec<(usize, usize)>,
}

impl ActiveSet {
    pub fn full(m: usize) -> Self {
        Self {
            active: (0..m).collect(),
            m,
            removed_log: Vec::new(),
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// `|A|`, the 1-based index of the `λ` entry used by the test.
    pub fn threshold_index(&self) -> usize {
        self.active.len()
    }

    pub fn total_groups(&self) -> usize {
        self.m
    }

    pub fn removed_log(&self) -> &[(usize, usize)] {
        &self.removed_log
    }

    pub fn screened(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.removed_log.iter().map(|&(_, g)| g).collect();
        s.sort_unstable();
        s
    }

    /// Drops the groups at the given positions of `active()` where `keep` is false.
    pub(crate) fn retain_positions(&mut self, keep: &[bool], iteration: usize) -> Vec<usize> {
        debug_assert_eq!(keep.len(), self.active.len());
        let mut removed = Vec::new();
        let mut kept = Vec::with_capacity(self.active.len());
        for (&g, &k) in self.active.iter().zip(keep) {
            if k {
                kept.push(g);
            } else {
                removed.push(g);
                self.removed_log.push((iteration, g));
            }
        }
        self.active = kept;
        removed
    }
}

/// One screening test over aligned arrays; returns which positions survive.
fn pass_positions(
    dual_norms: &[f64],
    block_norms: &[f64],
    keep: &mut [bool],
    radius: f64,
    threshold: f64,
) -> usize {
    let mut removed = 0;
    for i in 0..keep.len() {
        if keep[i] && dual_norms[i] + block_norms[i] * radius < threshold {
            keep[i] = false;
            removed += 1;
        }
    }
    removed
}

/// Repeats the test with `λ_{|A|}` updated after every pass, until stable.
/// `dual_norms` and `block_norms` are aligned with the current active set,
/// and `lambda` is the full sequence. Returns the keep mask and pass count.
pub(crate) fn fixpoint_positions(
    dual_norms: &[f64],
    block_norms: &[f64],
    radius: f64,
    lambda: &[f64],
) -> (Vec<bool>, usize) {
    let mut keep = vec![true; dual_norms.len()];
    let mut count = keep.len();
    let mut passes = 0;
    while count > 0 {
        passes += 1;
        let removed = pass_positions(dual_norms, block_norms, &mut keep, radius, lambda[count - 1]);
        if removed == 0 {
            break;
        }
        count -= removed;
    }
    (keep, passes)
}

#[derive(Debug, Clone)]
pub struct ScreeningOutcome {
    pub active: ActiveSet,
    pub removed: Vec<usize>,
    pub passes: usize,
}

/// Single screening pass with explicit per-group quantities indexed by group
/// id (length `m`): `dual_norms[i] = ‖X_{I_i}ᵀθ‖` and `block_norms[i] = ‖X_{I_i}‖₂`.
pub fn screen_pass_with_norms(
    dual_norms: &[f64],
    block_norms: &[f64],
    radius: f64,
    active: &ActiveSet,
    lambda: &[f64],
    iteration: usize,
) -> Result<ScreeningOutcome> {
    if active.is_empty() {
        return Err(GslopeError::EmptyActiveSet);
    }
    let (dn, bn) = gather(active, dual_norms, block_norms);
    let mut keep = vec![true; dn.len()];
    pass_positions(&dn, &bn, &mut keep, radius, lambda[active.threshold_index() - 1]);
    let mut next = active.clone();
    let removed = next.retain_positions(&keep, iteration);
    Ok(ScreeningOutcome {
        active: next,
        removed,
        passes: 1,
    })
}

/// Fixpoint screening with explicit per-group quantities, see [`screen_pass_with_norms`].
pub fn screen_fixpoint_with_norms(
    dual_norms: &[f64],
    block_norms: &[f64],
    radius: f64,
    active: &ActiveSet,
    lambda: &[f64],
    iteration: usize,
) -> Result<ScreeningOutcome> {
    if active.is_empty() {
        return Err(GslopeError::EmptyActiveSet);
    }
    let (dn, bn) = gather(active, dual_norms, block_norms);
    let (keep, passes) = fixpoint_positions(&dn, &bn, radius, lambda);
    let mut next = active.clone();
    let removed = next.retain_positions(&keep, iteration);
    Ok(ScreeningOutcome {
        active: next,
        removed,
        passes,
    })
}

fn gather(active: &ActiveSet, dual_norms: &[f64], block_norms: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        active.active().iter().map(|&g| dual_norms[g]).collect(),
        active.active().iter().map(|&g| block_norms[g]).collect(),
    )
}

fn check_dual(dual: &DualState, problem: &DecoupledProblem) -> Result<()> {
    if !dual.feasible {
        return Err(GslopeError::InfeasibleDual);
    }
    if dual.group_dual_norms.len() != problem.m() {
        return Err(GslopeError::DimensionMismatch {
            what: "group dual norms",
            expected: problem.m(),
            found: dual.group_dual_norms.len(),
        });
    }
    Ok(())
}

/// One pass of the test on the decoupled problem, where `‖X̂_{I_i}‖₂ = 1/w_i`.
pub fn screen_pass(
    dual: &DualState,
    gap: &GapCertificate,
    active: &ActiveSet,
    problem: &DecoupledProblem,
    iteration: usize,
) -> Result<ScreeningOutcome> {
    check_dual(dual, problem)?;
    screen_pass_with_norms(
        &dual.group_dual_norms,
        &problem.block_spectral_norms(),
        gap.radius,
        active,
        problem.lambda.values(),
        iteration,
    )
}

/// Repeated passes until the active set stops changing.
pub fn screen_fixpoint(
    dual: &DualState,
    gap: &GapCertificate,
    active: &ActiveSet,
    problem: &DecoupledProblem,
    iteration: usize,
) -> Result<ScreeningOutcome> {
    check_dual(dual, problem)?;
    screen_fixpoint_with_norms(
        &dual.group_dual_norms,
        &problem.block_spectral_norms(),
        gap.radius,
        active,
        problem.lambda.values(),
        iteration,
    )
}

/// Fraction of the optimally inactive groups that have been screened.
///
/// Fails with [`GslopeError::SafenessViolation`] if a screened group is not
/// in `optimal_inactive`.
pub fn screening_rate(active: &ActiveSet, optimal_inactive: &[usize]) -> Result<f64> {
    rate_of(&active.screened(), optimal_inactive)
}

fn rate_of(screened: &[usize], optimal_inactive: &[usize]) -> Result<f64> {
    let inactive: HashSet<usize> = optimal_inactive.iter().copied().collect();
    if let Some(&g) = screened.iter().find(|g| !inactive.contains(g)) {
        return Err(GslopeError::SafenessViolation { group: g });
    }
    if inactive.is_empty() {
        return Ok(1.0);
    }
    Ok(screened.len() as f64 / inactive.len() as f64)
}

/// `‖A‖₂` by power iteration on `AᵀA`, relative tolerance `1e-8`.
pub fn block_spectral_norm(block: &DMatrix<f64>) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    let k = block.ncols();
    if k == 0 || block.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(k, |_, _| rng.random_range(0.5..1.5));
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..MAX_ITER {
        let w = block.tr_mul(&(block * &v));
        let next = w.norm();
        if next == 0.0 {
            return Ok(0.0);
        }
        v = w / next;
        if (next - est).abs() <= 1e-8 * next {
            return Ok(next.sqrt());
        }
        est = next;
    }
    Err(GslopeError::PowerIteration { iterations: MAX_ITER })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub active_groups: usize,
    pub gap: f64,
    pub rate: Option<f64>,
}

/// Per-iteration active-set sizes and gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreeningTrace {
    pub records: Vec<TraceRecord>,
}

impl ScreeningTrace {
    pub fn push(&mut self, iter: usize, active_groups: usize, gap: f64) {
        self.records.push(TraceRecord {
            iter,
            active_groups,
            gap,
            rate: None,
        });
    }

    /// Fills `rate` for every record from the removal log of a run.
    pub fn fill_rates(&mut self, removed_log: &[(usize, usize)], optimal_inactive: &[usize]) -> Result<()> {
        let mut screened = Vec::new();
        let mut next = 0;
        for rec in &mut self.records {
            while next < removed_log.len() && removed_log[next].0 <= rec.iter {
                screened.push(removed_log[next].1);
                next += 1;
            }
            rec.rate = Some(rate_of(&screened, optimal_inactive)?);
        }
        Ok(())
    }

    /// `iter,active_groups,gap,rate`; the rate column is empty when unknown.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,active_groups,gap,rate")?;
        for r in &self.records {
            match r.rate {
                Some(rate) => writeln!(out, "{},{},{:e},{}", r.iter, r.active_groups, r.gap, rate)?,
                None => writeln!(out, "{},{},{:e},", r.iter, r.active_groups, r.gap)?,
            }
        }
        Ok(())
    }
}
