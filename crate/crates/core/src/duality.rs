//! Dual-feasible points and duality gaps for the decoupled problem.
//!
//! For the squared loss `f_i(z) = ½(y_i − z)²` the conjugate is
//! `f_i*(θ) = ½θ² + θ y_i` and the dual objective is `D(θ) = −Σ f_i*(θ_i)`.
//! The dual set is `Δ = {θ : Σ_{j≤i} θ̃_[j] ≤ Σ_{j≤i} λ_j ∀i}` where
//! `θ̃_i = ‖X̂_{I_i}ᵀ θ‖₂` sorted in decreasing order.
//!
//! Dual candidates are the scaled residual `θ = s (X̂b − y)` with the largest
//! `s ∈ (0, 1]` that keeps every sorted prefix inside the `λ` prefixes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::decouple::DecoupledProblem;
use crate::error::{GslopeError, Result};
use crate::sorted_l1::{block_norms, eval_sorted_l1};

/// Absolute slack allowed on the cumulative dual constraints.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-6;

/// Computed gaps down to this negative value are treated as round-off.
pub const NEGATIVE_GAP_TOL: f64 = 1e-10;

/// `f*(θ) = ½θ² + θy`.
pub fn conjugate_value(theta: f64, y: f64) -> f64 {
    0.5 * theta * theta + theta * y
}

/// `D(θ) = −Σ_i f_i*(θ_i)`.
pub fn dual_objective(theta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    -theta
        .iter()
        .zip(y.iter())
        .map(|(&t, &yi)| conjugate_value(t, yi))
        .sum::<f64>()
}

/// Largest `s ≤ 1` with `Σ_{j≤i} s·ρ_[j] ≤ Σ_{j≤i} λ_j` for every prefix.
/// Prefixes with a zero sum are skipped.
pub fn feasibility_scale(rho: &[f64], lambda: &[f64]) -> f64 {
    debug_assert_eq!(rho.len(), lambda.len());
    let mut sorted = rho.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut scale = 1.0f64;
    let (mut rho_sum, mut lam_sum) = (0.0, 0.0);
    for (r, l) in sorted.iter().zip(lambda) {
        rho_sum += r;
        lam_sum += l;
        if rho_sum > 0.0 {
            scale = scale.min(lam_sum / rho_sum);
        }
    }
    scale
}

/// Whether the sorted prefix sums of `norms` stay below those of `lambda`
/// up to `tol`.
pub fn in_dual_ball(norms: &[f64], lambda: &[f64], tol: f64) -> bool {
    let mut sorted = norms.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (mut a, mut b) = (0.0, 0.0);
    sorted.iter().zip(lambda).all(|(n, l)| {
        a += n;
        b += l;
        a <= b + tol
    })
}

#[derive(Debug, Clone)]
pub struct DualState {
    pub theta: DVector<f64>,
    /// `θ̃_i = ‖X̂_{I_i}ᵀ θ‖₂`, after scaling.
    pub group_dual_norms: Vec<f64>,
    pub scale: f64,
    pub dual_value: f64,
    pub feasible: bool,
}

/// Duality gap `G = P(b) − D(θ)` and the dual-distance radius `√(2G)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub radius: f64,
}

impl GapCertificate {
    /// Clamps round-off negatives to zero and rejects anything worse.
    pub fn new(primal: f64, dual: f64, gap: f64) -> Result<Self> {
        if !gap.is_finite() {
            return Err(GslopeError::WeakDualityViolation { gap });
        }
        if gap < -NEGATIVE_GAP_TOL {
            return Err(GslopeError::WeakDualityViolation { gap });
        }
        let gap = gap.max(0.0);
        Ok(Self {
            primal,
            dual,
            gap,
            radius: (2.0 * gap).sqrt(),
        })
    }
}

/// Scaled residual dual point for `b`.
pub fn dual_candidate(b: &[f64], problem: &DecoupledProblem) -> Result<DualState> {
    check_len(b, problem)?;
    let resid = &problem.xhat * DVector::from_column_slice(b) - &problem.y;
    let corr = problem.xhat.tr_mul(&resid);
    let rho = block_norms(corr.as_slice(), &problem.blocks());
    let scale = feasibility_scale(&rho, problem.lambda.values());
    let theta = resid * scale;
    let group_dual_norms: Vec<f64> = rho.iter().map(|r| r * scale).collect();
    let feasible = in_dual_ball(&group_dual_norms, problem.lambda.values(), DUAL_FEASIBILITY_TOL);
    Ok(DualState {
        dual_value: dual_objective(&theta, &problem.y),
        theta,
        group_dual_norms,
        scale,
        feasible,
    })
}

/// `P(b) − D(θ)` for a feasible dual state.
pub fn duality_gap(
    b: &[f64],
    dual: &DualState,
    problem: &DecoupledProblem,
) -> Result<GapCertificate> {
    check_len(b, problem)?;
    if !dual.feasible {
        return Err(GslopeError::InfeasibleDual);
    }
    let resid = &problem.y - &problem.xhat * DVector::from_column_slice(b);
    let norms = block_norms(b, &problem.blocks());
    let primal = 0.5 * resid.norm_squared() + eval_sorted_l1(&norms, problem.lambda.values())?;
    let dual = dual_objective(&dual.theta, &problem.y);
    GapCertificate::new(primal, dual, primal - dual)
}

fn check_len(b: &[f64], problem: &DecoupledProblem) -> Result<()> {
    if b.len() != problem.d() {
        return Err(GslopeError::DimensionMismatch {
            what: "decoupled coefficient length",
            expected: problem.d(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Gap quantities assembled from a residual `r = X̂b − y` and its correlations
/// `X̂ᵀr`, as the solvers have them at hand.
///
/// With `θ = s·r`, `P − D = ½(1 − s)²‖r‖² + s⟨X̂ᵀr, b⟩ + J_λ(‖b‖_I)`, which
/// avoids subtracting the two objectives.
#[derive(Debug, Clone)]
pub(crate) struct ResidualGap {
    pub certificate: GapCertificate,
    pub scale: f64,
    /// Unscaled `ρ_i = ‖X̂_{I_i}ᵀ r‖`.
    pub rho: Vec<f64>,
}

pub(crate) fn residual_gap(
    b: &[f64],
    resid: &[f64],
    corr: &[f64],
    y: &[f64],
    blocks: &[std::ops::Range<usize>],
    lambda: &[f64],
) -> Result<ResidualGap> {
    let rho = block_norms(corr, blocks);
    let scale = feasibility_scale(&rho, lambda);
    let penalty = eval_sorted_l1(&block_norms(b, blocks), lambda)?;
    let r2: f64 = resid.iter().map(|v| v * v).sum();
    let ry: f64 = resid.iter().zip(y).map(|(a, b)| a * b).sum();
    let cb: f64 = corr.iter().zip(b).map(|(a, b)| a * b).sum();
    let primal = 0.5 * r2 + penalty;
    let dual = -(0.5 * scale * scale * r2 + scale * ry);
    let gap = 0.5 * (1.0 - scale).powi(2) * r2 + scale * cb + penalty;
    Ok(ResidualGap {
        certificate: GapCertificate::new(primal, dual, gap)?,
        scale,
        rho,
    })
}
