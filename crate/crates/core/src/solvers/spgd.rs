use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lipschitz::lipschitz_estimate;
use super::{check_finite, Check, Monitor, Residual, SolverConfig, SolverRun, WorkingSet};
use crate::decouple::DecoupledProblem;
use crate::error::Result;
use crate::sorted_l1::GroupProx;

/// Weight on the mini-batch correction `Σ_{i∈I} x_i x_iᵀ(b̃ − b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientScaling {
    /// `n / l`, which makes the direction an unbiased estimate of `∇F(b̃)`.
    Unbiased,
    /// `1 / l`.
    PaperLiteral,
}

impl GradientScaling {
    fn factor(self, n: usize, l: usize) -> f64 {
        match self {
            GradientScaling::Unbiased => n as f64 / l as f64,
            GradientScaling::PaperLiteral => 1.0 / l as f64,
        }
    }
}

/// Variance-reduced direction `c · Σ_{i∈batch} x_i x_iᵀ delta + full_grad`,
/// where `xt` holds the rows `x_i` of the design as columns and
/// `delta = b̃ − b`.
pub fn variance_reduced_direction(
    xt: &DMatrix<f64>,
    batch: &[usize],
    delta: &[f64],
    full_grad: &[f64],
    scaling: GradientScaling,
) -> Vec<f64> {
    let c = scaling.factor(xt.ncols(), batch.len());
    let mut out = full_grad.to_vec();
    for &i in batch {
        let row = xt.column(i);
        let s: f64 = row.iter().zip(delta).map(|(a, b)| a * b).sum();
        if s != 0.0 {
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += c * s * a;
            }
        }
    }
    out
}

/// Default step `1 / (L + (n/l)·max_i ‖x̂_i‖²)`: the full-gradient constant
/// plus the worst-case curvature of the scaled mini-batch correction.
pub fn default_gamma(problem: &DecoupledProblem, batch_size: usize) -> Result<f64> {
    let lip = lipschitz_estimate(problem)?;
    let max_row = problem
        .xhat
        .row_iter()
        .map(|r| r.norm_squared())
        .fold(0.0, f64::max);
    Ok(1.0 / (lip + problem.n() as f64 / batch_size as f64 * max_row))
}

/// Proximal SVRG on the decoupled problem.
///
/// Each outer iteration certifies `b^{k−1}`, screens, snapshots the full
/// gradient and runs `T` inner prox steps on mini-batches of `l` rows drawn
/// without replacement.
pub fn spgd_solve(problem: &DecoupledProblem, config: &SolverConfig) -> Result<SolverRun> {
    config.validate_stochastic(problem)?;
    let mut mon = Monitor::new(problem, config);
    let mut ws = WorkingSet::full(problem);
    let y = &problem.y;
    let n = problem.n();
    let l = config.batch_size;
    let gamma = match config.gamma {
        Some(g) => g,
        None => default_gamma(problem, l)?,
    };
    let scaling = if config.paper_literal {
        GradientScaling::PaperLiteral
    } else {
        GradientScaling::Unbiased
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut prox = GroupProx::default();

    let mut b = config.warm_start.clone().unwrap_or_else(|| vec![0.0; ws.d()]);
    let mut fit = Residual::at(&ws.xhat, y, &b);
    let mut xt = ws.xhat.transpose();
    let mut k = 0;

    let (converged, theta) = loop {
        let (check, rg) = mon.certify(k, &ws, &b, &fit)?;
        if matches!(check, Check::Converged) || k == config.max_iter {
            let theta = (&fit.resid * rg.scale).as_slice().to_vec();
            break (matches!(check, Check::Converged), theta);
        }
        if let Some(keep) = mon.screen(k, &ws, &rg) {
            let next = ws.restrict(&keep);
            if next.m() == 0 {
                let theta = mon.certify_zero(k)?;
                return mon.finish(&next, &[], theta, k, true, Vec::new(), gamma);
            }
            b = ws.gather(&keep, &b);
            ws = next;
            xt = ws.xhat.transpose();
            fit = Residual::at(&ws.xhat, y, &b);
        }
        let lambda = &problem.lambda.values()[..ws.m()];

        let full_grad = fit.corr.as_slice();
        let mut bt = b.clone();
        let mut delta = vec![0.0; bt.len()];
        for _ in 0..config.inner_iters {
            let batch = index::sample(&mut rng, n, l).into_vec();
            for ((d, a), c) in delta.iter_mut().zip(&bt).zip(&b) {
                *d = a - c;
            }
            let v = variance_reduced_direction(&xt, &batch, &delta, full_grad, scaling);
            for (a, g) in bt.iter_mut().zip(&v) {
                *a -= gamma * g;
            }
            prox.apply(&mut bt, &ws.blocks, lambda, gamma);
        }
        k += 1;
        check_finite(&bt, k)?;
        b = bt;
        fit = Residual::at(&ws.xhat, y, &b);
    };
    mon.finish(&ws, &b, theta, k, converged, Vec::new(), gamma)
}
