use nalgebra::DVector;

use super::lipschitz::{lipschitz_estimate, spectral_norm_sq};
use super::{check_finite, Check, Monitor, Residual, SolverConfig, SolverRun, StepRule, WorkingSet};
use crate::decouple::DecoupledProblem;
use crate::error::Result;
use crate::sorted_l1::GroupProx;

/// FISTA on the decoupled problem.
///
/// Every iterate `b^k` is certified by its duality gap; with screening on,
/// the fixpoint test then shrinks the working design and resets the momentum
/// scalar to `t = 1`. The prox step uses `1/L`.
pub fn apgd_solve(problem: &DecoupledProblem, config: &SolverConfig) -> Result<SolverRun> {
    config.validate(problem)?;
    let mut mon = Monitor::new(problem, config);
    let mut ws = WorkingSet::full(problem);
    let y = &problem.y;
    let mut lip = match config.step_rule {
        StepRule::Fixed => lipschitz_estimate(problem)?,
        StepRule::Lipschitz(l) => l,
        StepRule::Backtracking { l0, .. } => l0,
    };

    let mut b = config.warm_start.clone().unwrap_or_else(|| vec![0.0; ws.d()]);
    let mut fit = Residual::at(&ws.xhat, y, &b);
    let mut b_hat = b.clone();
    let mut fit_hat = fit.clone();
    let mut t = 1.0_f64;
    let mut restarts = Vec::new();
    let mut prox = GroupProx::default();
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
                return mon.finish(&next, &[], theta, k, true, restarts, lip);
            }
            b = ws.gather(&keep, &b);
            b_hat = ws.gather(&keep, &b_hat);
            ws = next;
            fit = Residual::at(&ws.xhat, y, &b);
            fit_hat = Residual::at(&ws.xhat, y, &b_hat);
            if config.momentum_restart {
                t = 1.0;
                restarts.push(k);
            }
            if config.reestimate_lipschitz && config.step_rule == StepRule::Fixed {
                lip = 1.01 * spectral_norm_sq(&ws.xhat)?;
            }
        }
        let lambda = &problem.lambda.values()[..ws.m()];

        let (b_new, fit_new) = match config.step_rule {
            StepRule::Backtracking { eta, .. } => {
                let f_hat = 0.5 * fit_hat.resid.norm_squared();
                loop {
                    let cand = prox_step(&mut prox, &b_hat, &fit_hat.corr, &ws, lambda, 1.0 / lip);
                    let cand_fit = Residual::at(&ws.xhat, y, &cand);
                    let diff = DVector::from_column_slice(&cand) - DVector::from_column_slice(&b_hat);
                    let model = f_hat + fit_hat.corr.dot(&diff) + 0.5 * lip * diff.norm_squared();
                    let f_new = 0.5 * cand_fit.resid.norm_squared();
                    if f_new <= model * (1.0 + 1e-12) || !f_new.is_finite() {
                        break (cand, cand_fit);
                    }
                    lip *= eta;
                }
            }
            _ => {
                let cand = prox_step(&mut prox, &b_hat, &fit_hat.corr, &ws, lambda, 1.0 / lip);
                let cand_fit = Residual::at(&ws.xhat, y, &cand);
                (cand, cand_fit)
            }
        };
        k += 1;
        check_finite(&b_new, k)?;

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let b_prev = std::mem::replace(&mut b, b_new);
        let fit_prev = std::mem::replace(&mut fit, fit_new);
        b_hat = b.iter().zip(&b_prev).map(|(c, p)| c + mom * (c - p)).collect();
        // ∇F is affine, so the extrapolated residual and gradient follow from the iterates'.
        fit_hat = Residual {
            resid: &fit.resid + (&fit.resid - &fit_prev.resid) * mom,
            corr: &fit.corr + (&fit.corr - &fit_prev.corr) * mom,
        };
        t = t_next;
    };
    mon.finish(&ws, &b, theta, k, converged, restarts, lip)
}

fn prox_step(
    prox: &mut GroupProx,
    b_hat: &[f64],
    grad: &DVector<f64>,
    ws: &WorkingSet,
    lambda: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut z: Vec<f64> = b_hat.iter().zip(grad.iter()).map(|(b, g)| b - step * g).collect();
    prox.apply(&mut z, &ws.blocks, lambda, step);
    z
}
