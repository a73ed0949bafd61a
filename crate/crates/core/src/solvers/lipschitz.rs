use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decouple::DecoupledProblem;
use crate::error::{GslopeError, Result};

const MAX_ITER: usize = 10_000;
const REL_TOL: f64 = 1e-6;
const SAFETY: f64 = 1.01;
const GRAM_LIMIT: usize = 1500;

/// `σ_max(A)²` by power iteration on the smaller of `AᵀA` and `AAᵀ`.
pub fn spectral_norm_sq(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() || a.iter().all(|&v| v == 0.0) {
        return Err(GslopeError::InvalidArgument("power iteration on a zero matrix".into()));
    }
    let tall = a.nrows() >= a.ncols();
    let k = if tall { a.ncols() } else { a.nrows() };
    // A small Gram matrix makes each iteration O(k²) instead of O(nd).
    let gram = (k <= GRAM_LIMIT).then(|| if tall { a.transpose() * a } else { a * a.transpose() });
    let mut rng = ChaCha8Rng::seed_from_u64(0x11f5);
    let mut v = DVector::from_fn(k, |_, _| rng.random_range(0.5..1.5));
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..MAX_ITER {
        let w = match (&gram, tall) {
            (Some(g), _) => g * &v,
            (None, true) => a.tr_mul(&(a * &v)),
            (None, false) => a * a.tr_mul(&v),
        };
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Err(GslopeError::InvalidArgument("power iteration hit the null space".into()));
        }
        v = w / norm;
        if (next - est).abs() <= REL_TOL * next {
            return Ok(next);
        }
        est = next;
    }
    Err(GslopeError::PowerIteration { iterations: MAX_ITER })
}

/// Lipschitz constant of `∇F(b) = X̂ᵀ(X̂b − y)`, inflated by 1%.
pub fn lipschitz_estimate(problem: &DecoupledProblem) -> Result<f64> {
    Ok(SAFETY * spectral_norm_sq(&problem.xhat)?)
}
