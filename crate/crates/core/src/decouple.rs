//! Per-group orthogonal factorization `X_{I_i} = U_i R_i` and the decoupled
//! problem `min_b ½‖y − X̂b‖² + J_λ(‖b‖_I)` with `X̂_{I_i} = U_i / w_i`.
//!
//! Blocks are factored with column-pivoted Householder QR. When a block has
//! numerical rank `r < k` (duplicated columns, or `k > n`), `U_i` keeps only
//! its `r` orthonormal columns and `R_i` is `r × k`, so the decoupled block
//! has `r` coordinates. Mapping back to `β` returns the minimum-norm preimage.
//!
//! Decoupled coefficients are stored group-contiguously: group `i` occupies
//! `offsets[i]..offsets[i + 1]`, in the pivoted column order of its factor.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{GroupPartition, GroupedProblem, LambdaSequence};
use crate::error::{GslopeError, Result};
use crate::sorted_l1::eval_sorted_l1;

/// Relative threshold on the pivot magnitude below which a block is
/// considered rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Thin pivoted factorization `X[:, perm] = U R`.
#[derive(Debug, Clone)]
pub struct GroupFactor {
    /// `n × rank` with orthonormal columns.
    pub u: DMatrix<f64>,
    /// `rank × k` upper trapezoidal with a positive diagonal.
    pub r: DMatrix<f64>,
    /// Column `j` of `U R` is column `perm[j]` of the input block.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl GroupFactor {
    pub fn size(&self) -> usize {
        self.perm.len()
    }

    /// Number of decoupled coordinates for this group.
    pub fn width(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.size()
    }

    /// `U R` with the pivoting undone.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let ur = &self.u * &self.r;
        let mut out = DMatrix::zeros(ur.nrows(), ur.ncols());
        for (j, &p) in self.perm.iter().enumerate() {
            out.set_column(p, &ur.column(j));
        }
        out
    }

    /// `η = R P^T β_I`.
    pub fn forward(&self, beta_block: &[f64]) -> Vec<f64> {
        let k = self.size();
        let pivoted = DVector::from_iterator(k, self.perm.iter().map(|&p| beta_block[p]));
        (&self.r * pivoted).as_slice().to_vec()
    }

    /// Minimum-norm `β_I` with `R P^T β_I = η`.
    pub fn solve(&self, eta: &[f64]) -> Vec<f64> {
        let k = self.size();
        let r = self.rank;
        let mut x = DVector::zeros(k);
        if r == k {
            // Back substitution.
            for i in (0..k).rev() {
                let mut acc = eta[i];
                for j in i + 1..k {
                    acc -= self.r[(i, j)] * x[j];
                }
                x[i] = acc / self.r[(i, i)];
            }
        } else if r > 0 {
            // x = Rᵀ (R Rᵀ)⁻¹ η, R has full row rank.
            let gram = &self.r * self.r.transpose();
            let rhs = DVector::from_column_slice(eta);
            let chol = gram.cholesky().expect("R has full row rank");
            x = self.r.transpose() * chol.solve(&rhs);
        }
        let mut out = vec![0.0; k];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = x[j];
        }
        out
    }
}

/// Thin column-pivoted Householder QR of an `n × k` block.
pub fn factor_group(block: &DMatrix<f64>) -> Result<GroupFactor> {
    let (n, k) = block.shape();
    if n == 0 || k == 0 {
        return Err(GslopeError::InvalidArgument("empty group block".into()));
    }
    let mut a = block.clone();
    let mut perm: Vec<usize> = (0..k).collect();
    let first_pivot = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if first_pivot == 0.0 {
        return Err(GslopeError::ZeroGroupBlock { group: 0 });
    }
    let tol = RANK_TOL * first_pivot;

    // Householder vectors (stored on rows j..n) and their scalings.
    let mut reflectors: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut rank = 0;
    for j in 0..n.min(k) {
        let (pivot, pivot_norm) = (j..k)
            .map(|c| (c, a.view((j, c), (n - j, 1)).norm()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_norm <= tol {
            break;
        }
        if pivot != j {
            a.swap_columns(j, pivot);
            perm.swap(j, pivot);
        }

        let x0 = a[(j, j)];
        let alpha = if x0 >= 0.0 { -pivot_norm } else { pivot_norm };
        let mut v = a.view((j, j), (n - j, 1)).clone_owned().column(0).into_owned();
        v[0] -= alpha;
        let vtv = v.norm_squared();
        let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
        if beta != 0.0 {
            for c in j..k {
                let mut col = a.view_mut((j, c), (n - j, 1));
                let s = beta * v.dot(&col.column(0));
                col.column_mut(0).axpy(-s, &v, 1.0);
            }
        }
        a[(j, j)] = alpha;
        for i in j + 1..n {
            a[(i, j)] = 0.0;
        }
        reflectors.push((v, beta));
        rank += 1;
    }

    // Q_r = H_0 ⋯ H_{r−1} [e_0 … e_{r−1}].
    let mut q = DMatrix::zeros(n, rank);
    for i in 0..rank {
        q[(i, i)] = 1.0;
    }
    for (j, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        for c in 0..rank {
            let mut col = q.view_mut((j, c), (n - j, 1));
            let s = beta * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, v, 1.0);
        }
    }

    let mut u = DMatrix::zeros(n, rank);
    let mut r = DMatrix::zeros(rank, k);
    for i in 0..rank {
        let sign = if a[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        u.set_column(i, &(q.column(i) * sign));
        for c in i..k {
            r[(i, c)] = sign * a[(i, c)];
        }
    }
    Ok(GroupFactor { u, r, perm, rank })
}

/// The decoupled Group SLOPE problem.
#[derive(Debug, Clone)]
pub struct DecoupledProblem {
    /// `n × d`, group `i` in columns `offsets[i]..offsets[i+1]` equal to `U_i / w_i`.
    pub xhat: DMatrix<f64>,
    pub y: DVector<f64>,
    pub factors: Vec<GroupFactor>,
    pub offsets: Vec<usize>,
    pub partition: GroupPartition,
    pub lambda: LambdaSequence,
}

impl DecoupledProblem {
    pub fn n(&self) -> usize {
        self.xhat.nrows()
    }

    pub fn d(&self) -> usize {
        self.xhat.ncols()
    }

    pub fn m(&self) -> usize {
        self.factors.len()
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn blocks(&self) -> Vec<Range<usize>> {
        (0..self.m()).map(|i| self.block(i)).collect()
    }

    /// Per-coordinate scaling `Z_jj = 1 / w_{g(j)}`.
    pub fn z_diag(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.d()];
        for (i, w) in self.partition.weights().iter().enumerate() {
            z[self.block(i)].iter_mut().for_each(|v| *v = 1.0 / w);
        }
        z
    }

    /// Spectral norms `‖X̂_{I_i}‖₂ = 1 / w_i`.
    pub fn block_spectral_norms(&self) -> Vec<f64> {
        self.partition.weights().iter().map(|w| 1.0 / w).collect()
    }

    /// `b = Z⁻¹ R β` (group-contiguous, pivoted layout).
    pub fn forward_map(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.partition.d() {
            return Err(GslopeError::DimensionMismatch {
                what: "coefficient length",
                expected: self.partition.d(),
                found: beta.len(),
            });
        }
        let mut b = vec![0.0; self.d()];
        for (i, f) in self.factors.iter().enumerate() {
            let w = self.partition.weights()[i];
            let block: Vec<f64> = self.partition.group(i).iter().map(|&j| beta[j]).collect();
            for (dst, eta) in b[self.block(i)].iter_mut().zip(f.forward(&block)) {
                *dst = w * eta;
            }
        }
        Ok(b)
    }

    /// Maps decoupled coefficients back to the original variables.
    pub fn recover_beta(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.d() {
            return Err(GslopeError::DimensionMismatch {
                what: "decoupled coefficient length",
                expected: self.d(),
                found: b.len(),
            });
        }
        let mut beta = vec![0.0; self.partition.d()];
        for (i, f) in self.factors.iter().enumerate() {
            let w = self.partition.weights()[i];
            let block = &b[self.block(i)];
            if block.iter().all(|&v| v == 0.0) {
                continue;
            }
            let eta: Vec<f64> = block.iter().map(|v| v / w).collect();
            for (&j, val) in self.partition.group(i).iter().zip(f.solve(&eta)) {
                beta[j] = val;
            }
        }
        Ok(beta)
    }

    /// `½‖y − X̂b‖² + J_λ(‖b‖_I)`.
    pub fn objective(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.d() {
            return Err(GslopeError::DimensionMismatch {
                what: "decoupled coefficient length",
                expected: self.d(),
                found: b.len(),
            });
        }
        let resid = &self.y - &self.xhat * DVector::from_column_slice(b);
        let norms: Vec<f64> = self
            .blocks()
            .into_iter()
            .map(|r| crate::sorted_l1::norm(&b[r]))
            .collect();
        Ok(0.5 * resid.norm_squared() + eval_sorted_l1(&norms, self.lambda.values())?)
    }
}

/// Builds the decoupled problem; group blocks are factored in parallel.
pub fn decouple(problem: &GroupedProblem) -> Result<DecoupledProblem> {
    let x = problem.x();
    let partition = problem.partition().clone();
    let factors: Vec<GroupFactor> = partition
        .groups()
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let block = x.select_columns(g.iter());
            factor_group(&block).map_err(|e| match e {
                GslopeError::ZeroGroupBlock { .. } => GslopeError::ZeroGroupBlock { group: i },
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let mut offsets = Vec::with_capacity(factors.len() + 1);
    offsets.push(0);
    for f in &factors {
        offsets.push(offsets.last().unwrap() + f.width());
    }
    let mut xhat = DMatrix::zeros(x.nrows(), *offsets.last().unwrap());
    for (i, f) in factors.iter().enumerate() {
        let inv_w = 1.0 / partition.weights()[i];
        xhat.columns_mut(offsets[i], f.width()).copy_from(&(&f.u * inv_w));
    }

    Ok(DecoupledProblem {
        xhat,
        y: problem.y().clone(),
        factors,
        offsets,
        partition,
        lambda: problem.lambda().clone(),
    })
}
