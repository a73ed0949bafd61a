//! The sorted-ℓ1 (OWL) penalty `J_λ(v) = Σ λ_i |v|_{[i]}` and its proximal
//! operators.
//!
//! The vector prox sorts `|v|` in decreasing order, subtracts `t·λ`, projects
//! onto the non-increasing cone with a stack-based pool-adjacent-violators
//! pass, clamps at zero and undoes the sort. Ties in `|v|` keep their original
//! index order. The group prox applies the same operator to the group norms
//! and rescales every block radially.

use std::ops::Range;

use crate::error::{GslopeError, Result};

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GslopeError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(GslopeError::InvalidArgument(format!(
            "prox step must be positive, got {step}"
        )));
    }
    Ok(())
}

/// Indices of `values` ordered by decreasing magnitude, stable on ties.
pub(crate) fn argsort_desc_abs(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

/// `Σ λ_i |v|_{[i]}`.
pub fn eval_sorted_l1(v: &[f64], lambda: &[f64]) -> Result<f64> {
    check_len("lambda length", v.len(), lambda.len())?;
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(mags.iter().zip(lambda).map(|(a, l)| a * l).sum())
}

/// Projects `z` onto `{x : x_1 ≥ x_2 ≥ … , x ≥ 0}` in place.
///
/// Blocks are kept on a stack as `(start, sum)`; a new entry is merged with
/// the block below while its mean is at least the mean of that block.
fn pava_nonincreasing_nonneg(z: &mut [f64]) {
    let mut starts: Vec<usize> = Vec::with_capacity(z.len());
    let mut sums: Vec<f64> = Vec::with_capacity(z.len());
    for (i, &zi) in z.iter().enumerate() {
        starts.push(i);
        sums.push(zi);
        while sums.len() > 1 {
            let top = sums.len() - 1;
            let top_len = (i + 1 - starts[top]) as f64;
            let below_len = (starts[top] - starts[top - 1]) as f64;
            if sums[top] / top_len < sums[top - 1] / below_len {
                break;
            }
            let s = sums.pop().unwrap();
            starts.pop();
            *sums.last_mut().unwrap() += s;
        }
    }
    let mut end = z.len();
    for (&start, &sum) in starts.iter().zip(&sums).rev() {
        let mean = (sum / (end - start) as f64).max(0.0);
        z[start..end].iter_mut().for_each(|x| *x = mean);
        end = start;
    }
}

/// Prox of `t·J_λ` restricted to nonnegative inputs, written into `out`.
fn prox_nonneg_into(mags: &[f64], lambda: &[f64], step: f64, out: &mut [f64]) {
    let order = argsort_desc_abs(mags);
    let mut z: Vec<f64> = order
        .iter()
        .zip(lambda)
        .map(|(&i, &l)| mags[i] - step * l)
        .collect();
    pava_nonincreasing_nonneg(&mut z);
    for (&i, &val) in order.iter().zip(&z) {
        out[i] = val;
    }
}

/// `argmin_u ½‖u − v‖² + t·J_λ(u)`.
///
/// `lambda` is only required to be non-increasing and nonnegative here; the
/// all-zero sequence gives the identity.
pub fn prox_sorted_l1(v: &[f64], lambda: &[f64], step: f64) -> Result<Vec<f64>> {
    check_len("lambda length", v.len(), lambda.len())?;
    check_step(step)?;
    let mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let mut out = vec![0.0; v.len()];
    prox_nonneg_into(&mags, lambda, step, &mut out);
    for (o, x) in out.iter_mut().zip(v) {
        *o = o.copysign(*x);
    }
    Ok(out)
}

/// `argmin_u ½‖u − b‖² + t·J_λ(‖u‖_I)` for an arbitrary partition of `b`.
pub fn prox_group_slope(
    b: &[f64],
    groups: &[Vec<usize>],
    lambda: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    check_len("lambda length", groups.len(), lambda.len())?;
    check_step(step)?;
    let covered: usize = groups.iter().map(Vec::len).sum();
    check_len("partition coverage", b.len(), covered)?;
    if let Some(&j) = groups.iter().flatten().find(|&&j| j >= b.len()) {
        return Err(GslopeError::InvalidArgument(format!(
            "group index {j} outside 0..{}",
            b.len()
        )));
    }

    let norms: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&j| b[j] * b[j]).sum::<f64>().sqrt())
        .collect();
    let mut shrunk = vec![0.0; norms.len()];
    prox_nonneg_into(&norms, lambda, step, &mut shrunk);

    let mut out = vec![0.0; b.len()];
    for ((g, &c), &c_new) in groups.iter().zip(&norms).zip(&shrunk) {
        if c > 0.0 && c_new > 0.0 {
            let ratio = c_new / c;
            for &j in g {
                out[j] = b[j] * ratio;
            }
        }
    }
    Ok(out)
}

/// Workspace for the in-place group prox over contiguous blocks, reused
/// across solver iterations.
#[derive(Debug, Default, Clone)]
pub(crate) struct GroupProx {
    norms: Vec<f64>,
    shrunk: Vec<f64>,
}

impl GroupProx {
    /// In-place group prox where group `i` occupies `blocks[i]`.
    pub(crate) fn apply(&mut self, b: &mut [f64], blocks: &[Range<usize>], lambda: &[f64], step: f64) {
        debug_assert_eq!(blocks.len(), lambda.len());
        self.norms.clear();
        self.norms
            .extend(blocks.iter().map(|r| norm(&b[r.clone()])));
        self.shrunk.resize(blocks.len(), 0.0);
        prox_nonneg_into(&self.norms, lambda, step, &mut self.shrunk);
        for ((r, &c), &c_new) in blocks.iter().zip(&self.norms).zip(&self.shrunk) {
            let block = &mut b[r.clone()];
            if c > 0.0 && c_new > 0.0 {
                let ratio = c_new / c;
                block.iter_mut().for_each(|x| *x *= ratio);
            } else {
                block.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Group norms over contiguous blocks.
pub(crate) fn block_norms(b: &[f64], blocks: &[Range<usize>]) -> Vec<f64> {
    blocks.iter().map(|r| norm(&b[r.clone()])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(eval_sorted_l1(&[0.0, 0.0, 0.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(eval_sorted_l1(&[1.0, -3.0, 2.0], &[3.0, 2.0, 1.0]).unwrap(), 14.0);
        assert!(eval_sorted_l1(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_lambda_is_identity() {
        let v = [1.5, -2.0, 0.0, 0.25];
        assert_eq!(prox_sorted_l1(&v, &[0.0; 4], 1.0).unwrap(), v.to_vec());
    }

    #[test]
    fn constant_lambda_is_soft_threshold() {
        assert_eq!(prox_sorted_l1(&[3.0, 1.0], &[1.0, 1.0], 1.0).unwrap(), vec![2.0, 0.0]);
        let v = [2.5, -0.3, -4.0, 1.1];
        let u = prox_sorted_l1(&v, &[0.5; 4], 2.0).unwrap();
        for (ui, vi) in u.iter().zip(v) {
            assert_relative_eq!(*ui, vi.signum() * (vi.abs() - 1.0).max(0.0));
        }
    }

    #[test]
    fn pooled_case() {
        // Sorted residuals (1, 2) violate monotonicity and pool to 1.5.
        assert_eq!(prox_sorted_l1(&[4.0, 3.0], &[3.0, 1.0], 1.0).unwrap(), vec![1.5, 1.5]);
        assert_eq!(prox_sorted_l1(&[-3.0, 4.0], &[3.0, 1.0], 1.0).unwrap(), vec![-1.5, 1.5]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(prox_sorted_l1(&[1.0], &[1.0], 0.0).is_err());
        assert!(prox_sorted_l1(&[1.0], &[1.0], -1.0).is_err());
        assert!(prox_sorted_l1(&[1.0, 2.0], &[1.0], 1.0).is_err());
        assert!(prox_group_slope(&[1.0, 2.0], &[vec![0]], &[1.0], 1.0).is_err());
    }

    #[test]
    fn singleton_groups_match_vector_prox() {
        let b = [0.3, -2.0, 1.7, -0.1, 0.9];
        let lam = [1.0, 0.8, 0.5, 0.5, 0.1];
        let groups: Vec<Vec<usize>> = (0..5).map(|j| vec![j]).collect();
        let a = prox_group_slope(&b, &groups, &lam, 0.7).unwrap();
        let c = prox_sorted_l1(&b, &lam, 0.7).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_lambda_matches_block_soft_threshold() {
        let b = [1.0, 2.0, -0.2, 0.1, 3.0, -1.0, 0.5];
        let groups = vec![vec![0, 1], vec![2, 3], vec![4, 5, 6]];
        let (c, t) = (0.9, 1.3);
        let u = prox_group_slope(&b, &groups, &[c; 3], t).unwrap();
        for g in &groups {
            let nrm = g.iter().map(|&j| b[j] * b[j]).sum::<f64>().sqrt();
            let factor = (1.0 - t * c / nrm).max(0.0);
            for &j in g {
                assert_relative_eq!(u[j], factor * b[j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn zero_group_drops_smallest_lambda() {
        // A zero group takes the last rank, so the remaining groups see λ without λ_m.
        let b = [1.0, 2.0, 0.0, 0.0, 3.0, -1.0];
        let groups = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let lam = [2.0, 1.5, 0.5];
        let u = prox_group_slope(&b, &groups, &lam, 1.0).unwrap();
        assert_eq!(&u[2..4], &[0.0, 0.0]);
        let reduced =
            prox_group_slope(&[1.0, 2.0, 3.0, -1.0], &[vec![0, 1], vec![2, 3]], &lam[..2], 1.0)
                .unwrap();
        for (x, y) in [u[0], u[1], u[4], u[5]].iter().zip(&reduced) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn contiguous_workspace_matches_general() {
        let b = vec![0.5, -1.5, 2.0, 0.1, -0.2, 0.3];
        let blocks = vec![0..2, 2..3, 3..6];
        let groups: Vec<Vec<usize>> = blocks.iter().map(|r| r.clone().collect()).collect();
        let lam = [1.2, 0.4, 0.3];
        let expected = prox_group_slope(&b, &groups, &lam, 0.5).unwrap();
        let mut inplace = b.clone();
        GroupProx::default().apply(&mut inplace, &blocks, &lam, 0.5);
        assert_eq!(inplace, expected);
    }

    fn objective(u: &[f64], v: &[f64], lam: &[f64], t: f64) -> f64 {
        let q: f64 = u.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        q + t * eval_sorted_l1(u, lam).unwrap()
    }

    fn lambda_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..2.0, m).prop_map(|mut l| {
            l.sort_by(|a, b| b.total_cmp(a));
            l
        })
    }

    proptest! {
        #[test]
        fn prox_is_nonexpansive(
            (v1, v2, lam) in (1usize..8).prop_flat_map(|m| (
                prop::collection::vec(-5.0f64..5.0, m),
                prop::collection::vec(-5.0f64..5.0, m),
                lambda_strategy(m),
            )),
            t in 0.1f64..3.0,
        ) {
            let u1 = prox_sorted_l1(&v1, &lam, t).unwrap();
            let u2 = prox_sorted_l1(&v2, &lam, t).unwrap();
            let du: f64 = u1.iter().zip(&u2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dv: f64 = v1.iter().zip(&v2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(du <= dv + 1e-12);
        }

        #[test]
        fn prox_preserves_signs_and_order(
            (v, lam) in (1usize..8).prop_flat_map(|m| (
                prop::collection::vec(-5.0f64..5.0, m),
                lambda_strategy(m),
            )),
            t in 0.1f64..3.0,
        ) {
            let u = prox_sorted_l1(&v, &lam, t).unwrap();
            for i in 0..v.len() {
                prop_assert!(u[i] == 0.0 || u[i].signum() == v[i].signum());
                for j in 0..v.len() {
                    if v[i].abs() >= v[j].abs() {
                        prop_assert!(u[i].abs() >= u[j].abs() - 1e-12);
                    }
                }
            }
        }

        #[test]
        fn prox_beats_perturbations(
            (v, lam) in (1usize..7).prop_flat_map(|m| (
                prop::collection::vec(-3.0f64..3.0, m),
                lambda_strategy(m),
            )),
            t in 0.1f64..2.0,
            deltas in prop::collection::vec(prop::collection::vec(-1e-4f64..1e-4, 7), 50),
        ) {
            let u = prox_sorted_l1(&v, &lam, t).unwrap();
            let base = objective(&u, &v, &lam, t);
            for d in deltas {
                let w: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
                prop_assert!(base <= objective(&w, &v, &lam, t) + 1e-13);
            }
        }

        #[test]
        fn permutation_invariant(v in prop::collection::vec(-5.0f64..5.0, 1..8), rot in 0usize..8) {
            let m = v.len();
            let lam: Vec<f64> = (0..m).rev().map(|i| i as f64 + 0.5).collect();
            let mut w = v.clone();
            w.rotate_left(rot % m);
            w.reverse();
            let a = eval_sorted_l1(&v, &lam).unwrap();
            let b = eval_sorted_l1(&w, &lam).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
