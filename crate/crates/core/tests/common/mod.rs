//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use gslope::data::{oscar_lambdas, sparsity_factor, GroupPartition, GroupedDesign, WeightScheme};
use gslope::decouple::decouple;
use gslope::{DecoupledProblem, GroupedProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub seed: u64,
    pub grouped: GroupedProblem,
    pub decoupled: DecoupledProblem,
    pub sparsity_index: u32,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Group sizes in `1..=10` with `m ∈ [m_lo, m_hi]` and total width in `[d_lo, d_hi]`.
fn group_sizes(rng: &mut ChaCha8Rng, m_range: (usize, usize), d_range: (usize, usize)) -> Vec<usize> {
    loop {
        let m = rng.random_range(m_range.0..=m_range.1);
        let sizes: Vec<usize> = (0..m).map(|_| rng.random_range(1..=10)).collect();
        let d: usize = sizes.iter().sum();
        if (d_range.0..=d_range.1).contains(&d) {
            return sizes;
        }
    }
}

/// Design mixing duplicated-column groups (rank one) and groups of
/// independent columns, all with i.i.d. standard normal entries; `y` is a
/// three-feature signal plus noise.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, sizes: &[usize]) -> GroupedDesign {
    let d: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(n, d);
    let mut col = 0;
    for &k in sizes {
        if rng.random_bool(0.5) {
            let c = DVector::from_fn(n, |_, _| normal(rng));
            for j in 0..k {
                x.set_column(col + j, &c);
            }
        } else {
            for j in 0..k {
                x.set_column(col + j, &DVector::from_fn(n, |_, _| normal(rng)));
            }
        }
        col += k;
    }
    let partition = GroupPartition::contiguous(sizes, WeightScheme::Unit).unwrap();
    let mut y = DVector::from_fn(n, |_, _| 0.5 * normal(rng));
    for _ in 0..3 {
        let g = rng.random_range(0..sizes.len());
        let start = partition.group(g)[0];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        y += x.column(start) * sign;
    }
    GroupedDesign::new(x, y, partition).unwrap()
}

/// Instance of the randomized suite: `n ∈ [20,100]`, `d ∈ [50,600]`,
/// `m ∈ [10,120]`, OSCAR `λ` at `p_i = i·e^{−3}` with `i` cycling through 1..=3.
pub fn suite_instance(seed: u64) -> Instance {
    suite_instance_tau(seed, TAU)
}

pub const TAU: f64 = 3.0;

pub fn suite_instance_tau(seed: u64, tau: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=100);
    let sizes = group_sizes(&mut rng, (10, 120), (50, 600));
    let design = random_design(&mut rng, n, &sizes);
    let sparsity_index = 1 + (seed % 3) as u32;
    let lambda = oscar_lambdas(&design, sparsity_factor(sparsity_index, tau)).unwrap();
    let grouped = design.with_lambda(lambda).unwrap();
    let decoupled = decouple(&grouped).unwrap();
    Instance {
        seed,
        grouped,
        decoupled,
        sparsity_index,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// SLOPE prox by exhaustive search: every split of the sorted magnitudes
/// into consecutive blocks gives a candidate whose block values are the
/// clamped block means of `|v| − tλ`; the best non-increasing candidate is
/// the prox. Exponential in `v.len()`, so only for short inputs.
pub fn slope_prox_oracle(v: &[f64], lambda: &[f64], step: f64) -> Vec<f64> {
    let d = v.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    let z: Vec<f64> = order.iter().map(|&j| v[j].abs()).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..1usize << d.saturating_sub(1) {
        let mut cand = vec![0.0; d];
        let mut start = 0;
        for end in 1..=d {
            if end == d || mask >> (end - 1) & 1 == 1 {
                let len = (end - start) as f64;
                let mean = (start..end).map(|i| z[i] - step * lambda[i]).sum::<f64>() / len;
                cand[start..end].iter_mut().for_each(|c| *c = mean.max(0.0));
                start = end;
            }
        }
        if cand.windows(2).any(|w| w[1] > w[0]) {
            continue;
        }
        let obj: f64 = (0..d)
            .map(|i| 0.5 * (cand[i] - z[i]).powi(2) + step * lambda[i] * cand[i])
            .sum();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, cand));
        }
    }
    let sorted = best.unwrap().1;
    let mut out = vec![0.0; d];
    for (i, &j) in order.iter().enumerate() {
        out[j] = sorted[i].copysign(v[j]);
    }
    out
}

fn sorted_l1(norms: &[f64], lambda: &[f64]) -> f64 {
    let mut s = norms.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s.iter().zip(lambda).map(|(a, l)| a * l).sum()
}

/// Fenchel certificate for `x = prox(v)` with penalty `t·J_λ(group norms)`:
/// returns the dual-ball violation of `u = v − x` and the gap
/// `t·J_λ(x) − ⟨x, u⟩`, which bounds `½‖x − x*‖²`.
pub fn group_prox_certificate(v: &[f64], x: &[f64], groups: &[Vec<usize>], lambda: &[f64], step: f64) -> (f64, f64) {
    let u: Vec<f64> = v.iter().zip(x).map(|(a, b)| a - b).collect();
    let gnorm = |w: &[f64]| -> Vec<f64> {
        groups
            .iter()
            .map(|g| g.iter().map(|&j| w[j] * w[j]).sum::<f64>().sqrt())
            .collect()
    };
    let mut un = gnorm(&u);
    un.sort_by(|a, b| b.total_cmp(a));
    let (mut a, mut b, mut violation) = (0.0, 0.0, 0.0f64);
    for (n, l) in un.iter().zip(lambda) {
        a += n;
        b += step * l;
        violation = violation.max(a - b);
    }
    let inner: f64 = x.iter().zip(&u).map(|(p, q)| p * q).sum();
    (violation, step * sorted_l1(&gnorm(x), lambda) - inner)
}

/// Projection onto the column space of `a` as `(P, pinv(a))`.
fn projector(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
    (a * &pinv, pinv)
}

/// Group Lasso `½‖y − Xβ‖² + c Σ w_i ‖X_{I_i} β_{I_i}‖` by exact block
/// coordinate descent in the fitted-value space of each group.
pub fn group_lasso_bcd(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[Vec<usize>], weights: &[f64], c: f64) -> Vec<f64> {
    let blocks: Vec<DMatrix<f64>> = groups.iter().map(|g| x.select_columns(g.iter())).collect();
    let proj: Vec<_> = blocks.iter().map(projector).collect();
    let mut fits: Vec<DVector<f64>> = groups.iter().map(|_| DVector::zeros(y.len())).collect();
    let mut resid = y.clone();
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..groups.len() {
            let partial = &resid + &fits[i];
            let z = &proj[i].0 * &partial;
            let nz = z.norm();
            let thr = c * weights[i];
            let new = if nz <= thr { DVector::zeros(y.len()) } else { z * (1.0 - thr / nz) };
            change = change.max((&new - &fits[i]).amax());
            resid = partial - &new;
            fits[i] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    let mut beta = vec![0.0; x.ncols()];
    for (i, g) in groups.iter().enumerate() {
        let b = &proj[i].1 * &fits[i];
        for (k, &j) in g.iter().enumerate() {
            beta[j] = b[k];
        }
    }
    beta
}

/// SLOPE `½‖y − Xβ‖² + J_λ(β)` by proximal gradient with the exact step
/// `1/σ_max(X)²`, iterated until the iterates stop moving.
pub fn slope_ista(x: &DMatrix<f64>, y: &DVector<f64>, lambda: &[f64]) -> Vec<f64> {
    let sv = x.clone().singular_values();
    let step = 1.0 / sv.max().powi(2);
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..1_000_000 {
        let grad = x.tr_mul(&(x * &beta - y));
        let z: Vec<f64> = (&beta - grad * step).iter().copied().collect();
        let next = DVector::from_vec(gslope::sorted_l1::prox_sorted_l1(&z, lambda, step).unwrap());
        let change = (&next - &beta).amax();
        beta = next;
        if change < 1e-15 {
            break;
        }
    }
    beta.as_slice().to_vec()
}
