//! Dataset ingestion, group synthesis and regularization sequences.
//!
//! LIBSVM indices are 1-based on disk and 0-based everywhere in memory.
//! Random group sizes are drawn from a `ChaCha8Rng` seeded with
//! `seed_from_u64`, so a seed fully determines a partition on every platform.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GslopeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelsKind {
    Regression,
    Binary,
}

/// A dense design matrix with its response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub labels_kind: LabelsKind,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(GslopeError::DimensionMismatch {
                what: "response length",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(GslopeError::EmptyInput);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(GslopeError::InvalidArgument(
                "design and response must be finite".into(),
            ));
        }
        let labels_kind = detect_labels(&y);
        Ok(Self { x, y, labels_kind })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    /// Rescales every nonzero column to unit Euclidean norm.
    pub fn normalize_columns(&mut self) {
        for mut col in self.x.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
}

fn detect_labels(y: &DVector<f64>) -> LabelsKind {
    let pm_one = y.iter().all(|&v| v == 1.0 || v == -1.0);
    let zero_one = y.iter().all(|&v| v == 0.0 || v == 1.0);
    if pm_one || zero_one {
        LabelsKind::Binary
    } else {
        LabelsKind::Regression
    }
}

/// Parses `label idx:val idx:val ...` lines.
///
/// Blank lines and lines starting with `#` are skipped. Indices must be
/// strictly increasing within a line. `dim` overrides the column count, which
/// otherwise is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| GslopeError::Parse {
            line: lineno,
            message,
        };
        let mut tokens = trimmed.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(format!("invalid label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(parse_err(format!("non-finite label `{label_tok}`")));
        }

        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected `index:value`, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("invalid index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err("indices are 1-based".into()));
            }
            if idx <= last {
                return Err(parse_err(format!(
                    "index {idx} does not increase (previous {last})"
                )));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("invalid value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite value in `{tok}`")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(GslopeError::EmptyInput);
    }
    let d0 = match dim {
        Some(d) if d < max_index => {
            return Err(GslopeError::InvalidArgument(format!(
                "dimension override {d} is below the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };

    let mut x = DMatrix::zeros(rows.len(), d0);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[(i, j)] = v;
        }
    }
    Dataset::new(x, DVector::from_vec(labels))
}

/// Writes the dataset in LIBSVM format, emitting only nonzero entries.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for i in 0..dataset.rows() {
        write!(out, "{}", dataset.y[i])?;
        for j in 0..dataset.cols() {
            let v = dataset.x[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// How group weights `w_i` are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Unit,
    /// `w_i = sqrt(|I_i|)`, the Group Lasso convention.
    SqrtSize,
}

impl WeightScheme {
    pub fn weight(self, size: usize) -> f64 {
        match self {
            WeightScheme::Unit => 1.0,
            WeightScheme::SqrtSize => (size as f64).sqrt(),
        }
    }
}

/// A partition of the columns `0..d` into `m` weighted groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
    d: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, weights: Vec<f64>, d: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(GslopeError::InvalidArgument("partition has no groups".into()));
        }
        if weights.len() != groups.len() {
            return Err(GslopeError::DimensionMismatch {
                what: "group weights",
                expected: groups.len(),
                found: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(GslopeError::InvalidArgument(format!(
                "group weights must be positive, got {w}"
            )));
        }
        let mut seen = vec![false; d];
        for (g, idx) in groups.iter().enumerate() {
            if idx.is_empty() {
                return Err(GslopeError::InvalidArgument(format!("group {g} is empty")));
            }
            for &j in idx {
                if j >= d {
                    return Err(GslopeError::InvalidArgument(format!(
                        "group {g} references column {j} outside 0..{d}"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(GslopeError::InvalidArgument(format!(
                        "column {j} belongs to more than one group"
                    )));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(GslopeError::InvalidArgument(format!(
                "column {j} is not covered by any group"
            )));
        }
        Ok(Self { groups, weights, d })
    }

    /// Groups of consecutive columns with the given sizes.
    pub fn contiguous(sizes: &[usize], scheme: WeightScheme) -> Result<Self> {
        let mut groups = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &k in sizes {
            groups.push((start..start + k).collect());
            start += k;
        }
        let weights = sizes.iter().map(|&k| scheme.weight(k)).collect();
        Self::new(groups, weights, start)
    }

    pub fn singletons(d: usize) -> Result<Self> {
        Self::contiguous(&vec![1; d], WeightScheme::Unit)
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn with_weights(&self, scheme: WeightScheme) -> Self {
        let weights = self.groups.iter().map(|g| scheme.weight(g.len())).collect();
        Self {
            groups: self.groups.clone(),
            weights,
            d: self.d,
        }
    }
}

/// Where a regularization sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LambdaProvenance {
    Oscar { p: f64 },
    Explicit,
}

/// A non-increasing, nonnegative, not identically zero sequence `λ_1 ≥ … ≥ λ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSequence {
    values: Vec<f64>,
    provenance: LambdaProvenance,
}

impl LambdaSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_provenance(values, LambdaProvenance::Explicit)
    }

    fn with_provenance(values: Vec<f64>, provenance: LambdaProvenance) -> Result<Self> {
        if values.is_empty() {
            return Err(GslopeError::InvalidArgument("lambda sequence is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GslopeError::InvalidArgument(
                "lambda entries must be finite and nonnegative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(GslopeError::InvalidArgument(
                "lambda sequence must be non-increasing".into(),
            ));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(GslopeError::DegenerateLambda);
        }
        Ok(Self { values, provenance })
    }

    /// `λ_i = c` for all `i`.
    pub fn constant(value: f64, m: usize) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> LambdaProvenance {
        self.provenance
    }
}

/// A design whose columns are partitioned into groups, before a
/// regularization sequence is attached.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub partition: GroupPartition,
}

impl GroupedDesign {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, partition: GroupPartition) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(GslopeError::DimensionMismatch {
                what: "response length",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if partition.d() != x.ncols() {
            return Err(GslopeError::DimensionMismatch {
                what: "partition coverage",
                expected: x.ncols(),
                found: partition.d(),
            });
        }
        Ok(Self { x, y, partition })
    }

    pub fn with_lambda(self, lambda: LambdaSequence) -> Result<GroupedProblem> {
        GroupedProblem::new(self, lambda)
    }
}

/// The full Group SLOPE problem: design, response, partition and `λ`.
#[derive(Debug, Clone)]
pub struct GroupedProblem {
    design: GroupedDesign,
    lambda: LambdaSequence,
}

impl GroupedProblem {
    pub fn new(design: GroupedDesign, lambda: LambdaSequence) -> Result<Self> {
        if lambda.len() != design.partition.m() {
            return Err(GslopeError::DimensionMismatch {
                what: "lambda length",
                expected: design.partition.m(),
                found: lambda.len(),
            });
        }
        Ok(Self { design, lambda })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.design.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.design.y
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.design.partition
    }

    pub fn lambda(&self) -> &LambdaSequence {
        &self.lambda
    }

    pub fn design(&self) -> &GroupedDesign {
        &self.design
    }

    /// Group effects `‖X_{I_i} β_{I_i}‖₂`.
    pub fn group_effects(&self, beta: &[f64]) -> Vec<f64> {
        let x = &self.design.x;
        self.design
            .partition
            .groups()
            .iter()
            .map(|g| {
                let mut fit = DVector::zeros(x.nrows());
                for &j in g {
                    fit.axpy(beta[j], &x.column(j), 1.0);
                }
                fit.norm()
            })
            .collect()
    }

    /// `½‖y − Xβ‖² + J_λ(W·group_effects(β))`.
    pub fn objective(&self, beta: &[f64]) -> Result<f64> {
        if beta.len() != self.design.x.ncols() {
            return Err(GslopeError::DimensionMismatch {
                what: "coefficient length",
                expected: self.design.x.ncols(),
                found: beta.len(),
            });
        }
        let beta_v = DVector::from_column_slice(beta);
        let resid = &self.design.y - &self.design.x * beta_v;
        let weighted: Vec<f64> = self
            .group_effects(beta)
            .iter()
            .zip(self.design.partition.weights())
            .map(|(e, w)| e * w)
            .collect();
        let penalty = crate::sorted_l1::eval_sorted_l1(&weighted, self.lambda.values())?;
        Ok(0.5 * resid.norm_squared() + penalty)
    }
}

/// Replicates every original column `k_i ~ U{1,…,s}` times; the replicas of
/// column `i` form group `i` and occupy consecutive columns.
pub fn expand_groups(
    dataset: &Dataset,
    max_size: usize,
    seed: u64,
    scheme: WeightScheme,
) -> Result<GroupedDesign> {
    if max_size < 1 {
        return Err(GslopeError::InvalidArgument(
            "maximum group size must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..dataset.cols())
        .map(|_| rng.random_range(1..=max_size))
        .collect();
    let d: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(dataset.rows(), d);
    let mut col = 0;
    for (i, &k) in sizes.iter().enumerate() {
        for _ in 0..k {
            x.set_column(col, &dataset.x.column(i));
            col += 1;
        }
    }
    let partition = GroupPartition::contiguous(&sizes, scheme)?;
    GroupedDesign::new(x, dataset.y.clone(), partition)
}

/// `p_i = i · e^{−τ}`.
pub fn sparsity_factor(index: u32, tau: f64) -> f64 {
    f64::from(index) * (-tau).exp()
}

/// OSCAR sequence `λ_i = α₁ + α₂ (m − i)` with `α₁ = p ‖Xᵀy‖_∞` and `α₂ = α₁ / d`.
pub fn oscar_lambdas(design: &GroupedDesign, p: f64) -> Result<LambdaSequence> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(GslopeError::InvalidArgument(format!(
            "OSCAR factor p must be positive, got {p}"
        )));
    }
    let xty = design.x.tr_mul(&design.y);
    let xty_inf = xty.amax();
    if xty_inf == 0.0 {
        return Err(GslopeError::DegenerateLambda);
    }
    let m = design.partition.m();
    let d = design.x.ncols() as f64;
    let alpha1 = p * xty_inf;
    let alpha2 = alpha1 / d;
    let values = (1..=m).map(|i| alpha1 + alpha2 * (m - i) as f64).collect();
    LambdaSequence::with_provenance(values, LambdaProvenance::Oscar { p })
}
