//! Per-group incremental ridge classifier.
//!
//! Each group keeps the Gram matrix `HᵀH` and the class-indexed target
//! accumulation `HᵀY` of everything it has seen. Weights are the closed-form
//! ridge solution `(HᵀH + λI)⁻¹ HᵀY`, obtained by a Cholesky solve and cached
//! until the next update or λ change.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::grouping::GroupId;

/// Candidate ridge strengths `10^k` for `k = -3..=3`.
pub fn default_lambda_pool() -> Vec<f64> {
    (-3..=3).map(|k| 10f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    group_id: GroupId,
    gram: DMatrix<f64>,
    targets: DMatrix<f64>,
    /// Class id per target column, in registration order.
    columns: Vec<u32>,
    class_columns: BTreeMap<u32, usize>,
    sample_count: usize,
    lambda: f64,
    theta: Option<DMatrix<f64>>,
}

/// Held-out projected samples with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub features: DMatrix<f64>,
    pub labels: Vec<u32>,
}

impl GroupModel {
    pub fn new(group_id: GroupId, dim: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if dim == 0 {
            return Err(Error::arg("feature dimension must be positive"));
        }
        Ok(GroupModel {
            group_id,
            gram: DMatrix::zeros(dim, dim),
            targets: DMatrix::zeros(dim, 0),
            columns: Vec::new(),
            class_columns: BTreeMap::new(),
            sample_count: 0,
            lambda,
            theta: None,
        })
    }

    /// Rebuilds a model from persisted parts.
    pub fn from_parts(
        group_id: GroupId,
        gram: DMatrix<f64>,
        targets: DMatrix<f64>,
        columns: Vec<u32>,
        sample_count: usize,
        lambda: f64,
        theta: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let dim = gram.nrows();
        check_dim(dim, gram.ncols())?;
        check_dim(dim, targets.nrows())?;
        check_dim(columns.len(), targets.ncols())?;
        if let Some(t) = &theta {
            check_dim(dim, t.nrows())?;
            check_dim(columns.len(), t.ncols())?;
        }
        let class_columns: BTreeMap<u32, usize> = columns.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if class_columns.len() != columns.len() {
            return Err(Error::Consistency(format!("group {group_id} registers a class twice")));
        }
        Ok(GroupModel { group_id, gram, targets, columns, class_columns, sample_count, lambda, theta })
    }

    pub fn group_id(&self) -> GroupId {
        self.group_id
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn theta(&self) -> Option<&DMatrix<f64>> {
        self.theta.as_ref()
    }

    /// Class ids in column order.
    pub fn columns(&self) -> &[u32] {
        &self.columns
    }

    pub fn column_of(&self, class_id: u32) -> Option<usize> {
        self.class_columns.get(&class_id).copied()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        if lambda != self.lambda {
            self.lambda = lambda;
            self.theta = None;
        }
        Ok(())
    }

    /// Appends a zero target column for a class not yet registered.
    pub fn register_class(&mut self, class_id: u32) -> bool {
        if self.class_columns.contains_key(&class_id) {
            return false;
        }
        let col = self.columns.len();
        self.targets = std::mem::replace(&mut self.targets, DMatrix::zeros(0, 0)).insert_column(col, 0.0);
        self.columns.push(class_id);
        self.class_columns.insert(class_id, col);
        self.theta = None;
        true
    }

    /// Accumulates a batch of projected samples (rows of `features`).
    ///
    /// `members` is the owning group's class list; any label outside it is an
    /// assignment error. Classes seen for the first time get zero columns,
    /// appended in ascending class id.
    pub fn update(&mut self, features: &DMatrix<f64>, labels: &[u32], members: &[u32]) -> Result<()> {
        check_dim(self.dim(), features.ncols())?;
        check_dim(features.nrows(), labels.len())?;
        if let Some(c) = labels.iter().find(|c| !members.contains(c)) {
            return Err(Error::Assignment(format!("class {c} does not belong to group {}", self.group_id)));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature in update batch".into()));
        }
        let mut fresh: Vec<u32> = labels.iter().copied().filter(|c| !self.class_columns.contains_key(c)).collect();
        fresh.sort_unstable();
        fresh.dedup();
        for c in fresh {
            self.register_class(c);
        }
        if labels.is_empty() {
            return Ok(());
        }

        self.gram.gemm(1.0, &features.transpose(), features, 1.0);
        let n = self.dim();
        for j in 0..n {
            for i in 0..j {
                self.gram[(i, j)] = self.gram[(j, i)];
            }
        }
        for (row, c) in labels.iter().enumerate() {
            let col = self.class_columns[c];
            let mut target = self.targets.column_mut(col);
            for (t, h) in target.iter_mut().zip(features.row(row).iter()) {
                *t += h;
            }
        }
        self.sample_count += labels.len();
        self.theta = None;
        Ok(())
    }

    /// Computes and caches the weights for the current λ.
    pub fn solve(&mut self) -> Result<&DMatrix<f64>> {
        if self.theta.is_none() {
            self.theta = Some(solve_ridge(&self.gram, &self.targets, self.lambda)?);
        }
        Ok(self.theta.as_ref().unwrap())
    }

    /// Score per class in column order: `hᵀ Θ`.
    pub fn score_columns(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), h.len())?;
        let theta = self
            .theta
            .as_ref()
            .ok_or_else(|| Error::State(format!("group {} has no solved weights", self.group_id)))?;
        Ok(theta.column_iter().map(|col| col.iter().zip(h).map(|(a, b)| a * b).sum()).collect())
    }

    /// Score for every class in the group.
    pub fn score(&self, h: &[f64]) -> Result<BTreeMap<u32, f64>> {
        Ok(self.columns.iter().copied().zip(self.score_columns(h)?).collect())
    }

    /// Score of a single class.
    pub fn score_class(&self, h: &[f64], class_id: u32) -> Result<f64> {
        let col = self
            .column_of(class_id)
            .ok_or_else(|| Error::arg(format!("class {class_id} is not in group {}", self.group_id)))?;
        Ok(self.score_columns(h)?[col])
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("ridge lambda must be positive and finite, got {lambda}")))
    }
}

/// `(gram + λI)⁻¹ targets` through a Cholesky factorization.
pub fn solve_ridge(gram: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_dim(gram.nrows(), gram.ncols())?;
    check_dim(gram.nrows(), targets.nrows())?;
    if gram.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in ridge system".into()));
    }
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky().ok_or_else(|| Error::Numeric(format!("gram + {lambda}·I is not positive definite")))?;
    Ok(chol.solve(targets))
}

/// Weights for the model's current λ, without touching its cache.
pub fn solve_weights(model: &GroupModel) -> Result<DMatrix<f64>> {
    solve_ridge(&model.gram, &model.targets, model.lambda)
}

/// One-hot label matrix over the model's class columns.
pub fn one_hot(model: &GroupModel, labels: &[u32]) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(labels.len(), model.columns.len());
    for (i, c) in labels.iter().enumerate() {
        let col = model
            .column_of(*c)
            .ok_or_else(|| Error::arg(format!("calibration label {c} is not in group {}", model.group_id)))?;
        y[(i, col)] = 1.0;
    }
    Ok(y)
}

/// Calibration residual `‖Y − H Θ_λ‖²_F` for every λ in the pool.
pub fn calibration_residuals(model: &GroupModel, calib: &CalibrationSet, pool: &[f64]) -> Result<Vec<f64>> {
    if calib.labels.is_empty() {
        return Err(Error::arg("calibration set is empty"));
    }
    if pool.is_empty() {
        return Err(Error::arg("lambda pool is empty"));
    }
    check_dim(model.dim(), calib.features.ncols())?;
    check_dim(calib.features.nrows(), calib.labels.len())?;
    let y = one_hot(model, &calib.labels)?;
    pool.iter()
        .map(|&lambda| {
            let theta = solve_ridge(&model.gram, &model.targets, lambda)?;
            let residual = &y - &calib.features * theta;
            Ok(residual.norm_squared())
        })
        .collect()
}

/// Pool element with the smallest calibration residual; ties go to the smaller λ.
pub fn select_lambda(model: &GroupModel, calib: &CalibrationSet, pool: &[f64]) -> Result<f64> {
    Ok(argmin_lambda(pool, &calibration_residuals(model, calib, pool)?))
}

/// Like [`calibration_residuals`], but each λ is fitted with the calibration
/// rows removed from the accumulated statistics first, so the residual is a
/// held-out error rather than a training error.
pub fn held_out_residuals(model: &GroupModel, calib: &CalibrationSet, pool: &[f64]) -> Result<Vec<f64>> {
    if calib.labels.is_empty() {
        return Err(Error::arg("calibration set is empty"));
    }
    if pool.is_empty() {
        return Err(Error::arg("lambda pool is empty"));
    }
    check_dim(model.dim(), calib.features.ncols())?;
    check_dim(calib.features.nrows(), calib.labels.len())?;
    let y = one_hot(model, &calib.labels)?;
    let ht = calib.features.transpose();
    let mut gram = model.gram.clone();
    gram.gemm(-1.0, &ht, &calib.features, 1.0);
    let targets = &model.targets - &ht * &y;
    pool.iter()
        .map(|&lambda| {
            let theta = solve_ridge(&gram, &targets, lambda)?;
            Ok((&y - &calib.features * theta).norm_squared())
        })
        .collect()
}

fn argmin_lambda(pool: &[f64], residuals: &[f64]) -> f64 {
    let mut best = (pool[0], residuals[0]);
    for (&lambda, &r) in pool.iter().zip(residuals).skip(1) {
        if r < best.1 || (r == best.1 && lambda < best.0) {
            best = (lambda, r);
        }
    }
    best.0
}

/// Held-out variant of [`select_lambda`].
pub fn select_lambda_held_out(model: &GroupModel, calib: &CalibrationSet, pool: &[f64]) -> Result<f64> {
    Ok(argmin_lambda(pool, &held_out_residuals(model, calib, pool)?))
}
