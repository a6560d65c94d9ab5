//! Base classifiers: grid-trained RBF-kernel SVMs and a kNN baseline.

pub mod smo;
pub mod svm;

pub use svm::{KnnModel, SvmModel};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Hyperparameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// RBF width: K(x, y) = exp(-gamma ||x - y||^2).
    pub gamma: f64,
    /// KKT violation tolerance for the solver.
    pub tol: f64,
    /// Cap on full-set solver sweeps.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, gamma: 1.0, tol: 1e-3, max_passes: 10 }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::invalid_argument("C must be positive"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid_argument("gamma must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid_argument("tol must be positive"));
        }
        if self.max_passes == 0 {
            return Err(Error::invalid_argument("max_passes must be >= 1"));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("C={:.6e} gamma={:.6e}", self.c, self.gamma)
    }
}

/// The standard log-2 sweep: C and gamma each over 2^-5 .. 2^5 stepping by
/// a factor of 2, giving 11 x 11 = 121 combinations. C-major order.
pub fn default_grid() -> Vec<SvmParams> {
    grid_from_exponents(&exp_range(-5, 5), &exp_range(-5, 5))
}

pub fn exp_range(lo: i32, hi: i32) -> Vec<i32> {
    (lo..=hi).collect()
}

/// Build a grid from explicit base-2 exponent lists, C-major.
pub fn grid_from_exponents(c_exps: &[i32], gamma_exps: &[i32]) -> Vec<SvmParams> {
    let mut grid = Vec::with_capacity(c_exps.len() * gamma_exps.len());
    for &ce in c_exps {
        for &ge in gamma_exps {
            grid.push(SvmParams {
                c: 2.0_f64.powi(ce),
                gamma: 2.0_f64.powi(ge),
                ..SvmParams::default()
            });
        }
    }
    grid
}

/// Dense row-major feature storage shared between models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { dim, data: Vec::new() }
    }

    pub fn from_rows<V: AsRef<[f64]>>(dim: usize, rows: &[V]) -> Result<Self> {
        let mut m = FeatureMatrix::new(dim);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::invalid_argument(format!(
                "row has dim {}, matrix expects {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("non-finite feature value"));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Pairwise squared Euclidean distances over a feature matrix. Computed
/// once per training set and shared by every grid point (the RBF kernel is
/// exp(-gamma d^2), so only this matrix depends on the data).
#[derive(Debug, Clone)]
pub struct DistanceGram {
    n: usize,
    data: Vec<f64>,
}

impl DistanceGram {
    pub fn from_features(features: &FeatureMatrix) -> Self {
        let n = features.n_rows();
        let mut data = vec![0.0; n * n];
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                for (j, slot) in row.iter_mut().enumerate().take(i + 1) {
                    *slot = util::dist_sq(features.row(i), features.row(j));
                }
                row
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for j in 0..=i {
                data[i * n + j] = row[j];
                data[j * n + i] = row[j];
            }
        }
        DistanceGram { n, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// A per-class probability vector: entries non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors(Vec<f64>);

impl Posteriors {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid_argument("posteriors must be non-empty"));
        }
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid_argument("posterior entries must be >= 0 and finite"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_argument(format!(
                "posteriors must sum to 1 (got {sum})"
            )));
        }
        Ok(Posteriors(p))
    }

    /// Softmax with max subtraction; always satisfies the invariants.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid_argument("scores must be non-empty"));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("scores must be finite"));
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Ok(Posteriors(exps.into_iter().map(|e| e / sum).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_value(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Either kind of deployable base model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BaseModel {
    Svm(SvmModel),
    Knn(KnnModel),
}

impl BaseModel {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            BaseModel::Svm(m) => m.predict(x),
            BaseModel::Knn(m) => m.predict(x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseModel::Svm(m) => m.dim(),
            BaseModel::Knn(m) => m.dim(),
        }
    }

    /// Class posteriors, where the model kind supports them.
    pub fn predict_posteriors(&self, x: &[f64]) -> Result<Posteriors> {
        match self {
            BaseModel::Svm(m) => m.predict_posteriors(x),
            BaseModel::Knn(_) => Err(Error::InvalidState(
                "nearest-neighbor models carry no posterior estimates".into(),
            )),
        }
    }
}

/// One pool member: a deployable model plus its out-of-fold predictions on
/// the training set and the accuracy computed from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub model: BaseModel,
    /// Human-readable hyperparameter tag.
    pub params_id: String,
    /// Position in the grid this member came from; the tie-break key.
    pub grid_index: usize,
    /// Out-of-fold predicted label for every training sample.
    pub oof_predictions: Vec<usize>,
    /// Fraction of oof_predictions matching the training labels.
    pub accuracy: f64,
}

/// The classifiers trained for one stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierPool {
    pub members: Vec<TrainedClassifier>,
    pub grid_desc: String,
}

impl ClassifierPool {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::InvalidState("classifier pool is empty".into()));
        }
        let n = self.members[0].oof_predictions.len();
        if self.members.iter().any(|m| m.oof_predictions.len() != n) {
            return Err(Error::InvalidState(
                "pool members carry OOF predictions over different sample sets".into(),
            ));
        }
        Ok(())
    }

    pub fn best_accuracy(&self) -> f64 {
        self.members.iter().map(|m| m.accuracy).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the most accurate member; ties to the lower grid index.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.members.iter().enumerate().skip(1) {
            if m.accuracy > self.members[best].accuracy {
                best = i;
            }
        }
        best
    }
}

/// Assign each sample to one of `k` internal folds, stratified by class.
/// The assignment is keyed to sample content (hash of features + label),
/// not to sample order, so shuffling the training set permutes the
/// assignment vector but never changes which fold a given sample sees.
pub fn oof_fold_assignment(
    features: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid_argument("oof_folds must be >= 2"));
    }
    let n = labels.len();
    if features.n_rows() != n {
        return Err(Error::invalid_argument("feature/label count mismatch"));
    }
    let mut by_class: std::collections::BTreeMap<usize, Vec<(u64, usize)>> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        let h = util::content_hash(features.row(i), labels[i]);
        by_class.entry(labels[i]).or_default().push((h, i));
    }
    let mut assignment = vec![0usize; n];
    for (class, mut members) in by_class {
        if members.len() < k {
            return Err(Error::invalid_argument(format!(
                "class {class} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
        members.sort_unstable();
        for (pos, (_, idx)) in members.into_iter().enumerate() {
            assignment[idx] = pos % k;
        }
    }
    Ok(assignment)
}

/// Train the full hyperparameter grid. For every grid point: fit on each
/// fold's complement to get out-of-fold predictions for all samples, score
/// accuracy against the labels, then refit on everything for the deployable
/// model. Returns members in grid order.
pub fn train_grid(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    grid: &[SvmParams],
    oof_folds: usize,
) -> Result<ClassifierPool> {
    train_grid_with_gram(features, labels, grid, oof_folds, None)
}

/// Like [`train_grid`], reusing a precomputed squared-distance matrix for
/// the feature rows when the caller already has one.
pub fn train_grid_with_gram(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    grid: &[SvmParams],
    oof_folds: usize,
    gram: Option<&DistanceGram>,
) -> Result<ClassifierPool> {
    if grid.is_empty() {
        return Err(Error::invalid_argument("hyperparameter grid is empty"));
    }
    for p in grid {
        p.validate()?;
    }
    let n = labels.len();
    if features.n_rows() != n || n == 0 {
        return Err(Error::invalid_argument("feature/label count mismatch or empty set"));
    }
    let assignment = oof_fold_assignment(features, labels, oof_folds)?;

    let local_gram;
    let gram = match gram {
        Some(g) => {
            if g.n() != n {
                return Err(Error::invalid_argument("distance matrix size mismatch"));
            }
            g
        }
        None => {
            local_gram = DistanceGram::from_features(features);
            &local_gram
        }
    };

    let members: Result<Vec<TrainedClassifier>> = grid
        .par_iter()
        .enumerate()
        .map(|(grid_index, params)| {
            let mut oof = vec![0usize; n];
            for fold in 0..oof_folds {
                let train_idx: Vec<usize> =
                    (0..n).filter(|&i| assignment[i] != fold).collect();
                let test_idx: Vec<usize> =
                    (0..n).filter(|&i| assignment[i] == fold).collect();
                let model = svm::train_svm_subset(features, labels, &train_idx, *params, gram)
                    .map_err(|e| {
                        e.in_training(format!("grid point {grid_index}, fold {fold}"))
                    })?;
                for &i in &test_idx {
                    oof[i] = model.predict(features.row(i))?;
                }
            }
            let correct = oof.iter().zip(labels).filter(|(p, t)| p == t).count();
            let accuracy = correct as f64 / n as f64;
            let all: Vec<usize> = (0..n).collect();
            let model = svm::train_svm_subset(features, labels, &all, *params, gram)
                .map_err(|e| e.in_training(format!("grid point {grid_index}, full refit")))?;
            Ok(TrainedClassifier {
                model: BaseModel::Svm(model),
                params_id: params.describe(),
                grid_index,
                oof_predictions: oof,
                accuracy,
            })
        })
        .collect();

    Ok(ClassifierPool {
        members: members?,
        grid_desc: format!("{} grid points, {oof_folds} internal folds", grid.len()),
    })
}

/// Build a pool member from a kNN model using the same out-of-fold scheme
/// as the SVM grid, so it can sit in the same pool.
pub fn knn_pool_member(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    k_neighbors: usize,
    oof_folds: usize,
    grid_index: usize,
) -> Result<TrainedClassifier> {
    let n = labels.len();
    let assignment = oof_fold_assignment(features, labels, oof_folds)?;
    let mut oof = vec![0usize; n];
    for fold in 0..oof_folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let model = svm::train_knn_subset(features, labels, &train_idx, k_neighbors)?;
        for i in (0..n).filter(|&i| assignment[i] == fold) {
            oof[i] = model.predict(features.row(i))?;
        }
    }
    let correct = oof.iter().zip(labels).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / n as f64;
    let all: Vec<usize> = (0..n).collect();
    let model = svm::train_knn_subset(features, labels, &all, k_neighbors)?;
    Ok(TrainedClassifier {
        model: BaseModel::Knn(model),
        params_id: format!("knn k={k_neighbors}"),
        grid_index,
        oof_predictions: oof,
        accuracy,
    })
}
