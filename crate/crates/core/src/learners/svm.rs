//! One-vs-one multiclass RBF SVM on top of the SMO solver, plus a small
//! kNN baseline used as an oracle and an alternative pool member.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::smo::{self, KernelMatrix};
use super::{FeatureMatrix, Posteriors, SvmParams};
use crate::error::{Error, Result};
use crate::learners::DistanceGram;
use crate::util;

/// One binary machine of the one-vs-one decomposition. The class with the
/// lower id takes the +1 side; a decision value >= 0 votes for it.
#[derive(Debug, Clone)]
struct BinaryMachine {
    pos_class: usize,
    neg_class: usize,
    /// Rows of the model's feature storage holding the support vectors.
    sv_rows: Vec<u32>,
    /// alpha_i * y_i per support vector.
    sv_coef: Vec<f64>,
    b: f64,
    converged: bool,
}

impl BinaryMachine {
    fn value(&self, features: &FeatureMatrix, gamma: f64, x: &[f64]) -> f64 {
        let mut v = self.b;
        for (&row, &coef) in self.sv_rows.iter().zip(&self.sv_coef) {
            let d2 = util::dist_sq(features.row(row as usize), x);
            v += coef * (-gamma * d2).exp();
        }
        v
    }
}

/// A trained one-vs-one RBF SVM. Support vectors are stored as row indices
/// into a feature matrix shared with other models trained on the same data,
/// so keeping many grid models around does not duplicate the training set.
#[derive(Debug, Clone)]
pub struct SvmModel {
    classes: Vec<usize>,
    machines: Vec<BinaryMachine>,
    params: SvmParams,
    features: Arc<FeatureMatrix>,
}

impl SvmModel {
    /// Class ids in ascending order; posteriors and scores use this order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn params(&self) -> &SvmParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// True when every underlying binary solve met its tolerance.
    pub fn fully_converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid_argument(format!(
                "input dim {} does not match training dim {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("non-finite value in input"));
        }
        Ok(())
    }

    /// Decision value of every pair machine at `x`, as
    /// (pos_class, neg_class, value) in stored machine order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        self.check_input(x)?;
        Ok(self
            .machines
            .iter()
            .map(|m| (m.pos_class, m.neg_class, m.value(&self.features, self.params.gamma, x)))
            .collect())
    }

    /// Per-class summed signed decision values, aligned with `classes()`.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scores = vec![0.0; self.classes.len()];
        for m in &self.machines {
            let v = m.value(&self.features, self.params.gamma, x);
            let pi = self.class_index(m.pos_class);
            let ni = self.class_index(m.neg_class);
            scores[pi] += v;
            scores[ni] -= v;
        }
        Ok(scores)
    }

    fn class_index(&self, class: usize) -> usize {
        self.classes.binary_search(&class).expect("machine references unknown class")
    }

    /// One-vs-one majority vote. Vote ties fall back to the summed decision
    /// values, then to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let mut votes = vec![0usize; self.classes.len()];
        let mut scores = vec![0.0; self.classes.len()];
        for m in &self.machines {
            let v = m.value(&self.features, self.params.gamma, x);
            let pi = self.class_index(m.pos_class);
            let ni = self.class_index(m.neg_class);
            if v >= 0.0 {
                votes[pi] += 1;
            } else {
                votes[ni] += 1;
            }
            scores[pi] += v;
            scores[ni] -= v;
        }
        let mut best = 0usize;
        for c in 1..self.classes.len() {
            if votes[c] > votes[best]
                || (votes[c] == votes[best] && scores[c] > scores[best])
            {
                best = c;
            }
        }
        Ok(self.classes[best])
    }

    /// Softmax over the per-class summed decision values. The argmax always
    /// matches the score winner (softmax is monotone), which coincides with
    /// `predict` whenever vote winner and score winner agree.
    pub fn predict_posteriors(&self, x: &[f64]) -> Result<Posteriors> {
        Posteriors::from_scores(&self.scores(x)?)
    }
}

/// Train on every sample of `features`.
pub fn train_svm(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    params: SvmParams,
) -> Result<SvmModel> {
    let all: Vec<usize> = (0..labels.len()).collect();
    let gram = DistanceGram::from_features(features);
    train_svm_subset(features, labels, &all, params, &gram)
}

/// Train on the rows named by `indices`, reusing a squared-distance matrix
/// over the full feature set. This is the entry point grid training uses so
/// that one distance computation serves every (grid point, fold) fit.
pub fn train_svm_subset(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    indices: &[usize],
    params: SvmParams,
    gram: &DistanceGram,
) -> Result<SvmModel> {
    params.validate()?;
    if features.n_rows() != labels.len() {
        return Err(Error::invalid_argument("feature/label count mismatch"));
    }
    if indices.is_empty() {
        return Err(Error::invalid_argument("empty training subset"));
    }
    let mut classes: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid_argument(
            "training requires at least 2 classes in the subset",
        ));
    }

    let mut machines = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for ai in 0..classes.len() {
        for bi in (ai + 1)..classes.len() {
            let (pos, neg) = (classes[ai], classes[bi]);
            let members: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| labels[i] == pos || labels[i] == neg)
                .collect();
            let y: Vec<f64> = members
                .iter()
                .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
                .collect();
            let kernel = KernelMatrix::from_fn(members.len(), |i, j| {
                (-params.gamma * gram.at(members[i], members[j])).exp()
            });
            let r = smo::solve(&kernel, &y, params.c, params.tol, params.max_passes);
            let mut sv_rows = Vec::new();
            let mut sv_coef = Vec::new();
            for (k, &a) in r.alpha.iter().enumerate() {
                if a > 0.0 {
                    sv_rows.push(members[k] as u32);
                    sv_coef.push(a * y[k]);
                }
            }
            machines.push(BinaryMachine {
                pos_class: pos,
                neg_class: neg,
                sv_rows,
                sv_coef,
                b: r.b,
                converged: r.converged,
            });
        }
    }

    Ok(SvmModel { classes, machines, params, features: Arc::clone(features) })
}

/// Serialized layout: the feature storage is compacted to the union of
/// support vectors so saved models do not embed their whole training set.
#[derive(Serialize, Deserialize)]
struct SvmModelRepr {
    version: u32,
    classes: Vec<usize>,
    params: SvmParams,
    features: FeatureMatrix,
    machines: Vec<BinaryMachineRepr>,
}

#[derive(Serialize, Deserialize)]
struct BinaryMachineRepr {
    pos_class: usize,
    neg_class: usize,
    sv_rows: Vec<u32>,
    sv_coef: Vec<f64>,
    b: f64,
    converged: bool,
}

const SVM_REPR_VERSION: u32 = 1;

impl Serialize for SvmModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // Union of referenced rows, ascending, with a dense remap table.
        let mut used: Vec<u32> = self.machines.iter().flat_map(|m| m.sv_rows.iter().copied()).collect();
        used.sort_unstable();
        used.dedup();
        let mut remap = std::collections::BTreeMap::new();
        let mut compact = FeatureMatrix::new(self.features.dim());
        for (new_idx, &old) in used.iter().enumerate() {
            remap.insert(old, new_idx as u32);
            compact
                .push_row(self.features.row(old as usize))
                .map_err(|e| serde::ser::Error::custom(e.to_string()))?;
        }
        let machines = self
            .machines
            .iter()
            .map(|m| BinaryMachineRepr {
                pos_class: m.pos_class,
                neg_class: m.neg_class,
                sv_rows: m.sv_rows.iter().map(|r| remap[r]).collect(),
                sv_coef: m.sv_coef.clone(),
                b: m.b,
                converged: m.converged,
            })
            .collect();
        SvmModelRepr {
            version: SVM_REPR_VERSION,
            classes: self.classes.clone(),
            params: self.params,
            features: compact,
            machines,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SvmModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SvmModelRepr::deserialize(deserializer)?;
        if repr.version != SVM_REPR_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported model version {}",
                repr.version
            )));
        }
        let n = repr.features.n_rows() as u32;
        for m in &repr.machines {
            if m.sv_rows.iter().any(|&r| r >= n) || m.sv_rows.len() != m.sv_coef.len() {
                return Err(serde::de::Error::custom("corrupt support vector table"));
            }
        }
        Ok(SvmModel {
            classes: repr.classes,
            machines: repr
                .machines
                .into_iter()
                .map(|m| BinaryMachine {
                    pos_class: m.pos_class,
                    neg_class: m.neg_class,
                    sv_rows: m.sv_rows,
                    sv_coef: m.sv_coef,
                    b: m.b,
                    converged: m.converged,
                })
                .collect(),
            params: repr.params,
            features: Arc::new(repr.features),
        })
    }
}

/// Euclidean k-nearest-neighbors. Stores its training rows outright (there
/// is nothing to compact; every row is a "support vector").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    features: FeatureMatrix,
    labels: Vec<usize>,
    k: usize,
}

impl KnnModel {
    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Majority vote among the k nearest rows (ordered by distance, then
    /// row index). Vote ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::invalid_argument(format!(
                "input dim {} does not match training dim {}",
                x.len(),
                self.dim()
            )));
        }
        let n = self.features.n_rows();
        let mut order: Vec<(f64, usize)> =
            (0..n).map(|i| (util::dist_sq(self.features.row(i), x), i)).collect();
        order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut votes: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
        for &(_, idx) in order.iter().take(self.k.min(n)) {
            *votes.entry(self.labels[idx]).or_insert(0) += 1;
        }
        // BTreeMap iterates by ascending class id, so on equal counts the
        // lowest id is kept.
        let mut best: Option<(usize, usize)> = None;
        for (&class, &count) in &votes {
            if best.map_or(true, |(_, c)| count > c) {
                best = Some((class, count));
            }
        }
        Ok(best.expect("non-empty training set").0)
    }
}

/// Fit a kNN model on all samples.
pub fn train_knn(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    k_neighbors: usize,
) -> Result<KnnModel> {
    let all: Vec<usize> = (0..labels.len()).collect();
    train_knn_subset(features, labels, &all, k_neighbors)
}

/// Fit a kNN model on the rows named by `indices`.
pub fn train_knn_subset(
    features: &Arc<FeatureMatrix>,
    labels: &[usize],
    indices: &[usize],
    k_neighbors: usize,
) -> Result<KnnModel> {
    if indices.is_empty() {
        return Err(Error::invalid_argument("empty training set"));
    }
    if k_neighbors == 0 {
        return Err(Error::invalid_argument("k_neighbors must be >= 1"));
    }
    if features.n_rows() != labels.len() {
        return Err(Error::invalid_argument("feature/label count mismatch"));
    }
    let mut subset = FeatureMatrix::new(features.dim());
    let mut sub_labels = Vec::with_capacity(indices.len());
    for &i in indices {
        subset.push_row(features.row(i))?;
        sub_labels.push(labels[i]);
    }
    Ok(KnnModel { features: subset, labels: sub_labels, k: k_neighbors })
}
