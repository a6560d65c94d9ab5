//! Pairing diverse classifiers and deciding by agreement.
//!
//! Diversity between two classifiers is measured by their double-fault
//! ratio: the fraction of samples both get wrong at the same time. A lower
//! ratio means the two fail in different places, which is exactly what the
//! agreement rule wants: when errors are disjoint, the pair can only agree
//! on a wrong label where their error sets overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{ClassifierPool, TrainedClassifier};
use crate::reject::Decision;

/// Symmetric matrix of pairwise double-fault ratios over a pool. Entry
/// (i, i) is classifier i's own out-of-fold error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMatrix {
    n: usize,
    values: Vec<f64>,
    /// Grid index of each pool member, used as the stable row/column id.
    pub ids: Vec<usize>,
}

impl DiversityMatrix {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// CSV rendering with grid ids as row and column headers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push_str(&format!(",{id}"));
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&format!("{}", self.ids[i]));
            for j in 0..self.n {
                out.push_str(&format!(",{:.6}", self.at(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Fraction of positions where both prediction vectors are wrong at once.
pub fn double_fault(preds_a: &[usize], preds_b: &[usize], truth: &[usize]) -> Result<f64> {
    if preds_a.len() != truth.len() || preds_b.len() != truth.len() {
        return Err(Error::invalid_argument("prediction/truth length mismatch"));
    }
    if truth.is_empty() {
        return Err(Error::invalid_argument("double fault undefined on empty inputs"));
    }
    let both_wrong = truth
        .iter()
        .enumerate()
        .filter(|&(i, &t)| preds_a[i] != t && preds_b[i] != t)
        .count();
    Ok(both_wrong as f64 / truth.len() as f64)
}

/// Keep the `n` most accurate pool members, ties resolved toward the lower
/// grid index. The result is ordered by falling accuracy.
pub fn select_top_n(pool: &ClassifierPool, n: usize) -> Result<ClassifierPool> {
    if n < 2 {
        return Err(Error::invalid_argument("top-n selection needs n >= 2"));
    }
    if pool.members.len() < n {
        return Err(Error::invalid_argument(format!(
            "pool has {} members, cannot select {n}",
            pool.members.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.members.len()).collect();
    order.sort_by(|&a, &b| {
        let ma = &pool.members[a];
        let mb = &pool.members[b];
        mb.accuracy
            .partial_cmp(&ma.accuracy)
            .unwrap()
            .then(ma.grid_index.cmp(&mb.grid_index))
    });
    Ok(ClassifierPool {
        members: order[..n].iter().map(|&i| pool.members[i].clone()).collect(),
        grid_desc: format!("{} (top {n} by accuracy)", pool.grid_desc),
    })
}

/// Double-fault ratios over all pool pairs, computed on the members'
/// out-of-fold predictions against `truth`.
pub fn diversity_matrix(pool: &ClassifierPool, truth: &[usize]) -> Result<DiversityMatrix> {
    pool.validate()?;
    let n = pool.members.len();
    for (i, m) in pool.members.iter().enumerate() {
        if m.oof_predictions.len() != truth.len() || truth.is_empty() {
            return Err(Error::InvalidState(format!(
                "pool member {i} carries {} OOF predictions, evaluation set has {}",
                m.oof_predictions.len(),
                truth.len()
            )));
        }
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let df = double_fault(
                &pool.members[i].oof_predictions,
                &pool.members[j].oof_predictions,
                truth,
            )?;
            values[i * n + j] = df;
            values[j * n + i] = df;
        }
    }
    Ok(DiversityMatrix { n, values, ids: pool.members.iter().map(|m| m.grid_index).collect() })
}

/// The chosen pair for one stage, owning both members.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierPair {
    pub first: TrainedClassifier,
    pub second: TrainedClassifier,
    /// Double-fault ratio of the pair on out-of-fold predictions.
    pub df: f64,
    /// Which cascade stage the pair serves.
    pub stage: usize,
}

impl ClassifierPair {
    /// The member with the higher out-of-fold accuracy (ties to `first`,
    /// which carries the lower grid index by construction).
    pub fn stronger(&self) -> &TrainedClassifier {
        if self.second.accuracy > self.first.accuracy {
            &self.second
        } else {
            &self.first
        }
    }
}

/// Pick the most diverse off-diagonal pair: the SMALLEST double-fault value
/// (lowest chance of failing together). Ties prefer the higher mean member
/// accuracy, then the lexicographically smallest (grid id, grid id) key.
/// Returns pool indices plus the winning value.
pub fn select_pair_indices(
    m: &DiversityMatrix,
    pool: &ClassifierPool,
) -> Result<(usize, usize, f64)> {
    if pool.members.len() < 2 || m.n() < 2 {
        return Err(Error::invalid_argument("pair selection needs at least 2 classifiers"));
    }
    if m.n() != pool.members.len() {
        return Err(Error::invalid_argument("matrix size does not match pool"));
    }
    let mut best: Option<(usize, usize, f64, f64, (usize, usize))> = None;
    for i in 0..m.n() {
        for j in (i + 1)..m.n() {
            let df = m.at(i, j);
            let mean_acc = 0.5 * (pool.members[i].accuracy + pool.members[j].accuracy);
            let id_key = {
                let (a, b) = (m.ids[i], m.ids[j]);
                if a <= b { (a, b) } else { (b, a) }
            };
            let better = match best {
                None => true,
                Some((_, _, bdf, bacc, bkey)) => {
                    df < bdf
                        || (df == bdf && mean_acc > bacc)
                        || (df == bdf && mean_acc == bacc && id_key < bkey)
                }
            };
            if better {
                best = Some((i, j, df, mean_acc, id_key));
            }
        }
    }
    let (i, j, df, _, _) = best.expect("n >= 2 checked above");
    Ok((i, j, df))
}

/// As [`select_pair_indices`], but clones the winners into an owned pair
/// tagged with its stage.
pub fn select_pair(
    m: &DiversityMatrix,
    pool: &ClassifierPool,
    stage: usize,
) -> Result<ClassifierPair> {
    let (i, j, df) = select_pair_indices(m, pool)?;
    Ok(ClassifierPair {
        first: pool.members[i].clone(),
        second: pool.members[j].clone(),
        df,
        stage,
    })
}

/// The agreement rule: accept a label only when both members predict it;
/// any disagreement is a rejection. No posteriors, no threshold.
pub fn agreement_decide(pair: &ClassifierPair, x: &[f64]) -> Result<Decision> {
    let a = pair.first.model.predict(x)?;
    let b = pair.second.model.predict(x)?;
    Ok(if a == b { Decision::Accept(a) } else { Decision::Reject })
}
