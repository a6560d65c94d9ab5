//! Cross-validated comparison of the cascade against a single-classifier
//! reject baseline, with report tables keyed by stage time.
//!
//! Both methods are scored at matched deadlines: the row for stage time s
//! describes the method constrained to decide by s. The cascade is the
//! trained model truncated after the stage at s; the baseline is the best
//! grid classifier of that stage with a posterior threshold. Training per
//! stage is shared, so both see byte-identical features.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    self, DecisionTrace, FallbackPolicy, StageDecision, StagePlan, TrainOptions,
    TrainOutcome,
};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::reject::{chow_decide, Decision};
use crate::util;

/// A stratified partition of dataset indices into folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    /// Fold index of every dataset item.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::invalid_argument("fold plan needs k >= 2"));
        }
        if self.assignments.len() != n_items {
            return Err(Error::invalid_argument(format!(
                "fold plan covers {} items, dataset has {n_items}",
                self.assignments.len()
            )));
        }
        if let Some(bad) = self.assignments.iter().find(|&&f| f >= self.k_folds) {
            return Err(Error::invalid_argument(format!(
                "fold index {bad} out of range for {} folds",
                self.k_folds
            )));
        }
        Ok(())
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

/// Partition the dataset into `k` folds, stratified by class: per-fold
/// class counts differ by at most one from exact proportionality. The
/// shuffle is seeded and deterministic.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if k < 2 {
        return Err(Error::invalid_argument("stratified k-fold needs k >= 2"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in dataset.items.iter().enumerate() {
        let label = item
            .label
            .ok_or_else(|| Error::invalid_argument(format!("series {i} has no label")))?;
        by_class.entry(label).or_default().push(i);
    }
    let mut assignments = vec![0usize; dataset.items.len()];
    for (class, mut indices) in by_class {
        if indices.len() < k {
            return Err(Error::invalid_argument(format!(
                "class {class} has {} samples, fewer than {k} folds",
                indices.len()
            )));
        }
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(util::subseed(seed, &[class as u64]));
        indices.shuffle(&mut rng);
        for (pos, idx) in indices.into_iter().enumerate() {
            assignments[idx] = pos % k;
        }
    }
    Ok(FoldPlan { k_folds: k, assignments, seed })
}

/// A method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// The agreement cascade.
    Forefront,
    /// Single best grid classifier per stage with a posterior threshold.
    Cwro { tau: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Forefront => "forefront".into(),
            Method::Cwro { tau } => format!("cwro_tau_{tau:.2}"),
        }
    }
}

/// The default method set: the cascade plus the baseline at its default
/// threshold and a small threshold sweep.
pub fn default_methods() -> Vec<Method> {
    vec![
        Method::Forefront,
        Method::Cwro { tau: 0.5 },
        Method::Cwro { tau: 0.3 },
        Method::Cwro { tau: 0.7 },
        Method::Cwro { tau: 0.9 },
    ]
}

/// Evaluation settings: how to train per fold, and the rejection cost used
/// in the risk column.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub train: TrainOptions,
    pub d: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { train: TrainOptions::default(), d: 0.2 }
    }
}

/// One report row: a method at a decision deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub method: String,
    pub stage_s: f64,
    /// Accuracy among accepted samples, mean over folds with at least one
    /// accept.
    pub cond_accuracy: f64,
    /// Accepted fraction, mean over all folds.
    pub coverage: f64,
    /// Fraction closed by the fallback, mean over all folds.
    pub forced_frac: f64,
    /// Mean decision time; forced decisions count at the deadline.
    pub mean_earliness_s: f64,
    /// (errors among accepted + d × undecided) / n, mean over folds. A
    /// forced label is an undecided sample for risk purposes: the pairs
    /// rejected it.
    pub emp_risk: f64,
    /// Accuracy over all samples with forced labels counted and undecided
    /// samples counted wrong. Reported in the extras table.
    pub full_accuracy: f64,
    /// Mean decision time over accepted samples only. Extras table.
    pub mean_earliness_excl_forced_s: f64,
}

/// The full comparison: rows per (method, stage), the raw cascade traces
/// they were computed from, and bookkeeping to recompute any rate.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub rows: Vec<StageRow>,
    pub stage_times_s: Vec<f64>,
    pub n_samples: usize,
    /// Test samples that could not be prepared (no usable prefix).
    pub n_skipped: usize,
    /// Full-cascade traces of evaluated samples, `sample_id` = dataset index.
    pub traces: Vec<DecisionTrace>,
    /// True label per trace.
    pub truths: Vec<usize>,
    /// Fold per trace.
    pub fold_of: Vec<usize>,
}

/// Header of the main report CSV.
pub const REPORT_CSV_HEADER: &str =
    "method,stage_s,cond_accuracy,coverage,forced_frac,mean_earliness_s,emp_risk";

/// Header of the extras CSV.
pub const REPORT_EXTRA_CSV_HEADER: &str =
    "method,stage_s,full_accuracy,mean_earliness_excl_forced_s";

impl StageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.1},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.method, r.stage_s, r.cond_accuracy, r.coverage, r.forced_frac,
                r.mean_earliness_s, r.emp_risk
            ));
        }
        out
    }

    pub fn extras_to_csv(&self) -> String {
        let mut out = String::from(REPORT_EXTRA_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.1},{:.6},{:.6}\n",
                r.method, r.stage_s, r.full_accuracy, r.mean_earliness_excl_forced_s
            ));
        }
        out
    }

    /// Rows of one method, in stage order.
    pub fn method_rows(&self, label: &str) -> Vec<&StageRow> {
        self.rows.iter().filter(|r| r.method == label).collect()
    }
}

/// Per-location accuracy at each stage deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub location: usize,
    pub n: usize,
    /// Full-coverage accuracy per stage time.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSurface {
    pub stage_times_s: Vec<f64>,
    pub rows: Vec<LocationRow>,
    /// Human-readable notes, e.g. locations with no evaluated samples.
    pub notes: Vec<String>,
}

impl LocationSurface {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,n");
        for t in &self.stage_times_s {
            out.push_str(&format!(",acc_{t:.1}s"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.location, row.n));
            for a in &row.accuracy {
                out.push_str(&format!(",{a:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let (mx, sx) = util::mean_std(&rx);
    let (my, sy) = util::mean_std(&ry);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let cov: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / rx.len() as f64;
    cov / (sx * sy)
}

/// What one test sample did at every stage it could reach.
#[derive(Debug, Clone)]
struct SampleScan {
    dataset_index: usize,
    fold: usize,
    truth: usize,
    location: Option<usize>,
    /// Stages with an available prefix; decisions beyond this are absent.
    n_avail: usize,
    /// Agreement decision per available stage.
    agree: Vec<Decision>,
    /// Prediction of the stronger pair member per available stage.
    stronger: Vec<usize>,
    /// Baseline decision per threshold (outer) and available stage (inner).
    cwro: Vec<Vec<Decision>>,
}

/// Train on `train_idx`, scan every sample of `test_idx`.
fn run_fold(
    dataset: &Dataset,
    plan: &StagePlan,
    options: &EvalOptions,
    taus: &[f64],
    train_idx: &[usize],
    test_idx: &[usize],
    fold_id: usize,
) -> Result<(Vec<SampleScan>, usize, TrainOutcome)> {
    let train_set = Dataset {
        items: train_idx.iter().map(|&i| dataset.items[i].clone()).collect(),
        class_names: dataset.class_names.clone(),
    };
    let outcome = cascade::train_forefront(&train_set, plan, &options.train)
        .map_err(|e| e.in_training(format!("fold {fold_id}")))?;
    let model = &outcome.model;

    let mut scans = Vec::with_capacity(test_idx.len());
    let mut skipped = 0usize;
    for &idx in test_idx {
        let raw = &dataset.items[idx];
        let truth = raw
            .label
            .ok_or_else(|| Error::invalid_argument(format!("series {idx} has no label")))?;
        let (series, onset) = match options.train.prep.prepare(raw) {
            Ok((s, Some(on))) => (s, on),
            Ok((_, None)) | Err(Error::EmptySeries(_)) | Err(Error::InvalidArgument(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let n_avail = model
            .stages
            .iter()
            .take_while(|st| onset + st.k <= series.len())
            .count();
        if n_avail == 0 {
            skipped += 1;
            continue;
        }
        let mut agree = Vec::with_capacity(n_avail);
        let mut stronger = Vec::with_capacity(n_avail);
        let mut cwro = vec![Vec::with_capacity(n_avail); taus.len()];
        for s in 0..n_avail {
            let stage = &model.stages[s];
            let x = stage.features(&series, onset)?;
            agree.push(crate::ensemble::agreement_decide(&stage.pair, &x)?);
            stronger.push(stage.pair.stronger().model.predict(&x)?);
            let posteriors = outcome.stage_best[s].model.predict_posteriors(&x)?;
            for (t, &tau) in taus.iter().enumerate() {
                cwro[t].push(chow_decide(&posteriors, tau)?);
            }
        }
        scans.push(SampleScan {
            dataset_index: idx,
            fold: fold_id,
            truth,
            location: raw.location,
            n_avail,
            agree,
            stronger,
            cwro,
        });
    }
    Ok((scans, skipped, outcome))
}

/// Cascade outcome of one scan truncated at stage `s` (inclusive).
/// Returns (accepted stage index, label) or the fallback result.
enum TruncOutcome {
    Accepted { stage: usize, label: usize },
    Forced { label: usize },
    Undecided,
}

fn truncate_scan(scan: &SampleScan, s: usize, fallback: FallbackPolicy) -> TruncOutcome {
    let last = s.min(scan.n_avail - 1);
    for i in 0..=last {
        if let Decision::Accept(label) = scan.agree[i] {
            return TruncOutcome::Accepted { stage: i, label };
        }
    }
    match fallback {
        FallbackPolicy::ForcedLabel => TruncOutcome::Forced { label: scan.stronger[last] },
        FallbackPolicy::HardReject => TruncOutcome::Undecided,
    }
}

/// Mean of the values collected per fold, ignoring folds that contributed
/// nothing.
fn fold_mean(values: &[Option<f64>]) -> f64 {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    if kept.is_empty() {
        f64::NAN
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

struct FoldTally {
    acc_correct: usize,
    acc_error: usize,
    forced_correct: usize,
    forced_error: usize,
    undecided: usize,
    earliness_sum: f64,
    earliness_accepted_sum: f64,
}

fn aggregate_rows(
    method: Method,
    scans: &[SampleScan],
    plan: &StagePlan,
    k_folds: usize,
    fallback: FallbackPolicy,
    d: f64,
    taus: &[f64],
) -> Vec<StageRow> {
    let times = plan.times_s();
    let mut rows = Vec::with_capacity(times.len());
    for (s, &time) in times.iter().enumerate() {
        let mut tallies: Vec<FoldTally> = (0..k_folds)
            .map(|_| FoldTally {
                acc_correct: 0,
                acc_error: 0,
                forced_correct: 0,
                forced_error: 0,
                undecided: 0,
                earliness_sum: 0.0,
                earliness_accepted_sum: 0.0,
            })
            .collect();
        let mut fold_sizes = vec![0usize; k_folds];
        for scan in scans {
            let tally = &mut tallies[scan.fold];
            fold_sizes[scan.fold] += 1;
            match method {
                Method::Forefront => match truncate_scan(scan, s, fallback) {
                    TruncOutcome::Accepted { stage, label } => {
                        if label == scan.truth {
                            tally.acc_correct += 1;
                        } else {
                            tally.acc_error += 1;
                        }
                        tally.earliness_sum += times[stage];
                        tally.earliness_accepted_sum += times[stage];
                    }
                    TruncOutcome::Forced { label } => {
                        if label == scan.truth {
                            tally.forced_correct += 1;
                        } else {
                            tally.forced_error += 1;
                        }
                        tally.earliness_sum += time;
                    }
                    TruncOutcome::Undecided => tally.undecided += 1,
                },
                Method::Cwro { tau } => {
                    let ti = taus
                        .iter()
                        .position(|&t| t == tau)
                        .expect("tau list built from the method list");
                    let decision = if s < scan.n_avail {
                        scan.cwro[ti][s]
                    } else {
                        Decision::Reject
                    };
                    match decision {
                        Decision::Accept(label) => {
                            if label == scan.truth {
                                tally.acc_correct += 1;
                            } else {
                                tally.acc_error += 1;
                            }
                            tally.earliness_sum += time;
                            tally.earliness_accepted_sum += time;
                        }
                        Decision::Reject => tally.undecided += 1,
                    }
                }
            }
        }
        let mut cond = Vec::new();
        let mut cov = Vec::new();
        let mut forced = Vec::new();
        let mut earl = Vec::new();
        let mut earl_excl = Vec::new();
        let mut risk = Vec::new();
        let mut full = Vec::new();
        for (f, tally) in tallies.iter().enumerate() {
            let n = fold_sizes[f];
            if n == 0 {
                cond.push(None);
                cov.push(None);
                forced.push(None);
                earl.push(None);
                earl_excl.push(None);
                risk.push(None);
                full.push(None);
                continue;
            }
            let nf = n as f64;
            let accepted = tally.acc_correct + tally.acc_error;
            let forced_n = tally.forced_correct + tally.forced_error;
            cond.push(if accepted > 0 {
                Some(tally.acc_correct as f64 / accepted as f64)
            } else {
                None
            });
            cov.push(Some(accepted as f64 / nf));
            forced.push(Some(forced_n as f64 / nf));
            let decided = accepted + forced_n;
            earl.push(if decided > 0 { Some(tally.earliness_sum / decided as f64) } else { None });
            earl_excl.push(if accepted > 0 {
                Some(tally.earliness_accepted_sum / accepted as f64)
            } else {
                None
            });
            risk.push(Some(
                (tally.acc_error as f64 + d * (forced_n + tally.undecided) as f64) / nf,
            ));
            full.push(Some((tally.acc_correct + tally.forced_correct) as f64 / nf));
        }
        rows.push(StageRow {
            method: method.label(),
            stage_s: time,
            cond_accuracy: fold_mean(&cond),
            coverage: fold_mean(&cov),
            forced_frac: fold_mean(&forced),
            mean_earliness_s: fold_mean(&earl),
            emp_risk: fold_mean(&risk),
            full_accuracy: fold_mean(&full),
            mean_earliness_excl_forced_s: fold_mean(&earl_excl),
        });
    }
    rows
}

/// Rebuild the full-cascade trace of a scan, exactly as
/// [`cascade::classify_stream`] would have produced it.
fn scan_to_trace(scan: &SampleScan, plan: &StagePlan, fallback: FallbackPolicy) -> DecisionTrace {
    let times = plan.times_s();
    let mut steps = Vec::new();
    for (i, &decision) in scan.agree.iter().enumerate() {
        steps.push(StageDecision { stage: i, time_s: times[i], decision });
        if let Decision::Accept(label) = decision {
            return DecisionTrace {
                sample_id: scan.dataset_index,
                steps,
                final_label: Some(label),
                decided_at_s: Some(times[i]),
                forced: false,
            };
        }
    }
    match fallback {
        FallbackPolicy::ForcedLabel => DecisionTrace {
            sample_id: scan.dataset_index,
            steps,
            final_label: Some(scan.stronger[scan.n_avail - 1]),
            decided_at_s: None,
            forced: true,
        },
        FallbackPolicy::HardReject => DecisionTrace {
            sample_id: scan.dataset_index,
            steps,
            final_label: None,
            decided_at_s: None,
            forced: false,
        },
    }
}

/// Everything one evaluation run produces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: StageReport,
    /// Per-location surface of the first method, when the dataset carries
    /// location ids.
    pub surface: Option<LocationSurface>,
}

/// Cross-validate all methods. Per fold: train the cascade (and with it the
/// per-stage best classifiers) on the other folds, scan the held-out fold
/// at every stage, then aggregate rates as means over folds. Folds where a
/// rate is undefined (no accepted sample) are left out of that rate's mean.
pub fn evaluate_methods(
    dataset: &Dataset,
    plan: &StagePlan,
    methods: &[Method],
    folds: &FoldPlan,
    options: &EvalOptions,
) -> Result<StageReport> {
    Ok(run_evaluation(dataset, plan, methods, folds, options, None)?.report)
}

/// As [`evaluate_methods`], additionally aggregating the per-location
/// accuracy surface for `surface_method`.
pub fn evaluate_with_surface(
    dataset: &Dataset,
    plan: &StagePlan,
    methods: &[Method],
    folds: &FoldPlan,
    options: &EvalOptions,
    surface_method: Method,
) -> Result<Evaluation> {
    run_evaluation(dataset, plan, methods, folds, options, Some(surface_method))
}

/// Accuracy per location id at each stage deadline, for one method,
/// cross-validated. Errors when any dataset item lacks a location id.
pub fn location_accuracy_surface(
    dataset: &Dataset,
    plan: &StagePlan,
    method: Method,
    folds: &FoldPlan,
    options: &EvalOptions,
) -> Result<LocationSurface> {
    if dataset.items.iter().any(|i| i.location.is_none()) {
        return Err(Error::invalid_argument(
            "location surface needs location metadata on every series",
        ));
    }
    let eval = run_evaluation(dataset, plan, &[method], folds, options, Some(method))?;
    eval.surface
        .ok_or_else(|| Error::InvalidState("surface aggregation produced nothing".into()))
}

fn run_evaluation(
    dataset: &Dataset,
    plan: &StagePlan,
    methods: &[Method],
    folds: &FoldPlan,
    options: &EvalOptions,
    surface_method: Option<Method>,
) -> Result<Evaluation> {
    folds.validate(dataset.items.len())?;
    if methods.is_empty() {
        return Err(Error::invalid_argument("no methods to evaluate"));
    }
    let taus: Vec<f64> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Cwro { tau } => Some(*tau),
            Method::Forefront => None,
        })
        .collect();

    let mut fold_results: Vec<(Vec<SampleScan>, usize)> = (0..folds.k_folds)
        .into_par_iter()
        .map(|f| {
            let train_idx = folds.train_indices(f);
            let test_idx = folds.test_indices(f);
            run_fold(dataset, plan, options, &taus, &train_idx, &test_idx, f)
                .map(|(scans, skipped, _)| (scans, skipped))
        })
        .collect::<Result<_>>()?;

    let mut scans = Vec::new();
    let mut n_skipped = 0usize;
    for (fold_scans, skipped) in fold_results.drain(..) {
        scans.extend(fold_scans);
        n_skipped += skipped;
    }
    scans.sort_by_key(|s| s.dataset_index);

    let fallback = options.train.fallback;
    let mut rows = Vec::new();
    for &method in methods {
        rows.extend(aggregate_rows(
            method,
            &scans,
            plan,
            folds.k_folds,
            fallback,
            options.d,
            &taus,
        ));
    }
    let traces: Vec<DecisionTrace> =
        scans.iter().map(|s| scan_to_trace(s, plan, fallback)).collect();
    let report = StageReport {
        rows,
        stage_times_s: plan.times_s().to_vec(),
        n_samples: dataset.items.len(),
        n_skipped,
        truths: scans.iter().map(|s| s.truth).collect(),
        fold_of: scans.iter().map(|s| s.fold).collect(),
        traces,
    };
    let surface = match surface_method {
        Some(m) => Some(build_surface(dataset, &scans, plan, m, fallback, &taus)?),
        None => None,
    };
    Ok(Evaluation { report, surface })
}

fn build_surface(
    dataset: &Dataset,
    scans: &[SampleScan],
    plan: &StagePlan,
    method: Method,
    fallback: FallbackPolicy,
    taus: &[f64],
) -> Result<LocationSurface> {
    if dataset.items.iter().any(|i| i.location.is_none()) {
        return Err(Error::invalid_argument(
            "location surface needs location metadata on every series",
        ));
    }
    let times = plan.times_s();
    // location -> (n, correct count per stage)
    let mut per_loc: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for scan in scans {
        let loc = scan.location.expect("checked above");
        let entry = per_loc.entry(loc).or_insert_with(|| (0, vec![0; times.len()]));
        entry.0 += 1;
        for s in 0..times.len() {
            let correct = match method {
                Method::Forefront => match truncate_scan(scan, s, fallback) {
                    TruncOutcome::Accepted { label, .. } | TruncOutcome::Forced { label } => {
                        label == scan.truth
                    }
                    TruncOutcome::Undecided => false,
                },
                Method::Cwro { tau } => {
                    let ti = taus.iter().position(|&t| t == tau).ok_or_else(|| {
                        Error::InvalidState("surface method was not evaluated".into())
                    })?;
                    s < scan.n_avail
                        && matches!(scan.cwro[ti][s], Decision::Accept(l) if l == scan.truth)
                }
            };
            if correct {
                entry.1[s] += 1;
            }
        }
    }
    let rows: Vec<LocationRow> = per_loc
        .iter()
        .map(|(&location, (n, correct))| LocationRow {
            location,
            n: *n,
            accuracy: correct.iter().map(|&c| c as f64 / *n as f64).collect(),
        })
        .collect();
    let mut notes = Vec::new();
    let all_locations: std::collections::BTreeSet<usize> =
        dataset.items.iter().filter_map(|i| i.location).collect();
    for loc in all_locations {
        if !per_loc.contains_key(&loc) {
            notes.push(format!(
                "location {loc}: no evaluated samples in any test fold; row omitted"
            ));
        }
    }
    Ok(LocationSurface { stage_times_s: times.to_vec(), rows, notes })
}

/// Diagnostic resubstitution run: train on the whole dataset and score on
/// the same samples. Optimistic by construction; used to sanity-check that
/// deployed accuracy upper-bounds hold.
pub fn evaluate_resubstitution(
    dataset: &Dataset,
    plan: &StagePlan,
    methods: &[Method],
    options: &EvalOptions,
) -> Result<(StageReport, TrainOutcome)> {
    let taus: Vec<f64> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Cwro { tau } => Some(*tau),
            Method::Forefront => None,
        })
        .collect();
    let all: Vec<usize> = (0..dataset.items.len()).collect();
    let (scans, n_skipped, outcome) =
        run_fold(dataset, plan, options, &taus, &all, &all, 0)?;
    let fallback = options.train.fallback;
    let mut rows = Vec::new();
    for &method in methods {
        rows.extend(aggregate_rows(method, &scans, plan, 1, fallback, options.d, &taus));
    }
    let traces: Vec<DecisionTrace> =
        scans.iter().map(|s| scan_to_trace(s, plan, fallback)).collect();
    let report = StageReport {
        rows,
        stage_times_s: plan.times_s().to_vec(),
        n_samples: dataset.items.len(),
        n_skipped,
        truths: scans.iter().map(|s| s.truth).collect(),
        fold_of: scans.iter().map(|s| s.fold).collect(),
        traces,
    };
    Ok((report, outcome))
}

/// Write the three report files into `dir`: `report.csv`,
/// `report_extra.csv`, and `traces.csv`. Returns the paths written.
pub fn write_report_files(report: &StageReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let entries = [
        ("report.csv", report.to_csv()),
        ("report_extra.csv", report.extras_to_csv()),
        ("traces.csv", cascade::traces_to_csv(&report.traces)),
    ];
    let mut written = Vec::new();
    for (name, content) in entries {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        written.push(path);
    }
    Ok(written)
}
