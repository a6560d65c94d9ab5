//! The serial early-decision cascade.
//!
//! One agreement pair per stage, each stage looking at a longer prefix of
//! the signal. A sample walks the stages in time order and exits at the
//! first stage whose pair agrees on a label; samples still undecided after
//! the last stage get a fallback verdict.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::ensemble::{self, ClassifierPair};
use crate::error::{Error, Result};
use crate::learners::{self, DistanceGram, FeatureMatrix, SvmParams};
use crate::reject::{check_cost, Decision};
use crate::signal::{self, NormStats, OnsetConfig, Series};

/// Stage schedule of the cascade: decision opportunities at these times
/// past onset, expressed in seconds of the downsampled signal.
pub const DEFAULT_STAGE_TIMES_S: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    stage_times_s: Vec<f64>,
    effective_rate_hz: f64,
}

impl StagePlan {
    /// A plan over strictly increasing positive stage times. Every stage
    /// must span at least one sample at the given rate.
    pub fn new(stage_times_s: Vec<f64>, effective_rate_hz: f64) -> Result<Self> {
        if stage_times_s.is_empty() {
            return Err(Error::invalid_argument("stage plan needs at least one stage"));
        }
        if !(effective_rate_hz > 0.0) {
            return Err(Error::invalid_argument("effective rate must be positive"));
        }
        let mut prev = 0.0;
        for (i, &t) in stage_times_s.iter().enumerate() {
            if !t.is_finite() || t <= prev {
                return Err(Error::invalid_argument(format!(
                    "stage times must be strictly increasing and positive (stage {i})"
                )));
            }
            if (t * effective_rate_hz).round() < 1.0 {
                return Err(Error::invalid_argument(format!(
                    "stage {i} at {t} s spans no samples at {effective_rate_hz} Hz"
                )));
            }
            prev = t;
        }
        Ok(StagePlan { stage_times_s, effective_rate_hz })
    }

    /// The default 5..30 s schedule.
    pub fn default_plan(effective_rate_hz: f64) -> Result<Self> {
        StagePlan::new(DEFAULT_STAGE_TIMES_S.to_vec(), effective_rate_hz)
    }

    pub fn n_stages(&self) -> usize {
        self.stage_times_s.len()
    }

    pub fn times_s(&self) -> &[f64] {
        &self.stage_times_s
    }

    pub fn effective_rate_hz(&self) -> f64 {
        self.effective_rate_hz
    }

    /// Prefix length in samples for each stage.
    pub fn stage_samples(&self) -> Vec<usize> {
        self.stage_times_s
            .iter()
            .map(|t| (t * self.effective_rate_hz).round() as usize)
            .collect()
    }

    /// The plan cut down to its first `n_stages` stages.
    pub fn truncated(&self, n_stages: usize) -> Result<StagePlan> {
        if n_stages == 0 || n_stages > self.n_stages() {
            return Err(Error::invalid_argument(format!(
                "cannot truncate a {}-stage plan to {n_stages} stages",
                self.n_stages()
            )));
        }
        Ok(StagePlan {
            stage_times_s: self.stage_times_s[..n_stages].to_vec(),
            effective_rate_hz: self.effective_rate_hz,
        })
    }
}

/// What to do with a sample no stage would accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackPolicy {
    /// Output the prediction of the more accurate member of the last pair
    /// the sample reached, marked as forced.
    ForcedLabel,
    /// Leave the sample rejected; no label is emitted.
    HardReject,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        FallbackPolicy::ForcedLabel
    }
}

/// Signal preparation shared by training and classification: downsampling
/// factor and onset detection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Source samples averaged into one downsampled sample.
    pub downsample_window: usize,
    pub onset: OnsetConfig,
    /// When false, skip detection and treat every series as starting at
    /// sample zero.
    pub use_onset: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig { downsample_window: 10, onset: OnsetConfig::default(), use_onset: true }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downsample_window == 0 {
            return Err(Error::invalid_argument("downsample window must be positive"));
        }
        self.onset.validate()
    }

    /// Downsample a raw recording and locate its onset.
    pub fn prepare(&self, raw: &crate::signal::RawSeries) -> Result<(Series, Option<usize>)> {
        let series = signal::downsample(raw, self.downsample_window)?;
        let onset = if self.use_onset {
            signal::detect_onset(&series, &self.onset)?
        } else {
            Some(0)
        };
        Ok((series, onset))
    }
}

/// One stage of the trained cascade: its pair, the feature normalization
/// fitted on that stage's training features, and the prefix geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageModel {
    pub pair: ClassifierPair,
    pub norm: NormStats,
    /// Prefix length in samples.
    pub k: usize,
    /// Feature dimension, n_channels × k.
    pub dim: usize,
    pub time_s: f64,
}

impl StageModel {
    /// The exact feature vector this stage sees for a series, normalized
    /// with the stage's stored statistics.
    pub fn features(&self, series: &Series, onset: usize) -> Result<Vec<f64>> {
        Ok(signal::extract_prefix_features(series, onset, self.k, &self.norm)?.values)
    }
}

/// The full trained cascade.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForefrontModel {
    pub stages: Vec<StageModel>,
    pub plan: StagePlan,
    pub prep: PrepConfig,
    pub fallback: FallbackPolicy,
    pub class_names: Vec<String>,
    pub n_channels: usize,
}

impl ForefrontModel {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.len() != self.plan.n_stages() {
            return Err(Error::InvalidState(format!(
                "model has {} stages for a {}-stage plan",
                self.stages.len(),
                self.plan.n_stages()
            )));
        }
        let ks = self.plan.stage_samples();
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.k != ks[i] || stage.dim != self.n_channels * stage.k {
                return Err(Error::InvalidState(format!(
                    "stage {i} geometry mismatch: k={}, dim={}, expected k={}, dim={}",
                    stage.k,
                    stage.dim,
                    ks[i],
                    self.n_channels * ks[i]
                )));
            }
        }
        Ok(())
    }

    /// The cascade cut down to its first `n_stages` stages; used to score
    /// the model at intermediate deadlines.
    pub fn truncated(&self, n_stages: usize) -> Result<ForefrontModel> {
        let plan = self.plan.truncated(n_stages)?;
        Ok(ForefrontModel {
            stages: self.stages[..n_stages].to_vec(),
            plan,
            prep: self.prep.clone(),
            fallback: self.fallback,
            class_names: self.class_names.clone(),
            n_channels: self.n_channels,
        })
    }
}

/// One stage visit in a sample's path through the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDecision {
    pub stage: usize,
    pub time_s: f64,
    pub decision: Decision,
}

/// A sample's complete path through the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub sample_id: usize,
    pub steps: Vec<StageDecision>,
    /// The emitted label; `None` only under [`FallbackPolicy::HardReject`]
    /// when every stage rejected.
    pub final_label: Option<usize>,
    /// Stage time of the accepting stage; `None` when the label was forced
    /// or withheld.
    pub decided_at_s: Option<f64>,
    pub forced: bool,
}

impl DecisionTrace {
    /// Number of rejections suffered on the way.
    pub fn n_rejects(&self) -> usize {
        self.steps.iter().filter(|s| s.decision == Decision::Reject).count()
    }

    /// The stage time at which the sample stopped consuming signal: its
    /// acceptance time, or the last visited stage when it ran out.
    pub fn exit_time_s(&self) -> Option<f64> {
        self.decided_at_s.or_else(|| self.steps.last().map(|s| s.time_s))
    }
}

/// Header of the trace CSV export.
pub const TRACE_CSV_HEADER: &str = "sample_id,stage_time_s,decision,label,forced";

/// Render traces as CSV, one row per stage visit. A forced verdict appends
/// a final `accept` row flagged `forced=true` at the last visited stage
/// time.
pub fn traces_to_csv(traces: &[DecisionTrace]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for trace in traces {
        for step in &trace.steps {
            let (decision, label) = match step.decision {
                Decision::Accept(l) => ("accept", l.to_string()),
                Decision::Reject => ("reject", String::new()),
            };
            out.push_str(&format!(
                "{},{:.1},{},{},false\n",
                trace.sample_id, step.time_s, decision, label
            ));
        }
        if trace.forced {
            let label = trace.final_label.map(|l| l.to_string()).unwrap_or_default();
            let time = trace.steps.last().map(|s| s.time_s).unwrap_or(0.0);
            out.push_str(&format!("{},{:.1},accept,{label},true\n", trace.sample_id, time));
        }
    }
    out
}

/// Decision cost of one trace: `d` per rejection plus a unit penalty if
/// the final label is wrong. A trace that never produced a label (hard
/// reject at exhaustion) counts the unit penalty; it cannot be correct.
pub fn cascade_cost(trace: &DecisionTrace, truth: usize, d: f64) -> Result<f64> {
    check_cost(d)?;
    let miss = match trace.final_label {
        Some(label) => label != truth,
        None => true,
    };
    Ok(d * trace.n_rejects() as f64 + if miss { 1.0 } else { 0.0 })
}

/// As [`cascade_cost`] with a stage-dependent rejection cost: a rejection
/// at stage `i` costs `d_per_stage[i]`.
pub fn cascade_cost_staged(trace: &DecisionTrace, truth: usize, d_per_stage: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for step in &trace.steps {
        if step.decision == Decision::Reject {
            let d = *d_per_stage.get(step.stage).ok_or_else(|| {
                Error::invalid_argument(format!(
                    "no rejection cost given for stage {}",
                    step.stage
                ))
            })?;
            check_cost(d)?;
            total += d;
        }
    }
    let miss = match trace.final_label {
        Some(label) => label != truth,
        None => true,
    };
    Ok(total + if miss { 1.0 } else { 0.0 })
}

/// Per-stage training summary for logs and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub time_s: f64,
    pub k: usize,
    pub first_id: String,
    pub second_id: String,
    pub first_accuracy: f64,
    pub second_accuracy: f64,
    pub df: f64,
    pub pool_best_accuracy: f64,
}

/// What training produced besides the model itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Series dropped for being unusable (no onset, or too short for the
    /// final stage).
    pub n_excluded: usize,
    pub n_used: usize,
    pub stages: Vec<StageSummary>,
}

/// A trained cascade with its training report. `stage_best` carries the
/// single most accurate grid classifier of each stage's pool (before pair
/// selection); baselines that want one plain classifier per stage, trained
/// on the same features, read it from here. It is not part of the model
/// bundle.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ForefrontModel,
    pub report: TrainReport,
    pub stage_best: Vec<learners::TrainedClassifier>,
}

/// Options steering [`train_forefront`] beyond the stage plan.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub grid: Vec<SvmParams>,
    /// Pool size kept after accuracy pre-selection.
    pub top_n: usize,
    /// Internal folds for out-of-fold accuracy estimates.
    pub oof_folds: usize,
    pub fallback: FallbackPolicy,
    pub prep: PrepConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            grid: learners::default_grid(),
            top_n: 5,
            oof_folds: 5,
            fallback: FallbackPolicy::default(),
            prep: PrepConfig::default(),
        }
    }
}

/// Train the cascade: per stage, extract that stage's prefix features for
/// every usable series, train the hyperparameter grid with out-of-fold
/// accuracy estimates, keep the `top_n` most accurate models, and pair the
/// two with the lowest double-fault ratio.
///
/// Series that carry no label, show no detectable onset, or are too short
/// for the final stage are excluded; they are counted in the report. An
/// all-excluded dataset is an error.
pub fn train_forefront(
    dataset: &Dataset,
    plan: &StagePlan,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    options.prep.validate()?;
    if options.top_n < 2 {
        return Err(Error::invalid_argument("top_n must be >= 2"));
    }
    if dataset.items.is_empty() {
        return Err(Error::EmptyDataset("no series to train on".into()));
    }
    let n_channels = dataset.n_channels();
    let ks = plan.stage_samples();
    let k_final = *ks.last().expect("plan validated non-empty");

    // Prepare every series once; drop the unusable ones.
    let mut prepared: Vec<(Series, usize, usize)> = Vec::new();
    let mut n_excluded = 0usize;
    for (idx, raw) in dataset.items.iter().enumerate() {
        let label = raw.label.ok_or_else(|| {
            Error::invalid_argument(format!("training series {idx} has no label"))
        })?;
        match options.prep.prepare(raw) {
            Ok((series, Some(on))) if on + k_final <= series.len() => {
                prepared.push((series, on, label));
            }
            // No onset, onset too late for the final stage, or too short
            // to even attempt detection: skip with a warning count.
            Ok(_) | Err(Error::EmptySeries(_)) | Err(Error::InvalidArgument(_)) => {
                n_excluded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if prepared.is_empty() {
        return Err(Error::invalid_argument(format!(
            "all {n_excluded} series were excluded (no onset or too short for the final stage)"
        )));
    }
    let labels: Vec<usize> = prepared.iter().map(|p| p.2).collect();
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::invalid_argument(
            "training needs at least 2 classes after exclusions",
        ));
    }

    let mut stages = Vec::with_capacity(ks.len());
    let mut summaries = Vec::with_capacity(ks.len());
    let mut stage_best = Vec::with_capacity(ks.len());
    for (stage_idx, &k) in ks.iter().enumerate() {
        let raw_rows: Vec<Vec<f64>> = prepared
            .iter()
            .map(|(series, onset, _)| signal::prefix_vector(series, *onset, k))
            .collect::<Result<_>>()?;
        let norm = signal::fit_norm_stats(&raw_rows)?;
        let mut features = FeatureMatrix::new(n_channels * k);
        for mut row in raw_rows {
            norm.apply(&mut row)?;
            features.push_row(&row)?;
        }
        let features = Arc::new(features);
        let gram = DistanceGram::from_features(&features);
        let pool = learners::train_grid_with_gram(
            &features,
            &labels,
            &options.grid,
            options.oof_folds,
            Some(&gram),
        )
        .map_err(|e| e.in_training(format!("stage {stage_idx} ({k} samples)")))?;
        stage_best.push(pool.members[pool.best_index()].clone());
        let top = ensemble::select_top_n(&pool, options.top_n.min(pool.members.len()))?;
        let matrix = ensemble::diversity_matrix(&top, &labels)?;
        let pair = ensemble::select_pair(&matrix, &top, stage_idx)?;
        summaries.push(StageSummary {
            time_s: plan.times_s()[stage_idx],
            k,
            first_id: pair.first.params_id.clone(),
            second_id: pair.second.params_id.clone(),
            first_accuracy: pair.first.accuracy,
            second_accuracy: pair.second.accuracy,
            df: pair.df,
            pool_best_accuracy: pool.best_accuracy(),
        });
        stages.push(StageModel {
            pair,
            norm,
            k,
            dim: n_channels * k,
            time_s: plan.times_s()[stage_idx],
        });
    }

    let model = ForefrontModel {
        stages,
        plan: plan.clone(),
        prep: options.prep.clone(),
        fallback: options.fallback,
        class_names: dataset.class_names.clone(),
        n_channels,
    };
    model.validate()?;
    Ok(TrainOutcome {
        model,
        report: TrainReport { n_excluded, n_used: prepared.len(), stages: summaries },
        stage_best,
    })
}

/// Walk a prepared series through the cascade. Stages run in time order;
/// the first agreement fixes the label. A stage whose prefix extends past
/// the end of the series is skipped. If no stage accepts, the fallback
/// policy closes the trace.
pub fn classify_stream(model: &ForefrontModel, series: &Series) -> Result<DecisionTrace> {
    model.validate()?;
    let onset = if model.prep.use_onset {
        match signal::detect_onset(series, &model.prep.onset) {
            Ok(Some(on)) => on,
            Ok(None) => {
                return Err(Error::NoDecision("no onset detected in series".into()));
            }
            Err(e) => {
                return Err(Error::NoDecision(format!("onset detection failed: {e}")));
            }
        }
    } else {
        0
    };
    classify_from_onset(model, series, onset)
}

/// [`classify_stream`] with the onset already known.
pub fn classify_from_onset(
    model: &ForefrontModel,
    series: &Series,
    onset: usize,
) -> Result<DecisionTrace> {
    let first_k = model.stages[0].k;
    if onset + first_k > series.len() {
        return Err(Error::NoDecision(format!(
            "series has {} samples past onset, first stage needs {first_k}",
            series.len().saturating_sub(onset)
        )));
    }
    let mut steps = Vec::new();
    let mut last_visited: Option<(usize, Vec<f64>)> = None;
    for (idx, stage) in model.stages.iter().enumerate() {
        if onset + stage.k > series.len() {
            break;
        }
        let x = stage.features(series, onset)?;
        let decision = ensemble::agreement_decide(&stage.pair, &x)?;
        steps.push(StageDecision { stage: idx, time_s: stage.time_s, decision });
        if let Decision::Accept(label) = decision {
            return Ok(DecisionTrace {
                sample_id: 0,
                steps,
                final_label: Some(label),
                decided_at_s: Some(stage.time_s),
                forced: false,
            });
        }
        last_visited = Some((idx, x));
    }
    let (last_idx, last_features) = last_visited.expect("first stage always visited");
    match model.fallback {
        FallbackPolicy::ForcedLabel => {
            let stronger = model.stages[last_idx].pair.stronger();
            let label = stronger.model.predict(&last_features)?;
            Ok(DecisionTrace {
                sample_id: 0,
                steps,
                final_label: Some(label),
                decided_at_s: None,
                forced: true,
            })
        }
        FallbackPolicy::HardReject => Ok(DecisionTrace {
            sample_id: 0,
            steps,
            final_label: None,
            decided_at_s: None,
            forced: false,
        }),
    }
}

/// Downsample and classify a raw recording with the model's own signal
/// preparation.
pub fn classify_raw(model: &ForefrontModel, raw: &crate::signal::RawSeries) -> Result<DecisionTrace> {
    let series = signal::downsample(raw, model.prep.downsample_window)?;
    classify_stream(model, &series)
}

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelBundle {
    version: u32,
    model: ForefrontModel,
}

/// Serialize a model (all stages) to a single versioned JSON file.
pub fn save_model(model: &ForefrontModel, path: &Path) -> Result<()> {
    let bundle = ModelBundle { version: MODEL_FORMAT_VERSION, model: model.clone() };
    let text = serde_json::to_string(&bundle)
        .map_err(|e| Error::InvalidState(format!("model serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load a model written by [`save_model`].
pub fn load_model(path: &Path) -> Result<ForefrontModel> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let bundle: ModelBundle = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: path.display().to_string(),
        row: 0,
        message: format!("model bundle parse error: {e}"),
    })?;
    if bundle.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format {
            file: path.display().to_string(),
            row: 0,
            message: format!(
                "unsupported model version {} (expected {MODEL_FORMAT_VERSION})",
                bundle.version
            ),
        });
    }
    bundle.model.validate()?;
    Ok(bundle.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenConfig};
    use crate::learners::grid_from_exponents;

    fn small_gen_config() -> GenConfig {
        GenConfig {
            n_classes: 3,
            n_channels: 2,
            n_locations: 2,
            series_per_class_location: 4,
            duration_s: 20.0,
            rate_hz: 100.0,
            noise_rho: 0.9,
            noise_amp: 0.05,
            seed: 11,
        }
    }

    /// Classify from sample zero: stage times are chosen past the response
    /// onsets (6..9 s into the recording), so stage prefixes carry signal
    /// without relying on detection.
    fn small_options() -> TrainOptions {
        TrainOptions {
            grid: grid_from_exponents(&[0], &[-8, -6, -4, -2]),
            top_n: 2,
            oof_folds: 3,
            fallback: FallbackPolicy::ForcedLabel,
            prep: PrepConfig { use_onset: false, ..PrepConfig::default() },
        }
    }

    fn small_plan() -> StagePlan {
        StagePlan::new(vec![12.0, 16.0], 10.0).unwrap()
    }

    fn small_trained() -> (TrainOutcome, Vec<(Series, usize)>) {
        let dataset = generate_dataset(&small_gen_config()).unwrap();
        let options = small_options();
        let outcome = train_forefront(&dataset, &small_plan(), &options).unwrap();
        let prepared: Vec<(Series, usize)> = dataset
            .items
            .iter()
            .map(|raw| {
                let (s, on) = options.prep.prepare(raw).unwrap();
                (s, on.unwrap())
            })
            .collect();
        (outcome, prepared)
    }

    #[test]
    fn stage_plan_geometry() {
        let plan = StagePlan::default_plan(10.0).unwrap();
        assert_eq!(plan.n_stages(), 6);
        assert_eq!(plan.stage_samples(), vec![50, 100, 150, 200, 250, 300]);
        assert!(StagePlan::new(vec![5.0, 5.0], 10.0).is_err());
        assert!(StagePlan::new(vec![10.0, 5.0], 10.0).is_err());
        assert!(StagePlan::new(vec![-1.0], 10.0).is_err());
        assert!(StagePlan::new(vec![0.01], 10.0).is_err());
        assert!(StagePlan::new(vec![], 10.0).is_err());
        let truncated = plan.truncated(2).unwrap();
        assert_eq!(truncated.times_s(), &[5.0, 10.0]);
        assert!(plan.truncated(0).is_err());
        assert!(plan.truncated(7).is_err());
    }

    fn trace_with(steps: Vec<StageDecision>, label: Option<usize>, forced: bool) -> DecisionTrace {
        let decided_at_s = steps
            .iter()
            .find(|s| s.decision.is_accept())
            .map(|s| s.time_s)
            .filter(|_| !forced);
        DecisionTrace { sample_id: 0, steps, final_label: label, decided_at_s, forced }
    }

    fn reject_at(stage: usize, time_s: f64) -> StageDecision {
        StageDecision { stage, time_s, decision: Decision::Reject }
    }

    #[test]
    fn cost_examples() {
        // Accept correctly at stage 1.
        let t = trace_with(
            vec![StageDecision { stage: 0, time_s: 5.0, decision: Decision::Accept(2) }],
            Some(2),
            false,
        );
        assert_eq!(cascade_cost(&t, 2, 0.1).unwrap(), 0.0);

        // Three rejects, then a correct accept.
        let t = trace_with(
            vec![
                reject_at(0, 5.0),
                reject_at(1, 10.0),
                reject_at(2, 15.0),
                StageDecision { stage: 3, time_s: 20.0, decision: Decision::Accept(1) },
            ],
            Some(1),
            false,
        );
        let c = cascade_cost(&t, 1, 0.1).unwrap();
        assert!((c - 0.3).abs() < 1e-12);

        // All six rejects, then a forced wrong label.
        let steps: Vec<StageDecision> =
            (0..6).map(|i| reject_at(i, 5.0 * (i + 1) as f64)).collect();
        let t = trace_with(steps, Some(4), true);
        let c = cascade_cost(&t, 1, 0.1).unwrap();
        assert!((c - 1.6).abs() < 1e-12);

        // Hard-rejected sample counts the miss penalty.
        let t = trace_with(vec![reject_at(0, 5.0)], None, false);
        assert!((cascade_cost(&t, 0, 0.2).unwrap() - 1.2).abs() < 1e-12);

        assert!(cascade_cost(&t, 0, 0.7).is_err());
    }

    #[test]
    fn staged_cost_uses_per_stage_rates() {
        let t = trace_with(
            vec![
                reject_at(0, 5.0),
                reject_at(1, 10.0),
                StageDecision { stage: 2, time_s: 15.0, decision: Decision::Accept(0) },
            ],
            Some(0),
            false,
        );
        let c = cascade_cost_staged(&t, 0, &[0.1, 0.3, 0.5]).unwrap();
        assert!((c - 0.4).abs() < 1e-12);
        // Wrong final label adds the unit penalty.
        let c = cascade_cost_staged(&t, 1, &[0.1, 0.3, 0.5]).unwrap();
        assert!((c - 1.4).abs() < 1e-12);
        // Missing stage cost is an error.
        assert!(cascade_cost_staged(&t, 0, &[0.1]).is_err());
    }

    #[test]
    fn trace_csv_rendering() {
        let accepted = trace_with(
            vec![
                reject_at(0, 5.0),
                StageDecision { stage: 1, time_s: 10.0, decision: Decision::Accept(3) },
            ],
            Some(3),
            false,
        );
        let mut forced = trace_with(vec![reject_at(0, 5.0), reject_at(1, 10.0)], Some(1), true);
        forced.sample_id = 7;
        let csv = traces_to_csv(&[accepted, forced]);
        let expect = "sample_id,stage_time_s,decision,label,forced\n\
                      0,5.0,reject,,false\n\
                      0,10.0,accept,3,false\n\
                      7,5.0,reject,,false\n\
                      7,10.0,reject,,false\n\
                      7,10.0,accept,1,true\n";
        assert_eq!(csv, expect);
    }

    #[test]
    fn training_builds_one_pair_per_stage() {
        let (outcome, prepared) = small_trained();
        let model = &outcome.model;
        assert_eq!(model.stages.len(), 2);
        assert_eq!(outcome.report.n_excluded, 0);
        assert_eq!(outcome.report.n_used, 24);
        assert_eq!(outcome.report.stages.len(), 2);
        for (stage, k) in model.stages.iter().zip([120usize, 160]) {
            assert_eq!(stage.k, k);
            assert_eq!(stage.dim, 2 * k);
            assert!((0.0..=1.0).contains(&stage.pair.df));
        }
        // Every series classifies to a well-formed trace.
        for (series, _) in &prepared {
            let trace = classify_stream(model, series).unwrap();
            for (i, step) in trace.steps.iter().enumerate() {
                let is_last = i + 1 == trace.steps.len();
                assert!(is_last || step.decision == Decision::Reject, "accept must be last");
            }
            match trace.decided_at_s {
                Some(t) => {
                    assert!(model.plan.times_s().contains(&t));
                    assert!(!trace.forced);
                }
                None => assert!(trace.forced || trace.final_label.is_none()),
            }
            assert!(trace.final_label.is_some(), "forced fallback always labels");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = generate_dataset(&small_gen_config()).unwrap();
        let options = small_options();
        let a = train_forefront(&dataset, &small_plan(), &options).unwrap();
        let b = train_forefront(&dataset, &small_plan(), &options).unwrap();
        let ja = serde_json::to_string(&a.model).unwrap();
        let jb = serde_json::to_string(&b.model).unwrap();
        assert_eq!(ja, jb);
        // Identical model + series must give identical traces.
        let (series, _) = options.prep.prepare(&dataset.items[5]).unwrap();
        let ta = classify_stream(&a.model, &series).unwrap();
        let tb = classify_stream(&b.model, &series).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn truncation_never_accelerates_decisions() {
        let (outcome, prepared) = small_trained();
        let full = &outcome.model;
        let cut = full.truncated(1).unwrap();
        assert_eq!(cut.stages.len(), 1);
        for (series, _) in &prepared {
            let t_full = classify_stream(full, series).unwrap();
            let t_cut = classify_stream(&cut, series).unwrap();
            // Shared stages decide identically.
            let shared = t_cut.steps.len().min(t_full.steps.len());
            assert_eq!(&t_cut.steps[..shared], &t_full.steps[..shared]);
            match (t_cut.decided_at_s, t_full.decided_at_s) {
                // If the truncated cascade accepted, the full one accepted
                // at the same stage with the same label.
                (Some(tc), Some(tf)) => {
                    assert_eq!(tc, tf);
                    assert_eq!(t_cut.final_label, t_full.final_label);
                }
                // Truncation can only delay or force, never accelerate.
                (Some(_), None) => panic!("truncated cascade decided where full did not"),
                (None, _) => assert!(t_cut.forced),
            }
            // A sample the full cascade forces stays forced when truncated.
            if t_full.forced {
                assert!(t_cut.forced);
            }
        }
    }

    #[test]
    fn stage_features_match_signal_module() {
        let (outcome, prepared) = small_trained();
        let model = &outcome.model;
        let (series, onset) = &prepared[3];
        for stage in &model.stages {
            let via_stage = stage.features(series, *onset).unwrap();
            let direct =
                signal::extract_prefix_features(series, *onset, stage.k, &stage.norm).unwrap();
            assert_eq!(via_stage, direct.values);
            // The cascade's decision at this stage is exactly the agreement
            // rule on those features.
            let decision = ensemble::agreement_decide(&stage.pair, &via_stage).unwrap();
            let trace = classify_stream(model, series).unwrap();
            if let Some(step) = trace.steps.iter().find(|s| s.stage == stage.pair.stage) {
                assert_eq!(step.decision, decision);
            }
        }
    }

    #[test]
    fn model_round_trips_through_disk() {
        let (outcome, prepared) = small_trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&outcome.model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for (series, _) in prepared.iter().take(6) {
            let a = classify_stream(&outcome.model, series).unwrap();
            let b = classify_stream(&loaded, series).unwrap();
            assert_eq!(a, b);
        }
        // Version check bites.
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn short_series_is_a_no_decision() {
        let (outcome, prepared) = small_trained();
        let (series, onset) = &prepared[0];
        // Cut the series right after onset so the first stage prefix
        // cannot be filled.
        let mut short = series.clone();
        for ch in &mut short.channels {
            ch.truncate(onset + 5);
        }
        let err = classify_from_onset(&outcome.model, &short, *onset).unwrap_err();
        assert!(matches!(err, Error::NoDecision(_)));
        // Through onset detection the truncated series fails too.
        assert!(matches!(
            classify_stream(&outcome.model, &short),
            Err(Error::NoDecision(_))
        ));
    }

    #[test]
    fn single_stage_plan_degenerates_to_one_pair() {
        let dataset = generate_dataset(&small_gen_config()).unwrap();
        let plan = StagePlan::new(vec![12.0], 10.0).unwrap();
        let options = small_options();
        let outcome = train_forefront(&dataset, &plan, &options).unwrap();
        assert_eq!(outcome.model.stages.len(), 1);
        let (series, _) = options.prep.prepare(&dataset.items[0]).unwrap();
        let trace = classify_stream(&outcome.model, &series).unwrap();
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn unusable_series_are_excluded_with_a_count() {
        let mut dataset = generate_dataset(&small_gen_config()).unwrap();
        // Truncate a third of the recordings below the final stage need.
        for raw in dataset.items.iter_mut().take(8) {
            for ch in &mut raw.channels {
                ch.truncate(900);
            }
        }
        let outcome = train_forefront(&dataset, &small_plan(), &small_options()).unwrap();
        assert_eq!(outcome.report.n_excluded, 8);
        assert_eq!(outcome.report.n_used, 16);
    }

    #[test]
    fn all_excluded_is_an_error() {
        let dataset = generate_dataset(&small_gen_config()).unwrap();
        // A plan longer than any series.
        let plan = StagePlan::new(vec![60.0], 10.0).unwrap();
        let err = train_forefront(&dataset, &plan, &small_options()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
