//! Run configuration: one TOML file covering generation, preparation,
//! training, and evaluation. Every field is optional and falls back to the
//! documented default; unknown keys are rejected so typos surface instead
//! of silently running with defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use forefront::cascade::{
    FallbackPolicy, PrepConfig, StagePlan, TrainOptions, DEFAULT_STAGE_TIMES_S,
};
use forefront::datagen::GenConfig;
use forefront::eval::{EvalOptions, Method};
use forefront::learners::grid_from_exponents;
use forefront::signal::OnsetConfig;

use crate::CliError;

/// The whole run configuration as parsed from TOML.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory artifacts land in. Default "out".
    pub out_dir: Option<PathBuf>,
    pub gen: GenSection,
    pub stages: StageSection,
    pub prep: PrepSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// Dataset generation. Defaults mirror the library: 10 classes, 8 channels,
/// 45 locations, one series per (class, location), 180 s at 100 Hz.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub n_classes: Option<usize>,
    pub n_channels: Option<usize>,
    pub n_locations: Option<usize>,
    pub series_per_class_location: Option<usize>,
    pub duration_s: Option<f64>,
    pub rate_hz: Option<f64>,
    pub noise_rho: Option<f64>,
    pub noise_amp: Option<f64>,
    pub seed: Option<u64>,
}

/// Decision deadlines. Default [5, 10, 15, 20, 25, 30] seconds.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StageSection {
    pub times_s: Option<Vec<f64>>,
}

/// Signal preparation: downsampling and onset detection.
/// Defaults: window 10, onset window 20, factor 5.0, baseline 50, enabled.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    pub downsample_window: Option<usize>,
    pub use_onset: Option<bool>,
    pub onset_window: Option<usize>,
    pub onset_factor: Option<f64>,
    pub onset_baseline_len: Option<usize>,
}

/// Training: hyperparameter grid as base-2 exponent lists (defaults -5..=5
/// for both C and gamma), pool size 5, 5 internal folds, forced fallback.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub c_exponents: Option<Vec<i32>>,
    pub gamma_exponents: Option<Vec<i32>>,
    pub top_n: Option<usize>,
    pub oof_folds: Option<usize>,
    /// "forced" (default) or "reject".
    pub fallback: Option<String>,
}

/// Evaluation: 10-fold CV (fold seed 17), rejection cost 0.2, threshold
/// baseline at tau 0.5 plus the sweep {0.3, 0.7, 0.9}, location surface on.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k_folds: Option<usize>,
    pub fold_seed: Option<u64>,
    pub d: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub location_surface: Option<bool>,
}

impl RunConfig {
    /// Parse `path`, or return the all-defaults config when `path` is None.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::new(2, format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    CliError::new(2, format!("config {}: {e}", p.display()))
                })
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Generator settings with defaults filled in. `seed_override` is the
    /// `--seed` flag and wins over the file.
    pub fn gen_config(&self, seed_override: Option<u64>) -> GenConfig {
        let d = GenConfig::default();
        GenConfig {
            n_classes: self.gen.n_classes.unwrap_or(d.n_classes),
            n_channels: self.gen.n_channels.unwrap_or(d.n_channels),
            n_locations: self.gen.n_locations.unwrap_or(d.n_locations),
            series_per_class_location: self
                .gen
                .series_per_class_location
                .unwrap_or(d.series_per_class_location),
            duration_s: self.gen.duration_s.unwrap_or(d.duration_s),
            rate_hz: self.gen.rate_hz.unwrap_or(d.rate_hz),
            noise_rho: self.gen.noise_rho.unwrap_or(d.noise_rho),
            noise_amp: self.gen.noise_amp.unwrap_or(d.noise_amp),
            seed: seed_override.or(self.gen.seed).unwrap_or(d.seed),
        }
    }

    pub fn prep_config(&self) -> PrepConfig {
        let d = PrepConfig::default();
        PrepConfig {
            downsample_window: self.prep.downsample_window.unwrap_or(d.downsample_window),
            use_onset: self.prep.use_onset.unwrap_or(d.use_onset),
            onset: OnsetConfig {
                window: self.prep.onset_window.unwrap_or(d.onset.window),
                factor: self.prep.onset_factor.unwrap_or(d.onset.factor),
                baseline_len: self.prep.onset_baseline_len.unwrap_or(d.onset.baseline_len),
            },
        }
    }

    /// Build the stage plan for a recording rate: deadlines come from the
    /// config, the effective rate from `raw_rate_hz` and the downsampling
    /// window.
    pub fn stage_plan(&self, raw_rate_hz: f64) -> Result<StagePlan, CliError> {
        let times = self
            .stages
            .times_s
            .clone()
            .unwrap_or_else(|| DEFAULT_STAGE_TIMES_S.to_vec());
        let window = self.prep.downsample_window.unwrap_or(10).max(1);
        StagePlan::new(times, raw_rate_hz / window as f64)
            .map_err(|e| CliError::new(2, e.to_string()))
    }

    pub fn train_options(&self) -> Result<TrainOptions, CliError> {
        let d = TrainOptions::default();
        let grid = match (&self.train.c_exponents, &self.train.gamma_exponents) {
            (None, None) => d.grid,
            (c, g) => {
                let default_exps: Vec<i32> = (-5..=5).collect();
                grid_from_exponents(
                    c.as_deref().unwrap_or(&default_exps),
                    g.as_deref().unwrap_or(&default_exps),
                )
            }
        };
        let fallback = match self.train.fallback.as_deref() {
            None | Some("forced") => FallbackPolicy::ForcedLabel,
            Some("reject") => FallbackPolicy::HardReject,
            Some(other) => {
                return Err(CliError::new(
                    2,
                    format!("train.fallback must be \"forced\" or \"reject\", got {other:?}"),
                ))
            }
        };
        Ok(TrainOptions {
            grid,
            top_n: self.train.top_n.unwrap_or(d.top_n),
            oof_folds: self.train.oof_folds.unwrap_or(d.oof_folds),
            fallback,
            prep: self.prep_config(),
        })
    }

    pub fn eval_options(&self) -> Result<EvalOptions, CliError> {
        Ok(EvalOptions { train: self.train_options()?, d: self.eval.d.unwrap_or(0.2) })
    }

    pub fn k_folds(&self) -> usize {
        self.eval.k_folds.unwrap_or(10)
    }

    /// Fold-assignment seed; `--seed` wins here for the eval command.
    pub fn fold_seed(&self, seed_override: Option<u64>) -> u64 {
        seed_override.or(self.eval.fold_seed).unwrap_or(17)
    }

    /// The method lineup: the cascade first, then one threshold baseline
    /// per configured tau.
    pub fn methods(&self) -> Vec<Method> {
        let taus = self.eval.taus.clone().unwrap_or_else(|| vec![0.5, 0.3, 0.7, 0.9]);
        let mut methods = vec![Method::Forefront];
        methods.extend(taus.into_iter().map(|tau| Method::Cwro { tau }));
        methods
    }

    pub fn location_surface(&self) -> bool {
        self.eval.location_surface.unwrap_or(true)
    }
}
