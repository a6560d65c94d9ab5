//! Multichannel time series: downsampling, onset detection, prefix features.
//!
//! A recording enters as a [`RawSeries`] at the sensor rate, gets reduced by
//! non-overlapping window averaging into a [`Series`], and is then cut into
//! fixed-length prefix feature vectors measured from the detected response
//! onset rather than from the start of the recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// A recording straight from the source: one sample sequence per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    /// Channel-major samples; all channels have equal length.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub label: Option<usize>,
    pub location: Option<usize>,
}

impl RawSeries {
    pub fn new(
        channels: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        label: Option<usize>,
        location: Option<usize>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptySeries("series has no channels".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::EmptySeries("channel 0 has no samples".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid_argument("channels differ in length"));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::invalid_argument("sample_rate_hz must be positive"));
        }
        Ok(RawSeries { channels, sample_rate_hz, label, location })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A downsampled recording. Keeps the original rate around so earliness can
/// still be reported in seconds of wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub channels: Vec<Vec<f64>>,
    /// Rate of the source recording.
    pub sample_rate_hz: f64,
    /// Rate after downsampling; one sample here spans
    /// `sample_rate_hz / effective_rate_hz` source samples.
    pub effective_rate_hz: f64,
    pub label: Option<usize>,
    pub location: Option<usize>,
}

impl Series {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean across channels at every time index.
    pub fn channel_mean_trace(&self) -> Vec<f64> {
        let n_ch = self.n_channels() as f64;
        (0..self.len())
            .map(|t| self.channels.iter().map(|c| c[t]).sum::<f64>() / n_ch)
            .collect()
    }
}

/// Reduce each channel to non-overlapping window means. A trailing partial
/// window is dropped, so the output length is exactly `floor(len / window)`.
pub fn downsample(series: &RawSeries, window: usize) -> Result<Series> {
    if window == 0 {
        return Err(Error::invalid_argument("downsample window must be >= 1"));
    }
    let out_len = series.len() / window;
    if out_len == 0 {
        return Err(Error::EmptySeries(format!(
            "series of {} samples is shorter than window {}",
            series.len(),
            window
        )));
    }
    let channels = series
        .channels
        .iter()
        .map(|ch| {
            (0..out_len)
                .map(|i| {
                    let start = i * window;
                    ch[start..start + window].iter().sum::<f64>() / window as f64
                })
                .collect()
        })
        .collect();
    Ok(Series {
        channels,
        sample_rate_hz: series.sample_rate_hz,
        effective_rate_hz: series.sample_rate_hz / window as f64,
        label: series.label,
        location: series.location,
    })
}

/// Settings for the rising-point detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetConfig {
    /// Rolling window length, in downsampled samples.
    pub window: usize,
    /// Trigger threshold as a multiple of the baseline deviation.
    pub factor: f64,
    /// How many leading samples estimate the baseline deviation.
    pub baseline_len: usize,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        OnsetConfig { window: 20, factor: 5.0, baseline_len: 50 }
    }
}

impl OnsetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid_argument("onset window must be >= 2"));
        }
        if !(self.factor >= 0.0) {
            return Err(Error::invalid_argument("onset factor must be >= 0"));
        }
        if self.baseline_len < self.window {
            return Err(Error::invalid_argument("onset baseline_len must be >= window"));
        }
        Ok(())
    }
}

/// Trailing rolling standard deviation. The window at index `t` covers
/// `[t+1-window, t]`, truncated at the left edge, so early indices see a
/// shorter window. Population (divide-by-N) convention.
fn rolling_std(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let mut sum = vec![0.0; n + 1];
    let mut sumsq = vec![0.0; n + 1];
    for (i, &v) in values.iter().enumerate() {
        sum[i + 1] = sum[i] + v;
        sumsq[i + 1] = sumsq[i] + v * v;
    }
    (0..n)
        .map(|t| {
            let start = (t + 1).saturating_sub(window);
            let len = (t + 1 - start) as f64;
            let mean_sq = (sumsq[t + 1] - sumsq[start]) / len;
            let mean = (sum[t + 1] - sum[start]) / len;
            let var = mean_sq - mean * mean;
            // The subtraction cancels catastrophically on near-constant
            // windows, leaving ~1e-16 relative dust; a constant window must
            // report exactly zero or noiseless thresholds misfire.
            if var < mean_sq * 1e-12 {
                0.0
            } else {
                var.sqrt()
            }
        })
        .collect()
}

/// Find the rising point of the response: the smallest index where the
/// rolling deviation of the channel-mean trace exceeds `factor` times the
/// deviation of the leading baseline segment. `None` means the threshold is
/// never crossed (a flat recording).
pub fn detect_onset(series: &Series, cfg: &OnsetConfig) -> Result<Option<usize>> {
    cfg.validate()?;
    if series.len() < cfg.baseline_len + cfg.window {
        return Err(Error::invalid_argument(format!(
            "series of {} samples is too short for onset detection (need {})",
            series.len(),
            cfg.baseline_len + cfg.window
        )));
    }
    let trace = series.channel_mean_trace();
    let (_, baseline_std) = util::mean_std(&trace[..cfg.baseline_len]);
    let threshold = cfg.factor * baseline_std;
    Ok(rolling_std(&trace, cfg.window)
        .iter()
        .position(|&s| s > threshold))
}

/// Per-dimension normalization statistics, fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Floor applied to the per-dimension std so constant dimensions map to 0
/// instead of dividing by zero.
const STD_FLOOR: f64 = 1e-12;

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The do-nothing stats (mean 0, std 1), for callers that want raw
    /// baseline-corrected features.
    pub fn identity(dim: usize) -> Self {
        NormStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, values: &mut [f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::invalid_argument(format!(
                "normalization dim mismatch: stats {}, vector {}",
                self.dim(),
                values.len()
            )));
        }
        for (i, v) in values.iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.std[i].max(STD_FLOOR);
        }
        Ok(())
    }
}

/// Per-dimension mean and population std over a batch of equal-length vectors.
pub fn fit_norm_stats<V: AsRef<[f64]>>(vectors: &[V]) -> Result<NormStats> {
    if vectors.is_empty() {
        return Err(Error::invalid_argument("cannot fit normalization on empty batch"));
    }
    let dim = vectors[0].as_ref().len();
    if vectors.iter().any(|v| v.as_ref().len() != dim) {
        return Err(Error::invalid_argument("vectors differ in dimension"));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for v in vectors {
        for (s, (x, m)) in var.iter_mut().zip(v.as_ref().iter().zip(&mean)) {
            let d = x - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / n).max(0.0).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// A flattened prefix of a series, ready for a kernel machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Channel-major: all `k` samples of channel 0, then channel 1, and so on.
    pub values: Vec<f64>,
    pub n_channels: usize,
    /// Prefix length in downsampled samples.
    pub k: usize,
}

/// The unnormalized prefix vector: samples `[onset, onset+k)` of every
/// channel with that channel's pre-onset mean subtracted, flattened
/// channel-major. This is what normalization stats are fitted on.
pub fn prefix_vector(series: &Series, onset: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid_argument("prefix length k must be >= 1"));
    }
    let len = series.len();
    if onset + k > len {
        return Err(Error::PrefixUnavailable {
            needed: k,
            available: len.saturating_sub(onset),
        });
    }
    let mut out = Vec::with_capacity(series.n_channels() * k);
    for ch in &series.channels {
        let baseline = if onset == 0 {
            0.0
        } else {
            ch[..onset].iter().sum::<f64>() / onset as f64
        };
        out.extend(ch[onset..onset + k].iter().map(|v| v - baseline));
    }
    Ok(out)
}

/// Extract a normalized prefix feature vector. Fails with a
/// prefix-unavailable error when fewer than `k` samples exist past the
/// onset; callers treat that as "this stage is not reachable yet".
pub fn extract_prefix_features(
    series: &Series,
    onset: usize,
    k: usize,
    stats: &NormStats,
) -> Result<FeatureVector> {
    let mut values = prefix_vector(series, onset, k)?;
    stats.apply(&mut values)?;
    Ok(FeatureVector { values, n_channels: series.n_channels(), k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn raw(channels: Vec<Vec<f64>>, rate: f64) -> RawSeries {
        RawSeries::new(channels, rate, None, None).unwrap()
    }

    fn flat_series(value: f64, len: usize, n_ch: usize) -> Series {
        downsample(&raw(vec![vec![value; len]; n_ch], 10.0), 1).unwrap()
    }

    /// Step from 0 to `height` at index `at`, single channel.
    fn step_series(at: usize, height: f64, len: usize) -> Series {
        let ch: Vec<f64> = (0..len).map(|t| if t >= at { height } else { 0.0 }).collect();
        downsample(&raw(vec![ch], 10.0), 1).unwrap()
    }

    #[test]
    fn downsample_rejects_zero_window() {
        let s = raw(vec![vec![1.0, 2.0]], 100.0);
        assert!(matches!(downsample(&s, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn downsample_rejects_series_shorter_than_window() {
        let s = raw(vec![vec![1.0, 2.0, 3.0]], 100.0);
        assert!(matches!(downsample(&s, 4), Err(Error::EmptySeries(_))));
    }

    #[test]
    fn downsample_window_one_is_identity() {
        let s = raw(vec![vec![1.0, -2.5, 3.25], vec![0.0, 0.5, 1.0]], 100.0);
        let d = downsample(&s, 1).unwrap();
        assert_eq!(d.channels, s.channels);
        assert_eq!(d.effective_rate_hz, 100.0);
    }

    #[test]
    fn downsample_window_means() {
        let s = raw(vec![vec![1.0, 2.0, 3.0, 4.0]], 100.0);
        let d = downsample(&s, 2).unwrap();
        assert_eq!(d.channels[0], vec![1.5, 3.5]);
        assert_eq!(d.effective_rate_hz, 50.0);
    }

    #[test]
    fn downsample_full_rate_example() {
        let s = raw(vec![(0..18_000).map(|i| i as f64).collect()], 100.0);
        let d = downsample(&s, 10).unwrap();
        assert_eq!(d.len(), 1_800);
        assert_eq!(d.effective_rate_hz, 10.0);
    }

    /// Brute-force trailing rolling std for the oracle comparison.
    fn rolling_std_naive(values: &[f64], window: usize) -> Vec<f64> {
        (0..values.len())
            .map(|t| {
                let start = (t + 1).saturating_sub(window);
                let w = &values[start..=t];
                let mean = w.iter().sum::<f64>() / w.len() as f64;
                (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64)
                    .sqrt()
            })
            .collect()
    }

    #[test]
    fn rolling_std_matches_naive_two_pass() {
        let mut x = 0.3_f64;
        let values: Vec<f64> = (0..200)
            .map(|_| {
                x = (x * 997.0 + 0.1).sin() * 3.0;
                x
            })
            .collect();
        let fast = rolling_std(&values, 13);
        let slow = rolling_std_naive(&values, 13);
        for (f, s) in fast.iter().zip(&slow) {
            assert_relative_eq!(f, s, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn onset_none_on_constant_signal() {
        let s = flat_series(2.0, 300, 3);
        let got = detect_onset(&s, &OnsetConfig::default()).unwrap();
        assert_eq!(got, None);
    }

    #[test]
    fn onset_lands_within_window_of_clean_step() {
        let cfg = OnsetConfig::default();
        let s = step_series(100, 1.0, 400);
        let onset = detect_onset(&s, &cfg).unwrap().expect("step must be detected");
        assert!(
            (100..=100 + cfg.window).contains(&onset),
            "onset {} outside [100, {}]",
            onset,
            100 + cfg.window
        );
        // Cross-check against the brute-force scan over every index.
        let trace = s.channel_mean_trace();
        let (_, baseline_std) = crate::util::mean_std(&trace[..cfg.baseline_len]);
        let expect = rolling_std_naive(&trace, cfg.window)
            .iter()
            .position(|&v| v > cfg.factor * baseline_std)
            .unwrap();
        assert_eq!(onset, expect);
    }

    #[test]
    fn onset_factor_zero_triggers_at_first_variation() {
        let cfg = OnsetConfig { factor: 0.0, ..OnsetConfig::default() };
        let s = step_series(150, 0.5, 400);
        let onset = detect_onset(&s, &cfg).unwrap().unwrap();
        // The first index whose trailing window sees the step is the step
        // itself (windows before it contain only the constant baseline).
        assert_eq!(onset, 150);
    }

    #[test]
    fn onset_translation_covariant_on_noise_free_steps() {
        let cfg = OnsetConfig::default();
        let base = detect_onset(&step_series(120, 2.0, 500), &cfg).unwrap().unwrap();
        for delta in [15usize, 60, 133] {
            let shifted = detect_onset(&step_series(120 + delta, 2.0, 500), &cfg)
                .unwrap()
                .unwrap();
            assert_eq!(shifted, base + delta);
        }
    }

    #[test]
    fn onset_rejects_short_series() {
        let s = flat_series(0.0, 30, 1);
        assert!(matches!(
            detect_onset(&s, &OnsetConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn prefix_features_have_channel_major_layout_and_full_dim() {
        // Two channels with disjoint value ranges make ordering mistakes loud.
        let s = downsample(
            &raw(vec![(0..60).map(|t| t as f64).collect(), (0..60).map(|t| 1000.0 + t as f64).collect()], 10.0),
            1,
        )
        .unwrap();
        let dim = 2 * 5;
        let stats = NormStats::identity(dim);
        let fv = extract_prefix_features(&s, 10, 5, &stats).unwrap();
        assert_eq!(fv.values.len(), dim);
        // Channel 0 baseline mean over [0,10) is 4.5; first value 10 - 4.5.
        assert_relative_eq!(fv.values[0], 5.5, epsilon = 1e-12);
        // Channel 1 occupies the second half of the vector.
        assert_relative_eq!(fv.values[5], 5.5, epsilon = 1e-12);
    }

    #[test]
    fn prefix_unavailable_when_k_exceeds_remaining_length() {
        let s = flat_series(1.0, 100, 2);
        let stats = NormStats::identity(2 * 40);
        let err = extract_prefix_features(&s, 70, 40, &stats).unwrap_err();
        match err {
            Error::PrefixUnavailable { needed, available } => {
                assert_eq!(needed, 40);
                assert_eq!(available, 30);
            }
            other => panic!("expected PrefixUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn zero_variance_dimension_normalizes_to_zero() {
        let batch = vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0]];
        let stats = fit_norm_stats(&batch).unwrap();
        assert_eq!(stats.std[0], 0.0);
        let mut v = vec![3.0, 2.0];
        stats.apply(&mut v).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn norm_stats_single_vector_has_zero_std() {
        let stats = fit_norm_stats(&[vec![1.0, -2.0, 7.5]]).unwrap();
        assert_eq!(stats.std, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn norm_stats_population_convention() {
        let stats = fit_norm_stats(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn norm_stats_match_two_pass_oracle() {
        let mut x = 0.7_f64;
        let batch: Vec<Vec<f64>> = (0..37)
            .map(|_| {
                (0..11)
                    .map(|_| {
                        x = (x * 131.0 + 0.77).sin() * 5.0;
                        x
                    })
                    .collect()
            })
            .collect();
        let stats = fit_norm_stats(&batch).unwrap();
        for d in 0..11 {
            let col: Vec<f64> = batch.iter().map(|v| v[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / col.len() as f64)
                .sqrt();
            assert_relative_eq!(stats.mean[d], mean, epsilon = 1e-12);
            assert_relative_eq!(stats.std[d], std, epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_stats_reject_empty_batch() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(fit_norm_stats(&empty), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn downsample_length_is_floor_division(
            len in 1usize..400,
            window in 1usize..40,
            seed in any::<u64>(),
        ) {
            prop_assume!(len >= window);
            let mut state = seed;
            let ch: Vec<f64> = (0..len)
                .map(|_| {
                    state = crate::util::splitmix64(state);
                    (state % 1000) as f64 / 100.0
                })
                .collect();
            let s = raw(vec![ch], 100.0);
            let d = downsample(&s, window).unwrap();
            prop_assert_eq!(d.len(), len / window);
        }

        #[test]
        fn downsample_preserves_mean_over_complete_windows(
            len in 1usize..300,
            window in 1usize..30,
            seed in any::<u64>(),
        ) {
            prop_assume!(len >= window);
            let mut state = seed;
            let ch: Vec<f64> = (0..len)
                .map(|_| {
                    state = crate::util::splitmix64(state);
                    (state % 2_000) as f64 / 37.0 - 20.0
                })
                .collect();
            let s = raw(vec![ch.clone()], 100.0);
            let d = downsample(&s, window).unwrap();
            let covered = (len / window) * window;
            let lhs: f64 = d.channels[0].iter().sum::<f64>() * window as f64;
            let rhs: f64 = ch[..covered].iter().sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }

        #[test]
        fn prefix_features_always_full_dim_and_finite(
            n_ch in 1usize..5,
            onset in 0usize..40,
            k in 1usize..30,
            seed in any::<u64>(),
        ) {
            let len = 80usize;
            prop_assume!(onset + k <= len);
            let mut state = seed;
            let channels: Vec<Vec<f64>> = (0..n_ch)
                .map(|_| {
                    (0..len)
                        .map(|_| {
                            state = crate::util::splitmix64(state);
                            (state % 5_000) as f64 / 91.0
                        })
                        .collect()
                })
                .collect();
            let s = downsample(&raw(channels, 10.0), 1).unwrap();
            let stats = NormStats::identity(n_ch * k);
            let fv = extract_prefix_features(&s, onset, k, &stats).unwrap();
            prop_assert_eq!(fv.values.len(), n_ch * k);
            prop_assert!(fv.values.iter().all(|v| v.is_finite()));
        }
    }
}
