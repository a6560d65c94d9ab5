//! Synthetic gas-plume dataset generation and CSV ingestion.
//!
//! The generator produces multichannel sensor recordings: a per-channel
//! constant baseline, a saturating-exponential response whose shape is a
//! fixed per-(class, channel) signature, an amplitude attenuation that grows
//! with the source-distance index, and AR(1) noise standing in for plume
//! turbulence. Everything is a pure function of the seed, so two runs with
//! the same config produce bit-identical datasets.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::RawSeries;
use crate::util;

/// Default class names; the first `n_classes` of these are used, and extra
/// classes beyond ten get generated names.
const GAS_NAMES: [&str; 10] = [
    "carbon monoxide",
    "ammonia",
    "methane",
    "acetaldehyde",
    "benzene",
    "butanol",
    "ethylene",
    "methanol",
    "toluene",
    "acetone",
];

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_classes: usize,
    pub n_channels: usize,
    /// Number of source-distance positions; amplitude falls off with index.
    pub n_locations: usize,
    /// Recordings per (class, location) pair.
    pub series_per_class_location: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// AR(1) coefficient of the noise process, in [0, 1).
    pub noise_rho: f64,
    /// Stationary standard deviation of the noise process.
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_classes: 10,
            n_channels: 8,
            n_locations: 45,
            series_per_class_location: 1,
            duration_s: 180.0,
            rate_hz: 100.0,
            noise_rho: 0.995,
            noise_amp: 0.35,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid_argument("n_classes must be >= 2"));
        }
        if self.n_channels == 0 {
            return Err(Error::invalid_argument("n_channels must be >= 1"));
        }
        if self.n_locations == 0 {
            return Err(Error::invalid_argument("n_locations must be >= 1"));
        }
        if self.series_per_class_location == 0 {
            return Err(Error::invalid_argument("series_per_class_location must be >= 1"));
        }
        if !(self.duration_s * self.rate_hz >= 600.0) {
            return Err(Error::invalid_argument(
                "duration_s * rate_hz must be at least 600 samples",
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rho) {
            return Err(Error::invalid_argument("noise_rho must be in [0, 1)"));
        }
        if !(self.noise_amp >= 0.0) {
            return Err(Error::invalid_argument("noise_amp must be >= 0"));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes)
            .map(|c| match GAS_NAMES.get(c) {
                Some(name) => (*name).to_string(),
                None => format!("gas-{c}"),
            })
            .collect()
    }
}

/// Response shape of one (class, channel) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    /// Response amplitude.
    pub amplitude: f64,
    /// Rise time constant, seconds.
    pub tau_s: f64,
    /// Delay from recording start to gas arrival, seconds.
    pub t0_s: f64,
}

/// A labeled collection of recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<RawSeries>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn n_channels(&self) -> usize {
        self.items.first().map_or(0, |s| s.n_channels())
    }

    /// Count of items per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for item in &self.items {
            if let Some(l) = item.label {
                if l < counts.len() {
                    counts[l] += 1;
                }
            }
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::EmptyDataset("dataset has no items".into()));
        }
        let n_ch = self.items[0].n_channels();
        for (i, item) in self.items.iter().enumerate() {
            if item.label.is_none() {
                return Err(Error::invalid_argument(format!("item {i} has no label")));
            }
            if item.n_channels() != n_ch {
                return Err(Error::invalid_argument(format!(
                    "item {i} has {} channels, expected {n_ch}",
                    item.n_channels()
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for item in &self.items {
            seen.insert(item.label.unwrap());
        }
        if seen.len() < 2 {
            return Err(Error::invalid_argument("dataset must contain at least 2 classes"));
        }
        Ok(())
    }
}

/// Attenuation applied at location index `loc`: 1 at the closest position,
/// falling linearly to 0.35 at the farthest.
fn locscale(loc: usize, n_locations: usize) -> f64 {
    if n_locations <= 1 {
        1.0
    } else {
        1.0 - 0.65 * loc as f64 / (n_locations - 1) as f64
    }
}

/// Draw the fixed per-(class, channel) response signatures and per-channel
/// baselines. These depend only on the seed and the counts, never on which
/// series get generated.
fn draw_signatures(cfg: &GenConfig) -> (Vec<f64>, Vec<Vec<ClassSignature>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(util::subseed(cfg.seed, &[0]));
    let baselines: Vec<f64> = (0..cfg.n_channels).map(|_| rng.random_range(1.0..5.0)).collect();
    let signatures = (0..cfg.n_classes)
        .map(|_| {
            (0..cfg.n_channels)
                .map(|_| ClassSignature {
                    amplitude: rng.random_range(0.5..3.0),
                    tau_s: rng.random_range(2.0..15.0),
                    t0_s: rng.random_range(6.0..9.0),
                })
                .collect()
        })
        .collect();
    (baselines, signatures)
}

fn generate_one(
    cfg: &GenConfig,
    baselines: &[f64],
    signatures: &[Vec<ClassSignature>],
    class: usize,
    location: usize,
    replicate: usize,
) -> RawSeries {
    let n_samples = (cfg.duration_s * cfg.rate_hz).round() as usize;
    let scale = locscale(location, cfg.n_locations);
    let mut rng = ChaCha8Rng::seed_from_u64(util::subseed(
        cfg.seed,
        &[1, class as u64, location as u64, replicate as u64],
    ));
    // Stationary AR(1): innovation std chosen so the process std is noise_amp.
    let sigma_e = cfg.noise_amp * (1.0 - cfg.noise_rho * cfg.noise_rho).sqrt();
    let innovation = Normal::new(0.0, sigma_e.max(f64::MIN_POSITIVE)).unwrap();
    let start = Normal::new(0.0, cfg.noise_amp.max(f64::MIN_POSITIVE)).unwrap();
    let channels = (0..cfg.n_channels)
        .map(|ch| {
            let sig = &signatures[class][ch];
            let mut noise = if cfg.noise_amp > 0.0 { start.sample(&mut rng) } else { 0.0 };
            (0..n_samples)
                .map(|i| {
                    let t = i as f64 / cfg.rate_hz;
                    let response = if t >= sig.t0_s {
                        sig.amplitude * (1.0 - (-(t - sig.t0_s) / sig.tau_s).exp()) * scale
                    } else {
                        0.0
                    };
                    if cfg.noise_amp > 0.0 {
                        noise = cfg.noise_rho * noise + innovation.sample(&mut rng);
                    }
                    baselines[ch] + response + noise
                })
                .collect()
        })
        .collect();
    RawSeries {
        channels,
        sample_rate_hz: cfg.rate_hz,
        label: Some(class),
        location: Some(location),
    }
}

/// Generate the full dataset described by `cfg`. Items are ordered by
/// (class, location, replicate). Each series draws from its own RNG stream
/// derived from (seed, class, location, replicate), so the result does not
/// depend on scheduling.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (baselines, signatures) = draw_signatures(cfg);
    let mut coords = Vec::new();
    for class in 0..cfg.n_classes {
        for location in 0..cfg.n_locations {
            for replicate in 0..cfg.series_per_class_location {
                coords.push((class, location, replicate));
            }
        }
    }
    let items: Vec<RawSeries> = coords
        .par_iter()
        .map(|&(c, l, r)| generate_one(cfg, &baselines, &signatures, c, l, r))
        .collect();
    Ok(Dataset { items, class_names: cfg.class_names() })
}

const MANIFEST_NAME: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "relative_path,label,location";

/// Write every series as its own CSV under `dir/series/` plus a manifest
/// listing them. Returns the manifest path.
pub fn write_csv_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    dataset.validate()?;
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir)
        .map_err(|e| Error::io(series_dir.display().to_string(), e))?;

    let n_ch = dataset.n_channels();
    let mut manifest = String::new();
    manifest.push_str("# dataset manifest v1\n");
    manifest.push_str(&format!(
        "# rate_hz = {}\n",
        fmt_float(dataset.items[0].sample_rate_hz)
    ));
    manifest.push_str(&format!("# channels = {n_ch}\n"));
    manifest.push_str(&format!("# classes = {}\n", dataset.class_names.join(",")));
    manifest.push_str(MANIFEST_HEADER);
    manifest.push('\n');

    for (idx, item) in dataset.items.iter().enumerate() {
        let label = item.label.expect("validated above");
        let rel = format!("series/item{idx:04}_c{label:02}.csv");
        let path = dir.join(&rel);
        write_series_csv(item, &path)?;
        let loc = item.location.map_or(String::new(), |l| l.to_string());
        manifest.push_str(&format!("{rel},{},{loc}\n", dataset.class_names[label]));
    }

    let manifest_path = dir.join(MANIFEST_NAME);
    fs::write(&manifest_path, manifest)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(manifest_path)
}

/// Fixed float format used in CSV files; wide enough that a round-trip
/// changes values by less than 1e-9.
fn fmt_float(v: f64) -> String {
    format!("{v:.9}")
}

fn write_series_csv(series: &RawSeries, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(series.len() * series.n_channels() * 14);
    out.extend_from_slice(b"t");
    for ch in 0..series.n_channels() {
        let _ = write!(out, ",ch{ch}");
    }
    out.push(b'\n');
    for i in 0..series.len() {
        let t = i as f64 / series.sample_rate_hz;
        let _ = write!(out, "{t:.4}");
        for ch in &series.channels {
            let _ = write!(out, ",{}", fmt_float(ch[i]));
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load a dataset previously written by [`write_csv_dataset`] (or assembled
/// by hand in the same layout). The manifest's directory anchors the
/// relative paths.
pub fn load_csv_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest_name = manifest_path.display().to_string();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut rate_hz: Option<f64> = None;
    let mut n_channels: Option<usize> = None;
    let mut class_names: Option<Vec<String>> = None;
    let mut records: Vec<(String, String, Option<usize>, usize)> = Vec::new();
    let mut saw_header = false;

    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "rate_hz" => {
                        rate_hz = Some(value.parse().map_err(|_| Error::Format {
                            file: manifest_name.clone(),
                            row,
                            message: format!("bad rate_hz value {value:?}"),
                        })?)
                    }
                    "channels" => {
                        n_channels = Some(value.parse().map_err(|_| Error::Format {
                            file: manifest_name.clone(),
                            row,
                            message: format!("bad channels value {value:?}"),
                        })?)
                    }
                    "classes" => {
                        class_names =
                            Some(value.split(',').map(|s| s.trim().to_string()).collect())
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if line != MANIFEST_HEADER {
                return Err(Error::Format {
                    file: manifest_name,
                    row,
                    message: format!("expected header {MANIFEST_HEADER:?}, found {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format {
                file: manifest_name,
                row,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let location = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse().map_err(|_| Error::Format {
                file: manifest_name.clone(),
                row,
                message: format!("bad location {:?}", fields[2]),
            })?)
        };
        records.push((fields[0].to_string(), fields[1].to_string(), location, row));
    }

    let rate_hz = rate_hz.ok_or_else(|| Error::Format {
        file: manifest_name.clone(),
        row: 0,
        message: "missing `# rate_hz = ...` line".into(),
    })?;
    let n_channels = n_channels.ok_or_else(|| Error::Format {
        file: manifest_name.clone(),
        row: 0,
        message: "missing `# channels = ...` line".into(),
    })?;
    let class_names = class_names.ok_or_else(|| Error::Format {
        file: manifest_name.clone(),
        row: 0,
        message: "missing `# classes = ...` line".into(),
    })?;
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!("{manifest_name} lists no series")));
    }

    let items = records
        .into_iter()
        .map(|(rel, label_str, location, row)| {
            let label = class_names.iter().position(|n| *n == label_str).ok_or_else(|| {
                Error::Format {
                    file: manifest_name.clone(),
                    row,
                    message: format!("unknown label {label_str:?}"),
                }
            })?;
            let path = base.join(&rel);
            read_series_csv(&path, n_channels, rate_hz, Some(label), location)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset { items, class_names })
}

/// Parse one series file: header `t,ch0,...`, then one row per sample.
pub fn read_series_csv(
    path: &Path,
    n_channels: usize,
    rate_hz: f64,
    label: Option<usize>,
    location: Option<usize>,
) -> Result<RawSeries> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path.display().to_string();
    let expected_cols = n_channels + 1;
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); n_channels];

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) => {
            let cols = header.split(',').count();
            if cols != expected_cols {
                return Err(Error::Format {
                    file: name,
                    row: 1,
                    message: format!(
                        "expected {expected_cols} columns (t plus {n_channels} channels), found {cols}"
                    ),
                });
            }
        }
        None => {
            return Err(Error::Format { file: name, row: 1, message: "file is empty".into() })
        }
    }
    for (lineno, line) in lines {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        // First column is the timestamp; the manifest rate is authoritative,
        // so its value is only checked for being a number.
        let t_field = fields.next().unwrap_or("");
        t_field.parse::<f64>().map_err(|_| Error::Format {
            file: name.clone(),
            row,
            message: format!("bad timestamp {t_field:?}"),
        })?;
        let mut count = 0usize;
        for (ch, field) in fields.enumerate() {
            if ch >= n_channels {
                count += 1;
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Format {
                file: name.clone(),
                row,
                message: format!("bad value {field:?} in column ch{ch}"),
            })?;
            channels[ch].push(v);
            count += 1;
        }
        if count != n_channels {
            return Err(Error::Format {
                file: name,
                row,
                message: format!("expected {expected_cols} columns, found {}", count + 1),
            });
        }
    }
    if channels[0].is_empty() {
        return Err(Error::Format { file: name, row: 2, message: "no data rows".into() });
    }
    RawSeries::new(channels, rate_hz, label, location)
}
