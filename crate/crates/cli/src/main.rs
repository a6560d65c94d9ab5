//! `forefront`: generate synthetic gas-sensor datasets, train the staged
//! agreement cascade, cross-validate it against posterior-threshold
//! baselines, and replay single recordings stage by stage.
//!
//! Exit codes are stable API: 0 ok, 2 config error, 3 io error, 4 training
//! failure, 5 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use forefront::cascade::{classify_raw, load_model, save_model, train_forefront, StageSummary};
use forefront::datagen::{generate_dataset, load_csv_dataset, read_series_csv, write_csv_dataset};
use forefront::eval::{evaluate_methods, evaluate_with_surface, stratified_kfold, Method, StageRow};
use forefront::reject::Decision;
use forefront::Error;

use config::RunConfig;

/// Early time-series classification with a reject option: staged pairs of
/// diverse kernel classifiers over growing signal prefixes.
#[derive(Parser)]
#[command(name = "forefront", version, about)]
struct Cli {
    /// TOML run configuration; defaults apply for every omitted field.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the command's seed (generation seed for `gen`, fold seed
    /// for `eval`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts (default "out", or the config's
    /// out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV files plus a
    /// manifest.
    Gen,
    /// Train the staged cascade from a dataset manifest and save the model.
    Train {
        /// Dataset manifest (default <out>/dataset/manifest.csv).
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Where to write the model (default <out>/model.json).
        #[arg(long, value_name = "PATH")]
        model_out: Option<PathBuf>,
    },
    /// Cross-validate the cascade against the threshold baselines and
    /// write report CSVs.
    Eval {
        /// Dataset manifest (default <out>/dataset/manifest.csv).
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Replay one series through a trained model, printing each stage's
    /// decision.
    Stream {
        /// Saved model file.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Series CSV (header `t,ch0,...`).
        #[arg(long, value_name = "PATH")]
        series: PathBuf,
    },
    /// Pretty-print a previously written evaluation report.
    Report {
        /// Directory holding report.csv (default the output directory).
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
}

/// An error already mapped to its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

/// Map a library error to an exit code. IO problems are always 3 and
/// training failures 4; `invalid_code` decides where argument errors go
/// (2 when the value came from config, 5 when it described the data), and
/// everything else is a data error.
fn lib_err(e: Error, invalid_code: u8) -> CliError {
    let code = match &e {
        Error::Io { .. } => 3,
        Error::Training { .. } => 4,
        Error::InvalidArgument(_) => invalid_code,
        _ => 5,
    };
    CliError::new(code, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out_dir = cli.out.clone().unwrap_or_else(|| cfg.out_dir());
    match cli.command {
        Command::Gen => cmd_gen(&cfg, cli.seed, &out_dir),
        Command::Train { manifest, model_out } => {
            let manifest = manifest.unwrap_or_else(|| default_manifest(&out_dir));
            let model_out = model_out.unwrap_or_else(|| out_dir.join("model.json"));
            cmd_train(&cfg, &manifest, &model_out)
        }
        Command::Eval { manifest } => {
            let manifest = manifest.unwrap_or_else(|| default_manifest(&out_dir));
            cmd_eval(&cfg, cli.seed, &manifest, &out_dir)
        }
        Command::Stream { model, series } => cmd_stream(&model, &series),
        Command::Report { dir } => cmd_report(&dir.unwrap_or(out_dir)),
    }
}

fn default_manifest(out_dir: &Path) -> PathBuf {
    out_dir.join("dataset").join("manifest.csv")
}

/// Seconds for humans: no decimals when whole, one otherwise.
fn fmt_secs(t: f64) -> String {
    if (t - t.round()).abs() < 1e-9 {
        format!("{:.0}", t)
    } else {
        format!("{:.1}", t)
    }
}

fn cmd_gen(cfg: &RunConfig, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    let gen = cfg.gen_config(seed);
    let dataset = generate_dataset(&gen).map_err(|e| lib_err(e, 2))?;
    let dir = out_dir.join("dataset");
    let manifest = write_csv_dataset(&dataset, &dir).map_err(|e| lib_err(e, 3))?;
    println!(
        "dataset: {} series, {} classes, {} channels, {} locations",
        dataset.items.len(),
        dataset.class_names.len(),
        dataset.n_channels(),
        gen.n_locations
    );
    println!(
        "         {} s at {} Hz, noise amp {}, seed {}",
        fmt_secs(gen.duration_s),
        gen.rate_hz,
        gen.noise_amp,
        gen.seed
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

/// One log line per stage: deadline, prefix length, both selected grid
/// members with their hyperparameters and out-of-fold accuracy, and the
/// pair's double-fault rate.
fn stage_line(index: usize, s: &StageSummary) -> String {
    format!(
        "stage {} @ {}s (k={}): [{} acc={:.4}] + [{} acc={:.4}], DF={:.4}",
        index + 1,
        fmt_secs(s.time_s),
        s.k,
        s.first_id,
        s.first_accuracy,
        s.second_id,
        s.second_accuracy,
        s.df
    )
}

fn cmd_train(cfg: &RunConfig, manifest: &Path, model_out: &Path) -> Result<(), CliError> {
    let dataset = load_csv_dataset(manifest).map_err(|e| lib_err(e, 5))?;
    let rate = dataset.items.first().map(|i| i.sample_rate_hz).unwrap_or(100.0);
    let plan = cfg.stage_plan(rate)?;
    let options = cfg.train_options()?;

    println!(
        "training on {} series ({} classes, {} channels), grid of {} candidates",
        dataset.items.len(),
        dataset.class_names.len(),
        dataset.n_channels(),
        options.grid.len()
    );
    let started = Instant::now();
    let outcome =
        train_forefront(&dataset, &plan, &options).map_err(|e| CliError::new(4, e.to_string()))?;
    if outcome.report.n_excluded > 0 {
        println!(
            "warning: excluded {} series too short for the final stage",
            outcome.report.n_excluded
        );
    }
    for (i, s) in outcome.report.stages.iter().enumerate() {
        println!("{}", stage_line(i, s));
    }
    if let Some(parent) = model_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::new(3, format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    save_model(&outcome.model, model_out).map_err(|e| lib_err(e, 3))?;
    println!("model: {} ({} stages, trained in {:.1}s)",
        model_out.display(),
        outcome.model.stages.len(),
        started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_eval(
    cfg: &RunConfig,
    seed: Option<u64>,
    manifest: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let dataset = load_csv_dataset(manifest).map_err(|e| lib_err(e, 5))?;
    let rate = dataset.items.first().map(|i| i.sample_rate_hz).unwrap_or(100.0);
    let plan = cfg.stage_plan(rate)?;
    let options = cfg.eval_options()?;
    let methods = cfg.methods();
    let folds = stratified_kfold(&dataset, cfg.k_folds(), cfg.fold_seed(seed))
        .map_err(|e| lib_err(e, 2))?;

    println!(
        "evaluating {} methods, {}-fold CV over {} series",
        methods.len(),
        cfg.k_folds(),
        dataset.items.len()
    );
    let started = Instant::now();
    let with_locations =
        cfg.location_surface() && dataset.items.iter().all(|i| i.location.is_some());
    let (report, surface) = if with_locations {
        let eval =
            evaluate_with_surface(&dataset, &plan, &methods, &folds, &options, Method::Forefront)
                .map_err(|e| lib_err(e, 4))?;
        (eval.report, eval.surface)
    } else {
        let report = evaluate_methods(&dataset, &plan, &methods, &folds, &options)
            .map_err(|e| lib_err(e, 4))?;
        (report, None)
    };

    let written =
        forefront::eval::write_report_files(&report, out_dir).map_err(|e| lib_err(e, 3))?;
    let mut paths: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    if let Some(surface) = &surface {
        let path = out_dir.join("locations.csv");
        std::fs::write(&path, surface.to_csv())
            .map_err(|e| CliError::new(3, format!("cannot write {}: {e}", path.display())))?;
        for note in &surface.notes {
            println!("note: {note}");
        }
        paths.push(path.display().to_string());
    }
    if report.n_skipped > 0 {
        println!("note: {} series skipped (too short to evaluate)", report.n_skipped);
    }
    print!("{}", render_report(&report.rows));
    println!("wrote: {}", paths.join(", "));
    println!("evaluated in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_stream(model_path: &Path, series_path: &Path) -> Result<(), CliError> {
    let model = load_model(model_path).map_err(|e| lib_err(e, 5))?;
    let raw_rate = model.plan.effective_rate_hz() * model.prep.downsample_window as f64;
    let series = read_series_csv(series_path, model.n_channels, raw_rate, None, None)
        .map_err(|e| lib_err(e, 5))?;
    let trace = classify_raw(&model, &series).map_err(|e| lib_err(e, 5))?;

    let name = |label: usize| {
        model.class_names.get(label).cloned().unwrap_or_else(|| label.to_string())
    };
    for step in &trace.steps {
        match step.decision {
            Decision::Accept(label) => println!(
                "t={}s stage {}: ACCEPT label={} decided_at={}s",
                fmt_secs(step.time_s),
                step.stage + 1,
                name(label),
                fmt_secs(step.time_s)
            ),
            Decision::Reject => {
                println!("t={}s stage {}: reject", fmt_secs(step.time_s), step.stage + 1)
            }
        }
    }
    if trace.forced {
        let label = trace.final_label.expect("forced traces carry a label");
        let at = trace.exit_time_s().unwrap_or(0.0);
        println!("final: label={} decided_at={}s FORCED", name(label), fmt_secs(at));
    } else if trace.final_label.is_none() {
        println!("final: REJECT (no stage agreed)");
    }
    Ok(())
}

/// Parse report.csv back into rows. Accepts exactly the format
/// `write_report_files` emits.
fn parse_report_csv(text: &str) -> Result<Vec<StageRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != forefront::eval::REPORT_CSV_HEADER {
                return Err(CliError::new(5, format!("unexpected report header {line:?}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::new(
                5,
                format!("report row {} has {} fields, expected 7", i + 1, fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .map_err(|_| CliError::new(5, format!("report row {}: bad number {s:?}", i + 1)))
        };
        rows.push(StageRow {
            method: fields[0].to_string(),
            stage_s: num(fields[1])?,
            cond_accuracy: num(fields[2])?,
            coverage: num(fields[3])?,
            forced_frac: num(fields[4])?,
            mean_earliness_s: num(fields[5])?,
            emp_risk: num(fields[6])?,
            full_accuracy: f64::NAN,
            mean_earliness_excl_forced_s: f64::NAN,
        })
    }
    Ok(rows)
}

/// Render rows as per-metric matrices: methods down, stage deadlines
/// across.
fn render_report(rows: &[StageRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut stages: Vec<f64> = Vec::new();
    for row in rows {
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
        if !stages.iter().any(|s| s == &row.stage_s) {
            stages.push(row.stage_s);
        }
    }
    let cell = |method: &str, stage: f64| {
        rows.iter().find(|r| r.method == method && r.stage_s == stage)
    };
    let name_width = methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6);

    let mut out = String::new();
    let metrics: [(&str, fn(&StageRow) -> f64); 3] = [
        ("conditional accuracy (accepted samples)", |r| r.cond_accuracy),
        ("coverage (fraction accepted)", |r| r.coverage),
        ("empirical risk", |r| r.emp_risk),
    ];
    for (title, pick) in metrics {
        out.push_str(title);
        out.push('\n');
        out.push_str(&format!("{:<name_width$}", "method"));
        for s in &stages {
            out.push_str(&format!(" {:>8}", format!("{}s", fmt_secs(*s))));
        }
        out.push('\n');
        for method in &methods {
            out.push_str(&format!("{method:<name_width$}"));
            for s in &stages {
                match cell(method, *s) {
                    Some(row) => out.push_str(&format!(" {:>8.4}", pick(row))),
                    None => out.push_str(&format!(" {:>8}", "-")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn cmd_report(dir: &Path) -> Result<(), CliError> {
    let path = dir.join("report.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::new(3, format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_report_csv(&text)?;
    print!("{}", render_report(&rows));
    Ok(())
}
