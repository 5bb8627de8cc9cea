//! Command-line driver: simulate, ingest, evaluate, train, detect, report.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sist_core::config::PipelineConfig;
use sist_core::eval::report::{read_metrics, write_report, write_tables};
use sist_core::eval::{run_cv, CvReport, WITHOUT_LOAD, WITH_LOAD};
use sist_core::features::{write_feature_csv, FeatureCatalog, FeatureExtractor};
use sist_core::ingest::{load_corpus, load_session, write_session};
use sist_core::pipeline::{train_detector, SessionFeatures, TrainedDetector};
use sist_core::synth::{export_corpus, generate_corpus, ExportOptions};
use sist_core::windowing::{class_ratio, write_grid_csv};
use sist_core::Error;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SIST_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

pub const DETECT_HEADER: &str = "session,participant,segment_id,start_s,end_s,valley1_s,peak_s,valley2_s,duration_s,flag";

fn config_help() -> String {
    format!(
        "Configuration keys and defaults (override with --config FILE or --set key=value, dotted keys for nested fields):\n{}\n\nEnvironment: {THREADS_ENV}=N sets the worker thread count.\nExit codes: 0 success, 1 usage or configuration error, 2 data error, 3 internal error.",
        PipelineConfig::default().to_json()
    )
}

#[derive(Debug, Parser)]
#[command(name = "sist", version, about = "Sit-to-stand detection and duration measurement", after_long_help = config_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON config file; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set mrmr_k=10` or `--set simulate.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> sist_core::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus in the ingest formats.
    #[command(after_long_help = config_help())]
    Simulate {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Synchronize every session of a corpus and write the aligned recordings.
    #[command(after_long_help = config_help())]
    Ingest {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also write window grids and feature matrices for the first window spec.
        #[arg(long)]
        features: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run participant-fold cross-validation over every configured window spec.
    #[command(after_long_help = config_help())]
    Evaluate {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "DIR")]
        report: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fit a detector on a whole corpus with the first configured window spec.
    #[command(after_long_help = config_help())]
    Train {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Detect and measure transitions in one session with a saved model.
    #[command(after_long_help = config_help())]
    Detect {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        session: PathBuf,
        /// Segment CSV path; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rebuild the CSV tables from an existing metrics.json.
    #[command(after_long_help = config_help())]
    Report {
        #[arg(long, value_name = "FILE")]
        metrics: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Errors surfaced by commands, with their exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Pipeline(Error::Config(_)) => EXIT_USAGE,
            CliError::Pipeline(e) if e.is_data_error() => EXIT_DATA,
            CliError::Pipeline(_) => EXIT_INTERNAL,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Messages go to `out` and `err`.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = thread_count().and_then(|threads| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
        pool.install(|| execute(&cli.command, out))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Pipeline(Error::Io { path: path.to_path_buf(), source: e })
}

fn say(out: &mut (dyn Write + Send), line: impl AsRef<str>) {
    let _ = writeln!(out, "{}", line.as_ref());
}

pub fn execute(cmd: &Command, out: &mut (dyn Write + Send)) -> CliResult<()> {
    match cmd {
        Command::Simulate { out: dir, config } => cmd_simulate(&config.resolve()?, dir, out),
        Command::Ingest { corpus, out: dir, features, config } => cmd_ingest(&config.resolve()?, corpus, dir, *features, out),
        Command::Evaluate { corpus, report, config } => cmd_evaluate(&config.resolve()?, corpus, report, out),
        Command::Train { corpus, model, config } => cmd_train(&config.resolve()?, corpus, model, out),
        Command::Detect { model, session, out: path, config } => cmd_detect(&config.resolve()?, model, session, path.as_deref(), out),
        Command::Report { metrics, out: dir } => cmd_report(metrics, dir, out),
    }
}

pub fn cmd_simulate(cfg: &PipelineConfig, dir: &Path, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let sessions = generate_corpus(&cfg.simulate)?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    export_corpus(&sessions, dir, &ExportOptions::default())?;
    let spec = cfg.window_specs()?[0];
    let (mut sist, mut stsi, mut pos, mut total) = (0, 0, 0, 0);
    for s in &sessions {
        sist += s.recording.annotations.sist.len();
        stsi += s.recording.annotations.stsi.len();
        let grid = sist_core::windowing::build_grid(&s.recording, &spec)?;
        let (p, n) = class_ratio(&grid)?;
        pos += p;
        total += p + n;
    }
    say(out, format!("sessions: {}", sessions.len()));
    say(out, format!("sit-to-stand events: {sist}"));
    say(out, format!("stand-to-sit events: {stsi}"));
    if total > 0 {
        say(out, format!("positive windows at {}: {pos}/{total} ({:.2}%)", spec.label(), 100.0 * pos as f64 / total as f64));
    }
    say(out, format!("written to {}", dir.display()));
    Ok(())
}

pub fn cmd_ingest(cfg: &PipelineConfig, corpus: &Path, dir: &Path, features: bool, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let sessions = load_corpus(corpus, &cfg.sync)?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut reports = Vec::new();
    let spec = cfg.window_specs()?[0];
    for (rec, sync) in &sessions {
        write_session(&dir.join(format!("{}.csv", rec.session_id)), rec)?;
        if features {
            let ext = FeatureExtractor::new(spec.window_samples(rec.sample_rate), rec.sample_rate)?;
            let f = SessionFeatures::compute(rec, &spec, &ext)?;
            write_grid_csv(&dir.join(format!("{}_windows.csv", rec.session_id)), &f.grid)?;
            write_feature_csv(
                &dir.join(format!("{}_features.csv", rec.session_id)),
                FeatureCatalog::standard(),
                &f.features,
                &f.labels,
            )?;
        }
        say(out, format!("{}: {:.3} s, max drift {:.6} s", rec.session_id, rec.duration_s(), sync.max_abs_drift_s()));
        reports.push(serde_json::json!({ "session_id": rec.session_id, "sync": sync }));
    }
    let path = dir.join("sync_report.json");
    let text = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn print_summary(report: &CvReport, out: &mut (dyn Write + Send)) {
    for s in &report.specs {
        for name in [WITH_LOAD, WITHOUT_LOAD] {
            if let Some(v) = s.variant(name) {
                let m = &v.summary;
                say(
                    out,
                    format!(
                        "{} {name}: accuracy {:.4} f1 {:.4} (sd {}) segments tp {} fp {} missed {}",
                        s.label,
                        m.accuracy.mean,
                        m.f1.mean,
                        m.f1.sd.map_or("n/a".into(), |v| format!("{v:.4}")),
                        m.segments.tp,
                        m.segments.fp,
                        m.segments.missed
                    ),
                );
                if let Some(p) = m.duration_tp.pooled {
                    say(out, format!("  duration tp-only: mae {:.4} s rmse {:.4} s over {}", p.mae_s, p.rmse_s, p.n));
                }
            }
        }
    }
}

pub fn cmd_evaluate(cfg: &PipelineConfig, corpus: &Path, report_dir: &Path, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let sessions: Vec<_> = load_corpus(corpus, &cfg.sync)?.into_iter().map(|(r, _)| r).collect();
    let report = run_cv(&sessions, cfg)?;
    write_report(&report, report_dir)?;
    print_summary(&report, out);
    say(out, format!("report written to {}", report_dir.display()));
    Ok(())
}

pub fn cmd_train(cfg: &PipelineConfig, corpus: &Path, model: &Path, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let sessions: Vec<_> = load_corpus(corpus, &cfg.sync)?.into_iter().map(|(r, _)| r).collect();
    let spec = cfg.window_specs()?[0];
    let fit = train_detector(&sessions, &spec, cfg)?;
    fit.detector.save(model)?;
    let names: Vec<&str> = fit.detector.selected.iter().map(|&i| FeatureCatalog::standard().entries()[i].name.as_str()).collect();
    say(out, format!("trained {} trees on {} rows at {}", fit.detector.ensemble.trees.len(), fit.counts.total(), spec.label()));
    say(out, format!("selected features: {}", names.join(", ")));
    say(out, format!("model written to {}", model.display()));
    Ok(())
}

/// Renders the segment report for one session.
pub fn detect_csv(det: &TrainedDetector, session: &Path, cfg: &PipelineConfig) -> CliResult<String> {
    let (rec, _) = load_session(session, &cfg.sync)?;
    let d = det.detect(&rec)?;
    let fs = rec.sample_rate;
    let mut text = String::from(DETECT_HEADER);
    text.push('\n');
    for (i, s) in d.segments.iter().enumerate() {
        let m = s.measured.expect("detect measures every segment");
        text.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            rec.session_id,
            rec.participant_id,
            i,
            s.start_idx as f64 / fs,
            s.end_idx as f64 / fs,
            m.valley1_idx as f64 / fs,
            m.peak_idx as f64 / fs,
            m.valley2_idx as f64 / fs,
            m.duration_s,
            if m.degenerate { "degenerate" } else { "ok" }
        ));
    }
    Ok(text)
}

pub fn cmd_detect(cfg: &PipelineConfig, model: &Path, session: &Path, path: Option<&Path>, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let det = TrainedDetector::load(model)?;
    let text = detect_csv(&det, session, cfg)?;
    match path {
        Some(p) => fs::write(p, &text).map_err(|e| io_err(p, e))?,
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(())
}

pub fn cmd_report(metrics: &Path, dir: &Path, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let report = read_metrics(metrics)?;
    write_tables(&report, dir)?;
    print_summary(&report, out);
    Ok(())
}
