//! Command-line front end: gen, window, train, score, eval, sweep, replay.
//!
//! Exit codes: 0 success, 2 usage/config/data error, 1 internal failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sewer_anomaly::pipeline::{
    all_windows, chronological_split, evaluate_windows, decide_windows, reference_features,
    train_detector, Composition, DetectorConfig, DetectorKind, ModelDocument, FORMAT_VERSION,
};
use sewer_anomaly::reading::{format_hour, parse_csv, segment_series_from, write_csv, SeriesSegment};
use sewer_anomaly::sweep::{render_table, sweep};
use sewer_anomaly::synth::{generate, GenConfig};
use sewer_anomaly::window::{WindowConfig, WindowSample};
use sewer_anomaly::Error;

#[derive(Parser)]
#[command(name = "sewer-anomaly", version, about = "Early anomaly detection for sewer flowmeter series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic series from a JSON config.
    #[command(alias = "generate")]
    Gen {
        config: PathBuf,
        output: PathBuf,
    },
    /// Write windowed samples as CSV (features..., label).
    Window {
        data: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Fit a detector on the clean normal windows of a data file.
    Train {
        data: PathBuf,
        model: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, value_enum, default_value_t = DetectorArg::Ensemble)]
        detector: DetectorArg,
        #[command(flatten)]
        tuning: TuningArgs,
        /// Which chronological part of each segment to train on.
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Score every window of a data file with a saved model.
    Score {
        model: PathBuf,
        data: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Evaluate a saved model against the labels of a data file.
    #[command(alias = "evaluate")]
    Eval {
        model: PathBuf,
        data: PathBuf,
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Refit and evaluate the ensemble over a grid of window lengths.
    Sweep {
        data: PathBuf,
        output: PathBuf,
        /// Comma-separated history lengths, e.g. 5,10,15
        #[arg(long)]
        n_grid: String,
        /// Comma-separated future lengths, e.g. 5,6,8
        #[arg(long)]
        p_grid: String,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Re-run the command recorded in a run manifest.
    Replay { manifest: PathBuf },
}

#[derive(Args, Clone, Copy, Serialize)]
struct WindowArgs {
    #[arg(long, default_value_t = 5)]
    n_history: usize,
    #[arg(long, default_value_t = 5)]
    p_future: usize,
}

#[derive(Args, Clone)]
struct TuningArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with detector hyperparameters; missing fields take defaults.
    #[arg(long)]
    detector_config: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum DetectorArg {
    Ocsvm,
    Iforest,
    Lof,
    Ensemble,
}

impl From<DetectorArg> for DetectorKind {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Ocsvm => DetectorKind::Ocsvm,
            DetectorArg::Iforest => DetectorKind::Iforest,
            DetectorArg::Lof => DetectorKind::Lof,
            DetectorArg::Ensemble => DetectorKind::Ensemble,
        }
    }
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    /// Every window.
    All,
    /// First 70% of each segment's windows.
    Train,
    /// Last 30% of each segment's windows.
    Eval,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize, Deserialize)]
struct RunManifest {
    format_version: u32,
    command: String,
    tool_version: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    /// Full argument vector; `replay` parses it again.
    args: Vec<String>,
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn load_segments(path: &Path) -> CliResult<Vec<SeriesSegment>> {
    let text = read_text(path)?;
    let readings = parse_csv(text.as_bytes())?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    Ok(segment_series_from(&source, &readings))
}

fn select_windows(segments: &[SeriesSegment], cfg: WindowConfig, split: SplitArg) -> Vec<WindowSample> {
    match split {
        SplitArg::All => all_windows(segments, cfg),
        SplitArg::Train => chronological_split(segments, cfg).train,
        SplitArg::Eval => chronological_split(segments, cfg).eval,
    }
}

fn detector_config(tuning: &TuningArgs) -> CliResult<DetectorConfig> {
    let mut cfg = match &tuning.detector_config {
        Some(path) => serde_json::from_str::<DetectorConfig>(&read_text(path)?)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?,
        None => DetectorConfig::default(),
    };
    cfg.seed = tuning.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_grid(name: &str, text: &str) -> CliResult<Vec<usize>> {
    let values: Vec<usize> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Failure::data(format!("--{name}: `{s}` is not a positive integer")))
        })
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(Failure::data(format!("--{name} must list at least one value")));
    }
    Ok(values)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_manifest(
    primary_output: &Path,
    command: &str,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
    args: &[String],
) -> CliResult<()> {
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        command: command.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed,
        config,
        inputs: inputs.iter().map(|p| path_str(p)).collect(),
        outputs: outputs.iter().map(|p| path_str(p)).collect(),
        args: args.to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::internal(e.to_string()))?;
    write_text(&manifest_path(primary_output), &text)
}

fn windows_csv(windows: &[WindowSample], n_history: usize) -> String {
    let mut header: Vec<String> = (1..=n_history)
        .flat_map(|t| [format!("flow_{t}"), format!("level_{t}"), format!("rate_{t}")])
        .collect();
    header.push("label".into());
    let mut out = header.join(",");
    out.push('\n');
    for w in windows {
        let mut cells: Vec<String> = w.features.iter().map(f64::to_string).collect();
        cells.push(w.label.as_str().into());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn run(command: Command, args: &[String]) -> CliResult<()> {
    match command {
        Command::Gen { config, output } => {
            let cfg: GenConfig = serde_json::from_str(&read_text(&config)?)
                .map_err(|e| Failure::data(format!("{}: {e}", config.display())))?;
            let readings = generate(&cfg)?;
            let mut buf = Vec::new();
            write_csv(&readings, &mut buf)?;
            fs::write(&output, buf).map_err(|e| Failure::internal(e.to_string()))?;
            let resolved = serde_json::to_value(&cfg).map_err(|e| Failure::internal(e.to_string()))?;
            write_manifest(&output, "gen", Some(cfg.seed), resolved, &[&config], &[&output], args)?;
            eprintln!("wrote {} readings to {}", readings.len(), output.display());
        }
        Command::Window {
            data,
            output,
            window,
            split,
        } => {
            let cfg = WindowConfig::new(window.n_history, window.p_future)?;
            let windows = select_windows(&load_segments(&data)?, cfg, split);
            write_text(&output, &windows_csv(&windows, cfg.n_history))?;
            let config = json!({ "window": cfg, "split": split });
            write_manifest(&output, "window", None, config, &[&data], &[&output], args)?;
            eprintln!("wrote {} windows to {}", windows.len(), output.display());
        }
        Command::Train {
            data,
            model,
            window,
            detector,
            tuning,
            split,
        } => {
            let cfg = WindowConfig::new(window.n_history, window.p_future)?;
            let det_cfg = detector_config(&tuning)?;
            let segments = load_segments(&data)?;
            let windows = select_windows(&segments, cfg, split);
            if windows.is_empty() {
                return Err(Failure::data(format!(
                    "no windows: no segment in {} spans N+P = {} readings",
                    data.display(),
                    cfg.n_history + cfg.p_future
                )));
            }
            let reference = reference_features(&windows);
            let kind = DetectorKind::from(detector);
            let trained = train_detector(kind, &reference, &det_cfg)?;
            let doc = ModelDocument::new(cfg, trained);
            write_text(&model, &doc.to_json()?)?;
            let config = json!({
                "window": cfg,
                "detector": kind,
                "split": split,
                "detector_config": det_cfg,
            });
            write_manifest(&model, "train", Some(det_cfg.seed), config, &[&data], &[&model], args)?;
            eprintln!(
                "trained {kind} on {} of {} windows; model written to {}",
                reference.len(),
                windows.len(),
                model.display()
            );
        }
        Command::Score {
            model,
            data,
            output,
            split,
        } => {
            let doc = ModelDocument::from_json(&read_text(&model)?)?;
            let windows = select_windows(&load_segments(&data)?, doc.window, split);
            let decisions = decide_windows(&doc.detector, &windows)?;
            let ensemble = doc.detector.kind() == DetectorKind::Ensemble;
            let mut out = String::from("source_id,day,hour,label,score,verdict");
            if ensemble {
                out.push_str(",ocsvm,iforest,lof");
            }
            out.push('\n');
            for (w, d) in windows.iter().zip(&decisions) {
                let score = d.score.map(|s| s.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}",
                    w.anchor.source_id,
                    w.anchor.day,
                    format_hour(w.anchor.time_of_day),
                    w.label.as_str(),
                    score,
                    d.verdict.as_str()
                ));
                if let Some(m) = d.members {
                    out.push_str(&format!(
                        ",{},{},{}",
                        m.ocsvm.as_str(),
                        m.iforest.as_str(),
                        m.lof.as_str()
                    ));
                }
                out.push('\n');
            }
            write_text(&output, &out)?;
            let config = json!({ "window": doc.window, "detector": doc.detector.kind(), "split": split });
            write_manifest(&output, "score", None, config, &[&model, &data], &[&output], args)?;
        }
        Command::Eval {
            model,
            data,
            report,
            split,
        } => {
            let doc = ModelDocument::from_json(&read_text(&model)?)?;
            let windows = select_windows(&load_segments(&data)?, doc.window, split);
            if windows.is_empty() {
                return Err(Failure::data("no windows to evaluate"));
            }
            let evaluation = evaluate_windows(&doc.detector, &windows)?;
            let body = json!({
                "format_version": FORMAT_VERSION,
                "window": doc.window,
                "split": split,
                "composition": Composition::of(&windows),
                "evaluation": evaluation,
            });
            let text = serde_json::to_string_pretty(&body).map_err(|e| Failure::internal(e.to_string()))?;
            write_text(&report, &text)?;
            let config = json!({ "window": doc.window, "detector": doc.detector.kind(), "split": split });
            write_manifest(&report, "eval", None, config, &[&model, &data], &[&report], args)?;
            for (name, r) in &evaluation.reports {
                println!(
                    "{name:>9}  precision {:.4}  recall {:.4}  f1 {:.4}  (tp {} fp {} fn {} tn {})",
                    r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_, r.tn
                );
            }
        }
        Command::Sweep {
            data,
            output,
            n_grid,
            p_grid,
            tuning,
        } => {
            let ns = parse_grid("n-grid", &n_grid)?;
            let ps = parse_grid("p-grid", &p_grid)?;
            let det_cfg = detector_config(&tuning)?;
            let rows = sweep(&load_segments(&data)?, &ns, &ps, &det_cfg)?;
            let table = render_table(&rows);
            let body = json!({ "format_version": FORMAT_VERSION, "rows": rows });
            let text = serde_json::to_string_pretty(&body).map_err(|e| Failure::internal(e.to_string()))?;
            write_text(&output, &text)?;
            let table_path = output.with_extension("txt");
            write_text(&table_path, &table)?;
            let config = json!({ "n_grid": ns, "p_grid": ps, "detector_config": det_cfg });
            write_manifest(&output, "sweep", Some(det_cfg.seed), config, &[&data], &[&output, &table_path], args)?;
            print!("{table}");
        }
        Command::Replay { manifest } => {
            let m: RunManifest = serde_json::from_str(&read_text(&manifest)?)
                .map_err(|e| Failure::data(format!("{}: {e}", manifest.display())))?;
            if m.format_version != FORMAT_VERSION {
                return Err(Error::FormatVersion {
                    found: m.format_version,
                    expected: FORMAT_VERSION,
                }
                .into());
            }
            let cli = Cli::try_parse_from(&m.args).map_err(|e| Failure::data(e.to_string()))?;
            if matches!(cli.command, Command::Replay { .. }) {
                return Err(Failure::data("a replay manifest cannot replay itself"));
            }
            run(cli.command, &m.args)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
