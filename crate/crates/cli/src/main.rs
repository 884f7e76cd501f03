use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajnet_core::config::{load_config, LoadedConfig};
use trajnet_core::pipeline::{
    evaluate_stage, ingest_stage, predict_stage, preprocess_stage, synth_stage, train_stage, PipelineError,
};
use trajnet_core::train::EpochRecord;

/// Transportation-mode classification from GPS trajectories.
#[derive(Parser)]
#[command(name = "trajnet", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.hidden=16`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a GeoLife directory tree into the canonical dataset.
    Ingest {
        #[arg(long)]
        raw_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter, segment and featurize a dataset.
    Preprocess {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit discretizers and train the network on the training split.
    Train {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write the metrics report for one split.
    Evaluate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// train, validation, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Per-point predicted modes, optionally as GeoJSON too.
    Predict {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        geojson: Option<PathBuf>,
        /// train, validation, test or all.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Generate a synthetic labeled dataset.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Pipeline(PipelineError),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Pipeline(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) => f.write_str(m),
            Failure::Pipeline(e) => write!(f, "{e}"),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

/// The flag if given, else the configured path.
fn path(flag: Option<PathBuf>, configured: &Option<String>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| configured.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::Usage(format!("no {name} path: pass --{name} or set paths.{name}")))
}

fn load(common: &Common) -> Result<LoadedConfig, Failure> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    load_config(&text, &common.overrides).map_err(|e| Failure::Pipeline(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let LoadedConfig { config: cfg, echo } = load(&cli.common)?;
    let p = &cfg.paths;
    match cli.command {
        Command::Ingest { raw_dir, out } => {
            let raw_dir = path(raw_dir, &p.raw_dir, "raw_dir")?;
            let out = path(out, &p.dataset, "out")?;
            let (text, report) = ingest_stage(&raw_dir, &cfg, &echo)?;
            write(&out, &text)?;
            println!(
                "persons {} files {} points {} out_of_order {} unlabeled_dropped {} overlapping_labels {} skipped_label_rows {}",
                report.persons,
                report.files,
                report.points_read,
                report.out_of_order,
                report.unlabeled_dropped,
                report.overlapping_labels,
                report.skipped_label_rows
            );
        }
        Command::Preprocess { dataset, out } => {
            let input = read(&path(dataset, &p.dataset, "dataset")?)?;
            let out = path(out, &p.features, "out")?;
            write(&out, &preprocess_stage(&input, &cfg, &echo)?)?;
        }
        Command::Train { features, model, log } => {
            let input = read(&path(features, &p.features, "features")?)?;
            let model_out = path(model, &p.model, "model")?;
            let log_out = path(log, &p.log, "log")?;
            eprintln!("{}", EpochRecord::HEADER);
            let (model, log) = train_stage(&input, &cfg, &echo, |r| eprintln!("{}", r.to_line()))?;
            write(&model_out, &model)?;
            write(&log_out, &log)?;
        }
        Command::Evaluate { features, model, report, split } => {
            let input = read(&path(features, &p.features, "features")?)?;
            let model = read(&path(model, &p.model, "model")?)?;
            let out = path(report, &p.report, "report")?;
            let (text, m) = evaluate_stage(&input, &model, &split, &cfg, &echo)?;
            write(&out, &text)?;
            println!("A_point {:.6} A_distance {:.6} E_H {:.6} A_F1 {:.6}", m.a_point, m.a_distance, m.e_h, m.a_f1());
        }
        Command::Predict { features, model, out, geojson, split } => {
            let input = read(&path(features, &p.features, "features")?)?;
            let model = read(&path(model, &p.model, "model")?)?;
            let out = path(out, &p.predictions, "out")?;
            let (csv, json) = predict_stage(&input, &model, &split, &cfg, &echo)?;
            write(&out, &csv)?;
            if let Some(g) = geojson.or_else(|| p.geojson.as_ref().map(PathBuf::from)) {
                write(&g, &json)?;
            }
        }
        Command::Synth { out } => {
            let out = path(out, &p.dataset, "out")?;
            write(&out, &synth_stage(&cfg, &echo)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("trajnet: error: {first}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.to_string().replace('\n', " ");
            eprintln!("trajnet: error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
