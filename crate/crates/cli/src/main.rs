//! `shaft` — simulate rig data, extract features, train and evaluate
//! unbalance detectors.
//!
//! Exit codes: 0 success, 2 usage error, 3 io, 4 data format, 5 missing
//! dataset, 6 model container, 7 numeric/training failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shaft_core::data::{self, DataError, DatasetId, Role};
use shaft_core::dsp::{self, FeatureMatrix, MfccConfig, RowMeta, StatVariant};
use shaft_core::models::{read_model, write_model, ModelError};
use shaft_core::pipeline::{
    evaluate_model, run_experiment, write_report, Approach, DataSource, ExperimentSpec, Mode,
    PipelineError, ReportFormat, SyntheticSource,
};
use shaft_core::rigsim::{simulate, SimConfig, UnbalanceSpec};

/// Default seed used everywhere unless overridden, so documented walks
/// reproduce byte-identical artifacts.
const DEFAULT_SEED: u64 = 20200415;

#[derive(Parser)]
#[command(name = "shaft", version, about = "Unbalance detection on rotating shafts from vibration data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the ten synthetic datasets 0D..4E as CSV files.
    Simulate(SimulateArgs),
    /// Extract a feature matrix from recordings in a data directory.
    Features(FeaturesArgs),
    /// Train a model per one of the study's protocols.
    Train(TrainArgs),
    /// Evaluate a stored model on the evaluation datasets.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for 0D.csv .. 4E.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Seconds per voltage step (the rig used 20; smaller is desk scale).
    #[arg(long, default_value_t = 2.0)]
    step_secs: f64,
    /// Sensor noise level; omit for the stock model.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Override one unbalance factor, e.g. `--factor 2=70.3` (repeatable).
    #[arg(long, value_parser = parse_factor_override)]
    factor: Vec<(u8, f64)>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Directory holding <id>.csv recordings.
    #[arg(long = "in", env = "SHAFT_DATA_DIR")]
    input: PathBuf,
    #[arg(long, value_enum)]
    variant: FeatureVariant,
    #[arg(long)]
    out: PathBuf,
    /// Dataset ids to include (default: every <id>.csv present).
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<String>,
    /// MFCC settings used by the mfcc variant.
    #[arg(long, default_value_t = 13)]
    n_mfcc: usize,
    #[arg(long, default_value_t = 512)]
    snippet_len: usize,
    #[arg(long, default_value_t = 0)]
    overlap: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureVariant {
    Three,
    Seven,
    Fft,
    Mfcc,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    approach: ApproachArg,
    /// `all` or `pairwise:K` with K in 1..=4.
    #[arg(long, default_value = "all", value_parser = parse_mode)]
    mode: Mode,
    /// Hidden layers (fft-mlp) or conv blocks (cnn).
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory holding <id>.csv recordings.
    #[arg(long, env = "SHAFT_DATA_DIR")]
    data: PathBuf,
    /// Output model file (JSON container).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Cnn,
    FftMlp,
    RfMinimal3,
    RfMinimal7,
    Hmm,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Cnn => Approach::CnnRaw,
            ApproachArg::FftMlp => Approach::FftMlp,
            ApproachArg::RfMinimal3 => Approach::RfMinimal3,
            ApproachArg::RfMinimal7 => Approach::RfMinimal7,
            ApproachArg::Hmm => Approach::HmmMfcc,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, env = "SHAFT_DATA_DIR")]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long, default_value_t = 100.0)]
    rpm_bin_width: f64,
}

fn parse_factor_override(s: &str) -> Result<(u8, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected <strength>=<factor>")?;
    let k: u8 = k.parse().map_err(|_| "strength must be 0..=4")?;
    if k > 4 {
        return Err("strength must be 0..=4".into());
    }
    let v: f64 = v.parse().map_err(|_| "factor must be a number")?;
    Ok((k, v))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    if s == "all" {
        return Ok(Mode::AllStrengths);
    }
    if let Some(k) = s.strip_prefix("pairwise:") {
        let k: u8 = k.parse().map_err(|_| "pairwise strength must be 1..=4")?;
        if (1..=4).contains(&k) {
            return Ok(Mode::Pairwise(k));
        }
    }
    Err(format!("bad mode `{s}`: use `all` or `pairwise:K` (K in 1..=4)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Features(args) => cmd_features(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Distinct exit codes per error class (documented in the README).
fn exit_code(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Io(_) => 3,
        PipelineError::Data(e) => match e {
            DataError::Io { .. } | DataError::Csv { .. } => 3,
            _ => 4,
        },
        PipelineError::MissingDataset { .. } => 5,
        PipelineError::Model(ModelError::VersionMismatch { .. })
        | PipelineError::Model(ModelError::Io(_))
        | PipelineError::Model(ModelError::Serde(_)) => 6,
        _ => 7,
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&args.out)?;
    for strength in 0..=4u8 {
        for role in [Role::Development, Role::Evaluation] {
            let id = DatasetId::new(strength, role).expect("strength in range");
            let source = SyntheticSource::new(args.step_secs, args.seed);
            let mut cfg: SimConfig = source.config_for(id);
            if let Some(sigma) = args.noise_sigma {
                cfg.base_noise_sigma = sigma;
            }
            if let Some(&(_, factor)) = args.factor.iter().find(|(k, _)| *k == strength) {
                cfg.unbalance = UnbalanceSpec::from_factor(factor);
            }
            let rec = simulate(&cfg, id)?;
            let path = args.out.join(id.filename());
            data::write_recording_csv(&rec, &path)?;
            println!("wrote {} ({} samples)", path.display(), rec.len());
        }
    }
    Ok(())
}

fn present_ids(dir: &Path, requested: &[String]) -> Result<Vec<DatasetId>, PipelineError> {
    if !requested.is_empty() {
        return requested
            .iter()
            .map(|s| DatasetId::parse(s).map_err(PipelineError::from))
            .collect();
    }
    let mut ids = Vec::new();
    for strength in 0..=4u8 {
        for role in [Role::Development, Role::Evaluation] {
            let id = DatasetId::new(strength, role).expect("strength in range");
            if dir.join(id.filename()).is_file() {
                ids.push(id);
            }
        }
    }
    if ids.is_empty() {
        return Err(PipelineError::MissingDataset {
            id: DatasetId::new(0, Role::Development).unwrap(),
            dir: dir.to_path_buf(),
        });
    }
    Ok(ids)
}

fn cmd_features(args: FeaturesArgs) -> Result<(), PipelineError> {
    let ids = present_ids(&args.input, &args.datasets)?;
    let mut combined: Option<FeatureMatrix> = None;
    for id in ids {
        let rec = data::load_recording(&args.input.join(id.filename()), id)?;
        let trimmed = data::trim_warmup(&rec, data::WARMUP_SAMPLES)?;
        let matrix = match args.variant {
            FeatureVariant::Three => dsp::stat_features(&trimmed, StatVariant::ThreeFeature)?,
            FeatureVariant::Seven => dsp::stat_features(&trimmed, StatVariant::SevenFeature)?,
            FeatureVariant::Fft => fft_matrix(&trimmed)?,
            FeatureVariant::Mfcc => {
                let cfg = MfccConfig::new(args.n_mfcc, args.snippet_len, args.overlap)?;
                mfcc_matrix(&trimmed, &cfg)?
            }
        };
        match combined.as_mut() {
            Some(m) => m.extend(matrix),
            None => combined = Some(matrix),
        }
    }
    let combined = combined.expect("at least one dataset present");
    combined.write_csv(&args.out)?;
    println!(
        "wrote {} ({} rows x {} features)",
        args.out.display(),
        combined.n_rows(),
        combined.n_cols()
    );
    Ok(())
}

fn fft_matrix(trimmed: &data::Recording) -> Result<FeatureMatrix, PipelineError> {
    let names = (0..dsp::SPECTRUM_BINS).map(|k| format!("fft_{k:04}")).collect();
    let mut m = FeatureMatrix::new(names, "fft-magnitudes/vibration_1 v1");
    for w in data::window(trimmed, data::Channel::Vib1, 4096, 4096) {
        let spec = dsp::rfft_magnitudes(&w.values)?;
        m.push(
            spec.magnitudes,
            RowMeta {
                strength: w.unbalance_id,
                label: w.label,
                mean_rpm: w.mean_rpm,
                window_index: w.window_index,
            },
        );
    }
    Ok(m)
}

fn mfcc_matrix(trimmed: &data::Recording, cfg: &MfccConfig) -> Result<FeatureMatrix, PipelineError> {
    let names = (0..cfg.n_mfcc).map(|k| format!("mfcc_{k:02}")).collect();
    let recipe = format!(
        "mfcc/vibration_1 v1 (snippet_len={}, overlap={}, n_mels={})",
        cfg.snippet_len, cfg.overlap, cfg.n_mels
    );
    let mut m = FeatureMatrix::new(names, recipe);
    for w in data::window(trimmed, data::Channel::Vib1, 4096, 4096) {
        for coeffs in dsp::mfcc_sequence(&w.values, cfg)? {
            m.push(
                coeffs,
                RowMeta {
                    strength: w.unbalance_id,
                    label: w.label,
                    mean_rpm: w.mean_rpm,
                    window_index: w.window_index,
                },
            );
        }
    }
    Ok(m)
}

fn cmd_train(args: TrainArgs) -> Result<(), PipelineError> {
    let mut spec = ExperimentSpec::new(
        args.approach.into(),
        args.mode,
        args.depth,
        args.seed,
        DataSource::RealDirectory(args.data),
    );
    if let Some(e) = args.epochs {
        spec.train.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        spec.train.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        spec.train.learning_rate = lr;
    }

    let outcome = run_experiment(&spec)?;
    write_model(&outcome.model, &args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(log) = &outcome.train_log {
        println!(
            "best epoch {} (test loss {:.6}); final train loss {:.6}",
            log.best_epoch,
            log.test_loss[log.best_epoch],
            log.train_loss.last().unwrap()
        );
    }
    println!(
        "eval overall accuracy {:.4}, balanced {:.4}",
        outcome.report.overall_accuracy, outcome.report.balanced_accuracy
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), PipelineError> {
    let format: ReportFormat = args
        .format
        .parse()
        .map_err(|e: String| PipelineError::Io(std::io::Error::other(e)))?;
    let model = read_model(&args.model)?;
    let report = evaluate_model(&model, &DataSource::RealDirectory(args.data), args.rpm_bin_width)?;
    write_report(&report, &args.report, format)?;
    println!(
        "wrote {} (overall {:.4}, balanced {:.4}, {} rpm bins)",
        args.report.display(),
        report.overall_accuracy,
        report.balanced_accuracy,
        report.rpm_bins.len()
    );
    Ok(())
}
