use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ctt_core::checkpoint::Checkpoint;
use ctt_core::data::{generate_synthetic, write_synthetic, SyntheticConfig};
use ctt_core::experiment::{
    evaluate, gradcheck_model, load_experiment_data, predict_all, run_comparison, run_cross_validation,
    run_training_to, synthetic_seed, write_comparison_artifacts, write_cv_artifacts, ExperimentConfig,
};
use ctt_core::metrics::{gap_distribution, HIGH_VA_SPLIT};
use ctt_core::model::CttModel;
use ctt_core::Error;

mod exit {
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const USAGE: u8 = 64;
    pub const NO_INPUT: u8 = 66;
}

#[derive(Parser)]
#[command(name = "ctt", version, about = "Train and evaluate cross-token multi-view VA regressors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes history.csv, checkpoints and metrics.json.
    Train(Common),
    /// k-fold cross-validation; writes metrics.json, predictions.csv and dist files.
    CrossValidate(Common),
    /// Baseline and ablation table; writes comparison.json and comparison.txt.
    Compare(Common),
    /// Finite-difference check of every parameter gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 2)]
        samples: usize,
    },
    /// Generate the synthetic dataset as PGM images plus manifest.csv.
    SynthData(Common),
    /// Gap statistics for the high and low VA groups from a predictions CSV.
    ExportDist {
        #[command(flatten)]
        common: Common,
        /// CSV with `pred` and `post_va` columns; defaults to
        /// `<output>/predictions.csv`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score a checkpoint on the configured dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<output>/checkpoint_best.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_)) => exit::CONFIG,
            Some(Error::Data(_) | Error::Input(_) | Error::Io { .. } | Error::Json(_)) => exit::DATA,
            Some(Error::NonFinite { .. } | Error::MissingGrad(_)) => exit::NUMERIC,
            _ => 1,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    if !common.config.is_file() {
        return Err(Failure {
            code: exit::NO_INPUT,
            error: anyhow::anyhow!("config file {} not found", common.config.display()),
        });
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn write(path: &Path, text: String) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(common) => {
            let (cfg, out) = load(&common)?;
            let trained = run_training_to(&cfg, &out)?;
            let samples = load_experiment_data(&cfg, cfg.seed)?;
            let refs: Vec<_> = samples.iter().collect();
            let metrics = match trained.history.evals.iter().find(|e| e.iteration == trained.history.best_iteration) {
                Some(e) => e.validation.clone(),
                None => evaluate(&trained.best, &refs, cfg.loss.recovery_threshold)?,
            };
            write(&out.join("metrics.json"), serde_json::to_string_pretty(&metrics).map_err(anyhow::Error::from)?)?;
            let last = trained.history.records.last().expect("at least one iteration");
            println!(
                "trained {} iterations (final l_tot {:.5}); kept iteration {} with MAE {:.4}; artifacts in {}",
                last.iteration + 1,
                last.l_tot,
                trained.history.best_iteration,
                metrics.mae,
                out.display()
            );
        }
        Command::CrossValidate(common) => {
            let (cfg, out) = load(&common)?;
            let report = run_cross_validation(&cfg)?;
            write_cv_artifacts(&out, &report)?;
            for f in &report.folds {
                println!("fold {}: MAE {:.4} RMSE {:.4} ACC {:.4} F1 {:.4}", f.fold, f.metrics.mae, f.metrics.rmse, f.metrics.acc, f.metrics.f1);
            }
            let (m, s) = (report.mean, report.std);
            println!(
                "mean±std over folds: MAE {:.4}±{:.4} RMSE {:.4}±{:.4} ACC {:.4}±{:.4} F1 {:.4}±{:.4}",
                m.mae, s.mae, m.rmse, s.rmse, m.acc, s.acc, m.f1, s.f1
            );
        }
        Command::Compare(common) => {
            let (cfg, out) = load(&common)?;
            let report = run_comparison(&cfg)?;
            write_comparison_artifacts(&out, &report)?;
            print!("{}", report.to_text());
        }
        Command::Gradcheck { common, tolerance, samples } => {
            let (cfg, _) = load(&common)?;
            let report = gradcheck_model(&cfg, samples)?;
            println!(
                "checked {} parameters: max relative error {:.3e} (tolerance {tolerance:e})",
                report.checked, report.max_rel_error
            );
            if !report.passed(tolerance) {
                if let Some((i, j, a, n)) = report.worst {
                    eprintln!("worst: parameter tensor {i} element {j}: analytic {a:e}, numeric {n:e}");
                }
                return Err(Failure { code: exit::NUMERIC, error: anyhow::anyhow!("gradient check failed") });
            }
        }
        Command::SynthData(common) => {
            let (cfg, out) = load(&common)?;
            let synth = SyntheticConfig { image_size: cfg.model.image_size, ..cfg.data.synthetic };
            let samples = generate_synthetic(synthetic_seed(cfg.seed), &synth)?;
            let manifest = write_synthetic(&out, &samples)?;
            println!("wrote {} samples; manifest {}", samples.len(), manifest.display());
        }
        Command::ExportDist { common, predictions } => {
            let (_, out) = load(&common)?;
            let path = predictions.unwrap_or_else(|| out.join("predictions.csv"));
            let (preds, trues) = read_predictions(&path).map_err(|e| Failure { code: exit::DATA, error: e })?;
            let dist = gap_distribution(&preds, &trues, HIGH_VA_SPLIT)?;
            write(&out.join("dist.json"), serde_json::to_string_pretty(&dist).map_err(anyhow::Error::from)?)?;
            write(&out.join("dist.txt"), dist.to_text())?;
            print!("{}", dist.to_text());
        }
        Command::Evaluate { common, checkpoint } => {
            let (cfg, out) = load(&common)?;
            let path = checkpoint.unwrap_or_else(|| out.join("checkpoint_best.json"));
            let mut model = CttModel::new(cfg.model.clone(), cfg.seed)?;
            Checkpoint::load(&path)?.apply_to(model.params_mut())?;
            let samples = load_experiment_data(&cfg, cfg.seed)?;
            let refs: Vec<_> = samples.iter().collect();
            let preds = predict_all(&model, &refs)?;
            let metrics = evaluate(&model, &refs, cfg.loss.recovery_threshold)?;
            let dir = out.join("evaluate");
            write(&dir.join("metrics.json"), serde_json::to_string_pretty(&metrics).map_err(anyhow::Error::from)?)?;
            let mut csv = String::from("id,pred,post_va,pre_va\n");
            for (s, p) in samples.iter().zip(&preds) {
                csv.push_str(&format!("{},{p},{},{}\n", s.id, s.post_va, s.pre_va));
            }
            write(&dir.join("predictions.csv"), csv)?;
            println!(
                "{} samples: MAE {:.4} RMSE {:.4} ACC {:.4} F1 {:.4}; results in {}",
                metrics.n,
                metrics.mae,
                metrics.rmse,
                metrics.acc,
                metrics.f1,
                dir.display()
            );
        }
    }
    Ok(())
}

fn read_predictions(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(pi), Some(ti)) = (col("pred"), col("post_va")) else {
        bail!("{}: needs `pred` and `post_va` columns", path.display());
    };
    let (mut preds, mut trues) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> anyhow::Result<f64> {
            record[i].trim().parse().with_context(|| format!("{} row {}: bad number {:?}", path.display(), row + 1, &record[i]))
        };
        preds.push(parse(pi)?);
        trues.push(parse(ti)?);
    }
    Ok((preds, trues))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
