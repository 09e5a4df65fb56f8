//! Single runs, cross-validation and multi-variant comparison.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scheme};
use super::train::{predict_all, train_model, write_training_artifacts, TrainedModel};
use crate::data::{derive_seed, generate_synthetic, holdout_split, kfold_split, load_dataset, Fold, Sample};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, gap_distribution, GapDistribution, MetricsReport, HIGH_VA_SPLIT};
use crate::model::Fusion;

const DATA: u64 = 10;
const SPLIT: u64 = 11;
const FOLD: u64 = 12;

/// Seed of the synthetic dataset used by runs with `seed`.
pub fn synthetic_seed(seed: u64) -> u64 {
    derive_seed(seed, &[DATA])
}

/// Loads the manifest, or generates the synthetic set for `seed`.
pub fn load_experiment_data(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    match &cfg.data.manifest {
        Some(path) => {
            let [h, w] = cfg.model.image_size;
            load_dataset(path, h, w)
        }
        None => Ok(generate_synthetic(synthetic_seed(seed), &cfg.data.synthetic)?
            .into_iter()
            .map(|s| s.sample)
            .collect()),
    }
}

/// The four headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Summary {
    pub mae: f64,
    pub rmse: f64,
    pub acc: f64,
    pub f1: f64,
}

impl From<&MetricsReport> for Summary {
    fn from(m: &MetricsReport) -> Self {
        Self { mae: m.mae, rmse: m.rmse, acc: m.acc, f1: m.f1 }
    }
}

impl Summary {
    fn fields(&self) -> [f64; 4] {
        [self.mae, self.rmse, self.acc, self.f1]
    }

    fn from_fields(f: [f64; 4]) -> Self {
        Self { mae: f[0], rmse: f[1], acc: f[2], f1: f[3] }
    }
}

/// Mean and population standard deviation, per metric.
pub fn aggregate(items: &[Summary]) -> (Summary, Summary) {
    assert!(!items.is_empty());
    let n = items.len() as f64;
    let mut mean = [0.0; 4];
    for s in items {
        for (m, v) in mean.iter_mut().zip(s.fields()) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 4];
    for s in items {
        for ((acc, v), m) in var.iter_mut().zip(s.fields()).zip(mean) {
            *acc += (v - m) * (v - m) / n;
        }
    }
    (Summary::from_fields(mean), Summary::from_fields(var.map(f64::sqrt)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub pred: f64,
    pub post_va: f64,
    pub pre_va: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub best_iteration: usize,
    pub metrics: Summary,
    pub data_hash: String,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

fn run_fold(cfg: &ExperimentConfig, samples: &[Sample], fold: &Fold, index: usize, seed: u64) -> Result<FoldResult> {
    let train: Vec<&Sample> = fold.train.iter().map(|&i| &samples[i]).collect();
    let test: Vec<&Sample> = fold.test.iter().map(|&i| &samples[i]).collect();
    let trained = train_model(cfg, &train, derive_seed(seed, &[FOLD, index as u64]))?;
    let preds = predict_all(&trained.best, &test)?;
    let trues: Vec<f64> = test.iter().map(|s| s.post_va).collect();
    let pres: Vec<f64> = test.iter().map(|s| s.pre_va).collect();
    let metrics = compute_metrics(&preds, &trues, &pres, cfg.loss.recovery_threshold)?;
    Ok(FoldResult {
        fold: index,
        n_train: train.len(),
        n_test: test.len(),
        best_iteration: trained.history.best_iteration,
        metrics: (&metrics).into(),
        data_hash: trained.history.data_hash,
        predictions: test
            .iter()
            .zip(preds)
            .map(|(s, pred)| Prediction { id: s.id.clone(), pred, post_va: s.post_va, pre_va: s.pre_va })
            .collect(),
    })
}

/// Partitions for the configured scheme.
fn partitions(cfg: &ExperimentConfig, scheme: Scheme, n: usize, seed: u64) -> Result<Vec<Fold>> {
    let split_seed = derive_seed(seed, &[SPLIT]);
    match scheme {
        Scheme::Kfold => kfold_split(n, cfg.evaluation.k, split_seed),
        Scheme::Holdout => Ok(vec![holdout_split(n, cfg.evaluation.test_fraction, split_seed)?]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidationReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean: Summary,
    /// Population standard deviation over folds.
    pub std: Summary,
    /// Gap statistics over all held-out predictions.
    pub distribution: GapDistribution,
}

impl CrossValidationReport {
    pub fn predictions(&self) -> impl Iterator<Item = (usize, &Prediction)> {
        self.folds.iter().flat_map(|f| f.predictions.iter().map(move |p| (f.fold, p)))
    }

    /// `id,fold,pred,post_va,pre_va` rows.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("id,fold,pred,post_va,pre_va\n");
        for (fold, p) in self.predictions() {
            out.push_str(&format!("{},{fold},{},{},{}\n", p.id, p.pred, p.post_va, p.pre_va));
        }
        out
    }
}

fn evaluate_scheme(cfg: &ExperimentConfig, scheme: Scheme, seed: u64) -> Result<CrossValidationReport> {
    let samples = load_experiment_data(cfg, seed)?;
    let folds = partitions(cfg, scheme, samples.len(), seed)?
        .iter()
        .enumerate()
        .map(|(i, f)| run_fold(cfg, &samples, f, i, seed))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<Summary> = folds.iter().map(|f| f.metrics).collect();
    let (mean, std) = aggregate(&summaries);
    let (preds, trues): (Vec<f64>, Vec<f64>) =
        folds.iter().flat_map(|f| &f.predictions).map(|p| (p.pred, p.post_va)).unzip();
    Ok(CrossValidationReport {
        scheme,
        seed,
        distribution: gap_distribution(&preds, &trues, HIGH_VA_SPLIT)?,
        folds,
        mean,
        std,
    })
}

/// k-fold cross-validation with `evaluation.k` folds.
pub fn run_cross_validation(cfg: &ExperimentConfig) -> Result<CrossValidationReport> {
    evaluate_scheme(cfg, Scheme::Kfold, cfg.seed)
}

/// Evaluates `cfg` with its configured scheme.
pub fn run_evaluation(cfg: &ExperimentConfig, seed: u64) -> Result<CrossValidationReport> {
    evaluate_scheme(cfg, cfg.evaluation.scheme, seed)
}

/// Writes `metrics.json`, `predictions.csv`, `dist.json` and `dist.txt`.
pub fn write_cv_artifacts(dir: &Path, report: &CrossValidationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("metrics.json", serde_json::to_string_pretty(report)?)?;
    write("predictions.csv", report.predictions_csv())?;
    write("dist.json", serde_json::to_string_pretty(&report.distribution)?)?;
    write("dist.txt", report.distribution.to_text())
}

/// Trains on the whole dataset minus the validation tail.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let samples = load_experiment_data(cfg, cfg.seed)?;
    let mut order: Vec<&Sample> = samples.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[SPLIT])));
    train_model(cfg, &order, cfg.seed)
}

pub fn run_training_to(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainedModel> {
    let trained = run_training(cfg)?;
    write_training_artifacts(dir, &trained)?;
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, cfg.to_json()).map_err(|e| Error::io(&config_path, e))?;
    Ok(trained)
}

/// Table rows: fusion baselines and ablations of the cross-token model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SingleHor,
    SingleVer,
    LateNoAttention,
    FullAttention,
    Cta,
    CtaPva,
    CtaPvaAcl,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::SingleHor,
        Variant::SingleVer,
        Variant::LateNoAttention,
        Variant::FullAttention,
        Variant::Cta,
        Variant::CtaPva,
        Variant::CtaPvaAcl,
    ];

    /// `(fusion, use_preop_va, acl_enabled)`.
    pub fn flags(self) -> (Fusion, bool, bool) {
        match self {
            Variant::SingleHor => (Fusion::SingleHor, false, false),
            Variant::SingleVer => (Fusion::SingleVer, false, false),
            Variant::LateNoAttention => (Fusion::LateNoAttention, false, false),
            Variant::FullAttention => (Fusion::FullAttention, false, false),
            Variant::Cta => (Fusion::CrossToken, false, false),
            Variant::CtaPva => (Fusion::CrossToken, true, false),
            Variant::CtaPvaAcl => (Fusion::CrossToken, true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::SingleHor => "HOR",
            Variant::SingleVer => "VER",
            Variant::LateNoAttention => "HOR+VER late",
            Variant::FullAttention => "HOR+VER full attention",
            Variant::Cta => "CTA",
            Variant::CtaPva => "CTA+PVA",
            Variant::CtaPvaAcl => "CTA+PVA+ACL",
        }
    }

    /// `cfg` with this row's flags applied.
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let (fusion, pva, acl) = self.flags();
        let mut out = cfg.clone();
        out.model.fusion = fusion;
        out.model.use_preop_va = pva;
        out.loss.acl_enabled = acl;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Mean over the seed's folds.
    pub metrics: Summary,
    pub data_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowReport {
    pub variant: Variant,
    pub label: String,
    pub seeds: Vec<SeedResult>,
    pub mean: Summary,
    /// Population standard deviation over seeds.
    pub std: Summary,
}

/// Published figures for the full model, shown for context only; they come
/// from a private clinical dataset and are not reproducible here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub mae: f64,
    pub mae_std: f64,
    pub acc: f64,
    pub acc_std: f64,
}

pub const REFERENCE: ReferenceRow = ReferenceRow { mae: 0.144, mae_std: 0.012, acc: 0.874, acc_std: 0.017 };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scheme: Scheme,
    pub rows: Vec<RowReport>,
    pub reference: ReferenceRow,
}

impl ComparisonReport {
    pub fn row(&self, v: Variant) -> Option<&RowReport> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_text(&self) -> String {
        let cell = |m: f64, s: f64| format!("{m:.4}±{s:.4}");
        let mut out = format!("{:<24} {:>15} {:>15} {:>15} {:>15}\n", "variant", "MAE", "RMSE", "ACC", "F1");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>15} {:>15} {:>15} {:>15}\n",
                r.label,
                cell(r.mean.mae, r.std.mae),
                cell(r.mean.rmse, r.std.rmse),
                cell(r.mean.acc, r.std.acc),
                cell(r.mean.f1, r.std.f1),
            ));
        }
        let reference = &self.reference;
        out.push_str(&format!(
            "{:<24} {:>15} {:>15} {:>15} {:>15}\n",
            "reference (published)",
            cell(reference.mae, reference.mae_std),
            "-",
            cell(reference.acc, reference.acc_std),
            "-",
        ));
        out.push_str("reference row: clinical data, not reproducible with this setup\n");
        out
    }
}

/// Runs every configured row under every configured seed.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let rows = cfg
        .comparison
        .rows
        .iter()
        .map(|&v| {
            let row_cfg = v.apply(cfg);
            let seeds = cfg
                .comparison
                .seeds
                .iter()
                .map(|&seed| {
                    let report = run_evaluation(&row_cfg, seed)?;
                    Ok(SeedResult {
                        seed,
                        metrics: report.mean,
                        data_hashes: report.folds.iter().map(|f| f.data_hash.clone()).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = aggregate(&seeds.iter().map(|s| s.metrics).collect::<Vec<_>>());
            Ok(RowReport { variant: v, label: v.label().into(), seeds, mean, std })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { scheme: cfg.evaluation.scheme, rows, reference: REFERENCE })
}

pub fn write_comparison_artifacts(dir: &Path, report: &ComparisonReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("comparison.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&json, e))?;
    let txt = dir.join("comparison.txt");
    std::fs::write(&txt, report.to_text()).map_err(|e| Error::io(&txt, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_hand_values() {
        let a = Summary { mae: 0.1, rmse: 0.2, acc: 0.8, f1: 0.5 };
        let b = Summary { mae: 0.3, rmse: 0.4, acc: 0.6, f1: 0.5 };
        let (mean, std) = aggregate(&[a, b]);
        assert!((mean.mae - 0.2).abs() < 1e-15 && (std.mae - 0.1).abs() < 1e-15);
        assert!((mean.acc - 0.7).abs() < 1e-15 && (std.acc - 0.1).abs() < 1e-15);
        assert_eq!(std.f1, 0.0);
        let (_, std) = aggregate(&[a, a, a]);
        assert_eq!(std, Summary::default());
    }

    #[test]
    fn variants_differ_only_in_flags() {
        let base = super::super::config::Profile::Desk.defaults();
        for v in Variant::ALL {
            let mut c = v.apply(&base);
            c.model.fusion = base.model.fusion;
            c.model.use_preop_va = base.model.use_preop_va;
            c.loss.acl_enabled = base.loss.acl_enabled;
            assert_eq!(c, base);
        }
    }
}
