//! The training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{lr_at, ExperimentConfig};
use super::optim::Sgd;
use crate::checkpoint::Checkpoint;
use crate::data::{augment, derive_seed, Sample};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{CttModel, SampleInput};
use crate::objectives::{
    auxiliary_classification_loss_var, recovery_label, regression_loss_var, total_loss_var, LossConfig,
};
use crate::tensor::{concat, Tape};

// Stream tags mixed into the run seed.
const INIT: u64 = 1;
const BATCHES: u64 = 2;
const AUGMENT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l_reg: f64,
    pub l_cls: f64,
    pub l_tot: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    /// Number of completed iterations.
    pub iteration: usize,
    pub validation: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub records: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
    /// Iteration count of the kept checkpoint; the final one when there is no
    /// validation split.
    pub best_iteration: usize,
    /// SHA-256 over the training samples, batch order and augmentation seeds.
    pub data_hash: String,
}

impl TrainingHistory {
    /// `iteration,l_reg,l_cls,l_tot,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,l_reg,l_cls,l_tot,lr\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.l_reg, r.l_cls, r.l_tot, r.lr));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters with the lowest validation MAE.
    pub best: CttModel,
    pub last: CttModel,
    pub history: TrainingHistory,
}

/// Endless sequence of seeded per-epoch permutations.
struct BatchStream {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, epoch: 0, order: Vec::new(), pos: 0 }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.pos == self.order.len() {
                self.order = (0..self.n).collect();
                self.order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[BATCHES, self.epoch])));
                self.epoch += 1;
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch
    }
}

fn hash_sample(h: &mut Sha256, s: &Sample) {
    h.update(s.id.as_bytes());
    h.update(s.pre_va.to_le_bytes());
    h.update(s.post_va.to_le_bytes());
    for v in s.hor.data().iter().chain(s.ver.data()) {
        h.update(v.to_le_bytes());
    }
}

pub fn predict_all(model: &CttModel, samples: &[&Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| model.predict(&SampleInput { hor: &s.hor, ver: &s.ver, pre_va: s.pre_va }))
        .collect()
}

pub fn evaluate(model: &CttModel, samples: &[&Sample], threshold: f64) -> Result<MetricsReport> {
    let preds = predict_all(model, samples)?;
    let trues: Vec<f64> = samples.iter().map(|s| s.post_va).collect();
    let pres: Vec<f64> = samples.iter().map(|s| s.pre_va).collect();
    compute_metrics(&preds, &trues, &pres, threshold)
}

/// One optimizer step on `batch`; returns the loss components.
fn train_step(
    model: &mut CttModel,
    sgd: &mut Sgd,
    batch: &[(&Sample, Option<(crate::tensor::Tensor, crate::tensor::Tensor)>)],
    loss: &LossConfig,
    lr: f64,
    iteration: usize,
) -> Result<(f64, f64, f64)> {
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let mut preds = Vec::with_capacity(batch.len());
    for (s, aug) in batch {
        let (hor, ver) = match aug {
            Some((h, v)) => (h, v),
            None => (&s.hor, &s.ver),
        };
        let out = model.forward_vars(&tape, &p, tape.constant(hor.clone()), tape.constant(ver.clone()), s.pre_va)?;
        preds.push(out.prediction);
    }
    let pred = concat(&preds, 0)?;
    let trues: Vec<f64> = batch.iter().map(|(s, _)| s.post_va).collect();
    let pres: Vec<f64> = batch.iter().map(|(s, _)| s.pre_va).collect();
    let labels: Vec<bool> =
        batch.iter().map(|(s, _)| recovery_label(s.post_va, s.pre_va, loss.recovery_threshold)).collect();
    let reg = regression_loss_var(pred, &trues)?;
    let cls = auxiliary_classification_loss_var(pred, &pres, &labels, loss.recovery_threshold)?;
    let tot = total_loss_var(reg, cls, loss)?;
    let (l_reg, l_cls, l_tot) = (reg.item(), cls.item(), tot.item());
    if !(l_reg.is_finite() && l_cls.is_finite() && l_tot.is_finite()) {
        return Err(Error::NonFinite { iteration, detail: format!("l_reg={l_reg} l_cls={l_cls} l_tot={l_tot}") });
    }
    tape.backward(tot)?;
    model.params_mut().collect_grads(&p);
    drop(p);
    if let Some((name, _)) = model.params().iter().find(|(_, t)| t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite()))) {
        return Err(Error::NonFinite { iteration, detail: format!("gradient of {name}") });
    }
    sgd.step(model.params_mut(), lr)?;
    Ok((l_reg, l_cls, l_tot))
}

/// Trains a fresh model on `train`, holding out its last
/// `validation_fraction` share for checkpoint selection. `train` should
/// already be in shuffled order.
pub fn train_model(cfg: &ExperimentConfig, train: &[&Sample], seed: u64) -> Result<TrainedModel> {
    let n_val = (train.len() as f64 * cfg.data.validation_fraction).floor() as usize;
    let (fit, val) = train.split_at(train.len() - n_val);
    if fit.is_empty() {
        return Err(Error::Input("no training samples".into()));
    }
    let opt = &cfg.optimizer;
    let mut model = CttModel::new(cfg.model.clone(), derive_seed(seed, &[INIT]))?;
    let mut sgd = Sgd::new(model.params(), opt.momentum);
    let mut stream = BatchStream::new(fit.len(), seed);
    let augmenting = cfg.data.augmentation != crate::data::AugmentationPolicy::IDENTITY;

    let mut hasher = Sha256::new();
    for s in fit {
        hash_sample(&mut hasher, s);
    }
    let mut records = Vec::with_capacity(opt.iterations);
    let mut evals = Vec::new();
    let mut best: Option<(f64, usize, CttModel)> = None;

    for it in 0..opt.iterations {
        let lr = lr_at(it, opt.lr, opt.lr_decay, opt.decay_interval);
        let idx = stream.next_batch(opt.batch_size);
        let batch: Vec<_> = idx
            .iter()
            .map(|&i| {
                hasher.update((i as u64).to_le_bytes());
                let s = fit[i];
                let aug = augmenting.then(|| {
                    let aseed = derive_seed(seed, &[AUGMENT, it as u64, i as u64]);
                    hasher.update(aseed.to_le_bytes());
                    augment(&s.hor, &s.ver, &cfg.data.augmentation, &mut ChaCha8Rng::seed_from_u64(aseed))
                });
                (s, aug)
            })
            .collect();
        let (l_reg, l_cls, l_tot) = train_step(&mut model, &mut sgd, &batch, &cfg.loss, lr, it)?;
        records.push(IterationRecord { iteration: it, l_reg, l_cls, l_tot, lr });

        let done = it + 1;
        if !val.is_empty() && (done % opt.eval_interval == 0 || done == opt.iterations) {
            let metrics = evaluate(&model, val, cfg.loss.recovery_threshold)?;
            if best.as_ref().is_none_or(|(mae, _, _)| metrics.mae < *mae) {
                best = Some((metrics.mae, done, model.clone()));
            }
            evals.push(EvalRecord { iteration: done, validation: metrics });
        }
    }

    let data_hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let (best_iteration, best) = match best {
        Some((_, i, m)) => (i, m),
        None => (opt.iterations, model.clone()),
    };
    Ok(TrainedModel { best, last: model, history: TrainingHistory { records, evals, best_iteration, data_hash } })
}

/// Writes `history.csv`, `history.json`, `checkpoint.json` (final) and
/// `checkpoint_best.json` under `dir`.
pub fn write_training_artifacts(dir: &Path, trained: &TrainedModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("history.csv", trained.history.to_csv())?;
    write("history.json", serde_json::to_string_pretty(&trained.history)?)?;
    Checkpoint::from_store(trained.last.params()).save(&dir.join("checkpoint.json"))?;
    Checkpoint::from_store(trained.best.params()).save(&dir.join("checkpoint_best.json"))
}
