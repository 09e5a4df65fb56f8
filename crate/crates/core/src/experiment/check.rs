//! Finite-difference check of the full training objective.

use super::config::ExperimentConfig;
use crate::data::{generate_synthetic, SyntheticConfig};
use crate::error::Result;
use crate::model::CttModel;
use crate::objectives::{
    auxiliary_classification_loss_var, recovery_label, regression_loss_var, total_loss_var,
};
use crate::params::Bound;
use crate::tensor::{concat, gradcheck, GradcheckReport};

/// Checks `∂L_tot/∂θ` for every parameter of a freshly initialized model on
/// `samples` synthetic samples.
pub fn gradcheck_model(cfg: &ExperimentConfig, samples: usize) -> Result<GradcheckReport> {
    let model = CttModel::new(cfg.model.clone(), cfg.seed)?;
    let data = generate_synthetic(
        cfg.seed,
        &SyntheticConfig { count: samples, image_size: cfg.model.image_size, ..cfg.data.synthetic },
    )?;
    let trues: Vec<f64> = data.iter().map(|s| s.sample.post_va).collect();
    let pres: Vec<f64> = data.iter().map(|s| s.sample.pre_va).collect();
    let thr = cfg.loss.recovery_threshold;
    let labels: Vec<bool> = trues.iter().zip(&pres).map(|(t, x)| recovery_label(*t, *x, thr)).collect();

    gradcheck(model.params().tensors(), |tape, vars| {
        let p = Bound::from_vars(vars.to_vec());
        let preds = data
            .iter()
            .map(|s| {
                let hor = tape.constant(s.sample.hor.clone());
                let ver = tape.constant(s.sample.ver.clone());
                Ok(model.forward_vars(tape, &p, hor, ver, s.sample.pre_va)?.prediction)
            })
            .collect::<Result<Vec<_>>>()?;
        let pred = concat(&preds, 0)?;
        let reg = regression_loss_var(pred, &trues)?;
        let cls = auxiliary_classification_loss_var(pred, &pres, &labels, thr)?;
        total_loss_var(reg, cls, &cfg.loss)
    })
}
