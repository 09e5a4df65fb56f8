//! Training objectives: squared-error regression plus the recovery-margin
//! auxiliary loss.
//!
//! Every loss has a tape version used during training and a plain `f64`
//! version used for reporting and as a reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the auxiliary term.
    pub lambda: f64,
    /// Minimum VA gain, in VA units, counted as recovery.
    pub recovery_threshold: f64,
    pub acl_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 2.0, recovery_threshold: 0.2, acl_enabled: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.recovery_threshold.is_finite() && self.recovery_threshold > 0.0) {
            return Err(Error::config(format!("recovery_threshold must be > 0, got {}", self.recovery_threshold)));
        }
        Ok(())
    }
}

/// 1 iff the VA gain strictly exceeds `threshold`.
pub fn recovery_label(post_va: f64, pre_va: f64, threshold: f64) -> bool {
    post_va - pre_va > threshold
}

fn check_batch(what: &str, lens: &[usize]) -> Result<usize> {
    let n = lens[0];
    if n == 0 {
        return Err(Error::Input(format!("{what}: empty batch")));
    }
    if lens.iter().any(|&l| l != n) {
        return Err(Error::Input(format!("{what}: mismatched lengths {lens:?}")));
    }
    Ok(n)
}

/// Mean squared error.
pub fn regression_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let n = check_batch("regression_loss", &[pred.len(), truth.len()])?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64)
}

/// Mean of `Y·relu(−m) + (1−Y)·relu(m)` with margin `m = pred − pre − threshold`.
pub fn auxiliary_classification_loss(pred: &[f64], pre_va: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    let n = check_batch("auxiliary_classification_loss", &[pred.len(), pre_va.len(), labels.len()])?;
    let sum: f64 = pred
        .iter()
        .zip(pre_va)
        .zip(labels)
        .map(|((p, x), &y)| {
            let m = p - x - threshold;
            if y { (-m).max(0.0) } else { m.max(0.0) }
        })
        .sum();
    Ok(sum / n as f64)
}

/// `reg + λ·cls`, or exactly `reg` when the auxiliary loss is disabled.
pub fn total_loss(reg: f64, cls: f64, cfg: &LossConfig) -> f64 {
    if cfg.acl_enabled {
        reg + cfg.lambda * cls
    } else {
        reg
    }
}

fn column<'t>(like: Var<'t>, values: &[f64]) -> Result<Var<'t>> {
    let t = Tensor::new(like.shape(), values.to_vec())?;
    Ok(like.tape().constant(t))
}

fn check_var(what: &str, pred: Var<'_>, lens: &[usize]) -> Result<()> {
    let numel: usize = pred.shape().iter().product();
    let mut all = vec![numel];
    all.extend_from_slice(lens);
    check_batch(what, &all).map(|_| ())
}

/// Tape version of [`regression_loss`]; `pred` may have any shape holding
/// one value per sample.
pub fn regression_loss_var<'t>(pred: Var<'t>, truth: &[f64]) -> Result<Var<'t>> {
    check_var("regression_loss", pred, &[truth.len()])?;
    let d = pred.sub(column(pred, truth)?)?;
    Ok(d.mul(d)?.mean())
}

/// Tape version of [`auxiliary_classification_loss`].
pub fn auxiliary_classification_loss_var<'t>(
    pred: Var<'t>,
    pre_va: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<Var<'t>> {
    check_var("auxiliary_classification_loss", pred, &[pre_va.len(), labels.len()])?;
    let offset: Vec<f64> = pre_va.iter().map(|x| -x - threshold).collect();
    // Y·relu(−m) + (1−Y)·relu(m) == relu(s·m) with s = 1 − 2Y.
    let sign: Vec<f64> = labels.iter().map(|&y| if y { -1.0 } else { 1.0 }).collect();
    let margin = pred.add(column(pred, &offset)?)?;
    Ok(margin.mul(column(pred, &sign)?)?.relu().mean())
}

/// Tape version of [`total_loss`].
pub fn total_loss_var<'t>(reg: Var<'t>, cls: Var<'t>, cfg: &LossConfig) -> Result<Var<'t>> {
    if cfg.acl_enabled {
        Ok(reg.add(cls.scale(cfg.lambda))?)
    } else {
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, Tape};

    #[test]
    fn regression_examples() {
        assert_eq!(regression_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((regression_loss(&[0.5], &[0.2]).unwrap() - 0.09).abs() < 1e-15);
        assert!(regression_loss(&[], &[]).is_err());
        assert!(regression_loss(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn recovery_is_strict() {
        assert!(recovery_label(0.6, 0.3, 0.2));
        assert!(!recovery_label(0.5, 0.3, 0.2));
        assert!(!recovery_label(0.4, 0.4, 0.2));
    }

    #[test]
    fn auxiliary_examples() {
        let term = |d: f64, y: bool| auxiliary_classification_loss(&[0.2 + d], &[0.2], &[y], 0.2).unwrap();
        assert_eq!(term(0.5, true), 0.0);
        assert!((term(0.1, true) - 0.1).abs() < 1e-12);
        assert!((term(0.35, false) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        let cfg = LossConfig::default();
        assert!((total_loss(0.1, 0.05, &cfg) - 0.2).abs() < 1e-15);
        assert_eq!(total_loss(0.1, 0.05, &LossConfig { lambda: 0.0, ..cfg }), 0.1);
        assert_eq!(total_loss(0.1, 0.0, &cfg), 0.1);
        assert_eq!(total_loss(0.1, 0.05, &LossConfig { acl_enabled: false, ..cfg }), 0.1);
    }

    #[test]
    fn tape_versions_agree() {
        let pred = [0.4, 0.9, 0.1, 0.65];
        let truth = [0.5, 0.7, 0.3, 0.6];
        let pre = [0.2, 0.3, 0.2, 0.5];
        let labels: Vec<bool> = truth.iter().zip(&pre).map(|(t, x)| recovery_label(*t, *x, 0.2)).collect();
        let tape = Tape::new();
        let p = tape.leaf(&Tensor::new([4, 1], pred.to_vec()).unwrap().with_grad());
        let reg = regression_loss_var(p, &truth).unwrap();
        let cls = auxiliary_classification_loss_var(p, &pre, &labels, 0.2).unwrap();
        assert_eq!(reg.item(), regression_loss(&pred, &truth).unwrap());
        assert!((cls.item() - auxiliary_classification_loss(&pred, &pre, &labels, 0.2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn regression_gradient() {
        let truth = [0.2, -0.1, 0.4];
        let x = Tensor::from_vec(vec![0.5, 0.3, 0.1]).with_grad();
        let report = gradcheck(&[x.clone()], |_, v| regression_loss_var(v[0], &truth)).unwrap();
        assert!(report.passed(1e-4), "{report:?}");

        let tape = Tape::new();
        let p = tape.leaf(&x);
        tape.backward(regression_loss_var(p, &truth).unwrap()).unwrap();
        let g = p.grad().unwrap();
        for ((gi, xi), ti) in g.data().iter().zip(x.data()).zip(&truth) {
            assert!((gi - 2.0 * (xi - ti) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn auxiliary_gradient_away_from_kinks() {
        let pre = [0.1, 0.3, 0.2];
        let labels = [true, false, true];
        let x = Tensor::from_vec(vec![0.15, 0.8, 0.9]).with_grad();
        let report = gradcheck(&[x], |_, v| auxiliary_classification_loss_var(v[0], &pre, &labels, 0.2)).unwrap();
        assert!(report.passed(1e-4), "{report:?}");
    }

    #[test]
    fn validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { recovery_threshold: 0.0, ..Default::default() }.validate().is_err());
    }
}
