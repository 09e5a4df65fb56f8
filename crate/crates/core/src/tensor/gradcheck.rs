//! Central finite-difference checks of tape gradients.

use super::{Tape, Tensor, TensorError, Var};

/// Step used for central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
const MAGNITUDE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-6)`. Central differences at `h = 1e-5` carry
/// roundoff near `1e-11 * |f|`, so vanishing gradients need an absolute floor.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// (input index, element index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares the tape gradient of the scalar `f(inputs)` against central
/// differences for every element of every input with `requires_grad`.
pub fn gradcheck<F, E>(inputs: &[Tensor], f: F) -> Result<GradcheckReport, E>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: From<TensorError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Option<Vec<f64>>> = vars.iter().map(|v| v.grad().map(Tensor::into_data)).collect();
    drop(vars);

    let eval = |probe: &[Tensor]| -> Result<f64, E> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut report = GradcheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        for j in 0..probe[i].numel() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + GRADCHECK_STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - GRADCHECK_STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let err = relative_error(grad[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, j, grad[j], numeric));
            }
        }
    }
    Ok(report)
}
