//! Central finite-difference gradient checking.

use crate::corpus::ConversationPair;
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_EPS: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the worst entry.
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            tensor: String::new(),
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, tensor: &str, index: usize, analytic: f64, numeric: f64) -> Result<()> {
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite gradient at {tensor}[{index}]: analytic {analytic}, numeric {numeric}"
            )));
        }
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.tensor.is_empty() {
            *self = GradCheckReport {
                max_rel_error: err,
                tensor: tensor.to_string(),
                index,
                analytic,
                numeric,
                checked: self.checked,
            };
        }
        Ok(())
    }
}

/// Checks `analytic` against central differences of `f` around `theta`.
pub fn check_gradient<F>(theta: &[f64], mut f: F, analytic: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    let mut x = theta.to_vec();
    let mut report = GradCheckReport::empty();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        report.record("theta", i, analytic[i], (up - down) / (2.0 * eps))?;
    }
    Ok(report)
}

/// Compares the analytic gradient of the batch-mean `L_total` with central
/// differences for every element of every tensor.
pub fn gradient_check(model: &Model, batch: &[ConversationPair], alpha: f64, eps: f64) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(batch, alpha)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport::empty();
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let name = model.params.get(id).name.clone();
        for i in 0..model.params.get(id).numel() {
            let orig = probe.params.get(id).data[i];
            probe.params.get_mut(id).data[i] = orig + eps;
            let up = probe.total_loss(batch, alpha)?.total;
            probe.params.get_mut(id).data[i] = orig - eps;
            let down = probe.total_loss(batch, alpha)?.total;
            probe.params.get_mut(id).data[i] = orig;
            report.record(&name, i, grads.get(id)[i], (up - down) / (2.0 * eps))?;
        }
    }
    Ok(report)
}
