use ndarray::Array1;

use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln max(p[gold], 1e-12)`.
pub fn cross_entropy_loss(probabilities: &Array1<f64>, gold: usize) -> Result<f64> {
    check(probabilities, gold)?;
    Ok(-probabilities[gold].max(PROB_FLOOR).ln())
}

fn check(probabilities: &Array1<f64>, gold: usize) -> Result<()> {
    if gold >= probabilities.len() {
        return Err(Error::invalid(format!(
            "gold class {gold} out of range for {} classes",
            probabilities.len()
        )));
    }
    let sum = probabilities.sum();
    if (sum - 1.0).abs() > 1e-9 || probabilities.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid(format!(
            "not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// Loss and its gradient w.r.t. the logits that produced `probabilities`
/// through a softmax. Below the clamp floor the loss is flat, so the
/// gradient is zero there.
pub(crate) fn loss_gradient(probabilities: &Array1<f64>, gold: usize) -> Result<(f64, Array1<f64>)> {
    let loss = cross_entropy_loss(probabilities, gold)?;
    if probabilities[gold] <= PROB_FLOOR {
        return Ok((loss, Array1::zeros(probabilities.len())));
    }
    let mut d = probabilities.clone();
    d[gold] -= 1.0;
    Ok((loss, d))
}
