use super::{TrainError, TrainExample};
use crate::toymt::{ModelError, ToyModel};

/// Loss value with its preference and likelihood parts (`total = pref_term + sft_term`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub pref_term: f64,
    pub sft_term: f64,
}

/// A scalar loss over model parameters.
pub trait Objective {
    /// Returns the loss and, when `grad` is given, adds `∂loss/∂θ` into it.
    fn evaluate(
        &self,
        model: &ToyModel,
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, TrainError>;
}

/// Mean negative log-likelihood of the chosen texts.
pub struct SftObjective<'a> {
    pub batch: &'a [TrainExample],
}

/// Preference term `mean softplus(−β·(log π(y_c|x) − log π(y_r|x)))` plus the SFT term on chosen texts.
pub struct CpoObjective<'a> {
    pub batch: &'a [TrainExample],
    pub beta: f64,
}

/// `0.5·‖θ‖²`.
pub struct L2Objective;

pub struct ConstantObjective(pub f64);

fn traced(
    model: &ToyModel,
    index: usize,
    source: &str,
    target: &str,
) -> Result<crate::toymt::Trace, TrainError> {
    let enc = model
        .encode(source, target)
        .map_err(|source| TrainError::Sample { index, source })?;
    Ok(model.forward(&enc))
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Objective for SftObjective<'_> {
    fn evaluate(
        &self,
        model: &ToyModel,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, TrainError> {
        if self.batch.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        let n = self.batch.len() as f64;
        let mut sum = 0.0;
        for (i, ex) in self.batch.iter().enumerate() {
            let trace = traced(model, i, &ex.source, &ex.chosen)?;
            sum += -trace.logprob();
            if let Some(g) = grad.as_deref_mut() {
                model.backward(&trace, -1.0 / n, g);
            }
        }
        let sft = sum / n;
        Ok(LossBreakdown {
            total: sft,
            pref_term: 0.0,
            sft_term: sft,
        })
    }
}

impl Objective for CpoObjective<'_> {
    fn evaluate(
        &self,
        model: &ToyModel,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, TrainError> {
        if self.batch.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(TrainError::Config(format!(
                "beta {} must be >= 0",
                self.beta
            )));
        }
        let n = self.batch.len() as f64;
        let (mut pref, mut sft) = (0.0, 0.0);
        for (i, ex) in self.batch.iter().enumerate() {
            let rejected = ex.rejected.as_deref().ok_or_else(|| TrainError::Sample {
                index: i,
                source: ModelError::Config("preference example without a rejected text".into()),
            })?;
            let tc = traced(model, i, &ex.source, &ex.chosen)?;
            let tr = traced(model, i, &ex.source, rejected)?;
            let margin = tc.logprob() - tr.logprob();
            pref += softplus(-self.beta * margin);
            sft += -tc.logprob();
            if let Some(g) = grad.as_deref_mut() {
                let s = self.beta * sigmoid(-self.beta * margin);
                model.backward(&tc, (-s - 1.0) / n, g);
                model.backward(&tr, s / n, g);
            }
        }
        let (pref, sft) = (pref / n, sft / n);
        Ok(LossBreakdown {
            total: pref + sft,
            pref_term: pref,
            sft_term: sft,
        })
    }
}

impl Objective for L2Objective {
    fn evaluate(
        &self,
        model: &ToyModel,
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, TrainError> {
        let v = 0.5 * model.params().iter().map(|p| p * p).sum::<f64>();
        if let Some(g) = grad {
            for (gi, p) in g.iter_mut().zip(model.params()) {
                *gi += p;
            }
        }
        Ok(LossBreakdown {
            total: v,
            pref_term: 0.0,
            sft_term: 0.0,
        })
    }
}

impl Objective for ConstantObjective {
    fn evaluate(
        &self,
        _model: &ToyModel,
        _grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, TrainError> {
        Ok(LossBreakdown {
            total: self.0,
            pref_term: 0.0,
            sft_term: 0.0,
        })
    }
}

/// Loss and analytic gradient of `objective` at the model's current parameters.
pub fn loss_gradient(
    model: &ToyModel,
    objective: &dyn Objective,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let mut grad = vec![0.0; model.n_params()];
    let loss = objective.evaluate(model, Some(&mut grad))?;
    if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite);
    }
    Ok((loss, grad))
}

pub fn sft_loss(
    model: &ToyModel,
    batch: &[TrainExample],
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    loss_gradient(model, &SftObjective { batch })
}

pub fn cpo_loss(
    model: &ToyModel,
    batch: &[TrainExample],
    beta: f64,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    loss_gradient(model, &CpoObjective { batch, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(-3.0) - (1.0 + (-3.0f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_symmetry() {
        for x in [-30.0, -1.5, 0.0, 2.0, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
