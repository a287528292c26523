use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::objective::objective_and_gradient;
use super::{ClusteredModel, TraceMode};
use crate::{Dataset, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Adam learning rate in log-parameter space.
    pub step_size: f64,
    /// Hutchinson probes per step; `0` evaluates traces exactly.
    pub probes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 100, batch_size: 1000, step_size: 0.01, probes: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    /// Mini-batch objective before the step's update.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: ClusteredModel,
    pub log: Vec<TrainStep>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam on the log kernel hyperparameters and `ln σ²`, with mini-batches of
/// the data and Hutchinson trace estimates. `z`, `u` and the counts stay
/// fixed; `Λ = σ²/counts` is recomputed after every update.
pub fn train(model: &ClusteredModel, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    if !(config.step_size > 0.0) {
        return Err(Error::invalid("step_size", "must be positive"));
    }
    let np = model.kernel().num_params();
    let mut params = model.kernel().log_params();
    params.push(libm::log(model.sigma2()));
    let mut first = vec![0.0; params.len()];
    let mut second = vec![0.0; params.len()];
    let mut rng = crate::seeded_rng(config.seed);
    let mut current = model.clone();
    let mut log = Vec::with_capacity(config.steps);
    let batch_size = config.batch_size.min(data.len());

    for step in 0..config.steps {
        let batch = if batch_size == data.len() {
            data.clone()
        } else {
            let idx = rand::seq::index::sample(&mut rng, data.len(), batch_size).into_vec();
            data.subset(&idx)
        };
        let mode = if config.probes == 0 {
            TraceMode::Exact
        } else {
            TraceMode::Hutchinson { probes: config.probes, seed: config.seed.wrapping_add(1 + step as u64) }
        };
        let eval = objective_and_gradient(&current, &batch, data.len(), mode)?;
        if let Some(bad) = eval.gradient.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergent(format!("non-finite gradient in parameter {bad} at step {step}")));
        }
        log.push(TrainStep { step, objective: eval.value });

        let t = (step + 1) as i32;
        for (i, g) in eval.gradient.iter().enumerate() {
            first[i] = ADAM_BETA1 * first[i] + (1.0 - ADAM_BETA1) * g;
            second[i] = ADAM_BETA2 * second[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = first[i] / (1.0 - libm::pow(ADAM_BETA1, t as f64));
            let v_hat = second[i] / (1.0 - libm::pow(ADAM_BETA2, t as f64));
            params[i] -= config.step_size * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
        let kernel = current.kernel().with_log_params(&params[..np])?;
        current = current.with_hyperparameters(kernel, libm::exp(params[np]))?;
    }
    Ok(TrainOutcome { model: current, log })
}
