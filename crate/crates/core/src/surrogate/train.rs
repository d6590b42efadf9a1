//! Mini-batch Adam with a step-decay learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::codec::FeatureCodec;
use super::model::{Architecture, Linear, ModelParams, Variant};
use super::Surrogate;
use crate::dataset::ScenarioRecord;
use crate::error::{Error, Result};
use crate::scenario::child_seed;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs between learning-rate decays.
    pub scheduler_step: usize,
    pub scheduler_gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            learning_rate: 1e-3,
            batch_size: 128,
            scheduler_step: 5,
            scheduler_gamma: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.scheduler_step == 0 {
            return Err(Error::InvalidConfig(
                "scheduler step must be positive".into(),
            ));
        }
        if !(self.scheduler_gamma.is_finite() && self.scheduler_gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scheduler gamma must be positive, got {}",
                self.scheduler_gamma
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate
            * self
                .scheduler_gamma
                .powi((epoch / self.scheduler_step) as i32)
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn zero(params: &mut ModelParams) {
    for t in params.tensors_mut() {
        t.fill(0.0);
    }
}

/// Trains `params` in place on encoded pairs and returns the mean training
/// loss of every epoch.
pub fn train_params(
    params: &mut ModelParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("no training examples"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "training targets",
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, u64::MAX, 1));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut adam = Adam::new(params);
    let mut grads = params.zeros_like();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            zero(&mut grads);
            let scale = 1.0 / idx.len() as f64;
            let mut batch_loss = 0.0;
            for &i in idx {
                batch_loss +=
                    params.accumulate_gradients(&inputs[i], &targets[i], scale, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += batch_loss;
            adam.step(params, &grads, lr);
        }
        trace.push(epoch_loss / inputs.len() as f64);
    }
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Surrogate,
    pub loss_trace: Vec<f64>,
}

/// Fits the codec on `records`, initializes a network of the given variant
/// from the config seed and trains it. The output projection starts at zero,
/// so the untrained model predicts the per-output training mean.
pub fn train(
    records: &[ScenarioRecord],
    variant: Variant,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let codec = FeatureCodec::fit(records)?;
    let arch = Architecture::for_variant(variant, codec.input_dim(), codec.output_dim());
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(arch, &mut init_rng);
    params.output = Linear::zeros(arch.width, arch.n_out);
    let inputs = records
        .iter()
        .map(|r| codec.encode_input(r))
        .collect::<Result<Vec<_>>>()?;
    let targets = records
        .iter()
        .map(|r| codec.encode_target(r))
        .collect::<Result<Vec<_>>>()?;
    let loss_trace = train_params(&mut params, &inputs, &targets, cfg)?;
    Ok(TrainOutcome {
        model: Surrogate::new(codec, params)?,
        loss_trace,
    })
}
