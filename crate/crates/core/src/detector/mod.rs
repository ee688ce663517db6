//! Region classifier: MLP, optimizer, schedule, batch sampling and inference.

mod adam;
mod infer;
mod mlp;
mod sampler;

pub use adam::Adam;
pub use infer::{detect_all, detect_frame, nms, score_regions, DetectOptions, Detection};
pub use mlp::{DropoutMasks, ForwardPass, Mlp};
pub use sampler::{sample_batch, Batch, BatchSource, LabeledSource, MinedSampler, NEGATIVE, POSITIVE};

use crate::error::{Error, Result};
use crate::rng::{self, Stage, StreamRng};
use alloc::format;
use alloc::vec::Vec;

pub const HIDDEN_WIDTHS: [usize; 2] = [1024, 1024];
pub const CLASSES: usize = 2;

/// Network weights, optimizer moments and the schedule position.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub mlp: Mlp,
    pub optimizer: Adam,
    /// Epochs completed so far across all training calls.
    pub global_epoch: usize,
}

impl DetectorParams {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(CLASSES);
        let mlp = Mlp::new(&dims, &mut rng::stream(seed, Stage::DetectorInit, &[]))?;
        let optimizer = Adam::new(mlp.parameter_count());
        Ok(DetectorParams { mlp, optimizer, global_epoch: 0 })
    }

    pub fn from_parts(mlp: Mlp, optimizer: Adam, global_epoch: usize) -> Result<Self> {
        let params = DetectorParams { mlp, optimizer, global_epoch };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mlp.classes() != CLASSES {
            return Err(Error::validation(format!("detector must have {} outputs", CLASSES)));
        }
        if self.mlp.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("non-finite detector parameter"));
        }
        self.optimizer.validate(self.mlp.parameter_count())
    }

    /// Class probabilities, `rows x 2`. Dropout is applied only when `train` carries a keep rate.
    pub fn forward(&self, x: &[f32], train: Option<(f64, &mut StreamRng)>) -> Result<Vec<f64>> {
        let rows = x.len() / self.mlp.input_dim();
        let masks = train.map(|(keep, rng)| DropoutMasks::sample(&self.mlp, rows, keep, rng));
        Ok(self.mlp.forward_pass(x, masks.as_ref())?.probabilities().to_vec())
    }

    /// Rounds weights and moments to `f32` so they serialize losslessly.
    pub fn round_to_f32(&mut self) {
        self.mlp.round_to_f32();
        self.optimizer.round_to_f32();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub total_epochs: usize,
    pub cycles: usize,
    pub dropout_keep: f64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-4,
            decay_factor: 0.6,
            decay_every: 6,
            total_epochs: 35,
            cycles: 5,
            dropout_keep: 0.8,
            batch_size: 64,
            batches_per_epoch: 24,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.decay_factor > 0.0
            && self.decay_factor <= 1.0
            && self.decay_every > 0
            && self.cycles > 0
            && self.dropout_keep > 0.0
            && self.dropout_keep <= 1.0
            && self.batch_size >= 2
            && self.batch_size.is_multiple_of(2)
            && self.batches_per_epoch > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training hyperparameters {:?}", self)))
        }
    }

    /// Learning rate for a global epoch: step decay every `decay_every` epochs.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let mut lr = self.learning_rate;
        for _ in 0..epoch / self.decay_every {
            lr *= self.decay_factor;
        }
        lr
    }

    /// Epochs run in outer cycle `cycle` (0-based); the remainder goes to the earliest cycles.
    pub fn cycle_epochs(&self, cycle: usize) -> usize {
        let base = self.total_epochs / self.cycles;
        base + usize::from(cycle < self.total_epochs % self.cycles)
    }
}

/// Runs `epochs` epochs of mini-batch Adam on cross-entropy, continuing the global schedule.
pub fn train(
    mut params: DetectorParams,
    source: &dyn BatchSource,
    hyper: &TrainHyper,
    epochs: usize,
) -> Result<DetectorParams> {
    hyper.validate()?;
    params.validate()?;
    if source.dim() != params.mlp.input_dim() {
        return Err(Error::invalid(format!(
            "batch width {} does not match detector input {}",
            source.dim(),
            params.mlp.input_dim()
        )));
    }
    for _ in 0..epochs {
        let epoch = params.global_epoch;
        let lr = hyper.learning_rate_at(epoch);
        for b in 0..hyper.batches_per_epoch {
            let key = [epoch as u64, b as u64];
            let batch = source.draw(hyper.batch_size, &mut rng::stream(hyper.seed, Stage::DetectorBatch, &key))?;
            let masks = DropoutMasks::sample(
                &params.mlp,
                batch.len(),
                hyper.dropout_keep,
                &mut rng::stream(hyper.seed, Stage::DetectorDropout, &key),
            );
            let pass = params.mlp.forward_pass(&batch.inputs, Some(&masks))?;
            let loss = params.mlp.cross_entropy(&pass, &batch.targets)?;
            let step = epoch * hyper.batches_per_epoch + b;
            if !loss.is_finite() {
                return Err(Error::Numerical { stage: "detector", step, detail: format!("loss {}", loss) });
            }
            let grads = params.mlp.backward(&pass, &batch.targets, Some(&masks))?;
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical { stage: "detector", step, detail: "non-finite gradient".into() });
            }
            params.optimizer.update(params.mlp.params_mut(), &grads, lr);
        }
        params.global_epoch += 1;
    }
    params.round_to_f32();
    Ok(params)
}
