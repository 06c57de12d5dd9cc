//! Optimisation loop, schedule, evaluation and training checkpoints.

mod ablation;
mod adam;
mod checkpoint;
mod eval;

pub use ablation::{ablation_csv, ablation_matrix, median, summarize, AblationRun, AblationSummary, ABLATION_VARIANTS};
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, ADAM_MAGIC};
pub use eval::{evaluate, image_batch, image_tensor, predict_map, sample_maps};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{augment, sample_rng, AugmentConfig, Sample};
use crate::density::KernelChoice;
use crate::error::{config_err, Error, Result};
use crate::loss::{combined_loss, density_loss, DensityDivisor, LossValues, LossWeights};
use crate::model::{ForwardOptions, Model, ModelConfig};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    /// Smallest learning rate the schedule will return.
    pub lr_floor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_std: f64,
    pub loss_weights: LossWeights,
    pub density_divisor: DensityDivisor,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Evaluate on the validation split every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Used only when a dataset lacks precomputed maps.
    pub kernel: KernelChoice,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Settings of the original recipe at full width.
    pub fn paper() -> Self {
        TrainConfig {
            lr0: 1e-4,
            decay_factor: 0.1,
            decay_every: 10,
            lr_floor: 1e-12,
            epochs: 500,
            batch_size: 16,
            init_std: 0.01,
            loss_weights: LossWeights::default(),
            density_divisor: DensityDivisor::TwiceBatch,
            seed: 0,
            augment: AugmentConfig::default(),
            eval_every: 10,
            kernel: KernelChoice::default(),
            model: ModelConfig::default(),
        }
    }

    /// Scaled-down settings that train in minutes on one CPU core.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            augment: AugmentConfig::desk(),
            eval_every: 5,
            model: ModelConfig::desk(),
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(config_err!("unknown preset '{other}' (paper|desk)")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(config_err!("lr0 must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(config_err!("decay_factor must lie in (0, 1]"));
        }
        if self.decay_every == 0 || self.batch_size == 0 {
            return Err(config_err!("decay_every and batch_size must be positive"));
        }
        if !(self.init_std > 0.0) {
            return Err(config_err!("init_std must be positive"));
        }
        self.loss_weights.validate()?;
        self.augment.validate()?;
        self.model.validate()
    }
}

/// `lr0 * decay_factor ^ floor(epoch / decay_every)`, never below `lr_floor`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let k = (epoch / cfg.decay_every.max(1)) as i32;
    (cfg.lr0 * cfg.decay_factor.powi(k)).max(cfg.lr_floor)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_den: f64,
    pub loss_att: Option<[f64; 3]>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch,lr,loss_total,loss_den,loss_att1,loss_att2,loss_att3,mae,rmse";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let att = self.loss_att.map(|a| a.map(Some)).unwrap_or([None; 3]);
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.loss_total,
            self.loss_den,
            opt(att[0]),
            opt(att[1]),
            opt(att[2]),
            opt(self.mae),
            opt(self.rmse)
        )
    }
}

pub fn log_csv(rows: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Model, optimiser state and position in the schedule.
pub struct Trainer<T> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub cfg: TrainConfig,
    /// Next epoch to run.
    pub epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), cfg.seed, cfg.init_std)?;
        let adam = AdamState::new(model.params().tensors());
        Ok(Trainer {
            model,
            adam,
            cfg,
            epoch: 0,
        })
    }

    /// Resumes from a checkpoint; a missing optimiser trailer starts Adam afresh.
    pub fn resume(cfg: TrainConfig, ck: Checkpoint<T>) -> Result<Self> {
        if ck.model.config() != &cfg.model {
            return Err(Error::Version("checkpoint model config differs from the training config".into()));
        }
        let adam = ck.adam.unwrap_or_else(|| AdamState::new(ck.model.params().tensors()));
        if !adam.matches(ck.model.params().tensors()) {
            return Err(Error::Validation("optimiser state does not match the parameters".into()));
        }
        Ok(Trainer {
            model: ck.model,
            adam,
            cfg,
            epoch: ck.epoch as usize,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            model: self.model.clone(),
            adam: Some(self.adam.clone()),
            epoch: self.epoch as u64,
        }
    }

    /// Forward, loss, backward and one Adam update on an assembled batch.
    pub fn step(&mut self, batch: &[Sample], lr: f64) -> Result<LossValues> {
        let stride = self.model.output_stride();
        let channels = self.model.config().in_channels;
        let images = image_batch::<T>(batch, channels)?;
        let den_gt = Tensor::stack(
            &batch
                .iter()
                .map(|s| s.density_at(stride).map(|d| d.to_tensor::<T>()))
                .collect::<Result<Vec<_>>>()?
                .iter()
                .collect::<Vec<_>>(),
        )?;
        let (weights, divisor) = (self.cfg.loss_weights, self.cfg.density_divisor);
        let nparams = self.model.params().len();
        let mut session = self.model.session(ForwardOptions::train());
        let x = session.input(images);
        let out = session.forward(x)?;
        let mut tape = session.into_tape();
        let (loss, values) = match out.attention {
            Some(att) => {
                let masks: Vec<Tensor<T>> = (0..3)
                    .map(|k| {
                        let items: Vec<Tensor<T>> = batch.iter().map(|s| s.masks[k].to_tensor()).collect();
                        Tensor::stack(&items.iter().collect::<Vec<_>>())
                    })
                    .collect::<Result<_>>()?;
                let pairs: Vec<_> = att.iter().copied().zip(masks.iter()).collect();
                let terms = combined_loss(&mut tape, (out.density, &den_gt), &pairs, &weights, divisor)?;
                (terms.total, terms.values(&tape))
            }
            None => {
                let den = density_loss(&mut tape, out.density, &den_gt, divisor)?;
                let v = tape.value(den).data()[0].to_float();
                (
                    den,
                    LossValues {
                        total: v,
                        density: v,
                        attention: None,
                    },
                )
            }
        };
        if !values.total.is_finite() {
            return Err(Error::Numerical {
                epoch: self.epoch,
                batch: 0,
                samples: batch.iter().map(|s| s.id().to_string()).collect(),
                message: format!("loss is {}", values.total),
            });
        }
        let grads = tape.backward(loss)?.into_param_grads(nparams);
        if grads.iter().flatten().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical {
                epoch: self.epoch,
                batch: 0,
                samples: batch.iter().map(|s| s.id().to_string()).collect(),
                message: "non-finite gradient".into(),
            });
        }
        adam_step(self.model.params_mut().tensors_mut(), &grads, &mut self.adam, lr)?;
        Ok(values)
    }

    /// One pass over `train` in a seeded order; evaluates on `val` when due.
    pub fn run_epoch(&mut self, train: &[Sample], val: Option<&[Sample]>) -> Result<EpochLog> {
        if train.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.cfg);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut sample_rng(self.cfg.seed, epoch as u64, u64::MAX));
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        let mut has_att = false;
        for (bi, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| augment(&train[i], &self.cfg.augment, self.cfg.seed, epoch as u64, i as u64))
                .collect::<Result<_>>()?;
            let v = self.step(&batch, lr).map_err(|e| match e {
                Error::Numerical {
                    epoch,
                    samples,
                    message,
                    ..
                } => Error::Numerical {
                    epoch,
                    batch: bi,
                    samples,
                    message,
                },
                other => other,
            })?;
            sums[0] += v.total;
            sums[1] += v.density;
            if let Some(a) = v.attention {
                has_att = true;
                for k in 0..3 {
                    sums[2 + k] += a[k];
                }
            }
            batches += 1;
        }
        let nb = batches as f64;
        let mut row = EpochLog {
            epoch,
            lr,
            loss_total: sums[0] / nb,
            loss_den: sums[1] / nb,
            loss_att: has_att.then(|| [sums[2] / nb, sums[3] / nb, sums[4] / nb]),
            mae: None,
            rmse: None,
        };
        if let Some(val) = val {
            let every = self.cfg.eval_every;
            if every > 0 && ((epoch + 1) % every == 0 || epoch + 1 == self.cfg.epochs) && !val.is_empty() {
                let report = evaluate(&self.model, val)?;
                row.mae = Some(report.mae);
                row.rmse = Some(report.rmse);
            }
        }
        self.epoch += 1;
        Ok(row)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one.
    pub fn fit(
        &mut self,
        train: &[Sample],
        val: Option<&[Sample]>,
        mut on_epoch: impl FnMut(&Self, &EpochLog) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        let mut log = Vec::new();
        while self.epoch < self.cfg.epochs {
            let row = self.run_epoch(train, val)?;
            on_epoch(self, &row)?;
            log.push(row);
        }
        Ok(log)
    }
}
