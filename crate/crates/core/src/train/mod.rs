//! Splitting, standardization and the Adam/MSE training loop.

mod adam;
mod artifact;
mod normalize;
mod run;
mod source;
mod split;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{Adam, AdamConfig};
pub use artifact::{ModelMeta, Prediction, TrainedModel};
pub use normalize::{NormalizationStats, STD_FLOOR};

/// Lower bound on a residual slot scale, in units of the field standard
/// deviation. Slots the clearances do not move keep near-zero targets
/// instead of having storage rounding amplified to unit variance.
pub const RESIDUAL_SCALE_FLOOR: f64 = 0.01;
pub use run::{train_run, RunSummary, BEST_CHECKPOINT, CONFIG_ECHO, HISTORY_FILE, SPLIT_FILE};
pub use source::{AccessLog, DatasetDir, MemorySource, SampleSource};
pub use split::{split_dataset, SplitSpec, MIN_SPLIT_SAMPLES};

use crate::config::KeyValueConfig;
use crate::error::{Error, Result};
use crate::field::{N_STATIONS, N_VARIABLES};
use crate::net::{assemble_input_on, ArchitectureConfig, Mode, ModelParameters};
use crate::synth::sample_seed;
use crate::{par, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the initial rate down to `min_learning_rate` at `max_epochs`.
    Cosine,
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => Err(Error::Config(format!("unknown learning-rate schedule {s:?}"))),
        }
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Seeds weight initialization and per-epoch shuffling.
    pub seed: u64,
    pub schedule: LrSchedule,
    pub min_learning_rate: f64,
    /// Train the network on the standardized deviation from the nominal
    /// baseline field, rescaled to unit RMS per (station, variable) slot,
    /// instead of the standardized field itself.
    pub baseline_residual: bool,
    pub split: SplitSpec,
    pub architecture: ArchitectureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            batch_size: 8,
            max_epochs: 30,
            patience: 10,
            seed: 0,
            schedule: LrSchedule::Cosine,
            min_learning_rate: 2e-5,
            baseline_residual: true,
            split: SplitSpec::default(),
            architecture: ArchitectureConfig::default(),
        }
    }
}

/// Keys accepted by [`TrainConfig::apply`].
pub const TRAIN_KEYS: &[&str] = &[
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.batch_size",
    "train.max_epochs",
    "train.patience",
    "train.seed",
    "train.schedule",
    "train.min_learning_rate",
    "train.baseline_residual",
    "split.train",
    "split.validation",
    "split.holdout",
    "split.seed",
    "model.level1_channels",
    "model.level2_channels",
    "model.bottleneck_channels",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate >= 0.0) || self.min_learning_rate > self.learning_rate {
            return bad(format!(
                "learning rates must satisfy 0 <= min ({}) <= initial ({}), initial > 0",
                self.min_learning_rate, self.learning_rate
            ));
        }
        let AdamConfig { beta1, beta2, epsilon } = self.adam;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, max epochs and patience must be at least 1".into());
        }
        self.split.validate()?;
        self.architecture.validate_structure()
    }

    /// Override fields from `[train]`, `[split]` and `[model]` keys.
    pub fn apply(&mut self, kv: &KeyValueConfig) -> Result<()> {
        kv.read_into("train.learning_rate", &mut self.learning_rate)?;
        kv.read_into("train.beta1", &mut self.adam.beta1)?;
        kv.read_into("train.beta2", &mut self.adam.beta2)?;
        kv.read_into("train.epsilon", &mut self.adam.epsilon)?;
        kv.read_into("train.batch_size", &mut self.batch_size)?;
        kv.read_into("train.max_epochs", &mut self.max_epochs)?;
        kv.read_into("train.patience", &mut self.patience)?;
        kv.read_into("train.seed", &mut self.seed)?;
        kv.read_into("train.schedule", &mut self.schedule)?;
        kv.read_into("train.min_learning_rate", &mut self.min_learning_rate)?;
        kv.read_into("train.baseline_residual", &mut self.baseline_residual)?;
        kv.read_into("split.train", &mut self.split.train)?;
        kv.read_into("split.validation", &mut self.split.validation)?;
        kv.read_into("split.holdout", &mut self.split.holdout)?;
        kv.read_into("split.seed", &mut self.split.seed)?;
        kv.read_into("model.level1_channels", &mut self.architecture.level_widths[0])?;
        kv.read_into("model.level2_channels", &mut self.architecture.level_widths[1])?;
        kv.read_into("model.bottleneck_channels", &mut self.architecture.bottleneck_channels)?;
        self.validate()
    }

    /// Every key with its resolved value.
    pub fn to_key_values(&self) -> KeyValueConfig {
        let mut kv = KeyValueConfig::new();
        kv.set("train.learning_rate", format!("{:e}", self.learning_rate));
        kv.set("train.beta1", self.adam.beta1.to_string());
        kv.set("train.beta2", self.adam.beta2.to_string());
        kv.set("train.epsilon", format!("{:e}", self.adam.epsilon));
        kv.set("train.batch_size", self.batch_size.to_string());
        kv.set("train.max_epochs", self.max_epochs.to_string());
        kv.set("train.patience", self.patience.to_string());
        kv.set("train.seed", self.seed.to_string());
        kv.set("train.schedule", self.schedule.to_string());
        kv.set("train.min_learning_rate", format!("{:e}", self.min_learning_rate));
        kv.set("train.baseline_residual", self.baseline_residual.to_string());
        kv.set("split.train", self.split.train.to_string());
        kv.set("split.validation", self.split.validation.to_string());
        kv.set("split.holdout", self.split.holdout.to_string());
        kv.set("split.seed", self.split.seed.to_string());
        kv.set("model.level1_channels", self.architecture.level_widths[0].to_string());
        kv.set("model.level2_channels", self.architecture.level_widths[1].to_string());
        kv.set("model.bottleneck_channels", self.architecture.bottleneck_channels.to_string());
        kv
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = epoch as f64 / self.max_epochs as f64;
                self.min_learning_rate
                    + 0.5 * (self.learning_rate - self.min_learning_rate) * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Network inputs and standardized targets for one split, in index order.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub indices: Vec<usize>,
    pub inputs: Vec<Tensor<f32>>,
    pub targets: Vec<Tensor<f32>>,
}

impl PreparedSplit {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Build from already standardized targets and their clearances.
    pub fn from_parts(indices: Vec<usize>, clearances: &[[f64; 3]], targets: Vec<Tensor<f32>>) -> Result<Self> {
        if clearances.len() != targets.len() || indices.len() != targets.len() {
            return Err(Error::invalid("indices, clearances and targets differ in length"));
        }
        let inputs = clearances
            .iter()
            .zip(&targets)
            .map(|(c, t)| {
                let s = t.shape();
                Ok(assemble_input_on(*c, [s[0], s[1], s[2]])?.tensor)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSplit { indices, inputs, targets })
    }

    /// Subtract a fixed standardized field from every target.
    pub fn subtract_reference(&mut self, reference: &Tensor<f32>) -> Result<()> {
        for t in &mut self.targets {
            if t.shape() != reference.shape() {
                return Err(Error::invalid(format!(
                    "reference shape {:?} does not match target shape {:?}",
                    reference.shape(),
                    t.shape()
                )));
            }
            for (y, r) in t.data_mut().iter_mut().zip(reference.data()) {
                *y -= *r;
            }
        }
        Ok(())
    }

    /// Root mean square of the targets per (station, variable) slot.
    pub fn slot_rms(&self) -> Vec<f64> {
        let mut sum = vec![0.0f64; N_STATIONS * N_VARIABLES];
        let mut count = 0usize;
        for t in &self.targets {
            let per_station = t.len() / N_STATIONS;
            for (i, &y) in t.data().iter().enumerate() {
                sum[slot_of(i, per_station)] += (y as f64) * (y as f64);
            }
            count += t.len() / (N_STATIONS * N_VARIABLES);
        }
        sum.iter().map(|s| (s / count.max(1) as f64).sqrt()).collect()
    }

    /// Divide every target by the scale of its (station, variable) slot.
    pub fn scale_slots(&mut self, scale: &[f64]) -> Result<()> {
        if scale.len() != N_STATIONS * N_VARIABLES || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("slot scales must be 24 positive values"));
        }
        for t in &mut self.targets {
            let per_station = t.len() / N_STATIONS;
            for (i, y) in t.data_mut().iter_mut().enumerate() {
                *y = (*y as f64 / scale[slot_of(i, per_station)]) as f32;
            }
        }
        Ok(())
    }
}

/// Slot index `station·6 + variable` of flat element `i` of a `(4, T, R, 6)` field.
pub fn slot_of(i: usize, per_station: usize) -> usize {
    (i / per_station) * N_VARIABLES + i % N_VARIABLES
}

/// Load the physical fields of `indices` from `source`.
pub fn load_fields<S: SampleSource + ?Sized>(source: &S, indices: &[usize]) -> Result<Vec<Tensor<f32>>> {
    par::map_range(indices.len(), |i| source.field(indices[i]))
        .into_iter()
        .collect()
}

/// Standardize `fields` and pair them with the conditioning grids of `indices`.
pub fn prepare_split<S: SampleSource + ?Sized>(
    source: &S,
    indices: &[usize],
    fields: &[Tensor<f32>],
    stats: &NormalizationStats,
) -> Result<PreparedSplit> {
    let clearances = indices
        .iter()
        .map(|&i| source.clearances(i))
        .collect::<Result<Vec<_>>>()?;
    let targets = fields.iter().map(|f| stats.apply(f)).collect::<Result<Vec<_>>>()?;
    PreparedSplit::from_parts(indices.to_vec(), &clearances, targets)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub wall_seconds: f64,
    pub learning_rate: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse,wall_seconds,learning_rate\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:e}",
            r.epoch, r.train_mse, r.val_mse, r.wall_seconds, r.learning_rate
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ModelParameters<f32>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

fn stack_batch(items: &[Tensor<f32>], idx: &[usize]) -> Result<Tensor<f32>> {
    let picked: Vec<Tensor<f32>> = idx.iter().map(|&i| items[i].clone()).collect();
    Tensor::stack(&picked)
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step(
    model: &mut ModelParameters<f32>,
    opt: &mut Adam,
    input: &Tensor<f32>,
    target: &Tensor<f32>,
    lr: f64,
) -> Result<f64> {
    let pass = model.forward_graph(input, Mode::Train)?;
    let crate::net::ForwardPass {
        mut graph,
        output,
        params,
        batch_stats,
        ..
    } = pass;
    let t = graph.constant(target.clone());
    let loss_var = graph.mse(output, t)?;
    let loss = graph.value(loss_var).data()[0] as f64;
    if !loss.is_finite() {
        return Ok(loss);
    }
    let mut grads = graph.backward(loss_var)?;
    for (p, v) in model.params_mut().iter_mut().zip(&params) {
        match grads.take(*v) {
            Some(g) => p.grad = g,
            None => p.grad.data_mut().fill(0.0),
        }
    }
    opt.step(model.params_mut(), lr)?;
    model.update_running_stats(&batch_stats)?;
    Ok(loss)
}

/// Minimize standardized MSE with Adam, keeping the best-validation weights.
/// `on_epoch` sees each epoch record and, when validation improved, the new
/// best model.
pub fn train(
    mut model: ModelParameters<f32>,
    train_split: &PreparedSplit,
    val_split: &PreparedSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, Option<&ModelParameters<f32>>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_split.is_empty() || val_split.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    let mut opt = Adam::new(cfg.adam, model.params());
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut since_best = 0;
    let start = Instant::now();
    let n = train_split.len();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch)));
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack_batch(&train_split.inputs, chunk)?;
            let y = stack_batch(&train_split.targets, chunk)?;
            let loss = train_step(&mut model, &mut opt, &x, &y, lr)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                    learning_rate: lr,
                });
            }
            sum += loss * chunk.len() as f64;
        }
        let val = evaluate_loss(&model, val_split)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_mse: sum / n as f64,
            val_mse: val,
            wall_seconds: start.elapsed().as_secs_f64(),
            learning_rate: lr,
        };
        log::info!(
            "epoch {:>3}  train {:.6e}  val {:.6e}  lr {:.2e}  {:.1}s",
            rec.epoch,
            rec.train_mse,
            rec.val_mse,
            lr,
            rec.wall_seconds
        );
        history.push(rec);
        if val < best_val {
            best_val = val;
            best_epoch = epoch + 1;
            best = model.clone();
            since_best = 0;
            on_epoch(&rec, Some(&best))?;
        } else {
            since_best += 1;
            on_epoch(&rec, None)?;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_mse: best_val,
        history,
        stopped_early,
    })
}

/// Mean squared error over samples and elements, inference-mode batch norm,
/// accumulated in f64.
pub fn evaluate_loss(model: &ModelParameters<f32>, split: &PreparedSplit) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let per_sample: Vec<Result<(f64, usize)>> = par::map_range(split.len(), |i| {
        let pred = model.predict(&split.inputs[i])?;
        let t = &split.targets[i];
        let s: f64 = pred
            .data()
            .iter()
            .zip(t.data())
            .map(|(&p, &y)| {
                let d = p as f64 - y as f64;
                d * d
            })
            .sum();
        Ok((s, t.len()))
    });
    let (mut total, mut count) = (0.0, 0usize);
    for r in per_sample {
        let (s, c) = r?;
        total += s;
        count += c;
    }
    Ok(total / count as f64)
}
