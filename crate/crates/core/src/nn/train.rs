//! Mini-batch training with plateau learning-rate decay and best-validation
//! model selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{cosine_loss, row_similarities};
use super::model::{Mode, Model, QuantBehavior};
use super::spec::{input_row, stacked_row, Architecture};
use super::tensor::{Mat, Scalar};
use crate::eigen::EigenTarget;
use crate::error::{ensure, Result};
use crate::rng::{purpose, Stream};

fn default_batch() -> usize {
    256
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    50
}
fn default_factor() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub initial_lr: f64,
    #[serde(default = "default_patience")]
    pub plateau_patience: usize,
    #[serde(default = "default_factor")]
    pub lr_factor: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: default_batch(),
            epochs: default_epochs(),
            initial_lr: default_lr(),
            plateau_patience: default_patience(),
            lr_factor: default_factor(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, Config, "batch_size must be positive");
        ensure!(self.initial_lr > 0.0, Config, "initial_lr must be positive");
        ensure!(self.plateau_patience >= 1, Config, "plateau_patience must be at least 1");
        ensure!(
            self.lr_factor > 0.0 && self.lr_factor <= 1.0,
            Config,
            "lr_factor must lie in (0, 1]"
        );
        let a = &self.adam;
        ensure!(
            (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0,
            Config,
            "Adam needs beta1, beta2 in [0, 1) and eps > 0"
        );
        Ok(())
    }
}

/// Encoder inputs and `[Re vec(V); Im vec(V)]` targets, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet<T> {
    pub inputs: Mat<T>,
    pub targets: Mat<T>,
    pub nt: usize,
    pub ns: usize,
}

impl<T: Scalar> TrainSet<T> {
    pub fn from_targets(architecture: Architecture, targets: &[EigenTarget]) -> Result<Self> {
        ensure!(!targets.is_empty(), Contract, "empty split");
        let (nt, ns) = (targets[0].nt(), targets[0].n_subbands());
        ensure!(
            targets.iter().all(|t| t.nt() == nt && t.n_subbands() == ns),
            Contract,
            "targets of mixed shape"
        );
        let conv = |row: Vec<f64>| row.into_iter().map(T::of).collect::<Vec<T>>();
        let inputs: Vec<Vec<T>> = targets.iter().map(|t| conv(input_row(architecture, t))).collect();
        let outs: Vec<Vec<T>> = targets.iter().map(|t| conv(stacked_row(&t.v))).collect();
        Ok(Self {
            inputs: Mat::from_rows(&inputs),
            targets: Mat::from_rows(&outs),
            nt,
            ns,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize]) -> (Mat<T>, Mat<T>) {
        let pick = |m: &Mat<T>| {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Mat::from_vec(idx.len(), m.cols(), data)
        };
        (pick(&self.inputs), pick(&self.targets))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
        }
        s
    }

    /// SHA-256 over the exact bit patterns of every record.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update((r.epoch as u64).to_le_bytes());
            h.update(r.train_loss.to_bits().to_le_bytes());
            h.update(r.val_loss.to_bits().to_le_bytes());
            h.update(r.lr.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

const EVAL_CHUNK: usize = 1024;

/// Per-sample eval-mode similarity, computed in parallel chunks.
pub fn evaluate<T: Scalar>(model: &Model<T>, set: &TrainSet<T>) -> Result<Vec<f64>> {
    evaluate_with(model, set, QuantBehavior::Deterministic, 0)
}

/// As [`evaluate`] with a chosen quantizer behavior. Stochastic quantization
/// draws from one stream per chunk, derived from `seed`, so the result does
/// not depend on the thread count.
pub fn evaluate_with<T: Scalar>(
    model: &Model<T>,
    set: &TrainSet<T>,
    quant: QuantBehavior,
    seed: u64,
) -> Result<Vec<f64>> {
    ensure!(!set.is_empty(), Contract, "empty split");
    let starts: Vec<usize> = (0..set.len()).step_by(EVAL_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let idx: Vec<usize> = (s..(s + EVAL_CHUNK).min(set.len())).collect();
            let (x, t) = set.gather(&idx);
            let mut rng = Stream::derived(seed, purpose::EVAL, s as u64);
            let out = model.predict_with(&x, quant, &mut rng)?;
            row_similarities(&out, &t, set.nt, set.ns)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Mean eval-mode loss.
pub fn validation_loss<T: Scalar>(model: &Model<T>, set: &TrainSet<T>) -> Result<f64> {
    let sims = evaluate(model, set)?;
    Ok(-sims.iter().sum::<f64>() / sims.len() as f64)
}

pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &TrainSet<T>,
    val_set: &TrainSet<T>,
    cfg: &TrainConfig,
) -> Result<History> {
    train_with_progress(model, train_set, val_set, cfg, &mut |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress<T: Scalar>(
    model: &mut Model<T>,
    train_set: &TrainSet<T>,
    val_set: &TrainSet<T>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    ensure!(!train_set.is_empty(), Contract, "empty training split");
    ensure!(!val_set.is_empty(), Contract, "empty validation split");
    let spec = model.spec().clone();
    ensure!(
        train_set.inputs.cols() == spec.input_dim() && val_set.inputs.cols() == spec.input_dim(),
        Contract,
        "dataset rows do not match the model input width {}",
        spec.input_dim()
    );
    let mut history = History::default();
    let mut state = AdamState::new(model.params());
    let mut lr = cfg.initial_lr;
    let mut best: Option<(f64, usize, super::params::ParamStore<T>)> = None;
    let mut wait = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        Stream::derived(cfg.seed, purpose::SHUFFLE, epoch as u64).shuffle(&mut order);
        let mut quant_rng = Stream::derived(cfg.seed, purpose::QUANT, epoch as u64);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (x, t) = train_set.gather(batch);
            let pass = model.forward(&x, Mode::Train, &mut quant_rng)?;
            let (loss, grad) = cosine_loss(&pass.output, &t, spec.nt, spec.ns)?;
            let grads = model.backward(&pass, &grad)?;
            adam_step(model.params_mut(), &grads, &mut state, lr, &cfg.adam)?;
            total += loss * batch.len() as f64;
        }
        ensure!(model.params().all_finite(), Degenerate, "parameters diverged at epoch {epoch}");
        let val_loss = validation_loss(model, val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            lr,
        };
        on_epoch(&record);
        history.records.push(record);
        if best.as_ref().map_or(true, |b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.params().clone()));
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.plateau_patience {
                lr *= cfg.lr_factor;
                wait = 0;
            }
        }
    }
    if let Some((_, epoch, params)) = best {
        model.set_params(params)?;
        history.best_epoch = Some(epoch);
    }
    Ok(history)
}
