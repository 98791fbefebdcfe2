use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Architecture, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// `None` trains full-batch. Otherwise chronological chunks, no shuffling.
    pub batch_size: Option<usize>,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden1: 32,
            hidden2: 16,
            dropout_rate: 0.2,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 15,
            batch_size: None,
            clip_norm: 5.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self, features: usize) -> Architecture {
        Architecture {
            input: features,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            output: features,
        }
    }

    fn check(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::InvalidArgument("hidden sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("learning rate and clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument("max_epochs and patience must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Validation MSE of the freshly initialized network.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..theta.len() {
            let g = grad[k];
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            theta[k] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

fn unpack(data: &WindowedDataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let inputs = (0..data.len())
        .map(|s| data.sample(s).iter().copied().collect())
        .collect();
    let targets = data.targets.rows().into_iter().map(|r| r.to_vec()).collect();
    (inputs, targets)
}

/// Adam on the mean squared error norm with inverted dropout during training
/// passes, gradient clipping and early stopping on validation MSE. The best
/// weights seen after any epoch are restored.
pub fn train(
    train: &WindowedDataset,
    val: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainingTrace)> {
    config.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "training needs samples on both sides of the split ({} train, {} validation)",
            train.len(),
            val.len()
        )));
    }
    if train.n_features() != val.n_features() || train.lookback() != val.lookback() {
        return Err(Error::Dimension("training and validation windows disagree in shape".into()));
    }
    let arch = config.architecture(train.n_features());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = NetworkParams::init(arch, config.dropout_rate, &mut rng);
    let steps = train.lookback();
    let (tx, ty) = unpack(train);
    let (vx, vy) = unpack(val);

    let val_loss = |net: &NetworkParams| net.batch_loss::<ChaCha8Rng>(&vx, &vy, steps, None, None);
    let initial_val_loss = val_loss(&net);
    if !initial_val_loss.is_finite() {
        return Err(Error::Training { epoch: 0 });
    }

    let batch = config.batch_size.unwrap_or(tx.len()).min(tx.len());
    let mut adam = Adam::new(net.theta.len(), config.learning_rate);
    let mut grad = vec![0.0; net.theta.len()];
    let mut best = (f64::INFINITY, 0usize, net.theta.clone());
    let mut wait = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let mut train_loss = 0.0;
        for (cx, cy) in tx.chunks(batch).zip(ty.chunks(batch)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = net.batch_loss(cx, cy, steps, Some(&mut rng), Some(&mut grad));
            train_loss += l * cx.len() as f64;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch });
            }
            clip(&mut grad, config.clip_norm);
            adam.step(&mut net.theta, &grad);
        }
        train_loss /= tx.len() as f64;
        let vl = val_loss(&net);
        if !vl.is_finite() {
            return Err(Error::Training { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {vl:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: vl,
        });
        if vl < best.0 {
            best = (vl, epoch, net.theta.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    net.theta = best.2;
    Ok((
        net,
        TrainingTrace {
            initial_val_loss,
            epochs,
            best_epoch: best.1,
            best_val_loss: best.0,
            stopped_early,
        },
    ))
}

/// [`train`] on windows split by target year.
pub fn train_split(
    data: &WindowedDataset,
    split_year: i32,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainingTrace)> {
    let (tr, va) = data.split(split_year);
    train(&tr, &va, config)
}
