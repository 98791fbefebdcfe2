use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train, TrainConfig};
use crate::error::Result;
use crate::tensor::WindowedDataset;

/// One point of a hyperparameter grid; anything not listed comes from the
/// base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub hidden1: usize,
    pub hidden2: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub index: usize,
    pub candidate: GridCandidate,
    pub val_loss: f64,
    pub best_epoch: usize,
}

/// Trains every candidate with the same seed and returns results sorted by
/// best validation MSE (ties keep grid order).
pub fn grid_search(
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    base: &TrainConfig,
    candidates: &[GridCandidate],
) -> Result<Vec<GridResult>> {
    let mut out = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let cfg = TrainConfig {
                hidden1: c.hidden1,
                hidden2: c.hidden2,
                learning_rate: c.learning_rate,
                ..base.clone()
            };
            let (_, trace) = train(train_set, val_set, &cfg)?;
            Ok(GridResult {
                index,
                candidate: c.clone(),
                val_loss: trace.best_val_loss,
                best_epoch: trace.best_epoch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.index.cmp(&b.index)));
    Ok(out)
}
