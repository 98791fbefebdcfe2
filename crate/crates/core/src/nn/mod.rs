//! Stacked two-layer LSTM with inverted dropout between the layers and a
//! dense head, trained by full backpropagation through time.

mod grid;
mod network;
mod train;

pub use grid::{grid_search, GridCandidate, GridResult};
pub use network::{Architecture, DropoutMode, NetworkParams, ParamGradients};
pub use train::{train, train_split, EpochRecord, TrainConfig, TrainingTrace};
