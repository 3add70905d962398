//! Message-passing network over relation graphs, its loss and training loop.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{weighted_nll, LabelWeights};
pub use model::{argmax_labels, GnnModel, ModelConfig};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, Params};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
