//! The direction-predicting regression network: architecture, from-scratch
//! forward/backward, momentum-SGD training, and the weights file format.

mod arch;
mod ops;
mod train;
mod weights_io;

pub use arch::{CnnArchitecture, ConvBlock, GradBuffers, WeightsBundle, BLOCK_OUT_SIDE, BN_EPS};
pub use ops::{apply_running_update, backward, forward_train, infer_raw, TrainForward};
pub use train::{sgd_step, train, EpochStats, TrainConfig, TrainOutcome};
pub use weights_io::{load_weights, save_weights};
