//! The end-to-end novice: a small DDPM over action chunks conditioned on
//! stacked observation features, trained with per-row weights that mask out
//! the novice's own actions.

pub mod data;
pub mod net;
pub mod policy;
pub mod schedule;
pub mod train;

pub use data::{filter_samples, featurize, Sample, WeightMatrix, ACTION_DIM, OBS_FEATURES};
pub use net::{EpsNet, NetDims};
pub use policy::{sample_chunk, NoviceConfig, NovicePolicy};
pub use schedule::NoiseSchedule;
pub use train::{train, TrainConfig, TrainReport};
