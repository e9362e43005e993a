//! Deep Koopman models with control: the concatenated embedding
//! `z = [x; g_θ(x)]`, the three control encodings, multi-step rollouts, the
//! discounted multi-step loss, and end-to-end training.

mod loss;
mod model;
mod train;

pub use loss::{kstep_loss, KStepTrainable, LossGraph, LossOptions};
pub(crate) use loss::LossBuilder;
pub use model::{Architecture, KoopmanModel, Rollout, Variant};
pub use train::{fit, EpochRecord, TrainConfig, TrainReport};
