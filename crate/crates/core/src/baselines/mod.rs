//! Comparison models: a closed-form least-squares fit on a Gaussian RBF
//! lifting, and a neural network that predicts the next state directly.

mod kdnn;
mod krbf;

pub use kdnn::KdnnModel;
pub use krbf::{
    fit_krbf, fit_with_lift, median_pairwise_distance, sample_centers, KrbfModel, RbfLift,
    DEFAULT_CENTERS,
};
