//! RainNet: three graph-convolution layers with ReLU over a Gaussian-kernel
//! normalized adjacency, mean-pool readout and a linear head, trained with
//! cross-entropy by hand-written reverse-mode gradients.

mod io;
mod matrix;
mod model;
mod train;

pub use io::{decode_model, encode_model, load_model, load_model_checked, save_model};
pub use matrix::DenseMatrix;
pub use model::{
    argmax, median_pairwise_distance, normalized_adjacency, Dense, ModelDims, Params, PreparedGraph, RainNetModel,
    CONV_LAYERS, DEFAULT_HIDDEN,
};
pub use train::{predict_all, train, write_metrics_csv, EpochMetrics, OptimizerKind, TrainConfig, TrainOutcome};
