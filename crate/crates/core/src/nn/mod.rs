//! A small neural network engine: dense and bi-LSTM layers with batch
//! normalization, quantized bottlenecks, the cosine-similarity loss, Adam and
//! the training loop, all with hand-written gradients.

pub mod adam;
pub mod checkpoint;
pub mod complexity;
pub mod layers;
pub mod loss;
pub mod model;
pub mod params;
pub mod spec;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use complexity::{closed_form, count_params_flops, Complexity};
pub use model::{build_model, ForwardPass, Mode, Model, QuantBehavior};
pub use params::{Gradients, ParamBlock, ParamStore};
pub use spec::{Activation, Architecture, LayerDesc, LayerShape, ModelSpec};
pub use tensor::{Mat, Scalar};
pub use train::{evaluate, evaluate_with, train, train_with_progress, EpochRecord, History, TrainConfig, TrainSet};
