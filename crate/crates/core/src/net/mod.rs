//! Residual graph convolutional network with manual backpropagation.

mod adam;
mod arch;
mod block;
mod checkpoint;
mod layer;
mod loss;
mod model;

pub use adam::adam_step;
pub use arch::{ArchSpec, BlockSpec, Shortcut, DEFAULT_MODEL, MODEL_IDS};
pub use block::{residual_block_backward, residual_block_forward, BlockCache};
pub use layer::{gcn_layer_backward, gcn_layer_forward, LayerCache, LayerConfig};
pub use loss::mse_loss_masked;
pub use model::{backward, build_model, forward, replay, ForwardTape, Hyper, ModelState, OUTPUT_NORM_EPS};
pub use checkpoint::{Checkpoint, CheckpointHeader};
