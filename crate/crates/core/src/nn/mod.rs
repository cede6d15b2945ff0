//! From-scratch CNN engine: layer menu, shape composition, forward/backward,
//! seeded init, SGD, layer freezing, and a binary checkpoint format.

mod checkpoint;
pub(crate) mod layer;
mod model;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file, CheckpointError,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layer::{Dims, LayerSpec, Padding};
pub use model::{
    transfer_init, ArchSpec, DesignTarget, ForwardCache, Gradients, Layer, LayerGrad, Model,
    NnError, ParamsReport,
};
pub use model::{lenet4, vgg8};
