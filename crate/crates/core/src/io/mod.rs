//! On-disk formats.

mod bundle;
mod checkpoint;
mod container;

pub use bundle::{load_dataset, load_views, save_dataset, save_views, ViewSidecar};
pub use checkpoint::{
    decode_checkpoint, decode_state, encode_checkpoint, encode_state, load_checkpoint, save_checkpoint,
    CheckpointHeader, OptimizerState, CHECKPOINT_MAGIC, STATE_MAGIC,
};
pub use container::{load_map, read_map, save_map, write_map, MapHeader, MAP_MAGIC};
