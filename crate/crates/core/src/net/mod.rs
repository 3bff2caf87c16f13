//! The network, its inference products, and checkpoint IO.

mod checkpoint;
mod config;
mod model;
mod render;
mod segment;

pub use checkpoint::{canonical_config_json, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC};
pub use config::SaversConfig;
pub use model::{parameter_layout, ForwardCache, ForwardPass, ParamSet, SaversModel, GRID};
pub use render::{class_color, composite_output, RgbImage, SaversRender};
pub use segment::{
    class_argmax, detect_targets, pad_to_grid, CoarsePooling, CoarseResult, CropRecord, DetectedTarget, FineResult,
    DEFAULT_MIN_PIXELS,
};
