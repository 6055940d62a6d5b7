//! Bit-exact persistence for volumes, gradient tables, models, and
//! JSON configuration. Formats are documented in `docs/formats.md`.

mod gradients;
mod json;
mod model;
mod volume;

pub use gradients::{read_gradient_table, write_gradient_table};
pub use json::{atomic_write, read_json, write_json};
pub use model::{read_model, write_model};
pub use volume::{
    read_mask, read_volume, write_mask, write_volume, VolumeHeader, DTYPE_BOOL, DTYPE_F64,
    FORMAT_VERSION, VOLUME_MAGIC,
};
