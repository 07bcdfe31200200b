//! On-disk formats: 16-bit graymaps for label and energy maps, raw float
//! planes for displacement fields, and float tensors with a JSON manifest
//! for layer parameters.

mod field;
mod params;
mod pgm;

pub use field::{read_field, sidecar_path, write_field, FieldHeader};
pub use params::{
    read_block_params, read_getconv_params, write_block_params, write_getconv_params, Manifest,
    TensorEntry,
};
pub use pgm::{decode_pgm, encode_pgm, read_energy, read_map, write_map};
