//! Image files, field-of-view masks, patch sampling and stitching.

mod dataset;
mod fov;
mod image;
mod normalize;
mod patches;
pub mod pnm;
pub mod synth;

pub use dataset::{load_dataset, read_f32_sidecar, write_probability_map};
pub use fov::{fov_strategy, generate_fov_mask, AutoFov, FovStrategy, GeneratedFov, NoFov, DEFAULT_FOV_THRESHOLD};
pub use image::GrayImage;
pub use normalize::{normalize_strategy, NormalizeStrategy, Normalization, Standardize, Unit};
pub use patches::{extract, sample_patches, stitch_predictions, tile_origins, Origin, PatchSet, Split, PATCH_SIZE, VAL_FRACTION};
pub use pnm::{read_pnm, write_pnm};
