//! Synthetic blob scenes, PGM files and dataset manifests.

mod manifest;
mod pgm;
mod scene;

pub use manifest::{
    assign_splits, generate_dataset, generate_split, load_samples, read_manifest, split_counts,
    write_manifest, Manifest, ManifestEntry, Split, SplitScenes, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use scene::{boundary_from_mask, default_thickness, generate_scene, Difficulty, SceneSample};
