//! Image files, procedural phantoms, synthetic datasets and experiment
//! configuration.

mod config;
mod dataset;
mod evaluate;
mod phantom;
mod pnm;

pub use config::{EvalConfig, ExperimentConfig, Method, SolverSection};
pub use dataset::{
    load_dataset, load_paired_directory, read_manifest, synthesize_dataset, write_pairs, DatasetManifest, MaskSpec,
    Split, SplitSizes, SyntheticDataset, DATASET_FORMAT_VERSION, MANIFEST_FILE,
};
pub use evaluate::{delta_grid, evaluate_method, evaluate_network, run_ablation, tune_wiener_delta, AblationRow};
pub use phantom::{piecewise_constant_phantom, random_phantom};
pub use pnm::{decode_pnm, encode_pnm, quantize, read_image, write_image, BitDepth};
