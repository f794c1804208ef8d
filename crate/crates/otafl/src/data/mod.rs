//! Dataset ingestion, synthetic generators, experiment configuration, and
//! bit-exact results output.

pub mod config;
pub mod idx;
pub mod mnist;
pub mod synth;
pub mod trajectory;

pub use config::ExperimentConfig;
pub use idx::{encode_idx, read_idx, IdxTensor};
pub use mnist::{DataEnv, DatasetChoice, DatasetSource};
pub use synth::{generate_synthetic, Dataset};
pub use trajectory::{read_trajectory, write_trajectory, write_trajectory_with_digest};
