//! Image-text hashing that transfers to classes unseen in training.
//!
//! Two modality networks map image and text features into a shared space,
//! a third maps class semantic vectors there too. Linear hash functions
//! turn features into `±1` codes, trained so that codes agree with class
//! labels and with the similarity of the label embeddings, which lets
//! classes never seen in training be retrieved.

pub mod cli;
pub mod data;
pub mod error;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod retrieval;
pub mod trainer;

pub use data::{PairedDataset, QueryPartition, SynthParams, ZeroShotSplit};
pub use error::{Error, Result};
pub use model::{LaehModel, Modality, ModelShape};
pub use numerics::{DenseMatrix, SeededRng};
pub use objective::{LossBreakdown, LossWeights};
pub use retrieval::{Direction, RetrievalReport};
pub use trainer::{train, TrainConfig, TrainLog};
