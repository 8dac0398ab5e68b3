//! Survival analysis with neural survival oblique trees: Cox models whose
//! risk network is an oblique decision tree, trained by proximal gradient
//! descent, plus tree extraction, survival metrics, simulation and CSV input.

pub mod checkpoint;
pub mod cox;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod net;
pub mod sim;
mod special;
pub mod survival;
pub mod train;
pub mod tree;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use net::{Activation, ActivationTrace, NsoTreeParams};
pub use special::chi_square_sf;
pub use survival::{RiskScores, StepFunction, SurvivalDataset};
pub use train::{ModelKind, TrainConfig, TrainReport};
pub use tree::{extract_tree, ObliqueSplit, ObliqueTree};
