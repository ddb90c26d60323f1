//! Scoring, comparison and statistical analysis of convolutional filter
//! pruning criteria.
//!
//! The crate is organised by task:
//!
//! * [`tensor_store`] reads and writes NTD dumps of network weights;
//! * [`criteria`] computes per-filter importance scores;
//! * [`similarity`] compares the rankings two criteria induce (Spearman);
//! * [`applicability`] measures and predicts the spread of scores;
//! * [`cwda_tests`] checks whether a layer looks like i.i.d. Gaussian filters;
//! * [`synth`] samples such layers and runs Monte Carlo checks of the
//!   closed-form results the other modules rely on;
//! * [`global_sim`] simulates global (cross-layer) pruning and builds masks.

pub mod applicability;
pub mod criteria;
pub mod error;
pub mod geometric_median;
pub mod global_sim;
pub mod matrix;
pub mod par;
pub mod report;
pub mod rng;
pub mod similarity;
pub mod stats;
pub mod synth;
pub mod tensor_store;

pub use criteria::{Criterion, CriterionParams, ScoreVector};
pub use error::{Error, Result};
pub use matrix::{FilterMatrix, Matrix};
pub use tensor_store::{DenseTensor, LayerRecord, NetworkDump, TensorRole};
