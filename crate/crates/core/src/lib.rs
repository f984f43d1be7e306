//! Group-decomposed analytic continual learning.
//!
//! Frozen-backbone embeddings are expanded by a fixed random projection,
//! classes are grouped so that every group holds mutually dissimilar classes,
//! each group keeps a closed-form ridge classifier updated from accumulated
//! second-order statistics, and a k-NN over distance-to-prototype features
//! routes test samples to a group.

pub mod dataset;
pub mod distance;
pub mod error;
pub mod experiment;
pub mod format;
pub mod groupid;
pub mod grouping;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod reservoir;
pub mod ridge;
pub mod theory;

pub use dataset::{EmbeddingRecord, SyntheticSpec, TaskData, TaskManifest};
pub use distance::Distance;
pub use error::{Error, FormatError, Result};
pub use groupid::{GroupIdentifier, GroupPredictor, Vote};
pub use grouping::{ClassStats, GroupChoicePolicy, GroupId, GroupTable, SimGraph};
pub use metrics::{AccuracyLedger, OpdReport};
pub use pipeline::{CentroidSpace, GddsgConfig, GddsgState};
pub use projection::{Activation, RandomProjection};
pub use ridge::GroupModel;
