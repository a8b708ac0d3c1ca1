//! Unsupervised phone segmentation.
//!
//! Two families of segmenters share one set of building blocks:
//!
//! * peak picking on the spectral variation of log-Mel frames ([`svf`]), and
//! * segmental HMMs over precomputed self-supervised features ([`hmm`]),
//!   optionally steered toward the Mel peaks by a boundary-deviation penalty,
//!   trained by hard EM or decoded with offline k-means centroids ([`kmeans`]).
//!
//! [`evaluation`] scores boundaries and cluster assignments against reference
//! alignments, and [`pipeline`] strings everything together over a corpus
//! manifest (it also backs the `phoneseg` binary).

pub mod error;
pub mod evaluation;
pub mod features;
pub mod hmm;
pub mod kmeans;
pub mod pipeline;
pub mod svf;

pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use hmm::{HmmConfig, HmmModel, SegmentationResult, Variant};
pub use svf::{BoundarySet, DeviationTrack};
