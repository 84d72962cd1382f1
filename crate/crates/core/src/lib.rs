//! Dimensional-redundancy analysis for text-embedding matrices.
//!
//! Reduce embeddings (first-d, random subsets, PCA, Isomap), estimate their
//! intrinsic dimension (TwoNN) and isotropy (IsoScore), and score them on
//! classification, clustering, retrieval and STS tasks, either one cell at a
//! time or as a full dimension sweep.

pub mod dataset;
pub mod error;
pub mod intrinsic_dim;
pub mod isotropy;
pub mod numerics;
pub mod reducers;
pub mod rng;
pub mod sweep;
pub mod synthgen;
pub mod taskeval;

pub use error::{Error, Result};
pub use numerics::Matrix;
