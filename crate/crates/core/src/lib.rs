//! Training engine for newly hired customer-service agents.
//!
//! The crate covers the offline mining pipeline (conversation logs to intent
//! scenes and representative scripts), the user-simulator bot that plays the
//! customer during a training session, and the scorecard that grades the
//! trainee afterwards.
//!
//! Numeric kernels are generic over [`Scalar`]; the aliases below pin the
//! `f64` instantiations used by the rest of the crate and by persisted
//! artifacts.

pub mod corpus;
pub mod intentcluster;
pub mod respond;
pub mod scalar;
pub mod scorecard;
pub mod simcore;
pub mod textenc;
pub mod vecmath;
pub mod vindex;

pub use scalar::Scalar;

/// Embedding matrix used by every persisted artifact.
pub type Embeddings = textenc::EmbeddingMatrix<f64>;
/// Vector index over `f64` context embeddings.
pub type ContextIndex = vindex::VectorIndex<f64>;
/// Index entry over `f64` context embeddings.
pub type ContextEntry = vindex::IndexEntry<f64>;
/// HDBSCAN output for `f64` points.
pub type Clustering = intentcluster::ClusterResult<f64>;
