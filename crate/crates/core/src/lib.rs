//! Multi-head heterogeneous federated learning (MHHFL) for time-series
//! power-consumption prediction.
//!
//! Each client owns one head network per input feature plus a prediction
//! network. Heads are summarised as four-dimensional pulling/pushing force
//! embeddings, shared through a [`fed::SourcePool`], and blended with the
//! closest heads of other clients.
//!
//! Module map:
//!
//! - [`data`]: CSV ingestion, synthetic generator, splitting, windowing
//! - [`nn`]: dense layers, losses, backprop, Adam, checkpoints
//! - [`model`]: the per-client multi-head model
//! - [`embed`]: gradient- and data-based head embeddings
//! - [`fed`]: the source pool and the share/select/blend protocol
//! - [`harness`]: orchestration, ablations, the alpha sweep, config and metrics

pub mod data;
pub mod embed;
pub mod error;
pub mod fed;
pub mod harness;
pub mod model;
pub mod nn;
pub mod rng;

pub use data::{FeatureTensor, Normalizer, RawRun, SplitSpec};
pub use embed::{embedding_distance, Embedding};
pub use fed::{EmbedKind, FedConfig, FedMode, PoolEntry, SourcePool};
pub use harness::{MetricsRecord, RunConfig, Variant};
pub use model::{BatchOutput, ClientModel};

pub use error::{Error, Result};

pub use nn::{Activation, AdamState, DenseNet, ForwardTrace, Gradients, Matrix};
