//! Conceptual-space dimensions from prototype embeddings.
//!
//! Entities and feature prototypes ("a very sweet food") are embedded with the
//! same encoder. An entity's coordinate on a feature is the dot product of the
//! two embeddings. Because prototype descriptions tend to occupy a different
//! subspace than the entities, an [`AlignmentAdapter`] is trained with a
//! centroid classification loss and a pairwise ranking loss, or fitted in
//! closed form with orthogonal Procrustes. The [`evaluation`] module holds the
//! pairwise-accuracy, correlation and significance machinery.

pub mod alignment;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod objectives;
pub mod scoring;

pub use alignment::{
    grad_check, init_adapter, procrustes, train, AlignmentAdapter, Mode, Scope, Side, TrainConfig,
    TrainTrace,
};
pub use corpus::{
    eol_prompt, verbalize_entity, ClassificationItem, EmbeddingStore, Entity, FeaturePrototype,
    RankPair, RatingsTable,
};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, McNemarResult, SynthWorld, SynthWorldConfig};
pub use linalg::{EmbeddingVector, Matrix};
pub use objectives::LossConfig;
pub use scoring::{FeatureDirection, ScoredEntity};
