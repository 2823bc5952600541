//! Everything that produces or persists embeddings and supervision records:
//! verbalization templates, the embeddings file format, dataset loaders, and
//! the HTTP embeddings client.

mod client;
mod datasets;
mod store;
mod verbalize;

pub use client::{fetch_embeddings, ServiceConfig, ENV_KEY, ENV_MODEL, ENV_URL};
pub use datasets::{
    load_classification_dataset, load_pairs, load_prototypes, load_ratings,
    save_classification_dataset, save_pairs, save_prototypes, save_ratings, subsample,
    ClassificationItem,
    Rating, RatingsTable, Strictness, DEFAULT_EXAMPLES, DEFAULT_NEGATIVES,
};
pub use store::{load_embeddings, save_embeddings, write_record, EmbeddingRecord, EmbeddingStore};
pub use verbalize::{eol_prompt, verbalize_entity};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl Entity {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            category: None,
        }
    }
}

/// A feature and the phrase describing its prototypical high-value entity,
/// e.g. `sweetness` / "a very sweet food". The prototype's embedding is
/// stored under `feature_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePrototype {
    pub feature_id: String,
    pub description: String,
}

/// One supervised comparison: `label = +1` when `item_a` should rank above
/// `item_b` on `dimension`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankPair {
    pub item_a: String,
    pub item_b: String,
    pub dimension: String,
    pub label: i8,
}

impl RankPair {
    /// Orientation-free identity of the comparison, used for leakage audits.
    pub fn key(&self) -> (String, String, String) {
        let (lo, hi) = if self.item_a <= self.item_b {
            (&self.item_a, &self.item_b)
        } else {
            (&self.item_b, &self.item_a)
        };
        (self.dimension.clone(), lo.clone(), hi.clone())
    }
}
