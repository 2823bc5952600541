//! Conceptual-space coordinates: an entity's value on a feature is the dot
//! product of its (adapter-forwarded) embedding with a feature direction.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentAdapter, Side};
use crate::corpus::{EmbeddingStore, Entity, FeaturePrototype};
use crate::error::{Error, Result};
use crate::linalg::{dot, dot_slices, EmbeddingVector};
use crate::objectives::mean_of;

/// Score differences at or below this count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSource {
    Prototype,
    Seeds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDirection {
    pub feature_id: String,
    pub vector: EmbeddingVector,
    pub source: DirectionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub entity_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    First,
    Second,
    Tie,
}

pub fn score(entity: &EmbeddingVector, feature: &FeatureDirection) -> Result<f64> {
    dot(entity, &feature.vector)
}

/// `mean(highs) − mean(lows)`; not normalized.
pub fn seed_direction(
    feature_id: impl Into<String>,
    highs: &[EmbeddingVector],
    lows: &[EmbeddingVector],
) -> Result<FeatureDirection> {
    if highs.is_empty() || lows.is_empty() {
        return Err(Error::Input("seed lists must be non-empty".into()));
    }
    let d = highs[0].dim();
    if let Some(v) = highs.iter().chain(lows).find(|v| v.dim() != d) {
        return Err(Error::dim(d, v.dim()));
    }
    let h: Vec<&[f64]> = highs.iter().map(|v| v.as_slice()).collect();
    let l: Vec<&[f64]> = lows.iter().map(|v| v.as_slice()).collect();
    let diff: Vec<f64> = mean_of(&h)
        .iter()
        .zip(mean_of(&l))
        .map(|(a, b)| a - b)
        .collect();
    let feature_id = feature_id.into();
    if diff.iter().all(|x| *x == 0.0) {
        log::warn!("seed direction for `{feature_id}` is the zero vector");
    }
    Ok(FeatureDirection {
        feature_id,
        vector: EmbeddingVector::from_raw(diff, false),
        source: DirectionSource::Seeds,
    })
}

/// Forwarded prototype embedding, normalized.
pub fn prototype_direction(
    prototype: &FeaturePrototype,
    store: &EmbeddingStore,
    adapter: &AlignmentAdapter,
) -> Result<FeatureDirection> {
    let raw = store.require(&prototype.feature_id)?;
    let v = adapter.forward(raw, Side::Prototype)?;
    let v = if v.is_unit() {
        v
    } else {
        crate::linalg::normalize(&v)?
    };
    Ok(FeatureDirection {
        feature_id: prototype.feature_id.clone(),
        vector: v,
        source: DirectionSource::Prototype,
    })
}

fn entity_score(
    id: &str,
    feature: &FeatureDirection,
    store: &EmbeddingStore,
    adapter: &AlignmentAdapter,
) -> Result<f64> {
    let raw = store
        .get(id)
        .ok_or_else(|| Error::Lookup(format!("no embedding for entity `{id}`")))?;
    score(&adapter.forward(raw, Side::Entity)?, feature)
}

/// Descending by score; equal scores in ascending id order.
pub fn rank_entities(
    entities: &[Entity],
    feature: &FeatureDirection,
    store: &EmbeddingStore,
    adapter: &AlignmentAdapter,
) -> Result<Vec<ScoredEntity>> {
    let mut out = entities
        .iter()
        .map(|e| {
            Ok(ScoredEntity {
                entity_id: e.id.clone(),
                score: entity_score(&e.id, feature, store, adapter)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    Ok(out)
}

pub fn compare_scores(s1: f64, s2: f64) -> Comparison {
    let delta = s1 - s2;
    if delta.abs() <= TIE_TOLERANCE {
        Comparison::Tie
    } else if delta > 0.0 {
        Comparison::First
    } else {
        Comparison::Second
    }
}

pub fn compare(
    e1: &Entity,
    e2: &Entity,
    feature: &FeatureDirection,
    store: &EmbeddingStore,
    adapter: &AlignmentAdapter,
) -> Result<Comparison> {
    Ok(compare_scores(
        entity_score(&e1.id, feature, store, adapter)?,
        entity_score(&e2.id, feature, store, adapter)?,
    ))
}

/// Index of the option most similar to `query`; the lowest index wins ties.
pub fn select_option(query: &EmbeddingVector, options: &[EmbeddingVector]) -> Result<usize> {
    if options.is_empty() {
        return Err(Error::Input("no options to choose from".into()));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, o) in options.iter().enumerate() {
        if o.dim() != query.dim() {
            return Err(Error::dim(query.dim(), o.dim()));
        }
        let s = dot_slices(query.as_slice(), o.as_slice());
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}
