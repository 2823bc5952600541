//! Synthetic worlds in which prototypes live in a different subspace than the
//! entities they describe.
//!
//! A seeded orthogonal frame `Q` supplies two disjoint `k`-dimensional bases:
//! `B` (entities) and `Bp` (prototypes). Entity `e` has a latent unit vector
//! `ẑ_e ∈ Rᵏ`; feature `j` has a unit weight vector `w_j ∈ Rᵏ` and the ground
//! truth `f_j(e) = ẑ_e·w_j`. Entity embeddings are `normalize(B(ẑ_e + σξ))`.
//! The ideal feature direction `B·w_j` is moved into the prototype subspace
//! by the hidden orthogonal map `H`, which sends `B·x` to `Bp·G·x`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_classification_dataset, save_embeddings, save_pairs, save_prototypes, save_ratings,
    verbalize_entity, ClassificationItem, EmbeddingStore, Entity, FeaturePrototype, RankPair,
    RatingsTable,
};
use crate::error::{Error, Result};
use crate::linalg::random::{fill_gaussian, seeded_rng};
use crate::linalg::{norm, random_orthogonal, EmbeddingVector, Matrix};

use super::generate_pairs;

pub const NONSENSE_ID: &str = "nonsense";
const EXAMPLES_PER_ITEM: usize = 7;
const SIBLING_NEGATIVES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenMap {
    #[default]
    Orthogonal,
    /// Prototypes sit on the ideal directions inside the entity subspace.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthWorldConfig {
    pub d: usize,
    pub n_entities: usize,
    pub n_features: usize,
    pub noise_sigma: f64,
    pub hidden_map: HiddenMap,
    pub seed: u64,
    /// Dimension of the entity and prototype subspaces.
    pub subspace_dim: usize,
}

impl Default for SynthWorldConfig {
    fn default() -> Self {
        Self {
            d: 64,
            n_entities: 40,
            n_features: 6,
            noise_sigma: 0.05,
            hidden_map: HiddenMap::Orthogonal,
            seed: 7,
            subspace_dim: 4,
        }
    }
}

impl SynthWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.subspace_dim;
        if self.n_features == 0 || self.n_entities < 2 || k == 0 {
            return Err(Error::Config(
                "synthetic world needs features, two entities and a subspace".into(),
            ));
        }
        if self.d < 2 * self.n_features {
            return Err(Error::Config(format!(
                "d = {} is below 2·n_features = {}",
                self.d,
                2 * self.n_features
            )));
        }
        if self.d < 2 * k + 1 {
            return Err(Error::Config(format!(
                "d = {} leaves no room for two {k}-dimensional subspaces and a spare axis",
                self.d
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthWorldConfig,
    pub store: EmbeddingStore,
    pub ratings: RatingsTable,
    pub prototypes: Vec<FeaturePrototype>,
    /// One item per feature; siblings drawn from all features.
    pub class_items: Vec<ClassificationItem>,
    pub entities: Vec<Entity>,
    /// `d×k` orthonormal basis of the entity subspace.
    pub entity_basis: Matrix,
    /// `d×k` orthonormal basis of the prototype subspace.
    pub prototype_basis: Matrix,
    /// Row-convention hidden map: `ideal_jᵀ·H = prototype_jᵀ`.
    pub hidden_map: Matrix,
    /// Unit feature weights in latent coordinates.
    pub feature_weights: Vec<Vec<f64>>,
    latents: Vec<Vec<f64>>,
}

pub fn feature_id(j: usize) -> String {
    format!("f{j}")
}

fn entity_id(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(2);
    format!("e{i:0width$}")
}

fn columns(q: &Matrix, range: std::ops::Range<usize>) -> Matrix {
    let mut out = Matrix::zeros(q.rows(), range.len());
    for (c, src) in range.enumerate() {
        for r in 0..q.rows() {
            out.set(r, c, q.get(r, src));
        }
    }
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

pub fn synth_world(cfg: &SynthWorldConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let (d, k) = (cfg.d, cfg.subspace_dim);
    let q = random_orthogonal(d, cfg.seed);
    let g = random_orthogonal(k, cfg.seed.wrapping_add(1));
    let b = columns(&q, 0..k);
    let bp = columns(&q, k..2 * k);
    let mut rng = seeded_rng(cfg.seed.wrapping_add(2));

    let mut feature_weights = Vec::with_capacity(cfg.n_features);
    for _ in 0..cfg.n_features {
        let mut w = vec![0.0; k];
        loop {
            fill_gaussian(&mut rng, &mut w);
            if norm(&w) > 1e-6 {
                break;
            }
        }
        feature_weights.push(unit(w));
    }

    let mut latents = Vec::with_capacity(cfg.n_entities);
    let mut store = EmbeddingStore::new();
    let mut ratings = RatingsTable::new();
    let mut entities = Vec::with_capacity(cfg.n_entities);
    let mut noise = vec![0.0; k];
    for i in 0..cfg.n_entities {
        let z = loop {
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            if norm(&z) > 1e-6 {
                break unit(z);
            }
        };
        fill_gaussian(&mut rng, &mut noise);
        let noisy: Vec<f64> = z
            .iter()
            .zip(&noise)
            .map(|(a, n)| a + cfg.noise_sigma * n)
            .collect();
        let id = entity_id(i, cfg.n_entities);
        let v = crate::linalg::normalize(&EmbeddingVector::new(b.mul_slice(&noisy))?)?;
        store.insert(id.clone(), verbalize_entity(&id, Some("synthetic item"))?, v)?;
        for (j, w) in feature_weights.iter().enumerate() {
            ratings.insert(id.clone(), feature_id(j), crate::linalg::dot_slices(&z, w))?;
        }
        entities.push(Entity {
            id: id.clone(),
            name: id,
            category: Some("synthetic item".into()),
        });
        latents.push(z);
    }

    let mut prototypes = Vec::with_capacity(cfg.n_features);
    for (j, w) in feature_weights.iter().enumerate() {
        let v = match cfg.hidden_map {
            HiddenMap::Orthogonal => bp.mul_slice(&g.mul_slice(w)),
            HiddenMap::Identity => b.mul_slice(w),
        };
        let id = feature_id(j);
        let description = format!("a very {id} synthetic item");
        store.insert(
            id.clone(),
            description.clone(),
            crate::linalg::normalize(&EmbeddingVector::new(v)?)?,
        )?;
        prototypes.push(FeaturePrototype {
            feature_id: id,
            description,
        });
    }
    store.insert(
        NONSENSE_ID,
        "a very meaningless synthetic item",
        EmbeddingVector::new(q.column(2 * k))?,
    )?;

    let hidden_map = match cfg.hidden_map {
        HiddenMap::Identity => Matrix::identity(d),
        HiddenMap::Orthogonal => {
            // H = B·Gᵀ·Bpᵀ + Bp·G·Bᵀ + (I − B·Bᵀ − Bp·Bpᵀ), so that
            // (B·x)ᵀ·H = (Bp·G·x)ᵀ.
            let bt = b.transpose();
            let bpt = bp.transpose();
            let mut h = Matrix::identity(d);
            let terms = [
                (b.matmul(&g.transpose())?.matmul(&bpt)?, 1.0),
                (bp.matmul(&g)?.matmul(&bt)?, 1.0),
                (b.matmul(&bt)?, -1.0),
                (bp.matmul(&bpt)?, -1.0),
            ];
            for (m, s) in &terms {
                for (o, x) in h.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *o += s * x;
                }
            }
            h
        }
    };

    let mut world = SynthWorld {
        config: cfg.clone(),
        store,
        ratings,
        prototypes,
        class_items: Vec::new(),
        entities,
        entity_basis: b,
        prototype_basis: bp,
        hidden_map,
        feature_weights,
        latents,
    };
    if cfg.n_features > SIBLING_NEGATIVES {
        let all: Vec<usize> = (0..cfg.n_features).collect();
        world.class_items = world.classification_items_for(&all)?;
    } else {
        log::warn!(
            "synthetic world with {} features has no classification items",
            cfg.n_features
        );
    }
    Ok(world)
}

impl SynthWorld {
    pub fn feature_ids(&self) -> Vec<String> {
        (0..self.config.n_features).map(feature_id).collect()
    }

    /// Items for `features`: the top-7 entities by rating as examples, the
    /// three least similar features from the same set plus the nonsense
    /// prototype as negatives.
    pub fn classification_items_for(&self, features: &[usize]) -> Result<Vec<ClassificationItem>> {
        if features.len() <= SIBLING_NEGATIVES {
            return Err(Error::Config(format!(
                "classification items need at least {} features",
                SIBLING_NEGATIVES + 1
            )));
        }
        let n_ex = EXAMPLES_PER_ITEM.min(self.entities.len());
        features
            .iter()
            .map(|&j| {
                let w = self
                    .feature_weights
                    .get(j)
                    .ok_or_else(|| Error::Config(format!("no feature {j}")))?;
                let mut by_value: Vec<(f64, usize)> = self
                    .latents
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (crate::linalg::dot_slices(z, w), i))
                    .collect();
                by_value.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let examples = by_value[..n_ex]
                    .iter()
                    .map(|(_, i)| self.entities[*i].id.clone())
                    .collect();
                let mut siblings: Vec<(f64, usize)> = features
                    .iter()
                    .filter(|&&o| o != j)
                    .map(|&o| (crate::linalg::dot_slices(w, &self.feature_weights[o]), o))
                    .collect();
                siblings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut negatives: Vec<String> = siblings[..SIBLING_NEGATIVES]
                    .iter()
                    .map(|(_, o)| feature_id(*o))
                    .collect();
                negatives.push(NONSENSE_ID.to_owned());
                Ok(ClassificationItem {
                    target: feature_id(j),
                    examples,
                    negatives,
                    category: Some("synthetic item".into()),
                })
            })
            .collect()
    }

    /// Rank pairs from the ratings of `features`, at most `max_pairs` each.
    pub fn rank_pairs(&self, features: &[usize], max_pairs: usize, seed: u64) -> Result<Vec<RankPair>> {
        let mut out = Vec::new();
        for &j in features {
            out.extend(generate_pairs(
                &self.ratings,
                &feature_id(j),
                0.0,
                max_pairs,
                seed.wrapping_add(j as u64),
            )?);
        }
        Ok(out)
    }

    /// Writes embeddings.jsonl, ratings.csv, prototypes.json,
    /// classification.json and pairs.csv (all features) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, max_pairs: usize) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_embeddings(&self.store, dir.join("embeddings.jsonl"))?;
        save_ratings(&self.ratings, dir.join("ratings.csv"))?;
        save_prototypes(&self.prototypes, dir.join("prototypes.json"))?;
        save_classification_dataset(&self.class_items, dir.join("classification.json"))?;
        let all: Vec<usize> = (0..self.config.n_features).collect();
        save_pairs(
            &self.rank_pairs(&all, max_pairs, self.config.seed)?,
            dir.join("pairs.csv"),
        )?;
        Ok(())
    }
}
