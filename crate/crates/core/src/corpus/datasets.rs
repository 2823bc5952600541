//! Supervision and evaluation files.
//!
//! * classification items: a JSON array of
//!   `{"target", "examples": [..7], "negatives": [..4], "category"?}`
//! * ratings: long CSV with header `item,dimension,rating`
//! * pairs: CSV with header `item_a,item_b,dimension,label`, label in {-1, 1}
//! * prototypes: a JSON array of `{"feature_id", "description"}`

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeaturePrototype, RankPair};
use crate::error::{Error, Result};

pub const DEFAULT_EXAMPLES: usize = 7;
pub const DEFAULT_NEGATIVES: usize = 4;

/// A target property, entities that have it, and properties they lack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationItem {
    pub target: String,
    pub examples: Vec<String>,
    pub negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Exactly 7 examples and 4 negatives.
    #[default]
    Strict,
    /// At least 2 examples and 1 negative; deviations are logged.
    Relaxed,
}

impl ClassificationItem {
    pub fn validate(&self, strictness: Strictness) -> Result<()> {
        let name = &self.target;
        let counts_ok = match strictness {
            Strictness::Strict => {
                self.examples.len() == DEFAULT_EXAMPLES
                    && self.negatives.len() == DEFAULT_NEGATIVES
            }
            Strictness::Relaxed => self.examples.len() >= 2 && !self.negatives.is_empty(),
        };
        if !counts_ok {
            return Err(Error::Schema(format!(
                "item `{name}`: {} examples and {} negatives ({:?} mode expects {})",
                self.examples.len(),
                self.negatives.len(),
                strictness,
                match strictness {
                    Strictness::Strict => "7 and 4",
                    Strictness::Relaxed => "at least 2 and 1",
                }
            )));
        }
        if strictness == Strictness::Relaxed
            && (self.examples.len() != DEFAULT_EXAMPLES
                || self.negatives.len() != DEFAULT_NEGATIVES)
        {
            log::warn!(
                "item `{name}` has {} examples and {} negatives",
                self.examples.len(),
                self.negatives.len()
            );
        }
        let mut seen = HashSet::new();
        for s in std::iter::once(&self.target)
            .chain(&self.examples)
            .chain(&self.negatives)
        {
            if s.is_empty() {
                return Err(Error::Schema(format!("item `{name}`: empty string")));
            }
            if !seen.insert(s) {
                return Err(Error::Schema(format!("item `{name}`: duplicate `{s}`")));
            }
        }
        Ok(())
    }
}

pub fn load_classification_dataset(
    path: impl AsRef<Path>,
    strictness: Strictness,
) -> Result<Vec<ClassificationItem>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<ClassificationItem> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
    for (i, item) in items.iter().enumerate() {
        item.validate(strictness)
            .map_err(|e| Error::Schema(format!("record {i}: {e}")))?;
    }
    Ok(items)
}

/// `n` items chosen uniformly with `seed`, kept in their original order.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > items.len() {
        return Err(Error::Config(format!(
            "cannot take {n} of {} items",
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, items.len(), n).into_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn save_classification_dataset(
    items: &[ClassificationItem],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(items, path.as_ref())
}

pub fn load_prototypes(path: impl AsRef<Path>) -> Result<Vec<FeaturePrototype>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let protos: Vec<FeaturePrototype> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
    for p in &protos {
        if p.feature_id.is_empty() || p.description.is_empty() {
            return Err(Error::Schema(format!(
                "prototype `{}` has an empty id or description",
                p.feature_id
            )));
        }
    }
    Ok(protos)
}

pub fn save_prototypes(protos: &[FeaturePrototype], path: impl AsRef<Path>) -> Result<()> {
    write_json(protos, path.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub item: String,
    pub dimension: String,
    pub rating: f64,
}

/// Ground-truth `f(e)` values, at most one per `(item, dimension)`.
#[derive(Debug, Clone, Default)]
pub struct RatingsTable {
    records: Vec<Rating>,
    index: HashMap<(String, String), usize>,
}

impl RatingsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        item: impl Into<String>,
        dimension: impl Into<String>,
        rating: f64,
    ) -> Result<()> {
        let (item, dimension) = (item.into(), dimension.into());
        if !rating.is_finite() {
            return Err(Error::Schema(format!(
                "rating for ({item}, {dimension}) is not finite"
            )));
        }
        let key = (item, dimension);
        if self.index.contains_key(&key) {
            return Err(Error::Schema(format!(
                "duplicate rating for ({}, {})",
                key.0, key.1
            )));
        }
        self.index.insert(key.clone(), self.records.len());
        self.records.push(Rating {
            item: key.0,
            dimension: key.1,
            rating,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Rating] {
        &self.records
    }

    pub fn get(&self, item: &str, dimension: &str) -> Option<f64> {
        self.index
            .get(&(item.to_owned(), dimension.to_owned()))
            .map(|&i| self.records[i].rating)
    }

    /// Dimensions in order of first appearance.
    pub fn dimensions(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.dimension.as_str()))
            .map(|r| r.dimension.as_str())
            .collect()
    }

    pub fn has_dimension(&self, dimension: &str) -> bool {
        self.records.iter().any(|r| r.dimension == dimension)
    }

    /// `(item, rating)` for one dimension, in insertion order.
    pub fn column(&self, dimension: &str) -> Vec<(&str, f64)> {
        self.records
            .iter()
            .filter(|r| r.dimension == dimension)
            .map(|r| (r.item.as_str(), r.rating))
            .collect()
    }
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!("expected header {expected:?}, found {got:?}"),
        });
    }
    Ok(rdr)
}

fn csv_records(
    path: &Path,
    expected: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = open_csv(path, expected)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsTable> {
    let path = path.as_ref();
    let mut table = RatingsTable::new();
    for (line, rec) in csv_records(path, &["item", "dimension", "rating"])? {
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let raw = field(2);
        let rating: f64 = raw.parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("rating `{raw}` for item `{}` is not a number", field(0)),
        })?;
        if field(0).is_empty() || field(1).is_empty() {
            return Err(Error::Schema(format!("line {line}: empty item or dimension")));
        }
        table
            .insert(field(0), field(1), rating)
            .map_err(|e| Error::Schema(format!("line {line}: {e}")))?;
    }
    Ok(table)
}

pub fn save_ratings(table: &RatingsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in table.records() {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<RankPair>> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (line, rec) in csv_records(path, &["item_a", "item_b", "dimension", "label"])? {
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let raw = field(3);
        let label: i64 = raw.parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("label `{raw}` is not an integer"),
        })?;
        if label != 1 && label != -1 {
            return Err(Error::Schema(format!(
                "line {line}: pair ({}, {}) has label {label}, expected -1 or 1",
                field(0),
                field(1)
            )));
        }
        if field(0).is_empty() || field(2).is_empty() || field(0) == field(1) {
            return Err(Error::Schema(format!(
                "line {line}: pair ({}, {}) on `{}` is not a pair of distinct items",
                field(0),
                field(1),
                field(2)
            )));
        }
        pairs.push(RankPair {
            item_a: field(0).to_owned(),
            item_b: field(1).to_owned(),
            dimension: field(2).to_owned(),
            label: label as i8,
        });
    }
    Ok(pairs)
}

pub fn save_pairs(pairs: &[RankPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for p in pairs {
        w.serialize(p).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
