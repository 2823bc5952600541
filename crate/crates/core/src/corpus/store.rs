//! Embeddings on disk: one JSON object per line, `{"id", "text", "vector"}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{EmbeddingVector, UNIT_NORM_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub text: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    text: String,
    vector: EmbeddingVector,
}

/// Id-addressed embeddings sharing one dimension. Iteration follows
/// insertion order.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.vector.dim())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(
        &mut self,
        id: impl Into<String>,
        text: impl Into<String>,
        vector: EmbeddingVector,
    ) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Input("embedding id is empty".into()));
        }
        if let Some(d) = self.dim() {
            if vector.dim() != d {
                return Err(Error::dim(d, vector.dim()));
            }
        }
        if self.index.contains_key(&id) {
            return Err(Error::Input(format!("duplicate embedding id `{id}`")));
        }
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push(Entry {
            id,
            text: text.into(),
            vector,
        });
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.index.get(id).map(|&i| &self.entries[i].vector)
    }

    /// Like [`get`](Self::get) but a miss is a [`Error::Lookup`].
    pub fn require(&self, id: &str) -> Result<&EmbeddingVector> {
        self.get(id).ok_or_else(|| Error::Lookup(id.to_owned()))
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.index.get(id).map(|&i| self.entries[i].text.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &EmbeddingVector)> {
        self.entries
            .iter()
            .map(|e| (e.id.as_str(), e.text.as_str(), &e.vector))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store = EmbeddingStore::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message,
        };
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(d) = store.dim() {
            if rec.vector.len() != d {
                return Err(Error::RecordDimension {
                    path: path.to_owned(),
                    line: lineno,
                    id: rec.id,
                    expected: d,
                    found: rec.vector.len(),
                });
            }
        }
        let mut vector = EmbeddingVector::new(rec.vector)
            .map_err(|e| parse_err(format!("record `{}`: {e}", rec.id)))?;
        if (vector.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            vector = EmbeddingVector::from_raw(vector.into_vec(), true);
        }
        store
            .insert(rec.id.clone(), rec.text, vector)
            .map_err(|e| parse_err(format!("record `{}`: {e}", rec.id)))?;
    }
    Ok(store)
}

pub fn save_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, text, vector) in store.iter() {
        write_record(&mut w, id, text, vector).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends one JSONL record.
pub fn write_record(
    w: &mut impl Write,
    id: &str,
    text: &str,
    vector: &EmbeddingVector,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Borrowed<'a> {
        id: &'a str,
        text: &'a str,
        vector: &'a [f64],
    }
    serde_json::to_writer(
        &mut *w,
        &Borrowed {
            id,
            text,
            vector: vector.as_slice(),
        },
    )?;
    w.write_all(b"\n")
}
