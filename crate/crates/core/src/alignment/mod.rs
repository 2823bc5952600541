//! The alignment adapter: a `d×d` map applied to frozen embeddings so that
//! prototype descriptions land in the same subspace as the entities they
//! describe. It is fitted either by gradient descent on the combined
//! classification/ranking objective ([`train`]) or in closed form by
//! orthogonal Procrustes ([`procrustes`]).

mod procrustes;
mod train;

pub use procrustes::{centroid_pairs, procrustes, procrustes_adapter};
pub use train::{grad_check, loss_and_gradient, train, Mode, TrainConfig, TrainTrace, TraceRow};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::random::{fill_gaussian, seeded_rng};
use crate::linalg::{normalize, EmbeddingVector, Matrix};

/// Scale of the Gaussian perturbation in [`init_adapter`].
pub const INIT_EPSILON: f64 = 1e-3;

/// Which embeddings the adapter maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    #[serde(rename = "prototypes-only")]
    PrototypesOnly,
    #[serde(rename = "shared")]
    Shared,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::PrototypesOnly => "prototypes-only",
            Scope::Shared => "shared",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prototypes-only" => Ok(Scope::PrototypesOnly),
            "shared" => Ok(Scope::Shared),
            other => Err(Error::Config(format!("unknown adapter scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Entity,
    Prototype,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentAdapter {
    w: Matrix,
    scope: Scope,
    renormalize: bool,
}

#[derive(Serialize, Deserialize)]
struct AdapterFile {
    dim: usize,
    scope: Scope,
    renormalize: bool,
    #[serde(rename = "W")]
    w: Vec<f64>,
}

impl AlignmentAdapter {
    pub fn new(w: Matrix, scope: Scope, renormalize: bool) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::dim(w.rows(), w.cols()));
        }
        Ok(Self {
            w,
            scope,
            renormalize,
        })
    }

    pub fn identity(d: usize, scope: Scope) -> Self {
        Self {
            w: Matrix::identity(d),
            scope,
            renormalize: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn renormalize(&self) -> bool {
        self.renormalize
    }

    pub(crate) fn with_matrix(&self, w: Matrix) -> Self {
        Self {
            w,
            scope: self.scope,
            renormalize: self.renormalize,
        }
    }

    /// Whether vectors on `side` go through `W`.
    pub fn maps(&self, side: Side) -> bool {
        side == Side::Prototype || self.scope == Scope::Shared
    }

    pub fn forward(&self, v: &EmbeddingVector, side: Side) -> Result<EmbeddingVector> {
        if v.dim() != self.dim() {
            return Err(Error::dim(self.dim(), v.dim()));
        }
        if !self.maps(side) {
            return Ok(v.clone());
        }
        let z = EmbeddingVector::from_raw(self.w.mul_slice(v.as_slice()), false);
        if self.renormalize {
            normalize(&z)
        } else {
            Ok(z)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&AdapterFile {
            dim: self.dim(),
            scope: self.scope,
            renormalize: self.renormalize,
            w: self.w.as_slice().to_vec(),
        })
        .expect("adapter serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: AdapterFile = serde_json::from_str(s)
            .map_err(|e| Error::Schema(format!("adapter file: {e}")))?;
        if f.dim == 0 || f.w.len() != f.dim * f.dim {
            return Err(Error::Schema(format!(
                "adapter file: W has {} entries for dim {}",
                f.w.len(),
                f.dim
            )));
        }
        Self::new(Matrix::new(f.dim, f.dim, f.w)?, f.scope, f.renormalize)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Hex SHA-256 of the serialized adapter; identifies it in reports.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// `W = I + ε·G` with seeded standard-normal `G` and `ε` = [`INIT_EPSILON`].
pub fn init_adapter(d: usize, scope: Scope, seed: u64) -> AlignmentAdapter {
    init_adapter_with_epsilon(d, scope, seed, INIT_EPSILON)
}

pub fn init_adapter_with_epsilon(
    d: usize,
    scope: Scope,
    seed: u64,
    epsilon: f64,
) -> AlignmentAdapter {
    assert!(d >= 1, "dimension must be positive");
    let mut g = vec![0.0; d * d];
    fill_gaussian(&mut seeded_rng(seed), &mut g);
    let mut w = Matrix::identity(d);
    for (x, gi) in w.as_mut_slice().iter_mut().zip(&g) {
        *x += epsilon * gi;
    }
    AlignmentAdapter {
        w,
        scope,
        renormalize: true,
    }
}
