//! Training objectives with exact analytic gradients.
//!
//! * classification: a temperature softmax over `fₖ·c / T` that should pick
//!   the target prototype `f₀` against its negatives, where `c` is the
//!   centroid of the target's example entities;
//! * ranking: `σ(−α·y·(e₁ − e₂)·f)` for a labelled pair of entities;
//! * the combined objective `mean L1 + λ·mean L2`.
//!
//! Gradients are returned for every input vector so callers can route them
//! through whatever produced those vectors (see [`normalize_with_backprop`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_slices, norm, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.25,
            alpha: 10.0,
            lambda: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Target prototype first, then its negatives.
#[derive(Debug, Clone)]
pub struct ClassificationBatch {
    pub prototypes: Vec<EmbeddingVector>,
    pub centroid: EmbeddingVector,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationGrads {
    pub loss: f64,
    /// `∂L/∂fₖ`, aligned with the batch's prototypes.
    pub prototypes: Vec<Vec<f64>>,
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RankBatchItem {
    pub e1: EmbeddingVector,
    pub e2: EmbeddingVector,
    pub f: EmbeddingVector,
    pub y: i8,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingGrads {
    pub loss: f64,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub f: Vec<f64>,
}

/// Loss and per-item gradients of `mean L1 + λ·mean L2`. The gradients are
/// already scaled by their share of the total (`1/n₁` and `λ/n₂`).
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub loss: f64,
    pub classification: Vec<ClassificationGrads>,
    pub ranking: Vec<RankingGrads>,
}

/// Arithmetic mean of the vectors; the result is not re-normalized.
pub fn centroid(entities: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = entities
        .first()
        .ok_or_else(|| Error::Input("centroid of an empty set".into()))?;
    let slices: Vec<&[f64]> = entities
        .iter()
        .map(|e| {
            if e.dim() == first.dim() {
                Ok(e.as_slice())
            } else {
                Err(Error::dim(first.dim(), e.dim()))
            }
        })
        .collect::<Result<_>>()?;
    Ok(EmbeddingVector::from_raw(mean_of(&slices), false))
}

pub(crate) fn mean_of(vs: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Slice-level classification loss; `protos[0]` is the target.
pub(crate) fn classification_terms(
    protos: &[&[f64]],
    c: &[f64],
    temperature: f64,
) -> Result<ClassificationGrads> {
    let logits: Vec<f64> = protos
        .iter()
        .map(|f| dot_slices(f, c) / temperature)
        .collect();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("non-finite classification logit".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - logits[0];

    // ∂L/∂zₖ = pₖ − [k = 0]
    let coeffs: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / sum - if k == 0 { 1.0 } else { 0.0 })
        .collect();
    let prototypes = coeffs
        .iter()
        .map(|g| c.iter().map(|ci| g * ci / temperature).collect())
        .collect();
    let mut centroid = vec![0.0; c.len()];
    for (g, f) in coeffs.iter().zip(protos) {
        for (o, fi) in centroid.iter_mut().zip(f.iter()) {
            *o += g * fi / temperature;
        }
    }
    Ok(ClassificationGrads {
        loss,
        prototypes,
        centroid,
    })
}

pub(crate) fn ranking_terms(e1: &[f64], e2: &[f64], f: &[f64], y: f64, alpha: f64) -> RankingGrads {
    let diff: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).collect();
    let margin = alpha * y * dot_slices(&diff, f);
    let loss = sigmoid(-margin);
    // d σ(−m)/dm = −σ(m)σ(−m)
    let dm = -sigmoid(margin) * loss;
    let scale = dm * alpha * y;
    let ge1: Vec<f64> = f.iter().map(|x| scale * x).collect();
    RankingGrads {
        loss,
        e2: ge1.iter().map(|g| -g).collect(),
        e1: ge1,
        f: diff.iter().map(|d| scale * d).collect(),
    }
}

pub fn classification_loss(batch: &ClassificationBatch) -> Result<ClassificationGrads> {
    if batch.prototypes.len() < 2 {
        return Err(Error::Input(
            "classification needs a target and at least one negative".into(),
        ));
    }
    if !(batch.temperature > 0.0) {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let d = batch.centroid.dim();
    let protos: Vec<&[f64]> = batch
        .prototypes
        .iter()
        .map(|p| {
            if p.dim() == d {
                Ok(p.as_slice())
            } else {
                Err(Error::dim(d, p.dim()))
            }
        })
        .collect::<Result<_>>()?;
    classification_terms(&protos, batch.centroid.as_slice(), batch.temperature)
}

fn check_label(y: i8) -> Result<f64> {
    match y {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        other => Err(Error::Input(format!("label must be -1 or 1, got {other}"))),
    }
}

pub fn ranking_loss(item: &RankBatchItem) -> Result<RankingGrads> {
    let y = check_label(item.y)?;
    let d = item.f.dim();
    for v in [&item.e1, &item.e2] {
        if v.dim() != d {
            return Err(Error::dim(d, v.dim()));
        }
    }
    if !(item.alpha > 0.0) {
        return Err(Error::Config("alpha must be positive".into()));
    }
    Ok(ranking_terms(
        item.e1.as_slice(),
        item.e2.as_slice(),
        item.f.as_slice(),
        y,
        item.alpha,
    ))
}

/// `mean L1 + λ·mean L2`; an empty list contributes nothing.
pub fn combined_loss(
    class_batches: &[ClassificationBatch],
    rank_items: &[RankBatchItem],
    cfg: &LossConfig,
) -> Result<CombinedLoss> {
    cfg.validate()?;
    if class_batches.is_empty() && rank_items.is_empty() {
        return Err(Error::Input("combined loss over no data".into()));
    }
    let mut loss = 0.0;
    let mut classification = Vec::with_capacity(class_batches.len());
    if !class_batches.is_empty() {
        let w = 1.0 / class_batches.len() as f64;
        for b in class_batches {
            let mut g = classification_loss(b)?;
            loss += w * g.loss;
            scale_class(&mut g, w);
            classification.push(g);
        }
    }
    let mut ranking = Vec::with_capacity(rank_items.len());
    if !rank_items.is_empty() {
        let w = cfg.lambda / rank_items.len() as f64;
        for it in rank_items {
            let mut g = ranking_loss(it)?;
            loss += w * g.loss;
            scale_rank(&mut g, w);
            ranking.push(g);
        }
    }
    Ok(CombinedLoss {
        loss,
        classification,
        ranking,
    })
}

pub(crate) fn scale_class(g: &mut ClassificationGrads, w: f64) {
    g.prototypes
        .iter_mut()
        .flatten()
        .chain(g.centroid.iter_mut())
        .for_each(|x| *x *= w);
}

pub(crate) fn scale_rank(g: &mut RankingGrads, w: f64) {
    g.e1.iter_mut()
        .chain(g.e2.iter_mut())
        .chain(g.f.iter_mut())
        .for_each(|x| *x *= w);
}

/// Forward `v / ‖v‖` and the gradient with respect to `v` given the gradient
/// with respect to the output: `(g − u(u·g)) / ‖v‖`.
pub fn normalize_with_backprop(
    v: &EmbeddingVector,
    upstream: &EmbeddingVector,
) -> Result<(EmbeddingVector, EmbeddingVector)> {
    if v.dim() != upstream.dim() {
        return Err(Error::dim(v.dim(), upstream.dim()));
    }
    let (unit, grad) = normalize_backprop_slices(v.as_slice(), upstream.as_slice())?;
    Ok((
        EmbeddingVector::from_raw(unit, true),
        EmbeddingVector::from_raw(grad, false),
    ))
}

pub(crate) fn normalize_backprop_slices(v: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let unit: Vec<f64> = v.iter().map(|x| x / n).collect();
    let radial = dot_slices(&unit, upstream);
    let grad = upstream
        .iter()
        .zip(&unit)
        .map(|(g, u)| (g - u * radial) / n)
        .collect();
    Ok((unit, grad))
}
