//! Gradient training of the adapter on the combined objective.
//!
//! Each epoch shuffles the classification items and rank pairs, splits both
//! into the same number of steps (so the two sources are interleaved in
//! proportion to their sizes) and takes one Adam step per mini-batch.
//! Gradients flow from the losses through output normalization into `W`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AlignmentAdapter, Side};
use crate::corpus::{ClassificationItem, EmbeddingStore, RankPair};
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::objectives::{
    classification_terms, mean_of, normalize_backprop_slices, ranking_terms, LossConfig,
};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Entries checked by [`grad_check`] when `d² ≥` this.
const GRAD_CHECK_ENTRIES: usize = 64;
/// Denominator floor of the relative error in [`grad_check`].
const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Fine-tuning variants. The strings match the row labels used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "pretrained")]
    Pretrained,
    #[serde(rename = "classification")]
    Classification,
    #[serde(rename = "rank-perc")]
    RankPerc,
    #[serde(rename = "rank-full")]
    RankFull,
    #[serde(rename = "class+rank-perc")]
    ClassRankPerc,
    #[serde(rename = "class+rank-full")]
    ClassRankFull,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Pretrained,
        Mode::Classification,
        Mode::RankPerc,
        Mode::RankFull,
        Mode::ClassRankPerc,
        Mode::ClassRankFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pretrained => "pretrained",
            Mode::Classification => "classification",
            Mode::RankPerc => "rank-perc",
            Mode::RankFull => "rank-full",
            Mode::ClassRankPerc => "class+rank-perc",
            Mode::ClassRankFull => "class+rank-full",
        }
    }

    pub fn uses_classification(self) -> bool {
        matches!(
            self,
            Mode::Classification | Mode::ClassRankPerc | Mode::ClassRankFull
        )
    }

    pub fn uses_ranking(self) -> bool {
        matches!(
            self,
            Mode::RankPerc | Mode::RankFull | Mode::ClassRankPerc | Mode::ClassRankFull
        )
    }

    /// Ranking data restricted to perceptual datasets.
    pub fn perceptual_only(self) -> bool {
        matches!(self, Mode::RankPerc | Mode::ClassRankPerc)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub mode: Mode,
    /// Epochs without a validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Share of classification items held out for early stopping.
    pub validation_fraction: f64,
    /// Replace `W` by its nearest orthogonal matrix after training.
    pub project_orthogonal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            loss: LossConfig::default(),
            mode: Mode::ClassRankPerc,
            early_stop_patience: 20,
            validation_fraction: 0.1,
            project_orthogonal: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    /// Epoch whose weights were returned; `None` means the initial adapter.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.rows.len()
    }

    /// CSV with a leading `#` line echoing the configuration.
    pub fn write_csv(&self, w: &mut impl Write, cfg: &TrainConfig) -> std::io::Result<()> {
        writeln!(
            w,
            "# mode={} seed={} T={} alpha={} lambda={} lr={} epochs={} batch_size={}",
            cfg.mode,
            cfg.seed,
            cfg.loss.temperature,
            cfg.loss.alpha,
            cfg.loss.lambda,
            cfg.learning_rate,
            cfg.epochs,
            cfg.batch_size
        )?;
        writeln!(w, "epoch,train_loss,val_loss,grad_norm")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.grad_norm
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, cfg: &TrainConfig) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf, cfg)
            .and_then(|_| std::fs::write(path, buf))
            .map_err(|e| Error::io(path, e))
    }
}

struct ClassExample {
    prototypes: Vec<usize>,
    entities: Vec<usize>,
}

struct RankExample {
    e1: usize,
    e2: usize,
    f: usize,
    y: f64,
}

/// Training data resolved against the store; vectors are addressed by a
/// dense local index assigned in order of first use.
struct Problem<'a> {
    vectors: Vec<&'a [f64]>,
    class: Vec<ClassExample>,
    rank: Vec<RankExample>,
}

impl<'a> Problem<'a> {
    fn build(
        store: &'a EmbeddingStore,
        d: usize,
        class_items: &[ClassificationItem],
        rank_pairs: &[RankPair],
    ) -> Result<Self> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut vectors: Vec<&'a [f64]> = Vec::new();
        let mut resolve = |id: &str| -> Result<usize> {
            if let Some(&i) = ids.get(id) {
                return Ok(i);
            }
            let v = store.require(id)?;
            if v.dim() != d {
                return Err(Error::dim(d, v.dim()));
            }
            ids.insert(id.to_owned(), vectors.len());
            vectors.push(v.as_slice());
            Ok(vectors.len() - 1)
        };
        let mut class = Vec::with_capacity(class_items.len());
        for item in class_items {
            let prototypes = std::iter::once(&item.target)
                .chain(&item.negatives)
                .map(|s| resolve(s))
                .collect::<Result<Vec<_>>>()?;
            let entities = item
                .examples
                .iter()
                .map(|s| resolve(s))
                .collect::<Result<Vec<_>>>()?;
            if prototypes.len() < 2 || entities.is_empty() {
                return Err(Error::Schema(format!(
                    "item `{}` needs examples and negatives",
                    item.target
                )));
            }
            class.push(ClassExample {
                prototypes,
                entities,
            });
        }
        let mut rank = Vec::with_capacity(rank_pairs.len());
        for p in rank_pairs {
            let y = match p.label {
                1 => 1.0,
                -1 => -1.0,
                other => {
                    return Err(Error::Schema(format!(
                        "pair ({}, {}) has label {other}",
                        p.item_a, p.item_b
                    )))
                }
            };
            rank.push(RankExample {
                e1: resolve(&p.item_a)?,
                e2: resolve(&p.item_b)?,
                f: resolve(&p.dimension)?,
                y,
            });
        }
        Ok(Self {
            vectors,
            class,
            rank,
        })
    }

    /// Combined loss over the selected examples and, optionally, `∂L/∂W`
    /// (row-major `d×d`).
    fn objective(
        &self,
        adapter: &AlignmentAdapter,
        class_idx: &[usize],
        rank_idx: &[usize],
        loss_cfg: &LossConfig,
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        let n = self.vectors.len();
        let d = adapter.dim();
        let slot = |i: usize, side: Side| i + if side == Side::Prototype { n } else { 0 };

        // Forward pass for every (vector, side) that is both used and mapped.
        let mut needed = vec![false; 2 * n];
        for &j in class_idx {
            let ex = &self.class[j];
            ex.prototypes
                .iter()
                .for_each(|&i| needed[slot(i, Side::Prototype)] = true);
            ex.entities
                .iter()
                .for_each(|&i| needed[slot(i, Side::Entity)] = true);
        }
        for &j in rank_idx {
            let ex = &self.rank[j];
            needed[slot(ex.e1, Side::Entity)] = true;
            needed[slot(ex.e2, Side::Entity)] = true;
            needed[slot(ex.f, Side::Prototype)] = true;
        }
        let mut pre: Vec<Option<Vec<f64>>> = vec![None; 2 * n];
        let mut out: Vec<Option<Vec<f64>>> = vec![None; 2 * n];
        for k in 0..2 * n {
            let side = if k >= n { Side::Prototype } else { Side::Entity };
            if !needed[k] || !adapter.maps(side) {
                continue;
            }
            let z = adapter.w.mul_slice(self.vectors[k % n]);
            if adapter.renormalize {
                let nz = crate::linalg::norm(&z);
                if nz == 0.0 {
                    return Err(Error::DegenerateVector);
                }
                out[k] = Some(z.iter().map(|x| x / nz).collect());
                pre[k] = Some(z);
            } else {
                out[k] = Some(z);
            }
        }
        let view = |i: usize, side: Side| -> &[f64] {
            out[slot(i, side)]
                .as_deref()
                .unwrap_or(self.vectors[i])
        };

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; 2 * n];
        let mut add = |k: usize, g: &[f64], w: f64| {
            let acc = grads[k].get_or_insert_with(|| vec![0.0; d]);
            for (a, x) in acc.iter_mut().zip(g) {
                *a += w * x;
            }
        };

        let mut loss = 0.0;
        if !class_idx.is_empty() {
            let w = 1.0 / class_idx.len() as f64;
            for &j in class_idx {
                let ex = &self.class[j];
                let protos: Vec<&[f64]> = ex
                    .prototypes
                    .iter()
                    .map(|&i| view(i, Side::Prototype))
                    .collect();
                let ents: Vec<&[f64]> =
                    ex.entities.iter().map(|&i| view(i, Side::Entity)).collect();
                let c = mean_of(&ents);
                let g = classification_terms(&protos, &c, loss_cfg.temperature)?;
                loss += w * g.loss;
                if want_grad {
                    for (&i, gk) in ex.prototypes.iter().zip(&g.prototypes) {
                        add(slot(i, Side::Prototype), gk, w);
                    }
                    if adapter.maps(Side::Entity) {
                        let share = w / ex.entities.len() as f64;
                        for &i in &ex.entities {
                            add(slot(i, Side::Entity), &g.centroid, share);
                        }
                    }
                }
            }
        }
        if !rank_idx.is_empty() {
            let w = loss_cfg.lambda / rank_idx.len() as f64;
            for &j in rank_idx {
                let ex = &self.rank[j];
                let g = ranking_terms(
                    view(ex.e1, Side::Entity),
                    view(ex.e2, Side::Entity),
                    view(ex.f, Side::Prototype),
                    ex.y,
                    loss_cfg.alpha,
                );
                loss += w * g.loss;
                if want_grad {
                    if adapter.maps(Side::Entity) {
                        add(slot(ex.e1, Side::Entity), &g.e1, w);
                        add(slot(ex.e2, Side::Entity), &g.e2, w);
                    }
                    add(slot(ex.f, Side::Prototype), &g.f, w);
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical("non-finite loss".into()));
        }
        if !want_grad {
            return Ok((loss, None));
        }

        let mut dw = vec![0.0; d * d];
        for (k, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let side = if k >= n { Side::Prototype } else { Side::Entity };
            if !adapter.maps(side) {
                continue;
            }
            let gz = match &pre[k] {
                Some(z) => normalize_backprop_slices(z, g)?.1,
                None => g.clone(),
            };
            let v = self.vectors[k % n];
            for (r, gr) in gz.iter().enumerate() {
                if *gr == 0.0 {
                    continue;
                }
                for (o, vc) in dw[r * d..(r + 1) * d].iter_mut().zip(v) {
                    *o += gr * vc;
                }
            }
        }
        Ok((loss, Some(dw)))
    }
}

fn check_mode_data(
    mode: Mode,
    class_items: &[ClassificationItem],
    rank_pairs: &[RankPair],
) -> Result<()> {
    if mode == Mode::Pretrained {
        return Ok(());
    }
    if mode.uses_classification() && class_items.is_empty() {
        return Err(Error::Config(format!(
            "mode {mode} needs classification items"
        )));
    }
    if mode.uses_ranking() && rank_pairs.is_empty() {
        return Err(Error::Config(format!("mode {mode} needs rank pairs")));
    }
    Ok(())
}

fn select<T>(use_it: bool, xs: &[T]) -> &[T] {
    if use_it {
        xs
    } else {
        &[]
    }
}

/// Nearest orthogonal matrix in Frobenius norm (the polar factor `U·Vᵀ`).
fn nearest_orthogonal(w: &Matrix) -> Result<Matrix> {
    let dec = svd(w)?;
    dec.u.matmul(&dec.v.transpose())
}

/// Trains `adapter` on the data selected by `cfg.mode`; returns the weights
/// with the best validation loss and the per-epoch trace.
pub fn train(
    adapter: &AlignmentAdapter,
    class_items: &[ClassificationItem],
    rank_pairs: &[RankPair],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<(AlignmentAdapter, TrainTrace)> {
    cfg.validate()?;
    check_mode_data(cfg.mode, class_items, rank_pairs)?;
    if cfg.mode == Mode::Pretrained {
        return Ok((adapter.clone(), TrainTrace::default()));
    }
    let class_items = select(cfg.mode.uses_classification(), class_items);
    let rank_pairs = select(cfg.mode.uses_ranking(), rank_pairs);
    let problem = Problem::build(store, adapter.dim(), class_items, rank_pairs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut class_order: Vec<usize> = (0..problem.class.len()).collect();
    class_order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * class_order.len() as f64).floor() as usize;
    let val_class: Vec<usize> = class_order[..n_val].to_vec();
    let mut train_class: Vec<usize> = class_order[n_val..].to_vec();
    train_class.sort_unstable();
    let mut train_rank: Vec<usize> = (0..problem.rank.len()).collect();

    let full_eval = |a: &AlignmentAdapter, tc: &[usize], tr: &[usize]| {
        problem.objective(a, tc, tr, &cfg.loss, true)
    };
    let val_eval = |a: &AlignmentAdapter, tc: &[usize], tr: &[usize]| -> Result<f64> {
        if val_class.is_empty() {
            Ok(problem.objective(a, tc, tr, &cfg.loss, false)?.0)
        } else {
            Ok(problem.objective(a, &val_class, &[], &cfg.loss, false)?.0)
        }
    };

    let d = adapter.dim();
    let mut current = adapter.clone();
    let mut m1 = vec![0.0; d * d];
    let mut m2 = vec![0.0; d * d];
    let mut step: i32 = 0;

    let mut best_val = val_eval(&current, &train_class, &train_rank)?;
    let mut best = current.clone();
    let mut trace = TrainTrace::default();
    let mut since_best = 0;

    let total = train_class.len() + train_rank.len();
    let steps = total.div_ceil(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        train_class.shuffle(&mut rng);
        train_rank.shuffle(&mut rng);
        for s in 0..steps {
            let cs = &train_class[s * train_class.len() / steps..(s + 1) * train_class.len() / steps];
            let rs = &train_rank[s * train_rank.len() / steps..(s + 1) * train_rank.len() / steps];
            if cs.is_empty() && rs.is_empty() {
                continue;
            }
            let (loss, grad) = problem
                .objective(&current, cs, rs, &cfg.loss, true)
                .map_err(|e| at_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
            }
            let grad = grad.expect("gradient requested");
            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            let w = current.w.as_mut_slice();
            for i in 0..w.len() {
                m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * grad[i];
                m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                let mh = m1[i] / bc1;
                let vh = m2[i] / bc2;
                w[i] -= cfg.learning_rate * mh / (vh.sqrt() + ADAM_EPS);
            }
        }

        let (train_loss, grad) =
            full_eval(&current, &train_class, &train_rank).map_err(|e| at_epoch(e, epoch))?;
        let grad_norm = crate::linalg::norm(&grad.expect("gradient requested"));
        let val_loss = val_eval(&current, &train_class, &train_rank).map_err(|e| at_epoch(e, epoch))?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
        }
        trace.rows.push(TraceRow {
            epoch,
            train_loss,
            val_loss,
            grad_norm,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} |g| {grad_norm:.3e}");

        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
            trace.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                trace.stopped_early = true;
                break;
            }
        }
    }

    if cfg.project_orthogonal {
        let w = nearest_orthogonal(&best.w)?;
        best = best.with_matrix(w);
    }
    Ok((best, trace))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} at epoch {epoch}")),
        Error::DegenerateVector => {
            Error::Numerical(format!("adapter collapsed a vector to zero at epoch {epoch}"))
        }
        other => other,
    }
}

/// The combined objective selected by `cfg.mode` over all of the data, and
/// its analytic gradient with respect to the adapter matrix.
pub fn loss_and_gradient(
    adapter: &AlignmentAdapter,
    class_items: &[ClassificationItem],
    rank_pairs: &[RankPair],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<(f64, Matrix)> {
    cfg.loss.validate()?;
    if cfg.mode == Mode::Pretrained {
        return Err(Error::Config("pretrained mode has no objective".into()));
    }
    check_mode_data(cfg.mode, class_items, rank_pairs)?;
    let class_items = select(cfg.mode.uses_classification(), class_items);
    let rank_pairs = select(cfg.mode.uses_ranking(), rank_pairs);
    let problem = Problem::build(store, adapter.dim(), class_items, rank_pairs)?;
    let ci: Vec<usize> = (0..problem.class.len()).collect();
    let ri: Vec<usize> = (0..problem.rank.len()).collect();
    let (loss, grad) = problem.objective(adapter, &ci, &ri, &cfg.loss, true)?;
    let d = adapter.dim();
    Ok((loss, Matrix::new(d, d, grad.expect("gradient requested"))?))
}

/// Largest relative error between the analytic `∂L/∂W` and central finite
/// differences with step `eps`, over a seeded subset of at least 64 entries
/// (all entries when `d² < 64`). The loss is the full-data combined
/// objective selected by `cfg.mode`.
pub fn grad_check(
    adapter: &AlignmentAdapter,
    class_items: &[ClassificationItem],
    rank_pairs: &[RankPair],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    eps: f64,
) -> Result<f64> {
    cfg.loss.validate()?;
    if cfg.mode == Mode::Pretrained {
        return Err(Error::Config(
            "pretrained mode has no objective to check".into(),
        ));
    }
    check_mode_data(cfg.mode, class_items, rank_pairs)?;
    let class_items = select(cfg.mode.uses_classification(), class_items);
    let rank_pairs = select(cfg.mode.uses_ranking(), rank_pairs);
    let problem = Problem::build(store, adapter.dim(), class_items, rank_pairs)?;
    let ci: Vec<usize> = (0..problem.class.len()).collect();
    let ri: Vec<usize> = (0..problem.rank.len()).collect();

    let (_, grad) = problem.objective(adapter, &ci, &ri, &cfg.loss, true)?;
    let grad = grad.expect("gradient requested");
    let total = grad.len();
    let entries: Vec<usize> = if total <= GRAD_CHECK_ENTRIES {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut v = index::sample(&mut rng, total, GRAD_CHECK_ENTRIES).into_vec();
        v.sort_unstable();
        v
    };

    let mut worst = 0.0f64;
    let mut probe = adapter.clone();
    for k in entries {
        let orig = probe.w.as_slice()[k];
        probe.w.as_mut_slice()[k] = orig + eps;
        let (lp, _) = problem.objective(&probe, &ci, &ri, &cfg.loss, false)?;
        probe.w.as_mut_slice()[k] = orig - eps;
        let (lm, _) = problem.objective(&probe, &ci, &ri, &cfg.loss, false)?;
        probe.w.as_mut_slice()[k] = orig;
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (grad[k] - numeric).abs()
            / grad[k].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}
