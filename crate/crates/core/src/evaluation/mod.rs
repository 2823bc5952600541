//! Measurement: pair generation, pairwise accuracy, Pearson correlation,
//! McNemar's exact test, leave-one-out orchestration, synthetic worlds and
//! report/scatter export.

mod loo;
mod synth;

pub use loo::{leave_one_out, synth_suite, Dataset, DatasetTag, LeaveOneOut};
pub use synth::{synth_world, HiddenMap, SynthWorld, SynthWorldConfig};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentAdapter, Mode, Side};
use crate::corpus::{EmbeddingStore, RankPair, RatingsTable};
use crate::error::{Error, Result};
use crate::linalg::{dot_slices, normalize};
use crate::scoring::{ScoredEntity, TIE_TOLERANCE};

pub const DEFAULT_MIN_GAP: f64 = 0.0;
pub const DEFAULT_MAX_PAIRS: usize = 340;

/// How score ties are credited in [`pairwise_accuracy_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    #[default]
    Incorrect,
    HalfCredit,
}

/// Every unordered pair of rated items whose ratings differ by more than
/// `min_gap`, oriented lexicographically and labeled by the sign of the
/// rating difference. More than `max_pairs` candidates are subsampled
/// uniformly with `seed`, keeping the lexicographic order.
pub fn generate_pairs(
    table: &RatingsTable,
    dimension: &str,
    min_gap: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<RankPair>> {
    if !table.has_dimension(dimension) {
        return Err(Error::Lookup(format!("no ratings for dimension `{dimension}`")));
    }
    if !(min_gap >= 0.0) {
        return Err(Error::Input("min_gap must be non-negative".into()));
    }
    let mut items = table.column(dimension);
    items.sort_by(|a, b| a.0.cmp(b.0));
    let mut pairs = Vec::new();
    for (i, (a, fa)) in items.iter().enumerate() {
        for (b, fb) in &items[i + 1..] {
            let gap = fa - fb;
            if gap.abs() > min_gap && gap != 0.0 {
                pairs.push(RankPair {
                    item_a: a.to_string(),
                    item_b: b.to_string(),
                    dimension: dimension.to_owned(),
                    label: if gap > 0.0 { 1 } else { -1 },
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet(format!(
            "no pairs on `{dimension}` differ by more than {min_gap}"
        )));
    }
    if pairs.len() > max_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, pairs.len(), max_pairs).into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|i| pairs[i].clone()).collect();
    }
    Ok(pairs)
}

/// Fraction of pairs ordered correctly by `scorer`, with ties counted
/// incorrect, plus the per-pair outcomes.
pub fn pairwise_accuracy<F>(pairs: &[RankPair], scorer: F) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&str) -> Option<f64>,
{
    pairwise_accuracy_with(pairs, scorer, TiePolicy::Incorrect)
}

/// Outcomes mark ties as incorrect under either policy; `HalfCredit` only
/// changes the returned accuracy.
pub fn pairwise_accuracy_with<F>(
    pairs: &[RankPair],
    scorer: F,
    ties: TiePolicy,
) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&str) -> Option<f64>,
{
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet("no pairs to evaluate".into()));
    }
    let get = |id: &str| scorer(id).ok_or_else(|| Error::Lookup(format!("no score for `{id}`")));
    let mut credit = 0.0;
    let mut outcomes = Vec::with_capacity(pairs.len());
    for p in pairs {
        let delta = get(&p.item_a)? - get(&p.item_b)?;
        if delta.abs() <= TIE_TOLERANCE {
            outcomes.push(false);
            if ties == TiePolicy::HalfCredit {
                credit += 0.5;
            }
            continue;
        }
        let ok = (delta > 0.0) == (p.label > 0);
        if ok {
            credit += 1.0;
        }
        outcomes.push(ok);
    }
    Ok((credit / pairs.len() as f64, outcomes))
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "pearson: {} vs {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Input("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("pearson of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub n10: usize,
    /// A wrong, B correct.
    pub n01: usize,
    pub p_value: f64,
}

/// Exact two-sided McNemar test on paired outcomes.
pub fn mcnemar(a: &[bool], b: &[bool]) -> Result<McNemarResult> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "mcnemar: {} vs {} outcomes",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Input("mcnemar needs at least one outcome".into()));
    }
    let n10 = a.iter().zip(b).filter(|(x, y)| **x && !**y).count();
    let n01 = a.iter().zip(b).filter(|(x, y)| !**x && **y).count();
    Ok(mcnemar_counts(n10, n01))
}

/// `p = min(1, 2·P(X ≤ min(n10, n01)))` for `X ~ Binomial(n10 + n01, ½)`.
pub fn mcnemar_counts(n10: usize, n01: usize) -> McNemarResult {
    let n = n10 + n01;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = n10.min(n01);
        // log C(n, i) − n·ln 2, accumulated with log-sum-exp.
        let ln2n = n as f64 * std::f64::consts::LN_2;
        let mut log_c = 0.0f64;
        let mut terms = Vec::with_capacity(k + 1);
        for i in 0..=k {
            if i > 0 {
                log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            terms.push(log_c - ln2n);
        }
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail = m.exp() * terms.iter().map(|t| (t - m).exp()).sum::<f64>();
        (2.0 * tail).min(1.0)
    };
    McNemarResult {
        n10,
        n01,
        p_value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub name: String,
    pub pairs: usize,
    pub accuracy: f64,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub mode: Mode,
    pub seed: u64,
    pub adapter_sha256: String,
    pub dimensions: Vec<DimensionReport>,
    pub average_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Per-dimension scores of every stored entity against the prototype stored
/// under the dimension's name, both forwarded through `adapter`.
pub struct Scorer<'a> {
    store: &'a EmbeddingStore,
    adapter: &'a AlignmentAdapter,
}

impl<'a> Scorer<'a> {
    pub fn new(store: &'a EmbeddingStore, adapter: &'a AlignmentAdapter) -> Self {
        Self { store, adapter }
    }

    /// Scores of `ids` on `dimension`; ids without an embedding are skipped.
    pub fn scores<'i>(
        &self,
        dimension: &str,
        ids: impl IntoIterator<Item = &'i str>,
    ) -> Result<HashMap<String, f64>> {
        let proto = self.store.require(dimension)?;
        let dir = normalize(&self.adapter.forward(proto, Side::Prototype)?)?;
        let mut out = HashMap::new();
        for id in ids {
            if out.contains_key(id) {
                continue;
            }
            if let Some(v) = self.store.get(id) {
                let e = self.adapter.forward(v, Side::Entity)?;
                out.insert(id.to_owned(), dot_slices(e.as_slice(), dir.as_slice()));
            }
        }
        Ok(out)
    }
}

/// Groups pairs by dimension in order of first appearance.
pub fn group_by_dimension(pairs: &[RankPair]) -> Vec<(String, Vec<RankPair>)> {
    let mut groups: Vec<(String, Vec<RankPair>)> = Vec::new();
    for p in pairs {
        match groups.iter_mut().find(|(d, _)| *d == p.dimension) {
            Some((_, g)) => g.push(p.clone()),
            None => groups.push((p.dimension.clone(), vec![p.clone()])),
        }
    }
    groups
}

/// Accuracy per dimension (plus Pearson over all rated items when ratings are
/// given) and the per-pair outcomes, in the same dimension order.
pub fn evaluate_pairs(
    dataset: &str,
    pairs: &[RankPair],
    ratings: Option<&RatingsTable>,
    store: &EmbeddingStore,
    adapter: &AlignmentAdapter,
    mode: Mode,
    seed: u64,
) -> Result<(EvalReport, Vec<Vec<bool>>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet(format!("dataset `{dataset}` has no pairs")));
    }
    let scorer = Scorer::new(store, adapter);
    let mut dims = Vec::new();
    let mut outcomes = Vec::new();
    for (name, group) in group_by_dimension(pairs) {
        let ids = group
            .iter()
            .flat_map(|p| [p.item_a.as_str(), p.item_b.as_str()]);
        let scores = scorer.scores(&name, ids)?;
        let (accuracy, out) = pairwise_accuracy(&group, |id| scores.get(id).copied())?;
        let pearson = match ratings.filter(|t| t.has_dimension(&name)) {
            Some(t) => {
                let col = t.column(&name);
                let s = scorer.scores(&name, col.iter().map(|(id, _)| *id))?;
                let (xs, ys): (Vec<f64>, Vec<f64>) = col
                    .iter()
                    .filter_map(|(id, r)| s.get(*id).map(|x| (*x, *r)))
                    .unzip();
                match pearson(&xs, &ys) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("pearson on `{name}` skipped: {e}");
                        None
                    }
                }
            }
            None => None,
        };
        dims.push(DimensionReport {
            name,
            pairs: group.len(),
            accuracy,
            pearson,
        });
        outcomes.push(out);
    }
    let average_accuracy = dims.iter().map(|d| d.accuracy).sum::<f64>() / dims.len() as f64;
    Ok((
        EvalReport {
            dataset: dataset.to_owned(),
            mode,
            seed,
            adapter_sha256: adapter.sha256(),
            dimensions: dims,
            average_accuracy,
            notes: None,
        },
        outcomes,
    ))
}

/// Writes `item,predicted_score,ground_truth` for items present in both,
/// sorted by item id. Returns the number of rows.
pub fn export_scatter(
    predicted: &[ScoredEntity],
    truth: &RatingsTable,
    dimension: &str,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let path = path.as_ref();
    let mut rows: Vec<(&str, f64, f64)> = predicted
        .iter()
        .filter_map(|s| {
            truth
                .get(&s.entity_id, dimension)
                .map(|t| (s.entity_id.as_str(), s.score, t))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyJoin(format!(
            "no predicted item has a `{dimension}` rating"
        )));
    }
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["item", "predicted_score", "ground_truth"])
        .map_err(csv_err)?;
    for (item, p, t) in &rows {
        w.write_record([item.to_string(), p.to_string(), t.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}
