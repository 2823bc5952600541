//! Leave-one-out over datasets: train on the others, evaluate on the one
//! held out, and log evidence that none of its pairs were trained on.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{evaluate_pairs, synth_world, EvalReport, SynthWorld, SynthWorldConfig};
use crate::alignment::{train, AlignmentAdapter, Mode, TrainConfig};
use crate::corpus::{ClassificationItem, EmbeddingStore, RankPair, RatingsTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetTag {
    Perceptual,
    NonPerceptual,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub tag: DatasetTag,
    pub pairs: Vec<RankPair>,
    pub ratings: Option<RatingsTable>,
}

#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub reports: Vec<EvalReport>,
    /// One line per fold.
    pub audit: Vec<String>,
    /// Names of the datasets whose pairs trained each fold, in fold order.
    pub training_sources: Vec<Vec<String>>,
}

type Key = (String, String, String);

fn keys(pairs: &[RankPair]) -> BTreeSet<Key> {
    pairs.iter().map(RankPair::key).collect()
}

/// Trains one adapter per held-out dataset (starting from `init`) and
/// evaluates it on that dataset. Ranking modes draw pairs from the other
/// datasets, restricted to perceptual ones for the `*-perc` modes; a pair
/// that also occurs in the held-out dataset is dropped before training.
pub fn leave_one_out(
    datasets: &[Dataset],
    class_items: &[ClassificationItem],
    store: &EmbeddingStore,
    init: &AlignmentAdapter,
    cfg: &TrainConfig,
) -> Result<LeaveOneOut> {
    if datasets.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least two datasets".into()));
    }
    let mode = cfg.mode;
    if mode.uses_classification() && class_items.is_empty() {
        return Err(Error::Config(format!("mode {mode} needs classification items")));
    }
    let mut out = LeaveOneOut {
        reports: Vec::with_capacity(datasets.len()),
        audit: Vec::with_capacity(datasets.len()),
        training_sources: Vec::with_capacity(datasets.len()),
    };
    for (held, eval) in datasets.iter().enumerate() {
        let eval_keys = keys(&eval.pairs);
        let mut sources = Vec::new();
        let mut train_pairs = Vec::new();
        let mut dropped = 0usize;
        if mode.uses_ranking() {
            for (i, ds) in datasets.iter().enumerate() {
                if i == held || (mode.perceptual_only() && ds.tag != DatasetTag::Perceptual) {
                    continue;
                }
                sources.push(ds.name.clone());
                for p in &ds.pairs {
                    if eval_keys.contains(&p.key()) {
                        dropped += 1;
                    } else {
                        train_pairs.push(p.clone());
                    }
                }
            }
            if train_pairs.is_empty() {
                return Err(Error::Config(format!(
                    "mode {mode} has no training pairs when holding out `{}`",
                    eval.name
                )));
            }
        }
        let overlap = keys(&train_pairs).intersection(&eval_keys).count();
        if overlap != 0 {
            return Err(Error::Numerical(format!(
                "{overlap} evaluation pairs of `{}` reached training",
                eval.name
            )));
        }
        let adapter = if mode == Mode::Pretrained {
            init.clone()
        } else {
            let class = if mode.uses_classification() {
                class_items
            } else {
                &[]
            };
            train(init, class, &train_pairs, store, cfg)?.0
        };
        let (report, _) = evaluate_pairs(
            &eval.name,
            &eval.pairs,
            eval.ratings.as_ref(),
            store,
            &adapter,
            mode,
            cfg.seed,
        )?;
        out.audit.push(format!(
            "eval={} mode={} train_sources=[{}] train_pairs={} eval_pairs={} dropped={} overlap={}",
            eval.name,
            mode,
            sources.join(","),
            train_pairs.len(),
            eval.pairs.len(),
            dropped,
            overlap
        ));
        out.reports.push(report);
        out.training_sources.push(sources);
    }
    Ok(out)
}

/// Three datasets over one 16-feature world: `A` (f0–f3) and `B` (f4–f7)
/// tagged perceptual, `C` (f8–f11) non-perceptual; classification items come
/// from f12–f15 only.
pub fn synth_suite(seed: u64, max_pairs: usize) -> Result<(SynthWorld, Vec<Dataset>, Vec<ClassificationItem>)> {
    let world = synth_world(&SynthWorldConfig {
        n_features: 16,
        seed,
        ..SynthWorldConfig::default()
    })?;
    let layout = [
        ("A", DatasetTag::Perceptual, 0..4),
        ("B", DatasetTag::Perceptual, 4..8),
        ("C", DatasetTag::NonPerceptual, 8..12),
    ];
    let mut datasets = Vec::with_capacity(layout.len());
    for (name, tag, range) in layout {
        let features: Vec<usize> = range.collect();
        let mut ratings = RatingsTable::new();
        for r in world.ratings.records() {
            if features.iter().any(|&j| super::synth::feature_id(j) == r.dimension) {
                ratings.insert(r.item.clone(), r.dimension.clone(), r.rating)?;
            }
        }
        datasets.push(Dataset {
            name: name.to_owned(),
            tag,
            pairs: world.rank_pairs(&features, max_pairs, seed)?,
            ratings: Some(ratings),
        });
    }
    let class = world.classification_items_for(&[12, 13, 14, 15])?;
    Ok((world, datasets, class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{init_adapter, Scope};

    fn quick(mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            epochs: 3,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rank_full_trains_only_on_the_other_dataset() {
        let (world, ds, _) = synth_suite(3, 20).unwrap();
        let two = &ds[..2];
        let init = init_adapter(world.config.d, Scope::PrototypesOnly, 0);
        let r = leave_one_out(two, &[], &world.store, &init, &quick(Mode::RankFull)).unwrap();
        assert_eq!(r.training_sources, vec![vec!["B".to_string()], vec!["A".to_string()]]);
        assert!(r.audit.iter().all(|l| l.ends_with("overlap=0")));
    }

    #[test]
    fn pretrained_skips_training() {
        let (world, ds, _) = synth_suite(3, 20).unwrap();
        let init = AlignmentAdapter::identity(world.config.d, Scope::PrototypesOnly);
        let r = leave_one_out(&ds, &[], &world.store, &init, &quick(Mode::Pretrained)).unwrap();
        for rep in &r.reports {
            assert_eq!(rep.adapter_sha256, init.sha256());
        }
    }

    #[test]
    fn missing_data_is_a_config_error() {
        let (world, ds, _) = synth_suite(3, 20).unwrap();
        let init = AlignmentAdapter::identity(world.config.d, Scope::PrototypesOnly);
        assert!(matches!(
            leave_one_out(&ds, &[], &world.store, &init, &quick(Mode::Classification)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            leave_one_out(&ds[..1], &[], &world.store, &init, &quick(Mode::RankFull)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shared_pairs_are_dropped() {
        let (world, mut ds, _) = synth_suite(3, 20).unwrap();
        let leaked = ds[0].pairs[0].clone();
        ds[1].pairs.push(leaked);
        let init = AlignmentAdapter::identity(world.config.d, Scope::PrototypesOnly);
        let r = leave_one_out(&ds[..2], &[], &world.store, &init, &quick(Mode::RankFull)).unwrap();
        assert!(r.audit[0].contains("dropped=1"));
        assert!(r.audit[0].ends_with("overlap=0"));
    }
}
