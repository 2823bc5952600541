use std::io::Write;
use std::path::{Path, PathBuf};

use protospace_core::alignment::{
    centroid_pairs, grad_check, init_adapter, procrustes_adapter, train as train_adapter,
    AlignmentAdapter, Mode, Scope, Side, TrainConfig, TrainTrace,
};
use protospace_core::corpus::{
    load_classification_dataset, load_embeddings, load_pairs, load_ratings, subsample,
    ClassificationItem, EmbeddingStore, Entity, FeaturePrototype, RankPair, Strictness,
};
use protospace_core::evaluation::{
    evaluate_pairs, export_scatter, generate_pairs, synth_world, Scorer, SynthWorldConfig,
};
use protospace_core::scoring::{prototype_direction, rank_entities, seed_direction, select_option};
use protospace_core::{Error, LossConfig, Matrix, Result};

use crate::{
    EvalArgs, GradcheckArgs, LossArgs, ProcrustesArgs, QaArgs, RankArgs, SynthArgs, TrainArgs,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a sibling temporary file so a failed run leaves no
/// half-written output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn store_dim(store: &EmbeddingStore) -> Result<usize> {
    store
        .dim()
        .ok_or_else(|| Error::Input("embeddings file is empty".into()))
}

fn strictness(relaxed: bool) -> Strictness {
    if relaxed {
        Strictness::Relaxed
    } else {
        Strictness::Strict
    }
}

fn loss_config(a: &LossArgs) -> Result<LossConfig> {
    let cfg = LossConfig {
        temperature: a.temperature,
        alpha: a.alpha,
        lambda: a.lambda,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_adapter(path: Option<&Path>, d: usize) -> Result<(AlignmentAdapter, bool)> {
    match path {
        Some(p) => {
            let a = AlignmentAdapter::load(p)?;
            if a.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: a.dim(),
                });
            }
            Ok((a, false))
        }
        None => Ok((AlignmentAdapter::identity(d, Scope::PrototypesOnly), true)),
    }
}

pub fn train(a: &TrainArgs) -> Result<u8> {
    let store = load_embeddings(&a.emb)?;
    let d = store_dim(&store)?;
    let mut class: Vec<ClassificationItem> = match &a.class {
        Some(p) => load_classification_dataset(p, strictness(a.relaxed))?,
        None => Vec::new(),
    };
    if let Some(n) = a.class_limit {
        class = subsample(&class, n, a.seed)?;
    }
    let pairs: Vec<RankPair> = match &a.rank {
        Some(p) => load_pairs(p)?,
        None => Vec::new(),
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        loss: loss_config(&a.loss)?,
        mode: a.mode,
        early_stop_patience: a.patience,
        project_orthogonal: a.orthogonal,
        ..TrainConfig::default()
    };
    cfg.validate()?;

    let (adapter, trace) = if a.mode == Mode::Pretrained {
        (AlignmentAdapter::identity(d, a.scope), TrainTrace::default())
    } else {
        train_adapter(&init_adapter(d, a.scope, a.seed), &class, &pairs, &store, &cfg)?
    };
    for r in &trace.rows {
        println!(
            "epoch {:>4}  train_loss {:.6}  val_loss {:.6}  grad_norm {:.4e}",
            r.epoch, r.train_loss, r.val_loss, r.grad_norm
        );
    }

    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| a.out.with_extension("trace.csv"));
    let mut csv = Vec::new();
    trace
        .write_csv(&mut csv, &cfg)
        .map_err(|e| Error::io(&trace_path, e))?;
    write_atomic(&trace_path, &csv)?;
    write_atomic(&a.out, (adapter.to_json() + "\n").as_bytes())?;

    let used_class = if a.mode.uses_classification() { class.len() } else { 0 };
    let used_pairs = if a.mode.uses_ranking() { pairs.len() } else { 0 };
    println!(
        "mode {} | classification items {} | rank pairs {} | epochs {} | best epoch {} | adapter {} ({})",
        a.mode,
        used_class,
        used_pairs,
        trace.epochs(),
        trace.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        a.out.display(),
        adapter.sha256()
    );
    Ok(0)
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    let store = load_embeddings(&a.emb)?;
    let d = store_dim(&store)?;
    let (adapter, assumed) = load_adapter(a.adapter.as_deref(), d)?;
    let ratings = a.ratings.as_deref().map(load_ratings).transpose()?;
    let pairs = match (&a.pairs, &ratings) {
        (Some(p), _) => load_pairs(p)?,
        (None, Some(t)) => {
            let mut out = Vec::new();
            for dim in t.dimensions() {
                out.extend(generate_pairs(t, dim, a.min_gap, a.max_pairs, a.seed)?);
            }
            out
        }
        (None, None) => {
            return Err(Error::Config("eval needs --pairs or --ratings".into()));
        }
    };
    let dataset = a.dataset.clone().unwrap_or_else(|| {
        file_stem(a.pairs.as_deref().or(a.ratings.as_deref()).expect("checked above"))
    });
    let (mut report, _) =
        evaluate_pairs(&dataset, &pairs, ratings.as_ref(), &store, &adapter, a.mode, a.seed)?;
    if assumed {
        report.notes = Some("no adapter given; identity adapter assumed".into());
    }

    if let (Some(path), Some(table)) = (&a.scatter, &ratings) {
        let dim = match &a.dimension {
            Some(d) => d.clone(),
            None => table
                .dimensions()
                .first()
                .map(|s| s.to_string())
                .ok_or_else(|| Error::Input("ratings file is empty".into()))?,
        };
        let col = table.column(&dim);
        let scores = Scorer::new(&store, &adapter).scores(&dim, col.iter().map(|(id, _)| *id))?;
        let mut predicted: Vec<_> = scores
            .into_iter()
            .map(|(entity_id, score)| protospace_core::ScoredEntity { entity_id, score })
            .collect();
        predicted.sort_by(|x, y| x.entity_id.cmp(&y.entity_id));
        let tmp = tmp_path(path);
        let rows = export_scatter(&predicted, table, &dim, &tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        log::info!("scatter: {rows} rows on `{dim}`");
    }

    let json = report.to_json_pretty() + "\n";
    match &a.report {
        Some(p) => {
            write_atomic(p, json.as_bytes())?;
            println!(
                "{}: average accuracy {:.4} over {} dimensions",
                report.dataset,
                report.average_accuracy,
                report.dimensions.len()
            );
        }
        None => {
            std::io::stdout()
                .write_all(json.as_bytes())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))?;
        }
    }
    Ok(0)
}

pub fn procrustes(a: &ProcrustesArgs) -> Result<u8> {
    let (p, c) = match (&a.prototypes, &a.targets, &a.class, &a.emb) {
        (Some(pp), Some(cp), _, _) => {
            let ps = load_embeddings(pp)?;
            let cs = load_embeddings(cp)?;
            let mut prow = Vec::with_capacity(ps.len());
            let mut crow = Vec::with_capacity(ps.len());
            for (id, _, v) in ps.iter() {
                prow.push(v.clone());
                crow.push(cs.require(id)?.clone());
            }
            if prow.is_empty() {
                return Err(Error::Input("prototype file is empty".into()));
            }
            (Matrix::from_rows(&prow)?, Matrix::from_rows(&crow)?)
        }
        (None, None, Some(cl), Some(emb)) => {
            let store = load_embeddings(emb)?;
            let items = load_classification_dataset(cl, strictness(a.relaxed))?;
            centroid_pairs(&items, &store)?
        }
        _ => {
            return Err(Error::Config(
                "procrustes needs --prototypes with --targets, or --class with --emb".into(),
            ))
        }
    };
    let adapter = procrustes_adapter(&p, &c, a.scope)?;
    let residual = p
        .matmul(&adapter.matrix().transpose())?
        .sub(&c)?
        .frobenius_norm();
    write_atomic(&a.out, (adapter.to_json() + "\n").as_bytes())?;
    println!(
        "pairs {} | residual {:.6e} | orthogonality defect {:.3e} | adapter {} ({})",
        p.rows(),
        residual,
        adapter.matrix().orthogonality_defect(),
        a.out.display(),
        adapter.sha256()
    );
    Ok(0)
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

pub fn rank(a: &RankArgs) -> Result<u8> {
    let store = load_embeddings(&a.emb)?;
    let d = store_dim(&store)?;
    let (adapter, _) = load_adapter(a.adapter.as_deref(), d)?;

    let (direction, exclude) = if let Some(id) = &a.feature {
        let proto = FeaturePrototype {
            feature_id: id.clone(),
            description: String::new(),
        };
        (prototype_direction(&proto, &store, &adapter)?, Some(id.clone()))
    } else if let Some(text) = &a.feature_text {
        let id = store
            .iter()
            .find(|(_, t, _)| t == text)
            .map(|(id, _, _)| id.to_owned())
            .ok_or_else(|| Error::Lookup(format!("no stored text `{text}`")))?;
        let proto = FeaturePrototype {
            feature_id: id.clone(),
            description: text.clone(),
        };
        (prototype_direction(&proto, &store, &adapter)?, Some(id))
    } else {
        let forward = |ids: &[String]| -> Result<Vec<_>> {
            ids.iter()
                .map(|id| adapter.forward(store.require(id)?, Side::Entity))
                .collect()
        };
        let dir = seed_direction("seeds", &forward(&a.seeds_high)?, &forward(&a.seeds_low)?)?;
        (dir, None)
    };

    let ids = match &a.entities {
        Some(p) => read_ids(p)?,
        None => store
            .ids()
            .filter(|id| Some(*id) != exclude.as_deref())
            .map(str::to_owned)
            .collect(),
    };
    let entities: Vec<Entity> = ids.iter().map(|id| Entity::new(id.clone(), id.clone())).collect();
    let mut ranked = rank_entities(&entities, &direction, &store, &adapter)?;
    if let Some(n) = a.top {
        ranked.truncate(n);
    }
    let json = serde_json::to_string_pretty(&ranked).expect("scores serialize");
    println!("{json}");
    Ok(0)
}

pub fn qa(a: &QaArgs) -> Result<u8> {
    let store = load_embeddings(&a.emb)?;
    let query = store.require(&a.query)?;
    let options = a
        .options
        .iter()
        .map(|id| store.require(id).cloned())
        .collect::<Result<Vec<_>>>()?;
    println!("{}", select_option(query, &options)?);
    Ok(0)
}

pub fn synth(a: &SynthArgs) -> Result<u8> {
    let mut cfg: SynthWorldConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => SynthWorldConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let world = synth_world(&cfg)?;
    world.save(&a.out, a.max_pairs)?;
    let cfg_json = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    write_atomic(&a.out.join("config.json"), cfg_json.as_bytes())?;
    println!(
        "synthetic world: d={} entities={} features={} seed={} -> {}",
        cfg.d,
        cfg.n_entities,
        cfg.n_features,
        cfg.seed,
        a.out.display()
    );
    Ok(0)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<u8> {
    let (store, class, pairs) = match &a.emb {
        Some(emb) => {
            let store = load_embeddings(emb)?;
            let class = match &a.class {
                Some(p) => load_classification_dataset(p, strictness(a.relaxed))?,
                None => Vec::new(),
            };
            let pairs = match &a.rank {
                Some(p) => load_pairs(p)?,
                None => Vec::new(),
            };
            (store, class, pairs)
        }
        None => {
            let world = synth_world(&SynthWorldConfig {
                seed: a.seed,
                ..SynthWorldConfig::default()
            })?;
            let train = [0, 1, 2, 3];
            let class = world.classification_items_for(&train)?;
            let pairs = world.rank_pairs(&train, 64, a.seed)?;
            (world.store, class, pairs)
        }
    };
    let d = store_dim(&store)?;
    let cfg = TrainConfig {
        seed: a.seed,
        loss: loss_config(&a.loss)?,
        mode: a.mode,
        ..TrainConfig::default()
    };
    let adapter = init_adapter(d, a.scope, a.seed);
    let err = grad_check(&adapter, &class, &pairs, &store, &cfg, a.eps)?;
    println!("max_rel_error {err:.6e}");
    Ok(if err <= GRADCHECK_TOLERANCE { 0 } else { 3 })
}
