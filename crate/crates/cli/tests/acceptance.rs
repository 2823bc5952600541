//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Oracles live here rather than in the library: finite differences are
//! taken over losses composed from public pieces, Procrustes is checked
//! against the rotation that generated the data, and correlations against
//! closed forms.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use protospace_core::alignment::{
    centroid_pairs, init_adapter, loss_and_gradient, procrustes_adapter, train,
    AlignmentAdapter, Mode, Scope, Side, TrainConfig,
};
use protospace_core::corpus::{ClassificationItem, EmbeddingStore, RankPair};
use protospace_core::evaluation::{
    evaluate_pairs, generate_pairs, leave_one_out, mcnemar_counts, pearson, synth_suite,
    synth_world, DatasetTag, SynthWorld, SynthWorldConfig,
};
use protospace_core::linalg::{gaussian_matrix, normalize, random_orthogonal};
use protospace_core::objectives::{
    centroid, classification_loss, combined_loss, ranking_loss, ClassificationBatch,
    RankBatchItem,
};
use protospace_core::{eol_prompt, verbalize_entity, EmbeddingVector, LossConfig, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
    normalize(&EmbeddingVector::new(gaussian(rng, d)).unwrap()).unwrap()
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

// 1 -------------------------------------------------------------------------

fn mcnemar_reproduction() -> Outcome {
    let cases = [(23, 7, 0.0052, 0.0002), (3, 11, 0.057, 0.001)];
    let mut got = Vec::new();
    for (n10, n01, want, tol) in cases {
        let p = mcnemar_counts(n10, n01).p_value;
        ensure((p - want).abs() <= tol, || {
            format!("mcnemar({n10},{n01}) = {p:.6}, want {want} ± {tol}")
        })?;
        got.push(format!("({n10},{n01})→{p:.4}"));
    }
    let p = mcnemar_counts(7, 8).p_value;
    ensure(p == 1.0, || format!("mcnemar(7,8) = {p}, want exactly 1"))?;
    got.push(format!("(7,8)→{p}"));
    Ok(got.join(" "))
}

// 2 -------------------------------------------------------------------------

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 2 + i % 31;
        let t = if i % 2 == 0 { 0.25 } else { 1.0 };
        let f = unit(&mut rng, d);
        let batch = ClassificationBatch {
            prototypes: vec![f; 5],
            centroid: unit(&mut rng, d),
            temperature: t,
        };
        let l = classification_loss(&batch).map_err(|e| e.to_string())?.loss;
        worst = worst.max((l - 5f64.ln()).abs());
    }
    ensure(worst <= 1e-12, || format!("equal-logit loss off ln 5 by {worst:e}"))?;
    for i in 0..100 {
        let d = 2 + i % 31;
        let e = unit(&mut rng, d);
        let item = RankBatchItem {
            e1: e.clone(),
            e2: e,
            f: unit(&mut rng, d),
            y: if i % 2 == 0 { 1 } else { -1 },
            alpha: 10.0,
        };
        let l = ranking_loss(&item).map_err(|e| e.to_string())?.loss;
        ensure(l == 0.5, || format!("ranking loss with e1 = e2 is {l}"))?;
    }
    Ok(format!("max |L1 − ln 5| = {worst:.1e}; L2(e,e) = 0.5 on 100 items"))
}

// 3 -------------------------------------------------------------------------

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

/// Central differences of an f64 loss carry roundoff of order `ε·|L|/h`;
/// below `ε·|L|/(h·tol)` that noise alone exceeds the tolerance, so the
/// denominator never drops under it.
fn rel_err(a: f64, n: f64, loss: f64) -> f64 {
    let floor = f64::EPSILON * loss.abs().max(1.0) / (FD_STEP * GRAD_TOL);
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Worst relative error between `analytic` and central differences of `f`.
fn fd_compare(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let loss = f(x);
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + FD_STEP;
        let lp = f(&p);
        p[i] = x[i] - FD_STEP;
        let lm = f(&p);
        p[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (lp - lm) / (2.0 * FD_STEP), loss));
    }
    worst
}

fn split(flat: &[f64], d: usize) -> Vec<EmbeddingVector> {
    flat.chunks(d).map(ev).collect()
}

fn class_instance(rng: &mut ChaCha8Rng, d: usize, t: f64) -> f64 {
    let mut x: Vec<f64> = Vec::new();
    for _ in 0..6 {
        x.extend(unit(rng, d).as_slice());
    }
    let batch_of = |x: &[f64]| {
        let vs = split(x, d);
        ClassificationBatch {
            prototypes: vs[..5].to_vec(),
            centroid: vs[5].clone(),
            temperature: t,
        }
    };
    let g = classification_loss(&batch_of(&x)).unwrap();
    let analytic: Vec<f64> = g.prototypes.concat().into_iter().chain(g.centroid).collect();
    fd_compare(&x, &analytic, |x| classification_loss(&batch_of(x)).unwrap().loss)
}

fn rank_instance(rng: &mut ChaCha8Rng, d: usize, y: i8) -> f64 {
    let mut x: Vec<f64> = Vec::new();
    for _ in 0..3 {
        x.extend(unit(rng, d).as_slice());
    }
    let item_of = |x: &[f64]| {
        let vs = split(x, d);
        RankBatchItem {
            e1: vs[0].clone(),
            e2: vs[1].clone(),
            f: vs[2].clone(),
            y,
            alpha: 10.0,
        }
    };
    let g = ranking_loss(&item_of(&x)).unwrap();
    let analytic: Vec<f64> = [g.e1, g.e2, g.f].concat();
    fd_compare(&x, &analytic, |x| ranking_loss(&item_of(x)).unwrap().loss)
}

fn combined_instance(rng: &mut ChaCha8Rng, d: usize) -> f64 {
    let cfg = LossConfig::default();
    let (nc, nr) = (2, 3);
    let mut x: Vec<f64> = Vec::new();
    for _ in 0..(nc * 6 + nr * 3) {
        x.extend(unit(rng, d).as_slice());
    }
    let parts = |x: &[f64]| {
        let vs = split(x, d);
        let class: Vec<_> = (0..nc)
            .map(|b| ClassificationBatch {
                prototypes: vs[b * 6..b * 6 + 5].to_vec(),
                centroid: vs[b * 6 + 5].clone(),
                temperature: cfg.temperature,
            })
            .collect();
        let off = nc * 6;
        let rank: Vec<_> = (0..nr)
            .map(|r| RankBatchItem {
                e1: vs[off + 3 * r].clone(),
                e2: vs[off + 3 * r + 1].clone(),
                f: vs[off + 3 * r + 2].clone(),
                y: if r % 2 == 0 { 1 } else { -1 },
                alpha: cfg.alpha,
            })
            .collect();
        (class, rank)
    };
    let (c, r) = parts(&x);
    let g = combined_loss(&c, &r, &cfg).unwrap();
    let mut analytic = Vec::new();
    for cg in &g.classification {
        analytic.extend(cg.prototypes.concat());
        analytic.extend(&cg.centroid);
    }
    for rg in &g.ranking {
        analytic.extend([rg.e1.clone(), rg.e2.clone(), rg.f.clone()].concat());
    }
    fd_compare(&x, &analytic, |x| {
        let (c, r) = parts(x);
        combined_loss(&c, &r, &cfg).unwrap().loss
    })
}

struct TinyWorld {
    store: EmbeddingStore,
    class: Vec<ClassificationItem>,
    pairs: Vec<RankPair>,
}

fn tiny_world(rng: &mut ChaCha8Rng, d: usize) -> TinyWorld {
    let mut store = EmbeddingStore::new();
    for i in 0..6 {
        store.insert(format!("e{i}"), "", unit(rng, d)).unwrap();
    }
    for i in 0..5 {
        store.insert(format!("p{i}"), "", unit(rng, d)).unwrap();
    }
    let item = |t: usize, ex: [usize; 3]| ClassificationItem {
        target: format!("p{t}"),
        examples: ex.iter().map(|i| format!("e{i}")).collect(),
        negatives: (0..5).filter(|&j| j != t).map(|j| format!("p{j}")).collect(),
        category: None,
    };
    let pair = |a: usize, b: usize, f: usize, label: i8| RankPair {
        item_a: format!("e{a}"),
        item_b: format!("e{b}"),
        dimension: format!("p{f}"),
        label,
    };
    TinyWorld {
        store,
        class: vec![item(0, [0, 1, 2]), item(1, [3, 4, 5])],
        pairs: vec![pair(0, 1, 0, 1), pair(2, 4, 1, -1), pair(3, 5, 2, 1)],
    }
}

/// The training objective rebuilt from the adapter's forward map and the
/// standalone losses.
fn composed_loss(w: &TinyWorld, adapter: &AlignmentAdapter, cfg: &LossConfig) -> f64 {
    let fwd = |id: &str, side| adapter.forward(w.store.require(id).unwrap(), side).unwrap();
    let class: Vec<_> = w
        .class
        .iter()
        .map(|it| {
            let examples: Vec<_> = it.examples.iter().map(|e| fwd(e, Side::Entity)).collect();
            ClassificationBatch {
                prototypes: std::iter::once(&it.target)
                    .chain(&it.negatives)
                    .map(|p| fwd(p, Side::Prototype))
                    .collect(),
                centroid: centroid(&examples).unwrap(),
                temperature: cfg.temperature,
            }
        })
        .collect();
    let rank: Vec<_> = w
        .pairs
        .iter()
        .map(|p| RankBatchItem {
            e1: fwd(&p.item_a, Side::Entity),
            e2: fwd(&p.item_b, Side::Entity),
            f: fwd(&p.dimension, Side::Prototype),
            y: p.label,
            alpha: cfg.alpha,
        })
        .collect();
    combined_loss(&class, &rank, cfg).unwrap().loss
}

fn adapter_instance(rng: &mut ChaCha8Rng, d: usize, scope: Scope, seed: u64) -> Result<f64, String> {
    let world = tiny_world(rng, d);
    let g = gaussian_matrix(d, d, seed);
    let w = Matrix::new(
        d,
        d,
        (0..d * d)
            .map(|k| f64::from(u8::from(k % (d + 1) == 0)) + 0.3 * g.as_slice()[k])
            .collect(),
    )
    .unwrap();
    let cfg = TrainConfig {
        mode: Mode::ClassRankFull,
        ..TrainConfig::default()
    };
    let adapter = AlignmentAdapter::new(w.clone(), scope, true).map_err(|e| e.to_string())?;
    let (loss, grad) = loss_and_gradient(&adapter, &world.class, &world.pairs, &world.store, &cfg)
        .map_err(|e| e.to_string())?;
    let composed = composed_loss(&world, &adapter, &cfg.loss);
    ensure((loss - composed).abs() <= 1e-12, || {
        format!("library loss {loss} vs composed {composed}")
    })?;
    Ok(fd_compare(w.as_slice(), grad.as_slice(), |x| {
        let m = Matrix::new(d, d, x.to_vec()).unwrap();
        composed_loss(&world, &AlignmentAdapter::new(m, scope, true).unwrap(), &cfg.loss)
    }))
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];
    let mut instances = 0;
    for d in [2usize, 8, 32] {
        for i in 0..12 {
            worst[0] = worst[0].max(class_instance(&mut rng, d, if i % 2 == 0 { 0.25 } else { 1.0 }));
            worst[1] = worst[1].max(rank_instance(&mut rng, d, if i % 2 == 0 { 1 } else { -1 }));
            instances += 2;
        }
        for i in 0..8 {
            worst[2] = worst[2].max(combined_instance(&mut rng, d));
            let scope = if i % 2 == 0 { Scope::PrototypesOnly } else { Scope::Shared };
            worst[3] = worst[3].max(adapter_instance(&mut rng, d, scope, 100 + i as u64)?);
            instances += 2;
        }
    }
    let names = ["classification", "ranking", "combined", "dL/dW"];
    for (n, w) in names.iter().zip(worst) {
        ensure(w <= GRAD_TOL, || format!("{n}: max relative error {w:.3e}"))?;
    }
    Ok(format!(
        "{instances} instances; max rel err class {:.1e} rank {:.1e} combined {:.1e} dW {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// 4 -------------------------------------------------------------------------

fn procrustes_suite() -> Outcome {
    let mut summary = Vec::new();
    for d in [4usize, 16] {
        let mut worst_entry = 0.0f64;
        let mut worst_defect = 0.0f64;
        for trial in 0..5u64 {
            let seed = 1000 * d as u64 + trial;
            let p = gaussian_matrix(32, d, seed);
            let r = random_orthogonal(d, seed + 500);
            let c = p.matmul(&r).unwrap();
            let w = protospace_core::procrustes(&p, &c).map_err(|e| e.to_string())?;
            worst_entry = worst_entry.max(w.max_abs_diff(&r));
            worst_defect = worst_defect.max(w.orthogonality_defect());
            let resid = |m: &Matrix| p.matmul(m).unwrap().sub(&c).unwrap().frobenius_norm();
            let best = resid(&w);
            for k in 0..1000u64 {
                let probe = random_orthogonal(d, seed * 7919 + k + 1);
                let other = resid(&probe);
                ensure(best < other, || {
                    format!("d={d}: probe {k} residual {other:e} ≤ Procrustes {best:e}")
                })?;
            }
        }
        ensure(worst_entry <= 1e-6, || format!("d={d}: |W − R| = {worst_entry:e}"))?;
        ensure(worst_defect <= 1e-8, || format!("d={d}: ‖WᵀW − I‖ = {worst_defect:e}"))?;
        summary.push(format!("d={d} |W−R|≤{worst_entry:.1e} defect≤{worst_defect:.1e}"));
    }
    Ok(summary.join("; ") + "; 1000 probes beaten per case")
}

// 5 -------------------------------------------------------------------------

fn held_out_accuracy(world: &SynthWorld, adapter: &AlignmentAdapter) -> Result<f64, String> {
    let mut pairs = Vec::new();
    for f in ["f4", "f5"] {
        pairs.extend(generate_pairs(&world.ratings, f, 0.0, 340, 7).map_err(|e| e.to_string())?);
    }
    let (report, _) = evaluate_pairs(
        "held-out",
        &pairs,
        None,
        &world.store,
        adapter,
        Mode::Pretrained,
        7,
    )
    .map_err(|e| e.to_string())?;
    Ok(report.average_accuracy)
}

fn alignment_end_to_end() -> Outcome {
    let world = synth_world(&SynthWorldConfig::default()).map_err(|e| e.to_string())?;
    let d = world.config.d;
    let before = held_out_accuracy(&world, &AlignmentAdapter::identity(d, Scope::PrototypesOnly))?;
    ensure((0.0..=0.55).contains(&before), || {
        format!("pre-alignment accuracy {before:.3} outside [0, 0.55]")
    })?;

    let train_features = [0, 1, 2, 3];
    let class = world
        .classification_items_for(&train_features)
        .map_err(|e| e.to_string())?;
    let pairs = world
        .rank_pairs(&train_features, 340, 7)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        mode: Mode::ClassRankPerc,
        seed: 7,
        ..TrainConfig::default()
    };
    let (trained, trace) = train(
        &init_adapter(d, Scope::PrototypesOnly, 7),
        &class,
        &pairs,
        &world.store,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let after = held_out_accuracy(&world, &trained)?;
    ensure(after >= 0.90, || format!("trained held-out accuracy {after:.3} < 0.90"))?;

    let (p, c) = centroid_pairs(&class, &world.store).map_err(|e| e.to_string())?;
    let proc = procrustes_adapter(&p, &c, Scope::PrototypesOnly).map_err(|e| e.to_string())?;
    let via_proc = held_out_accuracy(&world, &proc)?;
    ensure(via_proc >= 0.85, || {
        format!("Procrustes held-out accuracy {via_proc:.3} < 0.85")
    })?;
    Ok(format!(
        "held-out accuracy: before {before:.3}, trained {after:.3} ({} epochs), Procrustes {via_proc:.3}",
        trace.epochs()
    ))
}

// 6 -------------------------------------------------------------------------

fn leave_one_out_audit() -> Outcome {
    let (world, datasets, class) = synth_suite(11, 60).map_err(|e| e.to_string())?;
    let init = init_adapter(world.config.d, Scope::PrototypesOnly, 0);
    let mut lines = 0;
    for mode in Mode::ALL {
        let cfg = TrainConfig {
            mode,
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let r = leave_one_out(&datasets, &class, &world.store, &init, &cfg)
            .map_err(|e| format!("{mode}: {e}"))?;
        for ((held, sources), line) in datasets.iter().zip(&r.training_sources).zip(&r.audit) {
            ensure(line.ends_with("overlap=0"), || format!("audit: {line}"))?;
            ensure(!sources.contains(&held.name), || {
                format!("{mode}: `{}` trained on itself", held.name)
            })?;
            let eval_keys: Vec<_> = held.pairs.iter().map(RankPair::key).collect();
            for src in sources {
                let ds = datasets.iter().find(|d| &d.name == src).unwrap();
                if mode.perceptual_only() {
                    ensure(ds.tag == DatasetTag::Perceptual, || {
                        format!("{mode} trained on non-perceptual `{src}`")
                    })?;
                }
                let shared = ds.pairs.iter().filter(|p| eval_keys.contains(&p.key())).count();
                ensure(line.contains(&format!("dropped={shared}")) || shared == 0, || {
                    format!("{mode}: {shared} shared pairs with `{src}` not reported")
                })?;
            }
            if !mode.uses_ranking() {
                ensure(sources.is_empty(), || format!("{mode} drew rank pairs"))?;
            }
            lines += 1;
        }
    }
    Ok(format!("{lines} folds over {} modes, all overlap=0", Mode::ALL.len()))
}

// 7 -------------------------------------------------------------------------

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_protospace"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let x = std::fs::read(a).map_err(|e| format!("{}: {e}", a.display()))?;
    let y = std::fs::read(b).map_err(|e| format!("{}: {e}", b.display()))?;
    ensure(x == y, || format!("{} and {} differ", a.display(), b.display()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    for run in ["1", "2"] {
        run_cli(&["synth", "--seed", "5", "--max-pairs", "80", "--out", &format!("w{run}")], root)?;
    }
    let files = ["embeddings.jsonl", "ratings.csv", "prototypes.json", "classification.json", "pairs.csv"];
    for f in files {
        same_bytes(&root.join("w1").join(f), &root.join("w2").join(f))?;
    }
    for run in ["1", "2"] {
        run_cli(
            &[
                "train", "--class", "w1/classification.json", "--rank", "w1/pairs.csv",
                "--emb", "w1/embeddings.jsonl", "--seed", "3", "--epochs", "15",
                "--out", &format!("a{run}.json"),
            ],
            root,
        )?;
    }
    same_bytes(&root.join("a1.json"), &root.join("a2.json"))?;
    same_bytes(&root.join("a1.trace.csv"), &root.join("a2.trace.csv"))?;
    Ok(format!("synth ({} files) and train (adapter, trace) identical across runs", files.len()))
}

// 8 -------------------------------------------------------------------------

fn byte_exact_templates() -> Outcome {
    let phrase = verbalize_entity("banana", Some("food item")).map_err(|e| e.to_string())?;
    ensure(phrase == "food item banana", || format!("verbalized as {phrase:?}"))?;
    let prompt = eol_prompt(&phrase).map_err(|e| e.to_string())?;
    let want = "The description of the term 'food item banana' in one word is";
    ensure(prompt.as_bytes() == want.as_bytes(), || format!("prompt {prompt:?}"))?;
    Ok(format!("{prompt:?}"))
}

// 9 -------------------------------------------------------------------------

fn statistics() -> Outcome {
    let fixed: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], 0.8),
        (&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0], 9.0 / 84f64.sqrt()),
        (&[2.0, 4.0, 6.0, 8.0, 10.0], &[5.0, 3.0, 4.0, 1.0, 2.0], -0.8),
    ];
    for (x, y, want) in fixed {
        let r = pearson(x, y).map_err(|e| e.to_string())?;
        ensure((r - want).abs() <= 1e-12, || format!("pearson {x:?} {y:?} = {r}, want {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..40);
        let x = gaussian(&mut rng, n);
        let y = gaussian(&mut rng, n);
        let a = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let c = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (b, e) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let r = pearson(&x, &y).map_err(|e| e.to_string())?;
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cy: Vec<f64> = y.iter().map(|v| c * v + e).collect();
        let r2 = pearson(&ax, &cy).map_err(|e| e.to_string())?;
        worst = worst.max((r2 - (a * c).signum() * r).abs());
    }
    ensure(worst <= 1e-9, || format!("affine invariance off by {worst:e}"))?;
    Ok(format!("3 closed forms within 1e-12; affine invariance max dev {worst:.1e} over 1000"))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "McNemar reproduction", limit: Some(Duration::from_secs(1)), run: mcnemar_reproduction },
        Criterion { id: 2, name: "loss identities", limit: Some(Duration::from_secs(1)), run: loss_identities },
        Criterion { id: 3, name: "gradient suite", limit: Some(Duration::from_secs(10)), run: gradient_suite },
        Criterion { id: 4, name: "Procrustes suite", limit: Some(Duration::from_secs(5)), run: procrustes_suite },
        Criterion { id: 5, name: "alignment end to end", limit: Some(Duration::from_secs(60)), run: alignment_end_to_end },
        Criterion { id: 6, name: "leave-one-out audit", limit: Some(Duration::from_secs(30)), run: leave_one_out_audit },
        Criterion { id: 7, name: "determinism", limit: None, run: determinism },
        Criterion { id: 8, name: "byte-exact templates", limit: None, run: byte_exact_templates },
        Criterion { id: 9, name: "statistics correctness", limit: None, run: statistics },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut stdout = std::io::stdout();
    let mut failed = 0;
    for c in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let took = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if took > limit => {
                Err(format!("took {took:.2?}, limit {limit:?}"))
            }
            (r, _) => r,
        };
        let line = match &result {
            Ok(detail) => format!("PASS  criterion {} {} ({took:.2?}): {detail}\n", c.id, c.name),
            Err(why) => {
                failed += 1;
                format!("FAIL  criterion {} {} ({took:.2?}): {why}\n", c.id, c.name)
            }
        };
        stdout.write_all(line.as_bytes()).unwrap();
    }
    stdout.flush().unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
