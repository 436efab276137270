//! Experiment drivers: rate-distortion sweeps, one-shot generalization,
//! subprogram sharing, curriculum effects and random-library baselines.
//!
//! Every job derives its seeds from the root seed and stable labels, so
//! results do not depend on thread count or completion order. Distortion is
//! reported per note (Hamming distance divided by melody length).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptor::{shared_subprogram_ratio, Library, Model, ModelKind, PyParams};
use crate::compress::{encode_melody, evaluate_encoding, Budget, Encoding, NoiseModel, SearchMode};
use crate::error::ExperimentError;
use crate::grammar::Grammar;
use crate::melody::Melody;
use crate::seed;
use crate::term::{Term, TypeTag};
use crate::stats::{mean, paired_t, pearson_r, std_err, variance, Correlation, TTest};

/// Shared settings of every experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grammar: Arc<Grammar>,
    pub py: PyParams,
    pub noise: NoiseModel,
    /// Decodes averaged per encoding that still has holes.
    pub decode_samples: usize,
}

impl Setup {
    pub fn new(grammar: Arc<Grammar>) -> Setup {
        Setup { grammar, py: PyParams::default(), noise: NoiseModel::default(), decode_samples: 100 }
    }

    pub fn model(&self, kind: ModelKind) -> Model {
        Model::new(kind, self.grammar.clone(), self.py, Library::new())
    }
}

/// Trains `model` on `melodies` in order; each melody's chosen programs are
/// cached before the next one is encoded.
pub fn train(setup: &Setup, model: &Model, melodies: &[Melody], proposals: usize, run_seed: u64) -> Model {
    train_with_encodings(setup, model, melodies, proposals, run_seed).0
}

pub fn train_with_encodings(
    setup: &Setup,
    model: &Model,
    melodies: &[Melody],
    proposals: usize,
    run_seed: u64,
) -> (Model, Vec<Encoding>) {
    let budget = Budget { rate_bits: f64::INFINITY, proposals };
    let root = seed::derive(run_seed, &["train"]);
    let mut m = model.clone();
    let mut encodings = Vec::with_capacity(melodies.len());
    for mel in melodies {
        let enc = encode_melody(mel, &m, &budget, &setup.noise, SearchMode::TRAIN, seed::melody_seed(root, &mel.id));
        if m.kind() == ModelKind::Ag {
            m = m.learn(&enc.chosen);
        }
        encodings.push(enc);
    }
    (m, encodings)
}

/// Per-note distortion of each melody under `model` and `budget`, in input order.
pub fn measure(setup: &Setup, model: &Model, melodies: &[Melody], budget: &Budget, mode: SearchMode, seed: u64) -> Vec<f64> {
    let enc_root = seed::derive(seed, &["encode"]);
    let dec_root = seed::derive(seed, &["decode"]);
    melodies
        .par_iter()
        .map(|mel| {
            let enc = encode_melody(mel, model, budget, &setup.noise, mode, seed::melody_seed(enc_root, &mel.id));
            let (_, d) = evaluate_encoding(mel, &enc, model, setup.decode_samples, seed::melody_seed(dec_root, &mel.id));
            d / mel.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub model: ModelKind,
    pub r_l: f64,
    pub r_s: usize,
    pub n_train: usize,
    pub seed: usize,
    pub mean_distortion: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdGrid {
    pub models: Vec<ModelKind>,
    pub r_l: Vec<f64>,
    pub r_s: Vec<usize>,
    pub n_train: Vec<usize>,
    pub n_seeds: usize,
}

/// One point per (model, n_train, r_s, r_l, seed). The adaptor model is
/// trained on the first `n_train` training melodies with the cell's proposal
/// budget; the plain grammar ignores training data. All cells of one seed
/// share measurement randomness.
pub fn rd_sweep(
    setup: &Setup,
    train_set: &[Melody],
    measure_set: &[Melody],
    grid: &RdGrid,
    root: u64,
) -> Result<Vec<RdPoint>, ExperimentError> {
    if grid.r_l.is_empty() || grid.r_s.is_empty() || grid.n_train.is_empty() || grid.models.is_empty() || grid.n_seeds == 0 {
        return Err(ExperimentError::Precondition("empty sweep grid".into()));
    }
    if let Some(&n) = grid.n_train.iter().find(|&&n| n > train_set.len()) {
        return Err(ExperimentError::Precondition(format!("n_train {n} exceeds {} training melodies", train_set.len())));
    }
    let mut jobs = Vec::new();
    for &kind in &grid.models {
        for &n_train in &grid.n_train {
            for &r_s in &grid.r_s {
                for s in 0..grid.n_seeds {
                    jobs.push((kind, n_train, r_s, s));
                }
            }
        }
    }
    let rows: Vec<Vec<RdPoint>> = jobs
        .par_iter()
        .map(|&(kind, n_train, r_s, s)| {
            let seed_root = seed::derive(root, &["rd", &s.to_string()]);
            let base = setup.model(kind);
            let model = if kind == ModelKind::Ag {
                train(setup, &base, &train_set[..n_train], r_s, seed_root)
            } else {
                base
            };
            grid.r_l
                .iter()
                .map(|&r_l| {
                    let d = measure(setup, &model, measure_set, &Budget { rate_bits: r_l, proposals: r_s }, SearchMode::POOLED, seed_root);
                    RdPoint {
                        model: kind,
                        r_l,
                        r_s,
                        n_train,
                        seed: s,
                        mean_distortion: mean(&d),
                        stderr: std_err(&d),
                        n: d.len(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Mean over seeds of a sweep cell, with the standard error across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCell {
    pub model: ModelKind,
    pub r_l: f64,
    pub r_s: usize,
    pub n_train: usize,
    pub mean_distortion: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

pub fn aggregate(points: &[RdPoint]) -> Vec<RdCell> {
    let mut keys: Vec<(ModelKind, usize, usize, u64)> =
        points.iter().map(|p| (p.model, p.n_train, p.r_s, p.r_l.to_bits())).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(model, n_train, r_s, r_l)| {
            let v: Vec<f64> = points
                .iter()
                .filter(|p| p.model == model && p.n_train == n_train && p.r_s == r_s && p.r_l.to_bits() == r_l)
                .map(|p| p.mean_distortion)
                .collect();
            RdCell {
                model,
                r_l: f64::from_bits(r_l),
                r_s,
                n_train,
                mean_distortion: mean(&v),
                stderr: std_err(&v),
                n_seeds: v.len(),
            }
        })
        .collect()
}

/// Per-melody distortion when each segment keeps the best of `r_s` prior draws
/// and there is no rate limit.
pub fn one_shot_generalization(setup: &Setup, model: &Model, eval: &[Melody], r_s: usize, seed: u64) -> Vec<f64> {
    let budget = Budget { rate_bits: f64::INFINITY, proposals: r_s };
    measure(setup, model, eval, &budget, SearchMode::ONE_SHOT, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessRow {
    pub model: ModelKind,
    pub n_train: usize,
    pub r_s: usize,
    pub uniqueness: f64,
    pub shared: f64,
}

/// Trains on the first `n_train` melodies of `corpus` and reports the
/// fraction of subprograms of the training encodings used by exactly one
/// melody.
pub fn uniqueness(
    setup: &Setup,
    kind: ModelKind,
    corpus: &[Melody],
    n_train: usize,
    r_s: usize,
    seed: u64,
) -> Result<UniquenessRow, ExperimentError> {
    let melodies = corpus.get(..n_train).ok_or(ExperimentError::Precondition(format!(
        "{n_train} training melodies requested, corpus has {}",
        corpus.len()
    )))?;
    let (_, encs) = train_with_encodings(setup, &setup.model(kind), melodies, r_s, seed);
    let per: Vec<Vec<_>> = encs.iter().map(Encoding::subprograms).collect();
    let u = shared_subprogram_ratio(&per)?;
    Ok(UniquenessRow { model: kind, n_train, r_s, uniqueness: u, shared: 1.0 - u })
}

pub fn uniqueness_sweep(
    setup: &Setup,
    models: &[ModelKind],
    corpus: &[Melody],
    n_train: &[usize],
    r_s: &[usize],
    seed: u64,
) -> Result<Vec<UniquenessRow>, ExperimentError> {
    let mut jobs = Vec::new();
    for &k in models {
        for &n in n_train {
            for &s in r_s {
                jobs.push((k, n, s));
            }
        }
    }
    // models share the run seed within a cell
    jobs.par_iter()
        .map(|&(k, n, s)| {
            let run = seed::derive(seed, &["uniqueness", &n.to_string(), &s.to_string()]);
            uniqueness(setup, k, corpus, n, s, run)
        })
        .collect()
}

/// Budgets of curriculum experiments: training search and held-out evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumBudgets {
    pub train_proposals: usize,
    pub eval: Budget,
}

#[derive(Debug, Clone)]
pub struct CurriculumResult {
    pub ordering: Vec<String>,
    pub run_seed: u64,
    pub library: Library,
    /// Mean per-note distortion on the evaluation melodies.
    pub error: f64,
}

fn order_melodies<'a>(subset: &'a [Melody], ordering: &[String]) -> Result<Vec<&'a Melody>, ExperimentError> {
    let mut ids: Vec<&str> = subset.iter().map(|m| m.id.as_str()).collect();
    let mut ord: Vec<&str> = ordering.iter().map(String::as_str).collect();
    ids.sort_unstable();
    ord.sort_unstable();
    if ids != ord {
        return Err(ExperimentError::InvalidPermutation(format!(
            "{} ids given for {} melodies",
            ordering.len(),
            subset.len()
        )));
    }
    Ok(ordering.iter().map(|id| subset.iter().find(|m| &m.id == id).expect("checked")).collect())
}

/// Trains the adaptor model in `ordering` and measures held-out error with the
/// frozen library. Evaluation randomness comes from `eval_seed`, training
/// randomness from `run_seed`.
pub fn run_curriculum(
    setup: &Setup,
    subset: &[Melody],
    ordering: &[String],
    eval: &[Melody],
    budgets: &CurriculumBudgets,
    run_seed: u64,
    eval_seed: u64,
) -> Result<CurriculumResult, ExperimentError> {
    let ordered: Vec<Melody> = order_melodies(subset, ordering)?.into_iter().cloned().collect();
    let model = train(setup, &setup.model(ModelKind::Ag), &ordered, budgets.train_proposals, run_seed);
    let d = measure(setup, &model, eval, &budgets.eval, SearchMode::POOLED, eval_seed);
    Ok(CurriculumResult { ordering: ordering.to_vec(), run_seed, library: model.library().clone(), error: mean(&d) })
}

/// A uniformly random ordering of the subset's ids.
pub fn random_ordering(subset: &[Melody], seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = subset.iter().map(|m| m.id.clone()).collect();
    ids.shuffle(&mut seed::rng(seed));
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedRow {
    pub curriculum: usize,
    pub error_a: f64,
    pub error_b: f64,
    /// Run B of the next curriculum (shift-by-one pairing).
    pub error_b_shifted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedAnalysis {
    pub rows: Vec<MatchedRow>,
    pub r_matched: Result<Correlation, crate::error::StatsError>,
    pub r_random: Result<Correlation, crate::error::StatsError>,
    /// Paired test of `|a - b|` for matched minus shifted pairs; `p_less`
    /// supports "matched runs agree more".
    pub abs_diff_test: Result<TTest, crate::error::StatsError>,
}

/// Two runs per random curriculum with independent training seeds. When
/// `share_run_seed` is set both runs use the same seed.
pub fn matched_run_analysis(
    setup: &Setup,
    subset: &[Melody],
    n_curricula: usize,
    eval: &[Melody],
    budgets: &CurriculumBudgets,
    root: u64,
    share_run_seed: bool,
) -> Result<MatchedAnalysis, ExperimentError> {
    if n_curricula < 3 {
        return Err(ExperimentError::Precondition(format!("need at least 3 curricula, got {n_curricula}")));
    }
    let eval_seed = seed::derive(root, &["eval"]);
    let runs: Vec<(f64, f64)> = (0..n_curricula)
        .into_par_iter()
        .map(|k| {
            let ks = k.to_string();
            let ordering = random_ordering(subset, seed::derive(root, &["curriculum", &ks]));
            let seed_a = seed::derive(root, &["run", &ks, "a"]);
            let seed_b = if share_run_seed { seed_a } else { seed::derive(root, &["run", &ks, "b"]) };
            let a = run_curriculum(setup, subset, &ordering, eval, budgets, seed_a, eval_seed)?;
            let b = run_curriculum(setup, subset, &ordering, eval, budgets, seed_b, eval_seed)?;
            Ok((a.error, b.error))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let n = runs.len();
    let rows: Vec<MatchedRow> = (0..n)
        .map(|k| MatchedRow { curriculum: k, error_a: runs[k].0, error_b: runs[k].1, error_b_shifted: runs[(k + 1) % n].1 })
        .collect();
    let a: Vec<f64> = rows.iter().map(|r| r.error_a).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.error_b).collect();
    let b_shift: Vec<f64> = rows.iter().map(|r| r.error_b_shifted).collect();
    let d_matched: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    let d_random: Vec<f64> = a.iter().zip(&b_shift).map(|(x, y)| (x - y).abs()).collect();
    Ok(MatchedAnalysis {
        r_matched: pearson_r(&a, &b),
        r_random: pearson_r(&a, &b_shift),
        abs_diff_test: paired_t(&d_matched, &d_random),
        rows,
    })
}

/// A library with the same types and per-type total counts as `like`, filled
/// by drawing that many programs from the plain grammar.
pub fn random_library(grammar: &Grammar, like: &Library, seed: u64) -> Library {
    let mut rng = seed::rng(seed);
    let mut counts: std::collections::BTreeMap<(TypeTag, Term), u64> = std::collections::BTreeMap::new();
    for t in like.types() {
        let want = like.total(t);
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < want && attempts < 50 * want {
            attempts += 1;
            if let Ok(p) = grammar.sample(t, &mut rng) {
                *counts.entry((t.clone(), p)).or_insert(0) += 1;
                drawn += 1;
            }
        }
    }
    Library::from_entries(counts.into_iter().map(|((t, p), m)| (t, p, m))).expect("sampled programs type-check")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub trial: usize,
    pub learned_error: f64,
    pub random_error: f64,
    pub library_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub rows: Vec<BaselineRow>,
    pub mean_learned: f64,
    pub mean_random: f64,
    pub var_learned: f64,
    pub var_random: f64,
    /// Paired test of learned minus random error; `p_less` favours learned.
    pub test: Result<TTest, crate::error::StatsError>,
}

/// Per trial: a learned library from a random curriculum, and a random
/// library of matched size, evaluated with the same pipeline and seeds.
pub fn random_library_baseline(
    setup: &Setup,
    subset: &[Melody],
    eval: &[Melody],
    n_trials: usize,
    budgets: &CurriculumBudgets,
    root: u64,
) -> Result<BaselineSummary, ExperimentError> {
    if n_trials < 2 {
        return Err(ExperimentError::Precondition(format!("need at least 2 trials, got {n_trials}")));
    }
    let rows: Vec<BaselineRow> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let ks = k.to_string();
            let ordering = random_ordering(subset, seed::derive(root, &["curriculum", &ks]));
            let run_seed = seed::derive(root, &["run", &ks]);
            let eval_seed = seed::derive(root, &["eval", &ks]);
            let learned = run_curriculum(setup, subset, &ordering, eval, budgets, run_seed, eval_seed)?;
            let lib = random_library(&setup.grammar, &learned.library, seed::derive(root, &["random-library", &ks]));
            let model = setup.model(ModelKind::Ag).with_library(lib);
            let d = measure(setup, &model, eval, &budgets.eval, SearchMode::POOLED, eval_seed);
            Ok(BaselineRow { trial: k, learned_error: learned.error, random_error: mean(&d), library_size: learned.library.size() })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let l: Vec<f64> = rows.iter().map(|r| r.learned_error).collect();
    let r: Vec<f64> = rows.iter().map(|r| r.random_error).collect();
    Ok(BaselineSummary {
        mean_learned: mean(&l),
        mean_random: mean(&r),
        var_learned: variance(&l),
        var_random: variance(&r),
        test: paired_t(&l, &r),
        rows,
    })
}
