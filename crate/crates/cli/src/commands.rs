use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use melody_rd::adaptor::{Library, Model, ModelKind, PyParams};
use melody_rd::compress::{decode, encode_melody, evaluate_encoding, Budget, NoiseModel, SearchMode};
use melody_rd::curriculum::{build_synergistic_curriculum, compare_with_random, FeatureParams, PlantedBank, SynergySearch};
use melody_rd::experiments::{
    aggregate, matched_run_analysis, one_shot_generalization, random_library_baseline, rd_sweep, train_with_encodings,
    uniqueness_sweep, CurriculumBudgets, RdGrid, Setup,
};
use melody_rd::grammar::Grammar;
use melody_rd::melody::{hamming_distortion, preprocess, synth_corpus, Corpus, Melody, RawCorpus, MIN_MELODY_LEN};
use melody_rd::seed::{self, derive};
use melody_rd::stats::{mean, std_err};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{Inputs, OutDir};
use crate::{Cli, Command, CorpusArgs};

pub enum Failure {
    /// Bad arguments, configuration or input files (exit code 2).
    Usage(anyhow::Error),
    /// The run itself failed (exit code 1).
    Runtime(anyhow::Error),
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

type Res<T> = Result<T, Failure>;

// Full-scale sizes; desk-scale outputs record their ratio to these.
const FULL_TRAIN: f64 = 1000.0;
const FULL_EVAL: f64 = 500.0;
const FULL_CURRICULA: f64 = 1000.0;

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    inputs: Inputs,
}

impl Ctx {
    fn setup(&self) -> Res<Setup> {
        let m = &self.cfg.sections.model;
        let grammar = Grammar::new(self.cfg.grammar.clone()).map_err(usage)?;
        Ok(Setup {
            grammar: Arc::new(grammar),
            py: PyParams::new(m.alpha, m.discount).map_err(usage)?,
            noise: NoiseModel::new(m.epsilon).map_err(|e| usage(anyhow!(e)))?,
            decode_samples: m.decode_samples,
        })
    }

    fn read(&mut self, role: &str, path: &Path) -> Res<String> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
        self.inputs.add(role, path, &bytes);
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display())).map_err(usage)
    }

    fn corpus_file(&mut self, role: &str, path: &Path) -> Res<Corpus> {
        let text = self.read(role, path)?;
        let raw = RawCorpus::parse_any(&text).with_context(|| format!("parsing {}", path.display())).map_err(usage)?;
        let (c, summary) = preprocess(&raw, MIN_MELODY_LEN);
        if summary.dropped_short > 0 {
            eprintln!("warning: dropped {} melodies shorter than {MIN_MELODY_LEN} notes from {}", summary.dropped_short, path.display());
        }
        if c.is_empty() {
            return Err(usage(anyhow!("{} has no usable melodies", path.display())));
        }
        Ok(c)
    }

    /// Training pool and held-out melodies.
    fn corpora(&mut self, args: &CorpusArgs) -> Res<(Vec<Melody>, Vec<Melody>)> {
        let pool = match &args.corpus {
            Some(p) => self.corpus_file("corpus", p)?,
            None => {
                let c = &self.cfg.sections.corpus;
                let corpus = synth_corpus(c.synth_n, c.mean_len, c.motifs, derive(self.seed, &["corpus"]));
                self.inputs.synthetic("corpus", &corpus.to_text());
                corpus
            }
        };
        match &args.eval {
            Some(p) => {
                let eval = self.corpus_file("eval", p)?;
                Ok((pool.melodies, eval.melodies))
            }
            None => {
                let n_eval = self.cfg.sections.corpus.n_eval;
                if pool.len() <= n_eval {
                    return Err(usage(anyhow!("corpus has {} melodies, need more than corpus.n_eval = {n_eval}", pool.len())));
                }
                let mut train = pool.melodies;
                let eval = train.split_off(train.len() - n_eval);
                Ok((train, eval))
            }
        }
    }

    fn library(&mut self, path: &Path) -> Res<Library> {
        let text = self.read("library", path)?;
        Library::from_json(&text).with_context(|| format!("loading library {}", path.display())).map_err(usage)
    }

    fn metadata(&self, command: &str, extra: Value) -> Value {
        let config = serde_json::to_value(self.cfg.to_table()).expect("config converts to JSON");
        let mut m = json!({
            "tool": "melody-rd",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.seed,
            "seed_derivation": "FNV-1a over (root, labels) with SplitMix64 finalizer",
            "config": config,
            "inputs": self.inputs.0,
            "distortion_units": "Hamming distance per note (divided by melody length)",
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
            m.extend(e);
        }
        m
    }
}

fn scaling(n_train: usize, n_eval: usize) -> Value {
    json!({ "train_melodies": n_train as f64 / FULL_TRAIN, "eval_melodies": n_eval as f64 / FULL_EVAL })
}

pub fn run(cli: Cli) -> Res<()> {
    if let Command::Prepare { input, synth, planted, output, min_len } = &cli.command {
        return prepare(input.as_deref(), synth.as_deref(), planted.as_deref(), output, *min_len, cli.seed.unwrap_or(0));
    }
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            RunConfig::parse(&text).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut inputs = Inputs::new();
    if let Some(p) = &cli.config {
        inputs.add("config", p, &std::fs::read(p).map_err(usage)?);
    }
    apply_overrides(&mut cfg, &cli.command);
    cfg.validate().map_err(|e| usage(anyhow!("{e}")))?;
    let seed = cli.seed.unwrap_or(cfg.sections.seed);
    cfg.sections.seed = seed;
    let mut ctx = Ctx { cfg, seed, inputs };
    let out = OutDir::create(&cli.out_dir).map_err(runtime)?;
    // the effective configuration, reusable with --config to repeat the run
    out.write("config.toml", &ctx.cfg.to_toml()).map_err(runtime)?;
    match &cli.command {
        Command::Prepare { .. } => unreachable!("handled above"),
        Command::RdSweep { corpus, .. } => cmd_rd_sweep(&mut ctx, corpus, &out),
        Command::Train { corpus, .. } => cmd_train(&mut ctx, corpus, &out),
        Command::Generalize { corpus, library, .. } => cmd_generalize(&mut ctx, corpus, library, &out),
        Command::Uniqueness { corpus, .. } => cmd_uniqueness(&mut ctx, corpus, &out),
        Command::Curriculum { corpus, ordering, .. } => cmd_curriculum(&mut ctx, corpus, ordering.as_deref(), &out),
        Command::Synergy { corpus, .. } => cmd_synergy(&mut ctx, corpus, &out),
        Command::DecodeDemo { corpus, melody, library, .. } => cmd_decode(&mut ctx, corpus, melody.as_deref(), library.as_deref(), &out),
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) {
    let s = &mut cfg.sections;
    match cmd {
        Command::RdSweep { models, r_l, r_s, n_train, n_seeds, .. } => {
            set(&mut s.rd_sweep.models, models);
            set(&mut s.rd_sweep.r_l, r_l);
            set(&mut s.rd_sweep.r_s, r_s);
            set(&mut s.rd_sweep.n_train, n_train);
            set(&mut s.rd_sweep.n_seeds, n_seeds);
        }
        Command::Train { model, n_train, proposals, .. } => {
            set(&mut s.train.model, model);
            set(&mut s.train.n_train, n_train);
            set(&mut s.train.proposals, proposals);
        }
        Command::Generalize { r_s, n_seeds, .. } => {
            set(&mut s.generalize.r_s, r_s);
            set(&mut s.generalize.n_seeds, n_seeds);
        }
        Command::Uniqueness { models, n_train, r_s, n_seeds, .. } => {
            set(&mut s.uniqueness.models, models);
            set(&mut s.uniqueness.n_train, n_train);
            set(&mut s.uniqueness.r_s, r_s);
            set(&mut s.uniqueness.n_seeds, n_seeds);
        }
        Command::Curriculum { melodies, n_curricula, n_random, baseline_trials, train_proposals, eval_r_l, eval_r_s, .. } => {
            let c = &mut s.curriculum;
            set(&mut c.melodies, melodies);
            set(&mut c.n_curricula, n_curricula);
            set(&mut c.n_random, n_random);
            set(&mut c.baseline_trials, baseline_trials);
            set(&mut c.train_proposals, train_proposals);
            set(&mut c.eval_r_l, eval_r_l);
            set(&mut c.eval_r_s, eval_r_s);
        }
        Command::Synergy { melodies, n_pairs, train_proposals, .. } => {
            set(&mut s.synergy.melodies, melodies);
            set(&mut s.synergy.n_pairs, n_pairs);
            set(&mut s.synergy.train_proposals, train_proposals);
        }
        Command::DecodeDemo { melody, r_l, r_s, .. } => {
            set(&mut s.decode.melody, melody);
            set(&mut s.decode.r_l, r_l);
            set(&mut s.decode.r_s, r_s);
        }
        Command::Prepare { .. } => {}
    }
}

/// Parses `key=value` pairs; every key must be in `allowed`.
fn spec_pairs(items: &[String], allowed: &[&str]) -> Res<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut problems = Vec::new();
    for it in items.iter().flat_map(|s| s.split_whitespace()) {
        match it.split_once('=') {
            Some((k, v)) if allowed.contains(&k) => {
                out.insert(k.to_string(), v.to_string());
            }
            Some((k, _)) => problems.push(format!("unknown key `{k}` (expected one of {})", allowed.join(", "))),
            None => problems.push(format!("`{it}` is not key=value")),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(usage(anyhow!(problems.join("; "))))
    }
}

fn spec_num(spec: &BTreeMap<String, String>, key: &str, default: usize) -> Res<usize> {
    match spec.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| usage(anyhow!("`{key}` must be a non-negative integer, got `{v}`"))),
    }
}

fn prepare(input: Option<&Path>, synth: Option<&[String]>, planted: Option<&[String]>, output: &Path, min_len: usize, root: u64) -> Res<()> {
    let raw = match (input, synth, planted) {
        (Some(p), _, _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            RawCorpus::parse_any(&text).with_context(|| format!("parsing {}", p.display())).map_err(usage)?
        }
        (None, Some(spec), _) => {
            let s = spec_pairs(spec, &["n", "mean-len", "motifs"])?;
            let (n, mean_len, motifs) = (spec_num(&s, "n", 100)?, spec_num(&s, "mean-len", 30)?, spec_num(&s, "motifs", 20)?);
            if n == 0 || motifs == 0 || mean_len < MIN_MELODY_LEN {
                return Err(usage(anyhow!("synth needs n >= 1, motifs >= 1 and mean-len >= {MIN_MELODY_LEN}")));
            }
            synth_corpus(n, mean_len, motifs, derive(root, &["corpus"])).to_raw()
        }
        (None, None, Some(spec)) => {
            let s = spec_pairs(spec, &["n", "len", "first", "second", "prefix"])?;
            let (n, len) = (spec_num(&s, "n", 20)?, spec_num(&s, "len", 30)?);
            let (first, second) = (spec_num(&s, "first", 4)?, spec_num(&s, "second", 5)?);
            let prefix = s.get("prefix").cloned().unwrap_or_else(|| "m".into());
            if n == 0 || first == 0 || second == 0 || len < MIN_MELODY_LEN {
                return Err(usage(anyhow!("planted needs n, first, second >= 1 and len >= {MIN_MELODY_LEN}")));
            }
            // the bank depends on the seed only, so train and eval files share motifs
            let bank = PlantedBank::new(first, second, derive(root, &["bank"]));
            bank.corpus(n, len, &prefix, derive(root, &["planted", &prefix])).to_raw()
        }
        (None, None, None) => return Err(usage(anyhow!("prepare needs --input, --synth or --planted"))),
    };
    let (corpus, summary) = preprocess(&raw, min_len);
    let text = if output.extension().is_some_and(|e| e == "json") { corpus.to_json() + "\n" } else { corpus.to_text() };
    std::fs::write(output, text).with_context(|| format!("writing {}", output.display())).map_err(runtime)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn cmd_rd_sweep(ctx: &mut Ctx, args: &CorpusArgs, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let (train, eval) = ctx.corpora(args)?;
    let s = &ctx.cfg.sections.rd_sweep;
    let grid = RdGrid { models: s.models.clone(), r_l: s.r_l.clone(), r_s: s.r_s.clone(), n_train: s.n_train.clone(), n_seeds: s.n_seeds };
    let points = rd_sweep(&setup, &train, &eval, &grid, derive(ctx.seed, &["rd-sweep"])).map_err(usage)?;
    out.csv("rd_sweep.csv", &points).map_err(runtime)?;
    out.csv("rd_cells.csv", &aggregate(&points)).map_err(runtime)?;
    out.finish(&ctx.metadata("rd-sweep", json!({ "scaling": scaling(train.len(), eval.len()) }))).map_err(runtime)
}

#[derive(Serialize)]
struct TrainRow {
    melody_id: String,
    segments: usize,
    searched: usize,
    rate_bits: f64,
    proposals_used: usize,
}

fn cmd_train(ctx: &mut Ctx, args: &CorpusArgs, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let (pool, _) = ctx.corpora(args)?;
    let t = &ctx.cfg.sections.train;
    let melodies = pool
        .get(..t.n_train)
        .ok_or_else(|| usage(anyhow!("train.n_train = {} exceeds the {} training melodies", t.n_train, pool.len())))?;
    let (model, encs) = train_with_encodings(&setup, &setup.model(t.model), melodies, t.proposals, derive(ctx.seed, &["train"]));
    let rows: Vec<TrainRow> = encs
        .iter()
        .map(|e| TrainRow {
            melody_id: e.source_id.clone(),
            segments: e.segments.len(),
            searched: e.found.len(),
            rate_bits: e.rate_bits,
            proposals_used: e.proposals_used,
        })
        .collect();
    out.csv("train.csv", &rows).map_err(runtime)?;
    out.write("library.json", &(model.library().to_json() + "\n")).map_err(runtime)?;
    let lib = model.library();
    let sizes: BTreeMap<String, (usize, u64)> = lib.types().map(|ty| (ty.to_string(), (lib.distinct(ty), lib.total(ty)))).collect();
    out.finish(&ctx.metadata("train", json!({ "library_types": sizes, "scaling": scaling(melodies.len(), 0) })))
        .map_err(runtime)
}

#[derive(Serialize)]
struct GeneralizeRow {
    model: ModelKind,
    r_s: usize,
    seed: usize,
    mean_distortion: f64,
    stderr: f64,
    n: usize,
}

/// Seed of one generalization cell; both models share it.
fn generalize_seed(root: u64, r_s: usize, s: usize) -> u64 {
    derive(root, &["generalize", &r_s.to_string(), &s.to_string()])
}

fn cmd_generalize(ctx: &mut Ctx, args: &CorpusArgs, library: &Path, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let lib = ctx.library(library)?;
    let (_, eval) = ctx.corpora(args)?;
    let g = ctx.cfg.sections.generalize.clone();
    let models = [setup.model(ModelKind::Pcfg), Model::ag(setup.grammar.clone(), setup.py, lib)];
    let mut rows = Vec::new();
    for m in &models {
        for &r_s in &g.r_s {
            for s in 0..g.n_seeds {
                let d = one_shot_generalization(&setup, m, &eval, r_s, generalize_seed(ctx.seed, r_s, s));
                rows.push(GeneralizeRow { model: m.kind(), r_s, seed: s, mean_distortion: mean(&d), stderr: std_err(&d), n: d.len() });
            }
        }
    }
    out.csv("generalize.csv", &rows).map_err(runtime)?;
    out.finish(&ctx.metadata("generalize", json!({ "scaling": scaling(0, eval.len()) }))).map_err(runtime)
}

#[derive(Serialize)]
struct UniquenessCsv {
    model: ModelKind,
    n_train: usize,
    r_s: usize,
    seed: usize,
    uniqueness: f64,
    shared: f64,
}

fn cmd_uniqueness(ctx: &mut Ctx, args: &CorpusArgs, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let (pool, _) = ctx.corpora(args)?;
    let u = ctx.cfg.sections.uniqueness.clone();
    let mut rows = Vec::new();
    for s in 0..u.n_seeds {
        let cells = uniqueness_sweep(&setup, &u.models, &pool, &u.n_train, &u.r_s, derive(ctx.seed, &["uniqueness", &s.to_string()]))
            .map_err(usage)?;
        rows.extend(cells.into_iter().map(|c| UniquenessCsv {
            model: c.model,
            n_train: c.n_train,
            r_s: c.r_s,
            seed: s,
            uniqueness: c.uniqueness,
            shared: c.shared,
        }));
    }
    out.csv("uniqueness.csv", &rows).map_err(runtime)?;
    out.finish(&ctx.metadata("uniqueness", json!({}))).map_err(runtime)
}

fn stats_json<T: Serialize, E: std::fmt::Display>(r: &Result<T, E>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).expect("statistic serializes"),
        Err(e) => json!({ "undefined": e.to_string() }),
    }
}

#[derive(Deserialize)]
struct OrderingRow {
    melody_id: String,
}

fn read_ordering(ctx: &mut Ctx, path: &Path) -> Res<Vec<String>> {
    let text = ctx.read("ordering", path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<OrderingRow>()
        .map(|row| row.map(|x| x.melody_id))
        .collect::<Result<_, _>>()
        .with_context(|| format!("reading ordering {}", path.display()))
        .map_err(usage)
}

fn cmd_curriculum(ctx: &mut Ctx, args: &CorpusArgs, ordering: Option<&Path>, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let (pool, eval) = ctx.corpora(args)?;
    let c = ctx.cfg.sections.curriculum.clone();
    let budgets = CurriculumBudgets { train_proposals: c.train_proposals, eval: Budget { rate_bits: c.eval_r_l, proposals: c.eval_r_s } };
    if let Some(path) = ordering {
        let order = read_ordering(ctx, path)?;
        let subset: Vec<Melody> = order
            .iter()
            .map(|id| pool.iter().find(|m| &m.id == id).cloned().ok_or_else(|| usage(anyhow!("ordering names unknown melody `{id}`"))))
            .collect::<Res<_>>()?;
        let cmp = compare_with_random(&setup, &subset, &order, &eval, c.n_random, &budgets, derive(ctx.seed, &["comparison"]))
            .map_err(usage)?;
        out.csv("comparison.csv", &cmp.rows).map_err(runtime)?;
        let summary = json!({
            "ordering": cmp.ordering,
            "mean_given": cmp.mean_synergy,
            "mean_random": cmp.mean_random,
            "paired_test": stats_json(&cmp.test),
        });
        out.json("comparison_summary.json", &summary).map_err(runtime)?;
        let extra = json!({ "scaling": { "random_curricula": c.n_random as f64 / FULL_CURRICULA } });
        return out.finish(&ctx.metadata("curriculum", extra)).map_err(runtime);
    }
    let subset = pool
        .get(..c.melodies)
        .ok_or_else(|| usage(anyhow!("curriculum.melodies = {} exceeds the {} training melodies", c.melodies, pool.len())))?;
    let m = matched_run_analysis(&setup, subset, c.n_curricula, &eval, &budgets, derive(ctx.seed, &["curriculum"]), false)
        .map_err(usage)?;
    out.csv("curriculum.csv", &m.rows).map_err(runtime)?;
    let mut summary = json!({
        "r_matched": stats_json(&m.r_matched),
        "r_random": stats_json(&m.r_random),
        "abs_diff_test": stats_json(&m.abs_diff_test),
        "random_pairing": "shift by one curriculum (run b of curriculum k+1)",
    });
    if c.baseline_trials > 0 {
        let b = random_library_baseline(&setup, subset, &eval, c.baseline_trials, &budgets, derive(ctx.seed, &["baseline"]))
            .map_err(usage)?;
        out.csv("baseline.csv", &b.rows).map_err(runtime)?;
        summary["baseline"] = json!({
            "mean_learned": b.mean_learned,
            "mean_random": b.mean_random,
            "var_learned": b.var_learned,
            "var_random": b.var_random,
            "paired_test": stats_json(&b.test),
        });
    }
    out.json("curriculum_summary.json", &summary).map_err(runtime)?;
    let extra = json!({ "scaling": { "curricula": c.n_curricula as f64 / FULL_CURRICULA, "train_melodies": c.melodies as f64 / FULL_TRAIN } });
    out.finish(&ctx.metadata("curriculum", extra)).map_err(runtime)
}

fn cmd_synergy(ctx: &mut Ctx, args: &CorpusArgs, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let (pool, _) = ctx.corpora(args)?;
    let s = ctx.cfg.sections.synergy.clone();
    let candidates = pool
        .get(..s.melodies)
        .ok_or_else(|| usage(anyhow!("synergy.melodies = {} exceeds the {} training melodies", s.melodies, pool.len())))?;
    let search = SynergySearch {
        train_proposals: s.train_proposals,
        n_pairs: s.n_pairs,
        features: FeatureParams { threshold: s.threshold, stride: s.stride, composite_only: s.composite_only },
    };
    let steps = build_synergistic_curriculum(&setup, &setup.model(ModelKind::Ag), candidates, &search, derive(ctx.seed, &["synergy"]))
        .map_err(usage)?;
    out.csv("ordering.csv", &steps).map_err(runtime)?;
    let extra = json!({
        "synergy_score": "mean pairwise Williams-Beer synergy times the number of distinct program pairs (approximation of the multi-source value)",
    });
    out.finish(&ctx.metadata("synergy", extra)).map_err(runtime)
}

fn cmd_decode(ctx: &mut Ctx, args: &CorpusArgs, melody: Option<&str>, library: Option<&Path>, out: &OutDir) -> Res<()> {
    let setup = ctx.setup()?;
    let model = match library {
        Some(p) => Model::ag(setup.grammar.clone(), setup.py, ctx.library(p)?),
        None => setup.model(ModelKind::Pcfg),
    };
    let (pool, eval) = ctx.corpora(args)?;
    let d = ctx.cfg.sections.decode.clone();
    let wanted = melody.map(str::to_string).unwrap_or(d.melody.clone());
    let mel = if wanted.is_empty() {
        pool.first().cloned()
    } else {
        pool.iter().chain(&eval).find(|m| m.id == wanted).cloned()
    }
    .ok_or_else(|| usage(anyhow!("no melody `{wanted}` in the corpus")))?;
    let budget = Budget::new(d.r_l, d.r_s).map_err(|e| usage(anyhow!(e)))?;
    let enc = encode_melody(&mel, &model, &budget, &setup.noise, SearchMode::POOLED, derive(ctx.seed, &["decode-demo", "encode"]));
    let decoded = decode(&enc, &model, &mut seed::rng(derive(ctx.seed, &["decode-demo", "decode"])));
    let (_, expected) = evaluate_encoding(&mel, &enc, &model, setup.decode_samples, derive(ctx.seed, &["decode-demo", "expected"]));
    out.write("encoding.json", &(enc.to_json() + "\n")).map_err(runtime)?;
    let pair = Corpus::new(
        vec![Melody::new(format!("{}-original", mel.id), mel.notes.clone()), Melody::new(format!("{}-decoded", mel.id), decoded.clone())],
        melody_rd::melody::Provenance::Parsed,
        None,
    );
    out.write("decoded.txt", &pair.to_text()).map_err(runtime)?;
    let summary = json!({
        "melody_id": mel.id,
        "model": model.kind(),
        "r_l": d.r_l,
        "r_s": d.r_s,
        "rate_bits": enc.rate_bits,
        "proposals_used": enc.proposals_used,
        "segments": enc.segments.iter().map(|s| json!({ "program": s.program.to_string(), "consumed": s.consumed, "bits": s.bits })).collect::<Vec<_>>(),
        "distortion": hamming_distortion(&mel.notes, &decoded),
        "expected_distortion": expected,
        "length": mel.len(),
    });
    out.json("summary.json", &summary).map_err(runtime)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    out.finish(&ctx.metadata("decode-demo", json!({}))).map_err(runtime)
}
