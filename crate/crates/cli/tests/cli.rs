use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use melody_rd::adaptor::{Library, Model, ModelKind};
use melody_rd::experiments::{one_shot_generalization, train, Setup};
use melody_rd::grammar::{Grammar, GrammarParams};
use melody_rd::melody::{synth_corpus, Corpus};
use melody_rd::seed::derive;
use melody_rd::stats::mean;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_melody-rd"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let o = run(args, dir);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: &str = "seed = 3
[corpus]
synth_n = 16
mean_len = 12
n_eval = 4
[rd_sweep]
models = [\"pcfg\"]
n_train = [0]
n_seeds = 10
[train]
n_train = 8
proposals = 64
[generalize]
r_s = [8, 32]
n_seeds = 2
";

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn prepare_synthesizes_and_filters() {
    let d = tempfile::tempdir().unwrap();
    let o = ok(&["prepare", "--synth", "n=500", "mean-len=50", "--seed", "7", "-o", "corpus.json"], d.path());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["kept"], 500);
    let c = Corpus::from_json(&std::fs::read_to_string(d.path().join("corpus.json")).unwrap()).unwrap();
    assert_eq!(c.len(), 500);

    std::fs::write(d.path().join("raw.txt"), "# raw export\na: 60,62,64,65,67,69,71,72,74\nb: 60,62,64,65,67,69,71,72,74,76,p\n").unwrap();
    let o = ok(&["prepare", "-i", "raw.txt", "-o", "out.txt"], d.path());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["dropped_short"], 1);
    assert_eq!(std::fs::read_to_string(d.path().join("out.txt")).unwrap(), "b: 0,2,4,5,7,9,11,0,2,4,p\n");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["prepare", "-i", "missing.txt", "-o", "x.json"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));
    assert_eq!(run(&["rd-sweep", "--no-such-flag"], d.path()).status.code(), Some(2));

    std::fs::write(d.path().join("bad.toml"), "[rd_sweep]\nr_ll = [8]\n[model]\nalpah = 1.0\n").unwrap();
    let o = run(&["rd-sweep", "--config", "bad.toml"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`rd_sweep.r_ll`") && err.contains("`model.alpah`"), "{err}");

    std::fs::write(d.path().join("lib.json"), "{\"schema_version\": 99, \"caches\": {}}").unwrap();
    let o = run(&["generalize", "--library", "lib.json"], d.path());
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(d.path().join("file"), "").unwrap();
    std::fs::write(d.path().join("small.toml"), SMALL).unwrap();
    let o = run(&["decode-demo", "--config", "small.toml", "--out-dir", "file/sub"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_cardinality_reruns_and_empty_library() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("small.toml"), SMALL).unwrap();
    ok(&["rd-sweep", "--config", "small.toml", "--out-dir", "a"], d.path());
    ok(&["rd-sweep", "--config", "small.toml", "--out-dir", "b", "--jobs", "2"], d.path());
    let a = std::fs::read(d.path().join("a/rd_sweep.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b/rd_sweep.csv")).unwrap());
    assert_eq!(std::fs::read(d.path().join("a/metadata.json")).unwrap(), std::fs::read(d.path().join("b/metadata.json")).unwrap());
    assert!(String::from_utf8_lossy(&a).starts_with("model,r_l,r_s,n_train,seed,mean_distortion,stderr,n\n"));
    let pcfg = rows(&d.path().join("a/rd_sweep.csv"));
    assert_eq!(pcfg.len(), 150);

    // an adaptor model with no training data is the plain grammar
    ok(&["rd-sweep", "--config", "small.toml", "--out-dir", "c", "--model", "ag", "--n-train", "0"], d.path());
    let ag = rows(&d.path().join("c/rd_sweep.csv"));
    assert_eq!(ag.len(), 150);
    for (p, a) in pcfg.iter().zip(&ag) {
        assert_eq!((p[0].as_str(), a[0].as_str()), ("pcfg", "ag"));
        assert_eq!(p[1..], a[1..]);
    }
}

#[test]
fn saved_library_reproduces_in_process_generalization() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("small.toml"), SMALL).unwrap();
    ok(&["train", "--config", "small.toml", "--out-dir", "t"], d.path());
    ok(&["generalize", "--config", "small.toml", "--out-dir", "g", "--library", "t/library.json"], d.path());

    let setup = Setup::new(Arc::new(Grammar::new(GrammarParams::default()).unwrap()));
    let corpus = synth_corpus(16, 12, 20, derive(3, &["corpus"]));
    let (pool, eval) = corpus.melodies.split_at(12);
    let model = train(&setup, &setup.model(ModelKind::Ag), &pool[..8], 64, derive(3, &["train"]));
    let saved = Library::from_json(&std::fs::read_to_string(d.path().join("t/library.json")).unwrap()).unwrap();
    assert_eq!(&saved, model.library());

    let ag = Model::ag(setup.grammar.clone(), setup.py, saved);
    let table = rows(&d.path().join("g/generalize.csv"));
    let ag_rows: Vec<_> = table.iter().filter(|r| r[0] == "ag").collect();
    assert_eq!(ag_rows.len(), 4);
    for r in ag_rows {
        let (r_s, s): (usize, usize) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let seed = derive(3, &["generalize", &r_s.to_string(), &s.to_string()]);
        let d = one_shot_generalization(&setup, &ag, eval, r_s, seed);
        assert_eq!(r[3].parse::<f64>().unwrap(), mean(&d));
    }
}

#[test]
fn planted_files_share_a_motif_bank() {
    let d = tempfile::tempdir().unwrap();
    ok(&["prepare", "--planted", "n=8", "len=20", "prefix=t", "--seed", "4", "-o", "t.json"], d.path());
    ok(&["prepare", "--planted", "n=8", "len=20", "prefix=e", "--seed", "4", "-o", "e.json"], d.path());
    let t = Corpus::from_json(&std::fs::read_to_string(d.path().join("t.json")).unwrap()).unwrap();
    let e = Corpus::from_json(&std::fs::read_to_string(d.path().join("e.json")).unwrap()).unwrap();
    assert_eq!((t.len(), e.len()), (8, 8));
    assert!(t.melodies.iter().all(|m| m.id.starts_with('t')));
    assert_ne!(t.melodies[0].notes, e.melodies[0].notes);
    let o = run(&["prepare", "--planted", "n=8", "colour=red", "-o", "x.json"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}
