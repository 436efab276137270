//! Run configuration: a strict TOML document with one table per command.
//!
//! Every key has a default, so an empty file is valid. Unknown keys anywhere
//! in the document are rejected together, each named by its dotted path.

use melody_rd::adaptor::{ModelKind, PyParams};
use melody_rd::compress::NoiseModel;
use melody_rd::grammar::GrammarParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub decode_samples: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let py = PyParams::default();
        ModelSection { alpha: py.alpha, discount: py.discount, epsilon: NoiseModel::default().epsilon, decode_samples: 100 }
    }
}

/// Synthetic corpus used when no corpus file is given, and the held-out size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub synth_n: usize,
    pub mean_len: usize,
    pub motifs: usize,
    /// Melodies held out from the end of the corpus when no eval file is given.
    pub n_eval: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { synth_n: 230, mean_len: 30, motifs: 20, n_eval: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdSweepSection {
    pub models: Vec<ModelKind>,
    pub r_l: Vec<f64>,
    pub r_s: Vec<usize>,
    pub n_train: Vec<usize>,
    pub n_seeds: usize,
}

impl Default for RdSweepSection {
    fn default() -> Self {
        RdSweepSection {
            models: vec![ModelKind::Pcfg, ModelKind::Ag],
            r_l: vec![8.0, 16.0, 32.0, 64.0, 128.0],
            r_s: vec![8, 32, 128],
            n_train: vec![10, 100, 200],
            n_seeds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: ModelKind,
    pub n_train: usize,
    pub proposals: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { model: ModelKind::Ag, n_train: 100, proposals: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizeSection {
    pub r_s: Vec<usize>,
    pub n_seeds: usize,
}

impl Default for GeneralizeSection {
    fn default() -> Self {
        GeneralizeSection { r_s: vec![8, 64], n_seeds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessSection {
    pub models: Vec<ModelKind>,
    pub n_train: Vec<usize>,
    pub r_s: Vec<usize>,
    pub n_seeds: usize,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        UniquenessSection {
            models: vec![ModelKind::Pcfg, ModelKind::Ag],
            n_train: vec![10, 25, 50, 100],
            r_s: vec![512, 2048, 8192],
            n_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    /// Training subset size (the first melodies of the corpus).
    pub melodies: usize,
    pub n_curricula: usize,
    pub train_proposals: usize,
    pub eval_r_l: f64,
    pub eval_r_s: usize,
    /// Random-library trials; 0 skips the baseline.
    pub baseline_trials: usize,
    /// Random curricula compared against a given ordering.
    pub n_random: usize,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        CurriculumSection {
            melodies: 20,
            n_curricula: 200,
            train_proposals: 4096,
            eval_r_l: 64.0,
            eval_r_s: 32,
            baseline_trials: 30,
            n_random: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynergySection {
    pub melodies: usize,
    pub train_proposals: usize,
    pub n_pairs: usize,
    pub threshold: f64,
    pub stride: usize,
    pub composite_only: bool,
}

impl Default for SynergySection {
    fn default() -> Self {
        SynergySection { melodies: 20, train_proposals: 4096, n_pairs: 200, threshold: 0.8, stride: 1, composite_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub r_l: f64,
    pub r_s: usize,
    /// Melody to encode; empty means the first one.
    pub melody: String,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection { r_l: 32.0, r_s: 128, melody: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sections {
    pub seed: u64,
    pub model: ModelSection,
    pub corpus: CorpusSection,
    pub rd_sweep: RdSweepSection,
    pub train: TrainSection,
    pub generalize: GeneralizeSection,
    pub uniqueness: UniquenessSection,
    pub curriculum: CurriculumSection,
    pub synergy: SynergySection,
    pub decode: DecodeSection,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub grammar: GrammarParams,
    pub sections: Sections,
}

/// Every problem found, reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.0 {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

fn unknown_keys(given: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => out.push(format!("unknown key `{path}`")),
            (Some(toml::Value::Table(kt)), toml::Value::Table(gt)) => unknown_keys(gt, kt, &path, out),
            _ => {}
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigErrors> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.message().to_string()]))?;
        let known = RunConfig::default().to_table();
        let mut problems = Vec::new();
        unknown_keys(&table, &known, "", &mut problems);
        if !problems.is_empty() {
            return Err(ConfigErrors(problems));
        }
        let grammar = match table.remove("grammar") {
            Some(toml::Value::Table(g)) => {
                GrammarParams::from_toml(&toml::to_string(&g).expect("table serializes")).map_err(|e| ConfigErrors(vec![format!("grammar: {e}")]))?
            }
            Some(_) => return Err(ConfigErrors(vec!["`grammar` must be a table".into()])),
            None => GrammarParams::default(),
        };
        let sections: Sections = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigErrors(vec![e.message().to_string()]))?;
        let cfg = RunConfig { grammar, sections };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::try_from(&self.sections).expect("sections serialize");
        t.insert("grammar".into(), toml::Value::Table(toml::Table::try_from(&self.grammar).expect("grammar serializes")));
        t
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let s = &self.sections;
        let mut p = Vec::new();
        if let Err(e) = self.grammar.validate() {
            p.push(format!("grammar: {e}"));
        }
        if let Err(e) = PyParams::new(s.model.alpha, s.model.discount) {
            p.push(format!("model: {e}"));
        }
        if let Err(e) = NoiseModel::new(s.model.epsilon) {
            p.push(format!("model.epsilon: {e}"));
        }
        if s.model.decode_samples == 0 {
            p.push("model.decode_samples must be at least 1".into());
        }
        if s.corpus.synth_n == 0 || s.corpus.motifs == 0 {
            p.push("corpus.synth_n and corpus.motifs must be at least 1".into());
        }
        if s.corpus.mean_len < melody_rd::melody::MIN_MELODY_LEN {
            p.push(format!("corpus.mean_len must be at least {}", melody_rd::melody::MIN_MELODY_LEN));
        }
        let positive = |name: &str, v: &[f64], p: &mut Vec<String>| {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) {
                p.push(format!("{name} must be a non-empty list of positive numbers"));
            }
        };
        let counts = |name: &str, v: &[usize], min: usize, p: &mut Vec<String>| {
            if v.is_empty() || v.iter().any(|x| *x < min) {
                p.push(format!("{name} must be a non-empty list of integers >= {min}"));
            }
        };
        let at_least = |name: &str, v: usize, min: usize, p: &mut Vec<String>| {
            if v < min {
                p.push(format!("{name} must be at least {min}, got {v}"));
            }
        };
        if s.rd_sweep.models.is_empty() {
            p.push("rd_sweep.models must not be empty".into());
        }
        positive("rd_sweep.r_l", &s.rd_sweep.r_l, &mut p);
        counts("rd_sweep.r_s", &s.rd_sweep.r_s, 1, &mut p);
        counts("rd_sweep.n_train", &s.rd_sweep.n_train, 0, &mut p);
        at_least("rd_sweep.n_seeds", s.rd_sweep.n_seeds, 1, &mut p);
        at_least("train.proposals", s.train.proposals, 1, &mut p);
        counts("generalize.r_s", &s.generalize.r_s, 1, &mut p);
        at_least("generalize.n_seeds", s.generalize.n_seeds, 1, &mut p);
        if s.uniqueness.models.is_empty() {
            p.push("uniqueness.models must not be empty".into());
        }
        counts("uniqueness.n_train", &s.uniqueness.n_train, 2, &mut p);
        counts("uniqueness.r_s", &s.uniqueness.r_s, 1, &mut p);
        at_least("uniqueness.n_seeds", s.uniqueness.n_seeds, 1, &mut p);
        at_least("curriculum.melodies", s.curriculum.melodies, 1, &mut p);
        at_least("curriculum.n_curricula", s.curriculum.n_curricula, 3, &mut p);
        at_least("curriculum.train_proposals", s.curriculum.train_proposals, 1, &mut p);
        positive("curriculum.eval_r_l", &[s.curriculum.eval_r_l], &mut p);
        at_least("curriculum.eval_r_s", s.curriculum.eval_r_s, 1, &mut p);
        if s.curriculum.baseline_trials == 1 {
            p.push("curriculum.baseline_trials must be 0 or at least 2".into());
        }
        at_least("curriculum.n_random", s.curriculum.n_random, 2, &mut p);
        at_least("synergy.melodies", s.synergy.melodies, 2, &mut p);
        at_least("synergy.train_proposals", s.synergy.train_proposals, 1, &mut p);
        at_least("synergy.n_pairs", s.synergy.n_pairs, 1, &mut p);
        at_least("synergy.stride", s.synergy.stride, 1, &mut p);
        if !(s.synergy.threshold > 0.0 && s.synergy.threshold <= 1.0) {
            p.push(format!("synergy.threshold must lie in (0, 1], got {}", s.synergy.threshold));
        }
        positive("decode.r_l", &[s.decode.r_l], &mut p);
        at_least("decode.r_s", s.decode.r_s, 1, &mut p);
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.sections.rd_sweep.r_l = vec![8.0, 1e9];
        c.grammar.max_depth = 5;
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn every_unknown_key_is_named() {
        let e = RunConfig::parse("sed = 1\n[rd_sweep]\nr_ll = [8]\n[grammar]\nmax_dept = 3\n").unwrap_err();
        assert_eq!(e.0, vec!["unknown key `grammar.max_dept`", "unknown key `rd_sweep.r_ll`", "unknown key `sed`"]);
    }

    #[test]
    fn validation_reports_all_problems() {
        let e = RunConfig::parse("[model]\nepsilon = 2.0\n[rd_sweep]\nr_s = []\nn_seeds = 0\n").unwrap_err();
        assert_eq!(e.0.len(), 3, "{e}");
    }

    #[test]
    fn integer_rates_are_accepted() {
        let c = RunConfig::parse("[rd_sweep]\nr_l = [8, 16]\n").unwrap();
        assert_eq!(c.sections.rd_sweep.r_l, vec![8.0, 16.0]);
    }
}
