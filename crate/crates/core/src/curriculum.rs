//! Synergy of a program library with respect to a melody set, and greedy
//! curricula that maximize it.
//!
//! A cached note program becomes a binary variable: pick a melody uniformly,
//! then a window start uniformly on a stride grid, and record whether at least
//! `threshold` of the program's output matches the melody from that start.
//! Two programs are read at the same melody and start, so identical programs
//! give identical variables.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptor::{Library, Model};
use crate::compress::{encode_melody, Budget, SearchMode};
use crate::eval::evaluate_unchecked;
use crate::experiments::{run_curriculum, random_ordering, CurriculumBudgets, Setup};
use crate::error::ExperimentError;
use crate::melody::{Corpus, Melody, Motif, NoteSymbol, Provenance};
use crate::pid::{pid_decompose, JointTable};
use crate::seed;
use crate::stats::{mean, paired_t, std_err, TTest};
use crate::term::{Term, TypeTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub threshold: f64,
    pub stride: usize,
    /// Leave single-symbol programs (the grammar's own atoms) out of the pairs.
    pub composite_only: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { threshold: 0.8, stride: 1, composite_only: false }
    }
}

fn matches(a: &[NoteSymbol], b: &[NoteSymbol]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// One indicator per window start `0, stride, 2 stride, ...` below the melody
/// length. A window running past the end is compared on its overlap but still
/// needs `threshold` of the full output length. An output longer than the
/// melody gives a single indicator, from its best alignment.
pub fn program_feature(output: &[NoteSymbol], melody: &[NoteSymbol], params: &FeatureParams) -> Vec<bool> {
    let (l, t) = (output.len(), melody.len());
    if l == 0 || t == 0 {
        return vec![false];
    }
    if l > t {
        let best = (0..=l - t).map(|o| matches(&output[o..o + t], melody)).max().unwrap_or(0);
        return vec![best as f64 >= params.threshold * t as f64];
    }
    (0..t)
        .step_by(params.stride.max(1))
        .map(|o| matches(output, &melody[o..]) as f64 >= params.threshold * l as f64)
        .collect()
}

/// Features of one program against every melody.
pub fn program_features(output: &[NoteSymbol], melodies: &[Melody], params: &FeatureParams) -> Vec<Vec<bool>> {
    melodies.iter().map(|m| program_feature(output, &m.notes, params)).collect()
}

/// Joint table of two programs' indicators and the melody index. A single
/// indicator stands for every window of its melody.
pub fn pair_joint(f1: &[Vec<bool>], f2: &[Vec<bool>]) -> JointTable<f64> {
    let nx = f1.len();
    let mut p = vec![0.0; 4 * nx];
    for x in 0..nx {
        let n = f1[x].len().max(f2[x].len());
        let at = |f: &[bool], k: usize| if f.len() == 1 { f[0] } else { f[k] };
        for k in 0..n {
            let (a, b) = (at(&f1[x], k) as usize, at(&f2[x], k) as usize);
            p[(a * 2 + b) * nx + x] += 1.0 / (nx * n) as f64;
        }
    }
    JointTable::new([2, 2, nx], p).expect("window frequencies normalize")
}

/// PID synergy of two programs over the melody set, in bits.
pub fn pair_synergy(f1: &[Vec<bool>], f2: &[Vec<bool>]) -> f64 {
    pid_decompose(&pair_joint(f1, f2)).synergy
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynergyEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Mean times the number of distinct program pairs: an estimate of the
    /// summed pairwise synergy, which grows when useful programs are added.
    pub total: f64,
    pub pairs: usize,
    /// Set when the library has fewer than two distinct note programs; the
    /// estimate is then 0.
    pub too_few_programs: bool,
}

/// Mean pairwise synergy over `n_pairs` uniformly drawn pairs of distinct
/// cached note programs.
pub fn library_synergy(
    library: &Library,
    melodies: &[Melody],
    n_pairs: usize,
    params: &FeatureParams,
    seed: u64,
) -> SynergyEstimate {
    let programs: Vec<&Term> = library
        .cache(&TypeTag::note())
        .map(|c| c.keys().filter(|p| !params.composite_only || !p.is_leaf()).collect())
        .unwrap_or_default();
    if programs.len() < 2 || melodies.is_empty() || n_pairs == 0 {
        return SynergyEstimate { mean: 0.0, stderr: 0.0, total: 0.0, pairs: 0, too_few_programs: programs.len() < 2 };
    }
    let mut rng = seed::rng(seed);
    let n = programs.len();
    let pairs: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            let i = rng.gen_range(0..n);
            (i, (i + rng.gen_range(1..n)) % n)
        })
        .collect();
    let mut features: HashMap<usize, Vec<Vec<bool>>> = HashMap::new();
    for &(i, j) in &pairs {
        for k in [i, j] {
            features.entry(k).or_insert_with(|| {
                let out = evaluate_unchecked(programs[k]).unwrap_or_default();
                program_features(&out, melodies, params)
            });
        }
    }
    let values: Vec<f64> = pairs.iter().map(|(i, j)| pair_synergy(&features[i], &features[j])).collect();
    let m = mean(&values);
    let total = m * (n * (n - 1) / 2) as f64;
    SynergyEstimate { mean: m, stderr: std_err(&values), total, pairs: n_pairs, too_few_programs: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStep {
    pub step: usize,
    pub melody_id: String,
    pub synergy: f64,
}

/// Settings of the greedy builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynergySearch {
    pub train_proposals: usize,
    pub n_pairs: usize,
    pub features: FeatureParams,
}

/// Greedy ordering: at every step each remaining candidate is trained on in
/// simulation, the resulting library's summed pairwise synergy is scored
/// against all candidates, and the best candidate is kept (its simulated
/// library carries forward).
pub fn build_synergistic_curriculum(
    setup: &Setup,
    model: &Model,
    candidates: &[Melody],
    search: &SynergySearch,
    seed: u64,
) -> Result<Vec<CurriculumStep>, ExperimentError> {
    if candidates.len() < 2 {
        return Err(ExperimentError::Precondition(format!("need at least 2 candidates, got {}", candidates.len())));
    }
    let mut remaining: Vec<&Melody> = candidates.iter().collect();
    remaining.sort_by(|a, b| a.id.cmp(&b.id));
    let budget = Budget { rate_bits: f64::INFINITY, proposals: search.train_proposals };
    let mut current = model.clone();
    let mut steps = Vec::with_capacity(candidates.len());
    for step in 0..candidates.len() {
        let ss = step.to_string();
        let synergy_seed = seed::derive(seed, &["synergy", &ss]);
        let scored: Vec<(f64, Model)> = remaining
            .par_iter()
            .map(|m| {
                let enc_seed = seed::derive(seed, &["step", &ss, &m.id]);
                let enc = encode_melody(m, &current, &budget, &setup.noise, SearchMode::TRAIN, enc_seed);
                let next = current.learn(&enc.chosen);
                let s = library_synergy(next.library(), candidates, search.n_pairs, &search.features, synergy_seed);
                (s.total, next)
            })
            .collect();
        // first maximum in id order
        let mut best = 0;
        for (k, (s, _)) in scored.iter().enumerate() {
            if *s > scored[best].0 {
                best = k;
            }
        }
        let (s, next) = scored.into_iter().nth(best).expect("non-empty");
        steps.push(CurriculumStep { step, melody_id: remaining[best].id.clone(), synergy: s });
        remaining.remove(best);
        current = next;
    }
    Ok(steps)
}

/// A planted corpus: every melody alternates one motif from each of two
/// pools, so telling melodies apart needs both motifs at once.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBank {
    pub first: Vec<Motif>,
    pub second: Vec<Motif>,
}

fn structured_motif(rng: &mut seed::Rng, kind: u8) -> Motif {
    let start = NoteSymbol::Pitch(rng.gen_range(0..12u8));
    let len = rng.gen_range(4..=6usize);
    Motif(match kind % 3 {
        0 => (0..len).map(|k| start.shift(k as i32)).collect(),
        1 => (0..len).map(|k| start.shift(-(k as i32))).collect(),
        _ => vec![start; len],
    })
}

impl PlantedBank {
    pub fn new(n_first: usize, n_second: usize, seed: u64) -> PlantedBank {
        let mut rng = seed::rng(seed::derive(seed, &["planted-bank"]));
        let first = (0..n_first).map(|k| structured_motif(&mut rng, k as u8)).collect();
        let second = (0..n_second).map(|k| structured_motif(&mut rng, k as u8 + 1)).collect();
        PlantedBank { first, second }
    }

    /// Family of a melody is the index of its first-pool motif.
    pub fn melody(&self, id: String, pair: (usize, usize), len: usize, rng: &mut seed::Rng) -> Melody {
        let (a, b) = (&self.first[pair.0].0, &self.second[pair.1].0);
        let mut notes = Vec::with_capacity(len + 8);
        while notes.len() < len {
            let m = if rng.gen_bool(0.5) { a } else { b };
            notes.extend_from_slice(m);
        }
        notes.truncate(len);
        Melody::new(id, notes)
    }

    /// One melody per motif pair, each pair used once when `n` covers the grid.
    pub fn corpus(&self, n: usize, len: usize, prefix: &str, seed: u64) -> Corpus {
        let mut rng = seed::rng(seed::derive(seed, &["planted", prefix]));
        let mut pairs: Vec<(usize, usize)> =
            (0..self.first.len()).flat_map(|i| (0..self.second.len()).map(move |j| (i, j))).collect();
        pairs.shuffle(&mut rng);
        let melodies =
            (0..n).map(|k| self.melody(format!("{prefix}{k:03}"), pairs[k % pairs.len()], len, &mut rng)).collect();
        Corpus::new(melodies, Provenance::Synthetic, Some(seed))
    }

    /// Index of the first-pool motif a melody contains.
    pub fn family(&self, melody: &Melody) -> Option<usize> {
        (0..self.first.len()).find(|&i| melody.notes.windows(self.first[i].0.len()).any(|w| w == self.first[i].0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyComparisonRow {
    pub trial: usize,
    pub synergy_error: f64,
    pub random_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynergyComparison {
    pub ordering: Vec<String>,
    pub rows: Vec<SynergyComparisonRow>,
    pub mean_synergy: f64,
    pub mean_random: f64,
    /// Paired test of synergy minus random error; `p_less` favours synergy.
    pub test: Result<TTest, crate::error::StatsError>,
}

/// Trains along `ordering` and along `n_random` random orderings. Trial `k`
/// uses the same training and evaluation seeds for both arms.
pub fn compare_with_random(
    setup: &Setup,
    subset: &[Melody],
    ordering: &[String],
    eval: &[Melody],
    n_random: usize,
    budgets: &CurriculumBudgets,
    root: u64,
) -> Result<SynergyComparison, ExperimentError> {
    if n_random < 2 {
        return Err(ExperimentError::Precondition(format!("need at least 2 random curricula, got {n_random}")));
    }
    let rows: Vec<SynergyComparisonRow> = (0..n_random)
        .into_par_iter()
        .map(|k| {
            let ks = k.to_string();
            let run_seed = seed::derive(root, &["run", &ks]);
            let eval_seed = seed::derive(root, &["eval", &ks]);
            let random = random_ordering(subset, seed::derive(root, &["curriculum", &ks]));
            let s = run_curriculum(setup, subset, ordering, eval, budgets, run_seed, eval_seed)?;
            let r = run_curriculum(setup, subset, &random, eval, budgets, run_seed, eval_seed)?;
            Ok(SynergyComparisonRow { trial: k, synergy_error: s.error, random_error: r.error })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let s: Vec<f64> = rows.iter().map(|r| r.synergy_error).collect();
    let r: Vec<f64> = rows.iter().map(|r| r.random_error).collect();
    Ok(SynergyComparison {
        ordering: ordering.to_vec(),
        mean_synergy: mean(&s),
        mean_random: mean(&r),
        test: paired_t(&s, &r),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn notes(v: &[u8]) -> Vec<NoteSymbol> {
        v.iter().map(|p| NoteSymbol::Pitch(*p)).collect()
    }

    #[test]
    fn feature_windows() {
        let mel = notes(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(program_feature(&notes(&[3, 4, 5]), &mel, &FeatureParams::default()).iter().any(|b| *b));
        let absent = notes(&[11, 11, 11, 11, 11]);
        assert!(program_feature(&absent, &mel, &FeatureParams::default()).iter().all(|b| !*b));
        let one = FeatureParams { stride: 10, ..FeatureParams::default() };
        assert_eq!(program_feature(&notes(&[0]), &mel, &one).len(), 1);
        let long: Vec<NoteSymbol> = [notes(&[5, 5]), mel.clone()].concat();
        assert_eq!(program_feature(&long, &mel, &FeatureParams::default()), vec![true]);
    }

    #[test]
    fn identical_programs_carry_no_synergy() {
        let mels: Vec<Melody> =
            [vec![0, 1, 2, 3, 4, 0, 1], vec![4, 4, 4, 0, 1, 2, 9]].iter().enumerate().map(|(k, v)| Melody::new(k.to_string(), notes(v))).collect();
        let f = program_features(&notes(&[0, 1]), &mels, &FeatureParams::default());
        assert!(pair_synergy(&f, &f).abs() < 1e-12);
    }

    #[test]
    fn complementary_programs_are_synergistic() {
        // four melodies, each one motif pair; either motif alone halves the set
        let (a, b, c, d) = (vec![0, 1, 2, 3], vec![7, 7, 7, 7], vec![5, 4, 3, 2], vec![9, 9, 9, 9]);
        let mels: Vec<Melody> = [[&a, &c], [&a, &d], [&b, &c], [&b, &d]]
            .iter()
            .enumerate()
            .map(|(k, [x, y])| Melody::new(k.to_string(), notes(&[x.as_slice(), y.as_slice()].concat())))
            .collect();
        let one = FeatureParams { stride: 4, ..FeatureParams::default() };
        let (fa, fc) = (program_features(&notes(&a), &mels, &one), program_features(&notes(&c), &mels, &one));
        let r = pid_decompose(&pair_joint(&fa, &fc));
        assert!(r.synergy > r.unique1 && r.synergy > 0.0);
    }

    #[test]
    fn library_synergy_edge_cases() {
        let mels = vec![Melody::new("a", notes(&[0; 10])), Melody::new("b", notes(&[1; 10]))];
        let lib = Library::from_entries([(TypeTag::note(), Term::note(0), 3)]).unwrap();
        let est = library_synergy(&lib, &mels, 10, &FeatureParams::default(), 0);
        assert!(est.too_few_programs && est.mean == 0.0);
    }

    #[test]
    fn planted_corpus_covers_pairs() {
        let bank = PlantedBank::new(4, 5, 1);
        let c = bank.corpus(20, 30, "p", 2);
        assert_eq!(c.len(), 20);
        assert!(c.melodies.iter().all(|m| m.len() == 30 && bank.family(m).is_some()));
        assert_eq!(c, bank.corpus(20, 30, "p", 2));
    }
}
