//! Budgeted encoding of melodies as sequences of programs.
//!
//! A melody is covered left to right. Proposals drawn from the model are
//! scored at each segment by prior plus likelihood of the notes they cover,
//! and the best is kept. Notes not yet covered are priced at the average cost of a
//! literal note so that candidates of different lengths are comparable. After
//! search, units are deleted across all segments until the summed description
//! length fits the rate budget.

use serde::{Deserialize, Serialize};

use crate::adaptor::Model;
use crate::edit::{delete_global, reconstruct, to_bits};
use crate::eval::evaluate_unchecked;
use crate::melody::{hamming_distortion, Melody, NoteSymbol};
use crate::seed::{self, Rng};
use crate::term::{BaseTerm, Term, TypeTag};

/// Resource limits for one melody.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Description-length cap in bits; may be infinite.
    pub rate_bits: f64,
    /// Proposals available for the whole melody.
    pub proposals: usize,
}

impl Budget {
    pub fn new(rate_bits: f64, proposals: usize) -> Result<Budget, String> {
        if !(rate_bits > 0.0) {
            return Err(format!("rate budget must be positive, got {rate_bits}"));
        }
        if proposals < 1 {
            return Err("proposal budget must be at least 1".to_string());
        }
        Ok(Budget { rate_bits, proposals })
    }
}

/// Each note is independently replaced by one of the other symbols with
/// probability `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { epsilon: 0.05 }
    }
}

impl NoiseModel {
    pub fn new(epsilon: f64) -> Result<NoiseModel, String> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(format!("epsilon must lie in (0, 1), got {epsilon}"));
        }
        Ok(NoiseModel { epsilon })
    }

    fn log_match(&self) -> f64 {
        (1.0 - self.epsilon).ln()
    }

    fn log_mismatch(&self) -> f64 {
        (self.epsilon / 11.0).ln()
    }
}

/// Log-probability of `observed` given the program output `produced`.
/// Observed notes past the end of `produced` count as mismatches.
pub fn log_likelihood(observed: &[NoteSymbol], produced: &[NoteSymbol], noise: &NoiseModel) -> f64 {
    let overlap = observed.len().min(produced.len());
    let matches = observed.iter().zip(produced).filter(|(a, b)| a == b).count();
    let mismatches = overlap - matches + (observed.len() - overlap);
    matches as f64 * noise.log_match() + mismatches as f64 * noise.log_mismatch()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub program: Term,
    pub consumed: usize,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub source_id: String,
    pub segments: Vec<Segment>,
    pub rate_bits: f64,
    pub proposals_used: usize,
    /// Every program picked during search, literals included, before deletion.
    pub chosen: Vec<Term>,
    /// Programs drawn by search that won their segment, before deletion.
    /// Literal fallbacks are not included.
    pub found: Vec<Term>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.consumed).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn has_holes(&self) -> bool {
        self.segments.iter().any(|s| s.program.has_holes())
    }

    /// Subprograms of the stored (post-deletion) segment programs.
    pub fn subprograms(&self) -> Vec<Term> {
        self.segments.iter().flat_map(|s| crate::edit::subprograms(&s.program)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoding serializes")
    }

    pub fn from_json(text: &str) -> Result<Encoding, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// How proposals are spent and whether a literal always competes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchMode {
    /// The literal for the next note is a candidate at every segment.
    pub literal_competes: bool,
    /// Every segment draws its own proposals instead of scoring one shared set.
    pub per_segment: bool,
    /// When coding every note literally already fits the rate budget, only
    /// candidates that reproduce their notes exactly are accepted.
    pub exact_when_affordable: bool,
}

impl SearchMode {
    pub const POOLED: SearchMode = SearchMode { literal_competes: true, per_segment: false, exact_when_affordable: true };
    /// Plain best-score selection, used while learning a library.
    pub const TRAIN: SearchMode = SearchMode { literal_competes: true, per_segment: false, exact_when_affordable: true };
    /// A fixed number of prior draws per segment, best one kept.
    pub const ONE_SHOT: SearchMode = SearchMode { literal_competes: false, per_segment: true, exact_when_affordable: false };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentChoice {
    pub program: Term,
    pub consumed: usize,
    pub score: f64,
    pub log_prior: f64,
}

/// Average log-score of coding one note literally.
pub fn literal_baseline(model: &Model, noise: &NoiseModel) -> f64 {
    let t = TypeTag::note();
    let lps: Vec<f64> = NoteSymbol::all()
        .map(|s| model.log_prob(&Term::Base(BaseTerm::Note(s)), &t))
        .filter(|lp| lp.is_finite())
        .collect();
    lps.iter().sum::<f64>() / lps.len() as f64 + noise.log_match()
}

fn better(a: &SegmentChoice, b: &SegmentChoice) -> bool {
    (a.score, a.consumed, a.log_prior) > (b.score, b.consumed, b.log_prior)
}

fn score_candidate(
    remaining: &[NoteSymbol],
    program: Term,
    output: &[NoteSymbol],
    log_prior: f64,
    noise: &NoiseModel,
    baseline: f64,
) -> SegmentChoice {
    let consumed = output.len().min(remaining.len());
    let ll = log_likelihood(&remaining[..consumed], &output[..consumed], noise);
    let score = log_prior + ll + (remaining.len() - consumed) as f64 * baseline;
    SegmentChoice { program, consumed, score, log_prior }
}

/// Bits needed to code every note as a literal.
pub fn literal_bits(notes: &[NoteSymbol], model: &Model) -> f64 {
    let t = TypeTag::note();
    notes.iter().map(|n| model.bits(&Term::Base(BaseTerm::Note(*n)), &t)).sum()
}

/// The literal program for the next note.
pub fn literal_choice(remaining: &[NoteSymbol], model: &Model, noise: &NoiseModel, baseline: f64) -> SegmentChoice {
    let program = Term::Base(BaseTerm::Note(remaining[0]));
    let lp = model.log_prob(&program, &TypeTag::note());
    score_candidate(remaining, program, &remaining[..1], lp, noise, baseline)
}

/// A drawn program with its output and prior, reusable across segments.
#[derive(Debug, Clone)]
struct Proposal {
    program: Term,
    output: Vec<NoteSymbol>,
    log_prior: f64,
}

/// Draws `n` programs; ones that fail to evaluate still count as spent.
fn draw(model: &Model, n: usize, rng: &mut Rng) -> Vec<Proposal> {
    let t = TypeTag::note();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let Ok(program) = model.sample(&t, rng) else { continue };
        let Ok(output) = evaluate_unchecked(&program) else { continue };
        if output.is_empty() {
            continue;
        }
        let log_prior = model.log_prob(&program, &t);
        if log_prior.is_finite() {
            out.push(Proposal { program, output, log_prior });
        }
    }
    out
}

fn best_of(
    remaining: &[NoteSymbol],
    pool: &[Proposal],
    noise: &NoiseModel,
    baseline: f64,
    exact_only: bool,
) -> Option<SegmentChoice> {
    assert!(!remaining.is_empty(), "nothing left to encode");
    let mut best: Option<SegmentChoice> = None;
    for p in pool {
        let n = p.output.len().min(remaining.len());
        if exact_only && remaining[..n] != p.output[..n] {
            continue;
        }
        let cand = score_candidate(remaining, p.program.clone(), &p.output, p.log_prior, noise, baseline);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    best
}

/// Draws `proposals` programs and returns the best valid one with the
/// number of proposals spent.
pub fn encode_segment(
    remaining: &[NoteSymbol],
    model: &Model,
    proposals: usize,
    noise: &NoiseModel,
    baseline: f64,
    rng: &mut Rng,
) -> (Option<SegmentChoice>, usize) {
    let pool = draw(model, proposals, rng);
    (best_of(remaining, &pool, noise, baseline, false), proposals)
}

/// Encodes one melody within `budget`.
pub fn encode_melody(
    melody: &Melody,
    model: &Model,
    budget: &Budget,
    noise: &NoiseModel,
    mode: SearchMode,
    seed: u64,
) -> Encoding {
    let mut rng = seed::rng(seed);
    let notes = &melody.notes;
    let baseline = literal_baseline(model, noise);
    let exact_only = mode.exact_when_affordable && literal_bits(notes, model) <= budget.rate_bits;
    // pooled search draws once and scores every draw at every segment
    let shared = if mode.per_segment { Vec::new() } else { draw(model, budget.proposals, &mut rng) };
    let mut used = if mode.per_segment { 0 } else { budget.proposals };
    let mut pos = 0;
    let mut chosen: Vec<(Term, usize)> = Vec::new();
    let mut found_by_search = Vec::new();
    while pos < notes.len() {
        let remaining = &notes[pos..];
        let found = if mode.per_segment {
            used += budget.proposals;
            let pool = draw(model, budget.proposals, &mut rng);
            best_of(remaining, &pool, noise, baseline, exact_only)
        } else {
            best_of(remaining, &shared, noise, baseline, exact_only)
        };
        let literal = literal_choice(remaining, model, noise, baseline);
        let (pick, searched) = match found {
            Some(f) if !mode.literal_competes || better(&f, &literal) => (f, true),
            _ => (literal, false),
        };
        pos += pick.consumed;
        if searched {
            found_by_search.push(pick.program.clone());
        }
        chosen.push((pick.program, pick.consumed));
    }
    let found = found_by_search;
    let t = TypeTag::note();
    let mut programs: Vec<(Term, TypeTag)> = chosen.iter().map(|(p, _)| (p.clone(), t.clone())).collect();
    if budget.rate_bits.is_finite() {
        delete_global(&mut programs, budget.rate_bits, model);
    }
    let segments: Vec<Segment> = programs
        .into_iter()
        .zip(&chosen)
        .map(|((program, t), (_, consumed))| Segment { bits: model.bits(&program, &t), program, consumed: *consumed })
        .collect();
    Encoding {
        source_id: melody.id.clone(),
        rate_bits: segments.iter().map(|s| s.bits).sum(),
        segments,
        proposals_used: used,
        chosen: chosen.into_iter().map(|(p, _)| p).collect(),
        found,
    }
}

/// Bounded attempts to draw an evaluable filler program.
const PAD_ATTEMPTS: usize = 64;

fn pad(out: &mut Vec<NoteSymbol>, len: usize, model: &Model, rng: &mut Rng) {
    let mut attempts = 0;
    while out.len() < len {
        attempts += 1;
        let extra = if attempts > PAD_ATTEMPTS {
            vec![NoteSymbol::Pause]
        } else {
            match model.sample(&TypeTag::note(), rng).ok().and_then(|p| evaluate_unchecked(&p).ok()) {
                Some(v) => v,
                None => continue,
            }
        };
        out.extend(extra);
    }
    out.truncate(len);
}

/// Reconstructs a note sequence; holes are filled from `model` and every
/// segment is cut or padded to its consumed length.
pub fn decode(encoding: &Encoding, model: &Model, rng: &mut Rng) -> Vec<NoteSymbol> {
    let mut out = Vec::with_capacity(encoding.len());
    for seg in &encoding.segments {
        let mut part = reconstruct(&seg.program, model, rng).unwrap_or_default();
        pad(&mut part, seg.consumed, model, rng);
        out.extend(part);
    }
    out
}

/// Rate in bits and expected Hamming distortion over `n_samples` decodes
/// (a single exact decode when there are no holes).
pub fn evaluate_encoding(melody: &Melody, encoding: &Encoding, model: &Model, n_samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = seed::rng(seed);
    let n = if encoding.has_holes() { n_samples.max(1) } else { 1 };
    let total: usize = (0..n).map(|_| hamming_distortion(&melody.notes, &decode(encoding, model, &mut rng))).sum();
    (encoding.rate_bits, total as f64 / n as f64)
}

/// Bits as reported in encodings.
pub fn bits_of(log_prob: f64) -> f64 {
    to_bits(log_prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Grammar, GrammarParams};
    use std::sync::Arc;

    fn model() -> Model {
        Model::pcfg(Arc::new(Grammar::new(GrammarParams::default()).unwrap()))
    }

    fn notes(v: &[u8]) -> Vec<NoteSymbol> {
        v.iter().map(|&p| NoteSymbol::Pitch(p)).collect()
    }

    #[test]
    fn likelihood_formula() {
        let noise = NoiseModel::default();
        let x = notes(&[0, 2, 4, 5]);
        assert!((log_likelihood(&x, &x, &noise) - 4.0 * 0.95f64.ln()).abs() < 1e-12);
        let y = notes(&[0, 2, 4, 7]);
        let expect = 3.0 * 0.95f64.ln() + (0.05f64 / 11.0).ln();
        assert!((log_likelihood(&x, &y, &noise) - expect).abs() < 1e-12);
        let short = notes(&[0, 2]);
        let expect = 2.0 * 0.95f64.ln() + 2.0 * (0.05f64 / 11.0).ln();
        assert!((log_likelihood(&x, &short, &noise) - expect).abs() < 1e-12);
        let tiny = NoiseModel::new(1e-300).unwrap();
        assert!(log_likelihood(&x, &y, &tiny) < -600.0);
    }

    #[test]
    fn repeated_note_prefers_rep() {
        let m = model();
        let noise = NoiseModel::default();
        let b = literal_baseline(&m, &noise);
        let rem = notes(&[0, 0, 0, 0]);
        let rep = Term::parse("[B, [B, rep, n0], c4]").unwrap();
        let lp = m.log_prob(&rep, &TypeTag::note());
        let out = evaluate_unchecked(&rep).unwrap();
        let rep_choice = score_candidate(&rem, rep, &out, lp, &noise, b);
        assert_eq!(rep_choice.consumed, 4);
        for s in NoteSymbol::all() {
            let lit = Term::Base(BaseTerm::Note(s));
            let lp = m.log_prob(&lit, &TypeTag::note());
            let c = score_candidate(&rem, lit, &[s], lp, &noise, b);
            assert!(better(&rep_choice, &c), "{} beat rep", c.program);
        }
    }

    #[test]
    fn budgets_are_respected() {
        let m = model();
        let mel = Melody::new("x", notes(&[0, 2, 4, 5, 7, 9, 11, 0, 0, 0, 0, 2, 4]));
        let noise = NoiseModel::default();
        for (r_l, r_s) in [(8.0, 1), (16.0, 8), (64.0, 32), (1e4, 512), (0.01, 4)] {
            let e = encode_melody(&mel, &m, &Budget::new(r_l, r_s).unwrap(), &noise, SearchMode::POOLED, 3);
            assert!(e.rate_bits <= r_l, "{} > {r_l}", e.rate_bits);
            assert!(e.proposals_used <= r_s);
            assert_eq!(e.len(), mel.len());
        }
        let e = encode_melody(&mel, &m, &Budget::new(1e4, 1).unwrap(), &noise, SearchMode::POOLED, 3);
        assert_eq!(e.proposals_used, 1);
    }

    #[test]
    fn generous_budget_is_lossless_and_deterministic() {
        let m = model();
        let mel = Melody::new("x", notes(&[0, 0, 0, 0, 2, 3, 4, 5, 7, 7]));
        let noise = NoiseModel::default();
        let budget = Budget::new(1e4, 512).unwrap();
        let e = encode_melody(&mel, &m, &budget, &noise, SearchMode::POOLED, 9);
        assert_eq!(e, encode_melody(&mel, &m, &budget, &noise, SearchMode::POOLED, 9));
        assert!(!e.has_holes());
        let mut concat = Vec::new();
        for s in &e.segments {
            concat.extend(evaluate_unchecked(&s.program).unwrap().into_iter().take(s.consumed));
        }
        assert_eq!(decode(&e, &m, &mut seed::rng(1)), concat);
        let d = hamming_distortion(&mel.notes, &concat) as f64;
        assert_eq!(evaluate_encoding(&mel, &e, &m, 10, 0), (e.rate_bits, d));
        assert_eq!(d, 0.0);
        let back = Encoding::from_json(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn tiny_rate_decodes_from_prior() {
        let m = model();
        let mel = Melody::new("x", notes(&[0, 2, 4, 5, 7, 9, 11, 0, 2, 4]));
        let e = encode_melody(&mel, &m, &Budget::new(1e-6, 16).unwrap(), &NoiseModel::default(), SearchMode::POOLED, 1);
        assert!(e.segments.iter().all(|s| matches!(s.program, Term::Hole(_))));
        assert_eq!(e.rate_bits, 0.0);
        let mut rng = seed::rng(5);
        assert_eq!(decode(&e, &m, &mut rng).len(), mel.len());
        let (_, d) = evaluate_encoding(&mel, &e, &m, 50, 2);
        assert!(d > 5.0);
    }
}
