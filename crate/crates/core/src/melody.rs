//! Melody corpora: parsing, preprocessing, splitting, synthesis, and the
//! Hamming distortion used throughout.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::seed;

/// Shortest melody kept by [`preprocess`].
pub const MIN_MELODY_LEN: usize = 10;

/// A pitch class (0 = C) or a pause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoteSymbol {
    Pitch(u8),
    Pause,
}

impl NoteSymbol {
    /// Panics if `p > 11`.
    pub fn pitch(p: u8) -> Self {
        assert!(p < 12, "pitch class {p} out of range");
        NoteSymbol::Pitch(p)
    }

    /// Semitone shift modulo 12; pauses are left untouched.
    pub fn shift(self, semitones: i32) -> Self {
        match self {
            NoteSymbol::Pitch(p) => NoteSymbol::Pitch((i32::from(p) + semitones).rem_euclid(12) as u8),
            NoteSymbol::Pause => NoteSymbol::Pause,
        }
    }

    pub fn all() -> impl Iterator<Item = NoteSymbol> {
        (0..12).map(NoteSymbol::Pitch).chain(std::iter::once(NoteSymbol::Pause))
    }
}

impl fmt::Display for NoteSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoteSymbol::Pitch(p) => write!(f, "{p}"),
            NoteSymbol::Pause => f.write_str("p"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Melody {
    pub id: String,
    pub notes: Vec<NoteSymbol>,
}

impl Melody {
    pub fn new(id: impl Into<String>, notes: Vec<NoteSymbol>) -> Self {
        Melody { id: id.into(), notes }
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Parsed,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub melodies: Vec<Melody>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Corpus {
    pub fn new(melodies: Vec<Melody>, provenance: Provenance, seed: Option<u64>) -> Self {
        Corpus { melodies, provenance, seed }
    }

    pub fn len(&self) -> usize {
        self.melodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.melodies.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.melodies.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Melody> {
        self.melodies.iter().find(|m| m.id == id)
    }

    pub fn mean_len(&self) -> f64 {
        if self.melodies.is_empty() {
            return 0.0;
        }
        self.melodies.iter().map(Melody::len).sum::<usize>() as f64 / self.melodies.len() as f64
    }

    /// First `n` melodies (or all of them).
    pub fn take(&self, n: usize) -> Corpus {
        Corpus {
            melodies: self.melodies.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn to_raw(&self) -> RawCorpus {
        RawCorpus {
            melodies: self
                .melodies
                .iter()
                .map(|m| RawMelody {
                    id: m.id.clone(),
                    notes: m
                        .notes
                        .iter()
                        .map(|n| match n {
                            NoteSymbol::Pitch(p) => Some(u32::from(*p)),
                            NoteSymbol::Pause => None,
                        })
                        .collect(),
                })
                .collect(),
            provenance: self.provenance,
            seed: self.seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.melodies {
            out.push_str(&m.id);
            out.push_str(": ");
            let toks: Vec<String> = m.notes.iter().map(ToString::to_string).collect();
            out.push_str(&toks.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = CorpusDoc {
            provenance: Some(self.provenance),
            seed: self.seed,
            melodies: self
                .melodies
                .iter()
                .map(|m| MelodyDoc {
                    id: m.id.clone(),
                    notes: m
                        .notes
                        .iter()
                        .map(|n| match n {
                            NoteSymbol::Pitch(p) => NoteToken::Pitch(u32::from(*p)),
                            NoteSymbol::Pause => NoteToken::Pause(PauseTag::P),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("corpus serializes")
    }

    /// Parses the structured JSON form. Pitches must already lie in 0-11.
    pub fn from_json(text: &str) -> Result<Corpus, CorpusError> {
        let raw = RawCorpus::from_json(text)?;
        raw.into_canonical()
    }
}

/// A melody before octave normalization; `None` is a pause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMelody {
    pub id: String,
    pub notes: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCorpus {
    pub melodies: Vec<RawMelody>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    melodies: Vec<MelodyDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MelodyDoc {
    id: String,
    notes: Vec<NoteToken>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NoteToken {
    Pitch(u32),
    Pause(PauseTag),
}

#[derive(Serialize, Deserialize)]
enum PauseTag {
    #[serde(rename = "p")]
    P,
}

impl RawCorpus {
    /// Parses the line format, accepting raw (MIDI-like) integers.
    pub fn parse(text: &str) -> Result<RawCorpus, CorpusError> {
        let mut melodies = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let colon = line.find(':').ok_or(CorpusError::MissingId { line: line_no })?;
            let id = line[..colon].trim();
            if id.is_empty() {
                return Err(CorpusError::MissingId { line: line_no });
            }
            if !seen.insert(id.to_string()) {
                return Err(CorpusError::DuplicateId { line: line_no, id: id.to_string() });
            }
            let mut notes = Vec::new();
            let mut column = colon + 2;
            for tok in line[colon + 1..].split(',') {
                let t = tok.trim();
                let col = column + (tok.len() - tok.trim_start().len());
                column += tok.len() + 1;
                if t == "p" {
                    notes.push(None);
                } else {
                    match t.parse::<u32>() {
                        Ok(v) => notes.push(Some(v)),
                        Err(_) => {
                            return Err(CorpusError::MalformedToken {
                                line: line_no,
                                column: col,
                                token: t.to_string(),
                            })
                        }
                    }
                }
            }
            melodies.push(RawMelody { id: id.to_string(), notes });
        }
        if melodies.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(RawCorpus { melodies, provenance: Provenance::Parsed, seed: None })
    }

    pub fn from_json(text: &str) -> Result<RawCorpus, CorpusError> {
        let doc: CorpusDoc = serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))?;
        if doc.melodies.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::new();
        let mut melodies = Vec::with_capacity(doc.melodies.len());
        for (i, m) in doc.melodies.into_iter().enumerate() {
            if !seen.insert(m.id.clone()) {
                return Err(CorpusError::DuplicateId { line: i + 1, id: m.id });
            }
            melodies.push(RawMelody {
                id: m.id,
                notes: m
                    .notes
                    .into_iter()
                    .map(|t| match t {
                        NoteToken::Pitch(v) => Some(v),
                        NoteToken::Pause(_) => None,
                    })
                    .collect(),
            });
        }
        Ok(RawCorpus {
            melodies,
            provenance: doc.provenance.unwrap_or(Provenance::Parsed),
            seed: doc.seed,
        })
    }

    /// Reads either format, picking JSON when the text starts with `{`.
    pub fn parse_any(text: &str) -> Result<RawCorpus, CorpusError> {
        if text.trim_start().starts_with('{') {
            RawCorpus::from_json(text)
        } else {
            RawCorpus::parse(text)
        }
    }

    /// Strict conversion: every pitch must already be a pitch class.
    pub fn into_canonical(self) -> Result<Corpus, CorpusError> {
        let mut melodies = Vec::with_capacity(self.melodies.len());
        for (i, m) in self.melodies.into_iter().enumerate() {
            let mut notes = Vec::with_capacity(m.notes.len());
            for n in m.notes {
                notes.push(match n {
                    None => NoteSymbol::Pause,
                    Some(v) if v < 12 => NoteSymbol::Pitch(v as u8),
                    Some(v) => return Err(CorpusError::PitchOutOfRange { line: i + 1, value: v }),
                });
            }
            melodies.push(Melody { id: m.id, notes });
        }
        Ok(Corpus { melodies, provenance: self.provenance, seed: self.seed })
    }
}

/// Parses the canonical line format (pitch classes 0-11 and `p`).
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    RawCorpus::parse(text)?.into_canonical()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub input: usize,
    pub kept: usize,
    pub dropped_short: usize,
    pub mean_length: f64,
}

/// Octave-normalizes pitches (`p mod 12`) and drops melodies shorter than `min_len`.
pub fn preprocess(raw: &RawCorpus, min_len: usize) -> (Corpus, PreprocessSummary) {
    let input = raw.melodies.len();
    let melodies: Vec<Melody> = raw
        .melodies
        .iter()
        .filter(|m| m.notes.len() >= min_len)
        .map(|m| Melody {
            id: m.id.clone(),
            notes: m
                .notes
                .iter()
                .map(|n| match n {
                    Some(v) => NoteSymbol::Pitch((v % 12) as u8),
                    None => NoteSymbol::Pause,
                })
                .collect(),
        })
        .collect();
    let corpus = Corpus { melodies, provenance: raw.provenance, seed: raw.seed };
    let summary = PreprocessSummary {
        input,
        kept: corpus.len(),
        dropped_short: input - corpus.len(),
        mean_length: corpus.mean_len(),
    };
    (corpus, summary)
}

/// Disjoint uniform random train/eval subsets, deterministic in `seed`.
pub fn split(corpus: &Corpus, n_train: usize, n_eval: usize, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if n_train + n_eval > corpus.len() {
        return Err(CorpusError::InsufficientSize { requested: n_train + n_eval, available: corpus.len() });
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed, &["split"])));
    let pick = |ix: &[usize]| Corpus {
        melodies: ix.iter().map(|&i| corpus.melodies[i].clone()).collect(),
        provenance: corpus.provenance,
        seed: corpus.seed,
    };
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_eval])))
}

/// A short figure in the motif bank, stored relative to pitch 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif(pub Vec<NoteSymbol>);

fn random_motif(rng: &mut seed::Rng) -> Motif {
    let start = rng.gen_range(0..12u8);
    let len = rng.gen_range(3..=8usize);
    let notes = match rng.gen_range(0..5u8) {
        0 => vec![NoteSymbol::Pitch(start); len],
        1 => (0..len).map(|k| NoteSymbol::Pitch(start).shift(k as i32)).collect(),
        2 => (0..len).map(|k| NoteSymbol::Pitch(start).shift(-(k as i32))).collect(),
        3 => {
            // a figure repeated twice
            let fig: Vec<NoteSymbol> = (0..len.div_ceil(2)).map(|_| NoteSymbol::Pitch(rng.gen_range(0..12))).collect();
            fig.iter().chain(fig.iter()).copied().collect()
        }
        _ => {
            let mut v: Vec<NoteSymbol> = (0..len).map(|_| NoteSymbol::Pitch(rng.gen_range(0..12))).collect();
            if rng.gen_bool(0.3) {
                v.push(NoteSymbol::Pause);
            }
            v
        }
    };
    Motif(notes)
}

/// Synthetic corpus of melodies assembled from a shared bank of transformed motifs.
///
/// Lengths are drawn uniformly from `mean_len ± mean_len/4` (never below 10).
pub fn synth_corpus(n: usize, mean_len: usize, motif_bank_size: usize, seed: u64) -> Corpus {
    assert!(n >= 1 && mean_len >= MIN_MELODY_LEN && motif_bank_size >= 1);
    let mut rng = seed::rng(seed::derive(seed, &["synth"]));
    let bank: Vec<Motif> = (0..motif_bank_size).map(|_| random_motif(&mut rng)).collect();
    let spread = mean_len / 4;
    let melodies = (0..n)
        .map(|i| {
            let target = rng.gen_range(mean_len - spread..=mean_len + spread).max(MIN_MELODY_LEN);
            let mut notes = Vec::with_capacity(target + 8);
            while notes.len() < target {
                let motif = &bank[rng.gen_range(0..bank.len())];
                let shift = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..12) };
                notes.extend(motif.0.iter().map(|n| n.shift(shift)));
            }
            notes.truncate(target);
            Melody::new(format!("s{i:04}"), notes)
        })
        .collect();
    Corpus { melodies, provenance: Provenance::Synthetic, seed: Some(seed) }
}

/// Mismatched positions plus the length difference.
pub fn hamming_distortion(x: &[NoteSymbol], x_hat: &[NoteSymbol]) -> usize {
    let mismatches = x.iter().zip(x_hat).filter(|(a, b)| a != b).count();
    mismatches + x.len().abs_diff(x_hat.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: u8) -> NoteSymbol {
        NoteSymbol::Pitch(v)
    }

    #[test]
    fn parses_line_format() {
        let c = parse_corpus("# comment\nm1: 0,2,4,p,0,2,4,5,7,9\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.melodies[0].len(), 10);
        assert_eq!(c.melodies[0].notes.iter().filter(|n| **n == NoteSymbol::Pause).count(), 1);
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(matches!(parse_corpus("m1: 0,13"), Err(CorpusError::PitchOutOfRange { value: 13, .. })));
        assert!(matches!(parse_corpus("m1: 0,2\nm1: 4,5"), Err(CorpusError::DuplicateId { line: 2, .. })));
        assert_eq!(parse_corpus("# only comments\n"), Err(CorpusError::Empty));
        match parse_corpus("m1: 0,x,2") {
            Err(CorpusError::MalformedToken { line, column, token }) => {
                assert_eq!((line, column, token.as_str()), (1, 7, "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn preprocess_normalizes_and_filters() {
        let raw = RawCorpus::parse("a: 60,14,p,1,2,3,4,5,6,7\nb: 1,2,3,4,5,6,7,8,9\n").unwrap();
        let (c, summary) = preprocess(&raw, MIN_MELODY_LEN);
        assert_eq!(c.len(), 1);
        assert_eq!(summary.dropped_short, 1);
        assert_eq!(&c.melodies[0].notes[..3], &[p(0), p(2), NoteSymbol::Pause]);
        let (again, _) = preprocess(&c.to_raw(), MIN_MELODY_LEN);
        assert_eq!(again, c);
    }

    #[test]
    fn json_round_trip() {
        let c = synth_corpus(5, 12, 3, 1);
        let back = Corpus::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let parsed = Corpus::from_json(r#"{"melodies":[{"id":"x","notes":[1,"p",3]}]}"#).unwrap();
        assert_eq!(parsed.melodies[0].notes, vec![p(1), NoteSymbol::Pause, p(3)]);
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let c = synth_corpus(100, 20, 5, 3);
        let (tr, ev) = split(&c, 60, 30, 1).unwrap();
        assert_eq!((tr.len(), ev.len()), (60, 30));
        let ids: HashSet<_> = tr.ids().into_iter().collect();
        assert!(ev.ids().iter().all(|id| !ids.contains(id)));
        assert_eq!(split(&c, 60, 30, 1).unwrap(), (tr, ev));
        assert!(matches!(split(&c, 80, 30, 1), Err(CorpusError::InsufficientSize { .. })));
    }

    #[test]
    fn synth_lengths_and_determinism() {
        let c = synth_corpus(500, 50, 20, 7);
        assert_eq!(c.len(), 500);
        let mean = c.mean_len();
        assert!((45.0..=55.0).contains(&mean), "mean {mean}");
        assert_eq!(c, synth_corpus(500, 50, 20, 7));
        let one = synth_corpus(1, 10, 1, 9);
        assert!(one.melodies[0].len() >= 10);
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distortion(&[p(0), p(2), p(4)], &[p(0), p(2), p(4)]), 0);
        assert_eq!(hamming_distortion(&[p(0), p(2), p(4)], &[p(0), p(2), p(5)]), 1);
        assert_eq!(hamming_distortion(&[p(0), p(2), p(4)], &[p(0), p(2)]), 1);
        assert_eq!(hamming_distortion(&[NoteSymbol::Pause], &[p(0)]), 1);
    }

    fn seq(len: usize) -> impl Strategy<Value = Vec<NoteSymbol>> {
        proptest::collection::vec((0u8..13).prop_map(|v| if v == 12 { NoteSymbol::Pause } else { NoteSymbol::Pitch(v) }), len)
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric((a, b, c) in (1usize..20).prop_flat_map(|n| (seq(n), seq(n), seq(n)))) {
            let d = hamming_distortion;
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }
    }
}
