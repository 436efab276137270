//! Pitman-Yor caching on top of the grammar.
//!
//! Each type has a cache of previously used programs with counts. A site of
//! type `t` constructs a fresh program with probability
//! `λ1 = (α + N·d) / (α + |C|)` and otherwise returns cached program `π` with
//! probability `λ2(π) = (M_π − d) / (|C| − N·d)`, where `N` is the number of
//! distinct cached programs and `|C|` the total count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;
use std::sync::Arc;

use num_traits::{FromPrimitive, Num};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::edit::subprograms;
use crate::error::{GrammarError, LibraryError};
use crate::grammar::{Adaptor, Grammar, NoAdaptor};
use crate::seed::Rng;
use crate::term::{check_type, Term, TypeTag};

pub const LIBRARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PyParams<T = f64> {
    pub alpha: T,
    pub discount: T,
}

impl Default for PyParams<f64> {
    fn default() -> Self {
        PyParams { alpha: 1.0, discount: 0.5 }
    }
}

impl<T: Num + PartialOrd + Copy + Debug> PyParams<T> {
    pub fn new(alpha: T, discount: T) -> Result<Self, LibraryError> {
        let p = PyParams { alpha, discount };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LibraryError> {
        if !(self.alpha > T::zero()) {
            return Err(LibraryError::Params(format!("alpha must be positive, got {:?}", self.alpha)));
        }
        if !(self.discount > T::zero() && self.discount < T::one()) {
            return Err(LibraryError::Params(format!("discount must lie in (0, 1), got {:?}", self.discount)));
        }
        Ok(())
    }
}

/// Construction probability and per-program reuse weights of one cache.
#[derive(Debug, Clone, PartialEq)]
pub struct PyWeights<T> {
    pub construct: T,
    /// Aligned with the counts passed in.
    pub reuse: Vec<T>,
}

/// Pitman-Yor weights for a cache given as per-program counts.
pub fn py_probabilities<T>(counts: &[u64], params: &PyParams<T>) -> PyWeights<T>
where
    T: Num + Copy + FromPrimitive,
{
    if counts.is_empty() {
        return PyWeights { construct: T::one(), reuse: Vec::new() };
    }
    let n = T::from_usize(counts.len()).expect("cache size fits the scalar");
    let total = T::from_u64(counts.iter().sum()).expect("cache total fits the scalar");
    let (a, d) = (params.alpha, params.discount);
    let construct = (a + n * d) / (a + total);
    let denom = total - n * d;
    let reuse = counts
        .iter()
        .map(|&m| (T::from_u64(m).expect("count fits the scalar") - d) / denom)
        .collect();
    PyWeights { construct, reuse }
}

/// Per-type multisets of cached programs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Library {
    caches: BTreeMap<TypeTag, BTreeMap<Term, u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDoc {
    schema_version: u32,
    caches: BTreeMap<String, Vec<(String, u64)>>,
}

impl Library {
    pub fn new() -> Library {
        Library::default()
    }

    /// Builds a library from explicit entries; every program must type-check at
    /// its declared type and contain no holes.
    pub fn from_entries<I>(entries: I) -> Result<Library, LibraryError>
    where
        I: IntoIterator<Item = (TypeTag, Term, u64)>,
    {
        let mut lib = Library::new();
        for (t, term, count) in entries {
            if count == 0 {
                return Err(LibraryError::Corrupt(format!("zero count for {term}")));
            }
            if term.has_holes() {
                return Err(LibraryError::Corrupt(format!("cached program {term} has holes")));
            }
            match check_type(&term) {
                Ok(found) if found == t => {}
                Ok(found) => return Err(LibraryError::Corrupt(format!("{term} has type {found}, cached under {t}"))),
                Err(e) => return Err(LibraryError::Corrupt(format!("{term}: {e}"))),
            }
            *lib.caches.entry(t).or_default().entry(term).or_insert(0) += count;
        }
        Ok(lib)
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    pub fn types(&self) -> impl Iterator<Item = &TypeTag> {
        self.caches.keys()
    }

    pub fn cache(&self, t: &TypeTag) -> Option<&BTreeMap<Term, u64>> {
        self.caches.get(t)
    }

    pub fn count(&self, t: &TypeTag, term: &Term) -> u64 {
        self.cache(t).and_then(|c| c.get(term)).copied().unwrap_or(0)
    }

    /// `N_t`
    pub fn distinct(&self, t: &TypeTag) -> usize {
        self.cache(t).map_or(0, |c| c.len())
    }

    /// `|C_t|`
    pub fn total(&self, t: &TypeTag) -> u64 {
        self.cache(t).map_or(0, |c| c.values().sum())
    }

    /// Distinct programs across all types.
    pub fn size(&self) -> usize {
        self.caches.values().map(|c| c.len()).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&TypeTag, &Term, u64)> {
        self.caches.iter().flat_map(|(t, c)| c.iter().map(move |(p, m)| (t, p, *m)))
    }

    /// A new library with every complete subtree of each used program added
    /// once per use, at its own type. `self` is left untouched.
    pub fn update<'a, I>(&self, used: I) -> Library
    where
        I: IntoIterator<Item = &'a Term>,
    {
        let mut next = self.clone();
        for program in used {
            for sub in subprograms(program) {
                let Ok(t) = check_type(&sub) else { continue };
                *next.caches.entry(t).or_default().entry(sub).or_insert(0) += 1;
            }
        }
        next
    }

    pub fn to_json(&self) -> String {
        let doc = LibraryDoc {
            schema_version: LIBRARY_SCHEMA_VERSION,
            caches: self
                .caches
                .iter()
                .map(|(t, c)| (t.to_string(), c.iter().map(|(p, m)| (p.to_string(), *m)).collect()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Library, LibraryError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| LibraryError::Corrupt(e.to_string()))?;
        let found = v.get("schema_version").and_then(|s| s.as_u64()).ok_or_else(|| {
            LibraryError::Corrupt("missing schema_version".to_string())
        })? as u32;
        if found != LIBRARY_SCHEMA_VERSION {
            return Err(LibraryError::SchemaVersion { found, expected: LIBRARY_SCHEMA_VERSION });
        }
        let doc: LibraryDoc = serde_json::from_value(v).map_err(|e| LibraryError::Corrupt(e.to_string()))?;
        let mut entries = Vec::new();
        for (t, items) in doc.caches {
            let t = TypeTag::parse(&t).map_err(|e| LibraryError::Corrupt(format!("type `{t}`: {e}")))?;
            for (p, m) in items {
                let term = Term::parse(&p).map_err(|e| LibraryError::Corrupt(format!("program `{p}`: {e}")))?;
                entries.push((t.clone(), term, m));
            }
        }
        Library::from_entries(entries)
    }
}

/// Fraction of distinct subprograms that appear in exactly one melody's
/// encoding. `1 - uniqueness` is the shared fraction.
pub fn shared_subprogram_ratio(per_melody: &[Vec<Term>]) -> Result<f64, LibraryError> {
    if per_melody.len() < 2 {
        return Err(LibraryError::TooFewMelodies(per_melody.len()));
    }
    let mut seen_in: HashMap<&Term, usize> = HashMap::new();
    for programs in per_melody {
        let distinct: BTreeSet<&Term> = programs.iter().collect();
        for p in distinct {
            *seen_in.entry(p).or_insert(0) += 1;
        }
    }
    if seen_in.is_empty() {
        return Ok(0.0);
    }
    let unique = seen_in.values().filter(|&&k| k == 1).count();
    Ok(unique as f64 / seen_in.len() as f64)
}

struct CacheView {
    construct: f64,
    log_construct: f64,
    /// Cumulative reuse weights, for sampling.
    items: Vec<(Term, f64)>,
    /// `ln((1 - λ1) λ2(π))`
    reuse_log: HashMap<Term, f64>,
}

/// Frozen, sampling-ready view of a library.
struct LibraryAdaptor {
    views: HashMap<TypeTag, CacheView>,
}

impl LibraryAdaptor {
    fn new(lib: &Library, py: &PyParams) -> LibraryAdaptor {
        let mut views = HashMap::new();
        for (t, cache) in &lib.caches {
            let counts: Vec<u64> = cache.values().copied().collect();
            let w = py_probabilities(&counts, py);
            let mut acc = 0.0;
            let mut items = Vec::with_capacity(cache.len());
            let mut reuse_log = HashMap::with_capacity(cache.len());
            for ((term, _), l2) in cache.iter().zip(&w.reuse) {
                acc += l2;
                items.push((term.clone(), acc));
                reuse_log.insert(term.clone(), ((1.0 - w.construct) * l2).ln());
            }
            views.insert(
                t.clone(),
                CacheView { construct: w.construct, log_construct: w.construct.ln(), items, reuse_log },
            );
        }
        LibraryAdaptor { views }
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Adaptor for LibraryAdaptor {
    fn reuse(&self, t: &TypeTag, rng: &mut Rng) -> Option<Term> {
        let view = self.views.get(t)?;
        let u: f64 = rng.gen();
        if u < view.construct {
            return None;
        }
        let v = (u - view.construct) / (1.0 - view.construct) * view.items.last()?.1;
        let i = view.items.partition_point(|(_, c)| *c <= v).min(view.items.len() - 1);
        Some(view.items[i].0.clone())
    }

    fn mix(&self, t: &TypeTag, term: &Term, construct: f64) -> f64 {
        let Some(view) = self.views.get(t) else { return construct };
        let built = view.log_construct + construct;
        match view.reuse_log.get(term) {
            Some(r) => log_add(built, *r),
            None => built,
        }
    }

    fn is_cached(&self, t: &TypeTag, term: &Term) -> bool {
        self.views.get(t).is_some_and(|v| v.reuse_log.contains_key(term))
    }
}

/// Draws a program of type `t` from the library-adapted grammar.
pub fn sample_with_library(
    t: &TypeTag,
    library: &Library,
    grammar: &Grammar,
    py: &PyParams,
    rng: &mut Rng,
) -> Result<Term, GrammarError> {
    grammar.sample_with(t, rng, &LibraryAdaptor::new(library, py))
}

/// Natural-log probability of `program` under the library-adapted grammar.
pub fn log_prior_with_library(program: &Term, t: &TypeTag, library: &Library, grammar: &Grammar, py: &PyParams) -> f64 {
    grammar.score(program, t, 1, &LibraryAdaptor::new(library, py))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pcfg,
    Ag,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Pcfg => "pcfg",
            ModelKind::Ag => "ag",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pcfg" => Ok(ModelKind::Pcfg),
            "ag" => Ok(ModelKind::Ag),
            _ => Err(format!("unknown model `{s}` (expected pcfg or ag)")),
        }
    }
}

/// A grammar plus, for the adaptor model, a library snapshot.
///
/// The plain grammar never learns: `learn` returns it unchanged.
#[derive(Clone)]
pub struct Model {
    kind: ModelKind,
    grammar: Arc<Grammar>,
    py: PyParams,
    library: Library,
    adaptor: Arc<LibraryAdaptor>,
}

impl Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("kind", &self.kind)
            .field("py", &self.py)
            .field("library_size", &self.library.size())
            .finish()
    }
}

impl Model {
    pub fn pcfg(grammar: Arc<Grammar>) -> Model {
        Model::new(ModelKind::Pcfg, grammar, PyParams::default(), Library::new())
    }

    pub fn ag(grammar: Arc<Grammar>, py: PyParams, library: Library) -> Model {
        Model::new(ModelKind::Ag, grammar, py, library)
    }

    pub fn new(kind: ModelKind, grammar: Arc<Grammar>, py: PyParams, library: Library) -> Model {
        let library = if kind == ModelKind::Pcfg { Library::new() } else { library };
        let adaptor = Arc::new(LibraryAdaptor::new(&library, &py));
        Model { kind, grammar, py, library, adaptor }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn grammar_arc(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn py(&self) -> &PyParams {
        &self.py
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn with_library(&self, library: Library) -> Model {
        Model::new(self.kind, self.grammar.clone(), self.py, library)
    }

    /// The model after caching the given programs (adaptor model only).
    pub fn learn<'a, I>(&self, used: I) -> Model
    where
        I: IntoIterator<Item = &'a Term>,
    {
        match self.kind {
            ModelKind::Pcfg => self.clone(),
            ModelKind::Ag => self.with_library(self.library.update(used)),
        }
    }

    fn adaptor(&self) -> &dyn Adaptor {
        if self.library.is_empty() {
            &NoAdaptor
        } else {
            self.adaptor.as_ref()
        }
    }

    pub fn sample(&self, t: &TypeTag, rng: &mut Rng) -> Result<Term, GrammarError> {
        self.grammar.sample_with(t, rng, self.adaptor())
    }

    /// Natural-log probability; holes count as probability one.
    pub fn log_prob(&self, term: &Term, t: &TypeTag) -> f64 {
        self.grammar.score(term, t, 1, self.adaptor())
    }

    pub(crate) fn log_prob_at(&self, term: &Term, t: &TypeTag, depth: u32) -> f64 {
        self.grammar.score(term, t, depth, self.adaptor())
    }

    /// Description length in bits (`inf` when ungenerable).
    pub fn bits(&self, term: &Term, t: &TypeTag) -> f64 {
        crate::edit::to_bits(self.log_prob(term, t))
    }

    pub fn is_cached(&self, t: &TypeTag, term: &Term) -> bool {
        self.adaptor().is_cached(t, term)
    }
}
