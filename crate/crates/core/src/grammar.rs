//! Type-driven probabilistic grammar over routed programs.
//!
//! At every generation site (a requested type `t` at depth `d`) the grammar
//! picks between two branches:
//!
//! * terminal: a base term or primitive whose type is exactly `t`, uniform;
//! * routed: `K` intermediate arguments with `K ~ Geometric(q)` truncated at 2.
//!   `K = 1` picks a one-letter router (B, C, S) and an intermediate base type
//!   `ρ`; `K = 2` is the `CB` run form on notes. Routers and `ρ` are uniform.
//!
//! Options that cannot be completed within `max_depth` are removed and the
//! remaining weights renormalized, so the sampler always terminates and the
//! scorer reproduces exactly the probability of the sampler's trace.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::GrammarError;
use crate::melody::NoteSymbol;
use crate::seed::Rng;
use crate::term::{check_type, BaseTerm, BaseType, Combinator, Primitive, Router, Term, TypeTag, MAX_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarParams {
    #[serde(with = "prim_names")]
    pub primitives: Vec<Primitive>,
    #[serde(with = "router_names")]
    pub routers: Vec<Router>,
    pub p_terminal: f64,
    /// Success probability of the geometric prior over `K`.
    pub k_geometric: f64,
    pub max_depth: u32,
    pub count_alphabet: u8,
    pub time_alphabet: u8,
    pub pause: bool,
}

impl Default for GrammarParams {
    fn default() -> Self {
        GrammarParams {
            primitives: Primitive::ALL.to_vec(),
            routers: vec![Router::b(), Router::c(), Router::s(), Router::cb()],
            p_terminal: 0.7,
            k_geometric: 0.5,
            max_depth: 8,
            count_alphabet: MAX_COUNT,
            time_alphabet: MAX_COUNT,
            pause: true,
        }
    }
}

mod prim_names {
    use super::Primitive;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Primitive], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| p.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Primitive>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|n| Primitive::from_name(n).ok_or_else(|| D::Error::custom(format!("unknown primitive `{n}`"))))
            .collect()
    }
}

mod router_names {
    use super::Router;
    use crate::term::Term;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Router], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Router>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|n| match Term::parse(&format!("[{n}, up, n0]")) {
                Ok(Term::App(r, ..)) => Ok(r),
                _ => Err(D::Error::custom(format!("invalid router `{n}`"))),
            })
            .collect()
    }
}

impl GrammarParams {
    pub fn validate(&self) -> Result<(), GrammarError> {
        let mut problems = Vec::new();
        if !(self.p_terminal > 0.0 && self.p_terminal < 1.0) {
            problems.push(format!("p_terminal must lie in (0, 1), got {}", self.p_terminal));
        }
        if !(self.k_geometric > 0.0 && self.k_geometric <= 1.0) {
            problems.push(format!("k_geometric must lie in (0, 1], got {}", self.k_geometric));
        }
        if self.max_depth < 1 {
            problems.push("max_depth must be at least 1".to_string());
        }
        if !(1..=MAX_COUNT).contains(&self.count_alphabet) || !(1..=MAX_COUNT).contains(&self.time_alphabet) {
            problems.push(format!("count/time alphabets must be within 1..={MAX_COUNT}"));
        }
        for r in &self.routers {
            if ![Router::b(), Router::c(), Router::s(), Router::cb()].contains(r) {
                problems.push(format!("router {r} has no routing rule"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GrammarError::Invalid(problems.join("; ")))
        }
    }

    /// Parses the TOML form, rejecting unknown keys. Missing keys take defaults.
    pub fn from_toml(text: &str) -> Result<GrammarParams, GrammarError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Partial {
            primitives: Option<Vec<String>>,
            routers: Option<Vec<String>>,
            p_terminal: Option<f64>,
            k_geometric: Option<f64>,
            max_depth: Option<u32>,
            count_alphabet: Option<u8>,
            time_alphabet: Option<u8>,
            pause: Option<bool>,
        }
        let p: Partial = toml::from_str(text).map_err(|e| GrammarError::Config(e.message().to_string()))?;
        let mut g = GrammarParams::default();
        if let Some(names) = p.primitives {
            g.primitives = names
                .iter()
                .map(|n| Primitive::from_name(n).ok_or_else(|| GrammarError::Config(format!("unknown primitive `{n}`"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(names) = p.routers {
            g.routers = names
                .iter()
                .map(|n| match Term::parse(&format!("[{n}, up, n0]")) {
                    Ok(Term::App(r, ..)) => Ok(r),
                    _ => Err(GrammarError::Config(format!("invalid router `{n}`"))),
                })
                .collect::<Result<_, _>>()?;
        }
        g.p_terminal = p.p_terminal.unwrap_or(g.p_terminal);
        g.k_geometric = p.k_geometric.unwrap_or(g.k_geometric);
        g.max_depth = p.max_depth.unwrap_or(g.max_depth);
        g.count_alphabet = p.count_alphabet.unwrap_or(g.count_alphabet);
        g.time_alphabet = p.time_alphabet.unwrap_or(g.time_alphabet);
        g.pause = p.pause.unwrap_or(g.pause);
        g.validate()?;
        Ok(g)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grammar params serialize")
    }
}

/// One way of expanding a generation site.
#[derive(Debug, Clone, PartialEq)]
pub enum Expansion {
    Atom(Term),
    /// `via` is the intermediate base type for one-letter routers.
    Route { router: Router, via: Option<BaseType> },
}

/// A child generation site relative to its parent: path, type, depth offset.
pub type ChildSite = (Vec<u8>, TypeTag, u32);

/// Generation sites of the children of a routed node of type `t`.
pub fn child_sites(t: &TypeTag, router: &Router, via: Option<BaseType>) -> Option<Vec<ChildSite>> {
    match (router.symbols(), via) {
        ([Combinator::B], Some(rho)) => {
            let rho = TypeTag::Base(rho);
            Some(vec![(vec![0], TypeTag::arrow(rho.clone(), t.clone()), 1), (vec![1], rho, 1)])
        }
        ([Combinator::C], Some(rho)) => {
            let (a, tau) = t.as_arrow()?;
            let rho = TypeTag::Base(rho);
            Some(vec![
                (vec![0], TypeTag::chain(&[a.clone(), rho.clone()], tau.clone()), 1),
                (vec![1], rho, 1),
            ])
        }
        ([Combinator::S], Some(rho)) => {
            let (a, tau) = t.as_arrow()?;
            let rho = TypeTag::Base(rho);
            Some(vec![
                (vec![0], TypeTag::chain(&[a.clone(), rho.clone()], tau.clone()), 1),
                (vec![1], TypeTag::arrow(a.clone(), rho), 1),
            ])
        }
        ([Combinator::C, Combinator::B], None) if *t == TypeTag::note() => Some(vec![
            (vec![0, 0], TypeTag::arrow(TypeTag::note(), TypeTag::note()), 2),
            (vec![0, 1], TypeTag::note(), 2),
            (vec![1], TypeTag::count(), 1),
        ]),
        _ => None,
    }
}

/// Reads the routed expansion a term was generated by, if it is an application.
pub fn expansion_of(term: &Term) -> Option<Expansion> {
    let Term::App(router, l, r) = term else {
        return Some(Expansion::Atom(term.clone()));
    };
    let via = match router.symbols() {
        [Combinator::B] | [Combinator::C] => check_type(r).ok()?.as_base(),
        [Combinator::S] => check_type(r).ok()?.as_arrow()?.1.as_base(),
        [Combinator::C, Combinator::B] => {
            matches!(l.as_ref(), Term::App(inner, ..) if *inner == Router::b()).then_some(())?;
            return Some(Expansion::Route { router: router.clone(), via: None });
        }
        _ => return None,
    };
    Some(Expansion::Route { router: router.clone(), via: Some(via?) })
}

/// Caching layer consulted at every generation site.
pub trait Adaptor: Sync {
    /// With probability `1 - λ1` returns a cached program of type `t`.
    /// Must not touch `rng` when there is no cache for `t`.
    fn reuse(&self, t: &TypeTag, rng: &mut Rng) -> Option<Term>;
    /// Mixes the construction log-probability with the cached mass.
    fn mix(&self, t: &TypeTag, term: &Term, construct: f64) -> f64;
    /// Whether `term` is a cached unit at type `t`.
    fn is_cached(&self, t: &TypeTag, term: &Term) -> bool;
}

/// The plain grammar: nothing is cached.
pub struct NoAdaptor;

impl Adaptor for NoAdaptor {
    fn reuse(&self, _: &TypeTag, _: &mut Rng) -> Option<Term> {
        None
    }
    fn mix(&self, _: &TypeTag, _: &Term, construct: f64) -> f64 {
        construct
    }
    fn is_cached(&self, _: &TypeTag, _: &Term) -> bool {
        false
    }
}

type Table = Arc<Vec<(Expansion, f64)>>;

/// Grammar parameters plus memo tables; cheap to share behind an `Arc`.
#[derive(Debug)]
pub struct Grammar {
    params: GrammarParams,
    feasible: RwLock<HashMap<(TypeTag, u32), bool>>,
    tables: RwLock<HashMap<(TypeTag, u32), Table>>,
}

impl Clone for Grammar {
    fn clone(&self) -> Self {
        Grammar::new(self.params.clone()).expect("params were validated")
    }
}

impl Grammar {
    pub fn new(params: GrammarParams) -> Result<Grammar, GrammarError> {
        params.validate()?;
        Ok(Grammar { params, feasible: RwLock::default(), tables: RwLock::default() })
    }

    pub fn params(&self) -> &GrammarParams {
        &self.params
    }

    /// Base terms and primitives whose type is exactly `t`.
    pub fn atoms(&self, t: &TypeTag) -> Vec<Term> {
        match t {
            TypeTag::Base(BaseType::Note) => {
                let mut v: Vec<Term> = (0..12).map(Term::note).collect();
                if self.params.pause {
                    v.push(Term::Base(BaseTerm::Note(NoteSymbol::Pause)));
                }
                v
            }
            TypeTag::Base(BaseType::Count) => (1..=self.params.count_alphabet).map(Term::count).collect(),
            TypeTag::Base(BaseType::Time) => (1..=self.params.time_alphabet).map(Term::time).collect(),
            TypeTag::Arrow(..) => self
                .params
                .primitives
                .iter()
                .filter(|p| p.signature() == *t)
                .map(|p| Term::Prim(*p))
                .collect(),
        }
    }

    fn route_options(&self, t: &TypeTag, depth: u32) -> [Vec<(Router, Vec<BaseType>)>; 2] {
        let mut by_k: [Vec<(Router, Vec<BaseType>)>; 2] = Default::default();
        if depth >= self.params.max_depth {
            return by_k;
        }
        for router in &self.params.routers {
            let vias: Vec<Option<BaseType>> =
                if router.len() == 1 { BaseType::ALL.iter().copied().map(Some).collect() } else { vec![None] };
            let ok: Vec<Option<BaseType>> = vias
                .into_iter()
                .filter(|via| {
                    child_sites(t, router, *via)
                        .is_some_and(|sites| sites.iter().all(|(_, ct, dd)| self.feasible(ct, depth + dd)))
                })
                .collect();
            if !ok.is_empty() {
                by_k[router.len() - 1].push((router.clone(), ok.into_iter().flatten().collect()));
            }
        }
        by_k
    }

    /// Whether some program of type `t` fits below the depth cap from `depth`.
    pub fn feasible(&self, t: &TypeTag, depth: u32) -> bool {
        if depth > self.params.max_depth {
            return false;
        }
        let key = (t.clone(), depth);
        if let Some(v) = self.feasible.read().unwrap().get(&key) {
            return *v;
        }
        // results ending in counts/times can only be base terms
        let ret_is_note = {
            let mut r = t;
            while let Some((_, b)) = r.as_arrow() {
                r = b;
            }
            *r == TypeTag::note()
        };
        let v = !self.atoms(t).is_empty()
            || (ret_is_note && self.route_options(t, depth).iter().any(|k| !k.is_empty()));
        self.feasible.write().unwrap().insert(key, v);
        v
    }

    /// Every expansion available at a site, with its probability.
    pub fn expansions(&self, t: &TypeTag, depth: u32) -> Table {
        let key = (t.clone(), depth);
        if let Some(v) = self.tables.read().unwrap().get(&key) {
            return v.clone();
        }
        let atoms = if depth <= self.params.max_depth { self.atoms(t) } else { Vec::new() };
        let routes = if self.feasible(t, depth) { self.route_options(t, depth) } else { Default::default() };
        let has_routes = routes.iter().any(|k| !k.is_empty());
        let p_term = match (atoms.is_empty(), has_routes) {
            (false, true) => self.params.p_terminal,
            (false, false) => 1.0,
            (true, _) => 0.0,
        };
        let mut out = Vec::new();
        for a in &atoms {
            out.push((Expansion::Atom(a.clone()), p_term / atoms.len() as f64));
        }
        if has_routes {
            let q = self.params.k_geometric;
            let weights: Vec<f64> = routes
                .iter()
                .enumerate()
                .map(|(k, opts)| if opts.is_empty() { 0.0 } else { (1.0 - q).powi(k as i32) * q })
                .collect();
            let z: f64 = weights.iter().sum();
            for (k, opts) in routes.iter().enumerate() {
                for (router, vias) in opts {
                    let p_router = (1.0 - p_term) * weights[k] / z / opts.len() as f64;
                    if vias.is_empty() {
                        out.push((Expansion::Route { router: router.clone(), via: None }, p_router));
                    } else {
                        for via in vias {
                            out.push((
                                Expansion::Route { router: router.clone(), via: Some(*via) },
                                p_router / vias.len() as f64,
                            ));
                        }
                    }
                }
            }
        }
        let table = Arc::new(out);
        self.tables.write().unwrap().insert(key, table.clone());
        table
    }

    /// Draws a program of type `t` from the grammar.
    pub fn sample(&self, t: &TypeTag, rng: &mut Rng) -> Result<Term, GrammarError> {
        self.sample_with(t, rng, &NoAdaptor)
    }

    pub fn sample_with(&self, t: &TypeTag, rng: &mut Rng, adaptor: &dyn Adaptor) -> Result<Term, GrammarError> {
        if !self.feasible(t, 1) {
            return Err(GrammarError::Unreachable(t.clone()));
        }
        Ok(self.gen(t, 1, rng, adaptor))
    }

    /// Samples at a given site depth; the site must be feasible.
    pub(crate) fn gen(&self, t: &TypeTag, depth: u32, rng: &mut Rng, adaptor: &dyn Adaptor) -> Term {
        if let Some(cached) = adaptor.reuse(t, rng) {
            return cached;
        }
        let table = self.expansions(t, depth);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = &table[table.len() - 1].0;
        for (e, p) in table.iter() {
            acc += p;
            if u < acc {
                pick = e;
                break;
            }
        }
        match pick {
            Expansion::Atom(a) => a.clone(),
            Expansion::Route { router, via } => {
                let sites = child_sites(t, router, *via).expect("table only holds routable options");
                let kids: Vec<Term> = sites.iter().map(|(_, ct, dd)| self.gen(ct, depth + dd, rng, adaptor)).collect();
                if router.len() == 2 {
                    let mut it = kids.into_iter();
                    let (f, x, c) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                    Term::run(f, x, c)
                } else {
                    let mut it = kids.into_iter();
                    Term::app(router.clone(), it.next().unwrap(), it.next().unwrap())
                }
            }
        }
    }

    /// Natural-log prior of `term` generated at type `t`; `-inf` if impossible.
    /// Holes contribute probability one.
    pub fn log_prior(&self, term: &Term, t: &TypeTag) -> f64 {
        self.score(term, t, 1, &NoAdaptor)
    }

    pub(crate) fn score(&self, term: &Term, t: &TypeTag, depth: u32, adaptor: &dyn Adaptor) -> f64 {
        if let Term::Hole(ht) = term {
            return if ht == t { 0.0 } else { f64::NEG_INFINITY };
        }
        let construct = self.score_construct(term, t, depth, adaptor);
        adaptor.mix(t, term, construct)
    }

    /// Log-probability of the expansion choice made at the root of `term`.
    pub(crate) fn local_log_prob(&self, term: &Term, t: &TypeTag, depth: u32) -> f64 {
        let Some(exp) = expansion_of(term) else { return f64::NEG_INFINITY };
        self.expansions(t, depth)
            .iter()
            .find(|(e, _)| *e == exp)
            .map_or(f64::NEG_INFINITY, |(_, p)| p.ln())
    }

    fn score_construct(&self, term: &Term, t: &TypeTag, depth: u32, adaptor: &dyn Adaptor) -> f64 {
        let local = self.local_log_prob(term, t, depth);
        if local == f64::NEG_INFINITY {
            return local;
        }
        let Some(Expansion::Route { router, via }) = expansion_of(term) else { return local };
        let sites = child_sites(t, &router, via).expect("expansion came from the table");
        sites.iter().fold(local, |acc, (path, ct, dd)| {
            let child = term.at(path).expect("site paths follow the term shape");
            acc + self.score(child, ct, depth + dd, adaptor)
        })
    }

    /// All generation sites in `term`: (path, expected type, depth), preorder.
    pub fn sites(&self, term: &Term, t: &TypeTag) -> Vec<(Vec<u8>, TypeTag, u32)> {
        let mut out = Vec::new();
        collect_sites(term, t, 1, Vec::new(), &mut out);
        out
    }

    /// Every program of type `t` with depth at most `max_depth`, with exact
    /// log-priors, plus the probability mass of deeper programs.
    pub fn enumerate(&self, t: &TypeTag, max_depth: u32) -> Result<(Vec<(Term, f64)>, f64), GrammarError> {
        if max_depth > 4 {
            return Err(GrammarError::DepthGuard(max_depth));
        }
        let (items, rest) = self.enumerate_at(t, 1, max_depth);
        Ok((items.into_iter().map(|(term, p)| (term, p.ln())).collect(), rest))
    }

    fn enumerate_at(&self, t: &TypeTag, depth: u32, limit: u32) -> (Vec<(Term, f64)>, f64) {
        let mut items = Vec::new();
        let mut rest = 0.0;
        for (e, p) in self.expansions(t, depth).iter() {
            match e {
                Expansion::Atom(a) => items.push((a.clone(), *p)),
                Expansion::Route { router, via } => {
                    let sites = child_sites(t, router, *via).expect("routable");
                    if sites.iter().any(|(_, _, dd)| depth + dd > limit) {
                        rest += p;
                        continue;
                    }
                    let kids: Vec<(Vec<(Term, f64)>, f64)> =
                        sites.iter().map(|(_, ct, dd)| self.enumerate_at(ct, depth + dd, limit)).collect();
                    let listed: f64 = kids.iter().map(|(v, _)| v.iter().map(|(_, q)| q).sum::<f64>()).product();
                    rest += p * (1.0 - listed);
                    let mut combos: Vec<(Vec<Term>, f64)> = vec![(Vec::new(), *p)];
                    for (list, _) in &kids {
                        combos = combos
                            .iter()
                            .flat_map(|(prefix, q)| {
                                list.iter().map(move |(term, r)| {
                                    let mut v = prefix.clone();
                                    v.push(term.clone());
                                    (v, q * r)
                                })
                            })
                            .collect();
                    }
                    for (parts, q) in combos {
                        let mut it = parts.into_iter();
                        let term = if router.len() == 2 {
                            let (f, x, c) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                            Term::run(f, x, c)
                        } else {
                            Term::app(router.clone(), it.next().unwrap(), it.next().unwrap())
                        };
                        items.push((term, q));
                    }
                }
            }
        }
        (items, rest)
    }
}

fn collect_sites(term: &Term, t: &TypeTag, depth: u32, path: Vec<u8>, out: &mut Vec<(Vec<u8>, TypeTag, u32)>) {
    out.push((path.clone(), t.clone(), depth));
    if let Some(Expansion::Route { router, via }) = expansion_of(term) {
        if let Some(sites) = child_sites(t, &router, via) {
            for (rel, ct, dd) in sites {
                let child = term.at(&rel).expect("site paths follow the term shape");
                let mut p = path.clone();
                p.extend(rel);
                collect_sites(child, &ct, depth + dd, p, out);
            }
        }
    }
}
