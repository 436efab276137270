//! Typed combinatory-logic terms.
//!
//! A program is a binary tree of routed applications `[r, left, right]` over
//! typed primitives and base terms. Routers decide where values flow:
//!
//! * `[B, f, x]`: the right subtree's value is sent into the left (`f x`).
//! * `[C, f, x]`: the incoming argument goes to the left first (`λa. f a x`).
//! * `[S, f, g]`: the incoming argument goes to both (`λa. f a (g a)`).
//! * `[CB, [B, f, x], c]`: the count is routed into the left subtree, whose
//!   `B` step is then threaded `c` times, giving `[x, f x, …, f^(c-1) x]`.
//!   This is the same run that the `iter` primitive computes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, TypeError};
use crate::melody::NoteSymbol;

/// Largest count / time index in the base alphabet.
pub const MAX_COUNT: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseType {
    Note,
    Count,
    Time,
}

impl BaseType {
    pub const ALL: [BaseType; 3] = [BaseType::Note, BaseType::Count, BaseType::Time];

    fn letter(self) -> char {
        match self {
            BaseType::Note => 'n',
            BaseType::Count => 'c',
            BaseType::Time => 'm',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeTag {
    Base(BaseType),
    Arrow(Box<TypeTag>, Box<TypeTag>),
}

impl TypeTag {
    pub fn note() -> Self {
        TypeTag::Base(BaseType::Note)
    }
    pub fn count() -> Self {
        TypeTag::Base(BaseType::Count)
    }
    pub fn time() -> Self {
        TypeTag::Base(BaseType::Time)
    }
    pub fn arrow(a: TypeTag, b: TypeTag) -> Self {
        TypeTag::Arrow(Box::new(a), Box::new(b))
    }
    /// `args[0] -> args[1] -> … -> ret`
    pub fn chain(args: &[TypeTag], ret: TypeTag) -> Self {
        args.iter().rev().fold(ret, |acc, a| TypeTag::arrow(a.clone(), acc))
    }

    pub fn as_arrow(&self) -> Option<(&TypeTag, &TypeTag)> {
        match self {
            TypeTag::Arrow(a, b) => Some((a, b)),
            TypeTag::Base(_) => None,
        }
    }

    pub fn as_base(&self) -> Option<BaseType> {
        match self {
            TypeTag::Base(b) => Some(*b),
            TypeTag::Arrow(..) => None,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            TypeTag::Base(_) => 0,
            TypeTag::Arrow(_, b) => 1 + b.arity(),
        }
    }

    pub fn parse(text: &str) -> Result<TypeTag, ParseError> {
        let mut p = Parser::new(text);
        let t = p.type_tag()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.err("trailing input after type"));
        }
        Ok(t)
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Base(b) => write!(f, "{}", b.letter()),
            TypeTag::Arrow(a, b) => {
                if a.as_arrow().is_some() {
                    write!(f, "({a}) -> {b}")
                } else {
                    write!(f, "{a} -> {b}")
                }
            }
        }
    }
}

impl Serialize for TypeTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TypeTag::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Combinator {
    B,
    C,
    S,
}

/// A router string of one or two combinators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Router(Vec<Combinator>);

impl Router {
    pub const MAX_LEN: usize = 2;

    pub fn new(symbols: Vec<Combinator>) -> Option<Router> {
        (1..=Self::MAX_LEN).contains(&symbols.len()).then_some(Router(symbols))
    }
    pub fn b() -> Router {
        Router(vec![Combinator::B])
    }
    pub fn c() -> Router {
        Router(vec![Combinator::C])
    }
    pub fn s() -> Router {
        Router(vec![Combinator::S])
    }
    pub fn cb() -> Router {
        Router(vec![Combinator::C, Combinator::B])
    }
    pub fn symbols(&self) -> &[Combinator] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            f.write_str(match c {
                Combinator::B => "B",
                Combinator::C => "C",
                Combinator::S => "S",
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Up,
    Down,
    Rep,
    Get,
    Concat,
    Iter,
}

impl Primitive {
    pub const ALL: [Primitive; 6] =
        [Primitive::Up, Primitive::Down, Primitive::Rep, Primitive::Get, Primitive::Concat, Primitive::Iter];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Up => "up",
            Primitive::Down => "down",
            Primitive::Rep => "rep",
            Primitive::Get => "get",
            Primitive::Concat => "concat",
            Primitive::Iter => "iter",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Primitive::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn signature(self) -> TypeTag {
        use TypeTag as T;
        match self {
            Primitive::Up | Primitive::Down => T::arrow(T::note(), T::note()),
            Primitive::Rep => T::chain(&[T::note(), T::count()], T::note()),
            Primitive::Get => T::chain(&[T::note(), T::time()], T::note()),
            Primitive::Concat => T::chain(&[T::note(), T::note()], T::note()),
            Primitive::Iter => T::chain(&[T::arrow(T::note(), T::note()), T::note(), T::count()], T::note()),
        }
    }

    pub fn arity(self) -> usize {
        self.signature().arity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseTerm {
    /// A one-note sequence.
    Note(NoteSymbol),
    Count(u8),
    Time(u8),
}

impl BaseTerm {
    pub fn base_type(self) -> BaseType {
        match self {
            BaseTerm::Note(_) => BaseType::Note,
            BaseTerm::Count(_) => BaseType::Count,
            BaseTerm::Time(_) => BaseType::Time,
        }
    }
}

impl fmt::Display for BaseTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseTerm::Note(n) => write!(f, "n{n}"),
            BaseTerm::Count(c) => write!(f, "c{c}"),
            BaseTerm::Time(m) => write!(f, "m{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Base(BaseTerm),
    Prim(Primitive),
    Hole(TypeTag),
    App(Router, Box<Term>, Box<Term>),
}

impl Term {
    pub fn note(p: u8) -> Term {
        Term::Base(BaseTerm::Note(NoteSymbol::pitch(p)))
    }
    pub fn pause() -> Term {
        Term::Base(BaseTerm::Note(NoteSymbol::Pause))
    }
    pub fn count(c: u8) -> Term {
        Term::Base(BaseTerm::Count(c))
    }
    pub fn time(m: u8) -> Term {
        Term::Base(BaseTerm::Time(m))
    }
    pub fn app(r: Router, l: Term, rt: Term) -> Term {
        Term::App(r, Box::new(l), Box::new(rt))
    }
    /// `[B, f, x]`
    pub fn apply(f: Term, x: Term) -> Term {
        Term::app(Router::b(), f, x)
    }
    /// `[CB, [B, f, x], c]`
    pub fn run(f: Term, x: Term, c: Term) -> Term {
        Term::app(Router::cb(), Term::apply(f, x), c)
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, Term::App(..))
    }

    pub fn has_holes(&self) -> bool {
        match self {
            Term::Hole(_) => true,
            Term::App(_, l, r) => l.has_holes() || r.has_holes(),
            _ => false,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::App(_, l, r) => 1 + l.size() + r.size(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            Term::App(_, l, r) => 1 + l.depth().max(r.depth()),
            _ => 1,
        }
    }

    pub fn parse(text: &str) -> Result<Term, ParseError> {
        let mut p = Parser::new(text);
        let t = p.term()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.err("trailing input after term"));
        }
        Ok(t)
    }

    /// Subterm at a path of child indices (0 = left, 1 = right).
    pub fn at(&self, path: &[u8]) -> Option<&Term> {
        match (path.split_first(), self) {
            (None, t) => Some(t),
            (Some((0, rest)), Term::App(_, l, _)) => l.at(rest),
            (Some((1, rest)), Term::App(_, _, r)) => r.at(rest),
            _ => None,
        }
    }

    /// Returns a copy with the subterm at `path` replaced.
    pub fn replaced(&self, path: &[u8], with: Term) -> Term {
        match (path.split_first(), self) {
            (None, _) => with,
            (Some((0, rest)), Term::App(r, l, rt)) => Term::App(r.clone(), Box::new(l.replaced(rest, with)), rt.clone()),
            (Some((1, rest)), Term::App(r, l, rt)) => Term::App(r.clone(), l.clone(), Box::new(rt.replaced(rest, with))),
            _ => panic!("invalid path {path:?}"),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Base(b) => write!(f, "{b}"),
            Term::Prim(p) => f.write_str(p.name()),
            Term::Hole(t) if t.as_arrow().is_some() => write!(f, "?({t})"),
            Term::Hole(t) => write!(f, "?{t}"),
            Term::App(r, l, rt) => write!(f, "[{r}, {l}, {rt}]"),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Term::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Infers the unique type of a term (Holes take their annotated type).
pub fn check_type(term: &Term) -> Result<TypeTag, TypeError> {
    match term {
        Term::Base(b) => Ok(TypeTag::Base(b.base_type())),
        Term::Prim(p) => Ok(p.signature()),
        Term::Hole(t) => Ok(t.clone()),
        Term::App(router, l, r) => {
            let unroutable = |reason: &str| TypeError::Unroutable { router: router.to_string(), reason: reason.into() };
            match router.symbols() {
                [Combinator::B] => {
                    let lt = check_type(l)?;
                    let rt = check_type(r)?;
                    let (arg, ret) = lt.as_arrow().ok_or_else(|| TypeError::NotAFunction(lt.clone()))?;
                    expect(arg, &rt)?;
                    Ok(ret.clone())
                }
                [Combinator::C] => {
                    let lt = check_type(l)?;
                    let rt = check_type(r)?;
                    let (a, rest) = lt.as_arrow().ok_or_else(|| TypeError::NotAFunction(lt.clone()))?;
                    let (rho, tau) = rest.as_arrow().ok_or_else(|| unroutable("left subtree takes fewer than two arguments"))?;
                    expect(rho, &rt)?;
                    Ok(TypeTag::arrow(a.clone(), tau.clone()))
                }
                [Combinator::S] => {
                    let lt = check_type(l)?;
                    let rt = check_type(r)?;
                    let (a, rest) = lt.as_arrow().ok_or_else(|| TypeError::NotAFunction(lt.clone()))?;
                    let (rho, tau) = rest.as_arrow().ok_or_else(|| unroutable("left subtree takes fewer than two arguments"))?;
                    expect(&TypeTag::arrow(a.clone(), rho.clone()), &rt)?;
                    Ok(TypeTag::arrow(a.clone(), tau.clone()))
                }
                [Combinator::C, Combinator::B] => {
                    let Term::App(inner, f, x) = l.as_ref() else {
                        return Err(unroutable("left subtree must be a B application"));
                    };
                    if inner != &Router::b() {
                        return Err(unroutable("left subtree must be a B application"));
                    }
                    expect(&TypeTag::arrow(TypeTag::note(), TypeTag::note()), &check_type(f)?)?;
                    expect(&TypeTag::note(), &check_type(x)?)?;
                    expect(&TypeTag::count(), &check_type(r)?)?;
                    Ok(TypeTag::note())
                }
                _ => Err(unroutable("no routing rule for this router")),
            }
        }
    }
}

fn expect(expected: &TypeTag, found: &TypeTag) -> Result<(), TypeError> {
    if expected == found {
        Ok(())
    } else {
        Err(TypeError::Mismatch { expected: expected.clone(), found: found.clone() })
    }
}

/// A type-checked term together with its inferred type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    root: Term,
    ty: TypeTag,
}

impl Program {
    pub fn new(root: Term) -> Result<Program, TypeError> {
        let ty = check_type(&root)?;
        Ok(Program { root, ty })
    }
    pub fn root(&self) -> &Term {
        &self.root
    }
    pub fn ty(&self) -> &TypeTag {
        &self.ty
    }
    pub fn into_root(self) -> Term {
        self.root
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError::At { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else if self.at_end() {
            Err(ParseError::Eof)
        } else {
            Err(self.err(&format!("expected `{s}`")))
        }
    }

    fn word(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let len = self.rest().find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(self.rest().len());
        if len == 0 {
            return Err(if self.at_end() { ParseError::Eof } else { self.err("expected a name") });
        }
        let w = &self.rest()[..len];
        self.pos += len;
        Ok(w)
    }

    fn type_atom(&mut self) -> Result<TypeTag, ParseError> {
        if self.eat("(") {
            let t = self.type_tag()?;
            self.expect(")")?;
            return Ok(t);
        }
        let start = self.pos;
        match self.word()? {
            "n" => Ok(TypeTag::note()),
            "c" => Ok(TypeTag::count()),
            "m" => Ok(TypeTag::time()),
            _ => {
                self.pos = start;
                Err(self.err("expected a type"))
            }
        }
    }

    fn type_tag(&mut self) -> Result<TypeTag, ParseError> {
        let a = self.type_atom()?;
        if self.eat("->") {
            Ok(TypeTag::arrow(a, self.type_tag()?))
        } else {
            Ok(a)
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if self.eat("[") {
            let start = self.pos;
            let rw = self.word()?;
            let symbols = rw
                .chars()
                .map(|c| match c {
                    'B' => Some(Combinator::B),
                    'C' => Some(Combinator::C),
                    'S' => Some(Combinator::S),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| ParseError::At { pos: start, msg: format!("invalid router `{rw}`") })?;
            let router = Router::new(symbols)
                .ok_or_else(|| ParseError::At { pos: start, msg: format!("router `{rw}` longer than 2") })?;
            self.expect(",")?;
            let l = self.term()?;
            self.expect(",")?;
            let r = self.term()?;
            self.expect("]")?;
            return Ok(Term::app(router, l, r));
        }
        if self.eat("?") {
            return Ok(Term::Hole(self.type_atom()?));
        }
        let start = self.pos;
        let w = self.word()?;
        if let Some(p) = Primitive::from_name(w) {
            return Ok(Term::Prim(p));
        }
        let bad = || ParseError::At { pos: start, msg: format!("unknown term `{w}`") };
        let (kind, value) = w.split_at(1);
        if kind == "n" && value == "p" {
            return Ok(Term::pause());
        }
        let v: u8 = value.parse().map_err(|_| bad())?;
        match kind {
            "n" if v < 12 => Ok(Term::note(v)),
            "c" if (1..=MAX_COUNT).contains(&v) => Ok(Term::count(v)),
            "m" if (1..=MAX_COUNT).contains(&v) => Ok(Term::time(v)),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ascending_run() -> Term {
        Term::run(Term::Prim(Primitive::Up), Term::note(2), Term::count(3))
    }

    #[test]
    fn prints_and_parses_canonical_form() {
        let t = ascending_run();
        assert_eq!(t.to_string(), "[CB, [B, up, n2], c3]");
        assert_eq!(Term::parse("[CB, [B, up, n2], c3]").unwrap(), t);
        assert_eq!(Term::parse("[B,?(n -> n),np]").unwrap().to_string(), "[B, ?(n -> n), np]");
        assert!(Term::parse("[BCS, up, n2]").is_err());
        assert!(Term::parse("[B, up, n12]").is_err());
        assert!(Term::parse("c0").is_err());
    }

    #[test]
    fn type_display_round_trips() {
        let t = Primitive::Iter.signature();
        assert_eq!(t.to_string(), "(n -> n) -> n -> c -> n");
        assert_eq!(TypeTag::parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn primitive_and_base_types() {
        assert_eq!(check_type(&Term::Prim(Primitive::Rep)).unwrap(), TypeTag::chain(&[TypeTag::note(), TypeTag::count()], TypeTag::note()));
        assert_eq!(check_type(&Term::Prim(Primitive::Get)).unwrap(), TypeTag::chain(&[TypeTag::note(), TypeTag::time()], TypeTag::note()));
        assert_eq!(check_type(&Term::count(3)).unwrap(), TypeTag::count());
        assert_eq!(check_type(&ascending_run()).unwrap(), TypeTag::note());
    }

    #[test]
    fn type_errors() {
        let bad = Term::apply(Term::Prim(Primitive::Rep), Term::time(2));
        assert!(matches!(check_type(&bad), Err(TypeError::Mismatch { .. })));
        let count_for_time = Term::apply(Term::apply(Term::Prim(Primitive::Get), Term::note(0)), Term::count(2));
        assert!(matches!(check_type(&count_for_time), Err(TypeError::Mismatch { .. })));
        let not_fn = Term::apply(Term::note(1), Term::note(2));
        assert!(matches!(check_type(&not_fn), Err(TypeError::NotAFunction(_))));
        let unroutable = Term::app(Router::new(vec![Combinator::S, Combinator::S]).unwrap(), Term::Prim(Primitive::Up), Term::note(1));
        assert!(matches!(check_type(&unroutable), Err(TypeError::Unroutable { .. })));
        let cb_bad = Term::app(Router::cb(), Term::note(1), Term::count(2));
        assert!(matches!(check_type(&cb_bad), Err(TypeError::Unroutable { .. })));
    }

    #[test]
    fn flip_and_share_types() {
        // [C, rep, c2] : n -> n
        let t = Term::app(Router::c(), Term::Prim(Primitive::Rep), Term::count(2));
        assert_eq!(check_type(&t).unwrap(), TypeTag::arrow(TypeTag::note(), TypeTag::note()));
        // [S, concat, up] : n -> n
        let s = Term::app(Router::s(), Term::Prim(Primitive::Concat), Term::Prim(Primitive::Up));
        assert_eq!(check_type(&s).unwrap(), TypeTag::arrow(TypeTag::note(), TypeTag::note()));
    }

    fn arb_leaf() -> impl Strategy<Value = Term> {
        prop_oneof![
            (0u8..12).prop_map(Term::note),
            Just(Term::pause()),
            (1u8..=16).prop_map(Term::count),
            (1u8..=16).prop_map(Term::time),
            proptest::sample::select(Primitive::ALL.to_vec()).prop_map(Term::Prim),
        ]
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        arb_leaf().prop_recursive(4, 24, 2, |inner| {
            (proptest::sample::select(vec![Router::b(), Router::c(), Router::s(), Router::cb()]), inner.clone(), inner)
                .prop_map(|(r, l, x)| Term::app(r, l, x))
        })
    }

    proptest! {
        #[test]
        fn text_form_round_trips(t in arb_term()) {
            prop_assert_eq!(Term::parse(&t.to_string()).unwrap(), t);
        }
    }
}
