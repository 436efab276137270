//! Reduction of closed terms to note sequences.

use crate::error::EvalError;
use crate::melody::NoteSymbol;
use crate::term::{check_type, BaseTerm, Combinator, Primitive, Program, Term};

/// Reductions allowed per evaluation.
pub const STEP_LIMIT: usize = 10_000;
/// Longest note sequence a program may produce.
pub const OUTPUT_LIMIT: usize = 4_096;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Notes(Vec<NoteSymbol>),
    Count(u8),
    Time(u8),
    Func(Func),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Func {
    /// A primitive waiting for the rest of its arguments.
    Prim(Primitive, Vec<Value>),
    /// `λa. f a x`
    Flip(Box<Value>, Box<Value>),
    /// `λa. f a (g a)`
    Share(Box<Value>, Box<Value>),
}

impl Value {
    pub fn into_notes(self) -> Result<Vec<NoteSymbol>, EvalError> {
        match self {
            Value::Notes(n) => Ok(n),
            _ => Err(EvalError::NotNotes),
        }
    }
}

struct Machine {
    steps: usize,
}

impl Machine {
    fn tick(&mut self) -> Result<(), EvalError> {
        self.steps += 1;
        if self.steps > STEP_LIMIT {
            Err(EvalError::StepLimit(STEP_LIMIT))
        } else {
            Ok(())
        }
    }

    fn eval(&mut self, term: &Term) -> Result<Value, EvalError> {
        match term {
            Term::Base(BaseTerm::Note(n)) => Ok(Value::Notes(vec![*n])),
            Term::Base(BaseTerm::Count(c)) => Ok(Value::Count(*c)),
            Term::Base(BaseTerm::Time(m)) => Ok(Value::Time(*m)),
            Term::Prim(p) => Ok(Value::Func(Func::Prim(*p, Vec::new()))),
            Term::Hole(t) => Err(EvalError::Hole(t.clone())),
            Term::App(router, l, r) => match router.symbols() {
                [Combinator::B] => {
                    let f = self.eval(l)?;
                    let x = self.eval(r)?;
                    self.apply(f, x)
                }
                [Combinator::C] => Ok(Value::Func(Func::Flip(Box::new(self.eval(l)?), Box::new(self.eval(r)?)))),
                [Combinator::S] => Ok(Value::Func(Func::Share(Box::new(self.eval(l)?), Box::new(self.eval(r)?)))),
                [Combinator::C, Combinator::B] => {
                    let Term::App(_, f, x) = l.as_ref() else {
                        return Err(EvalError::Arity("CB expects a B application on the left".into()));
                    };
                    let f = self.eval(f)?;
                    let seed = self.eval(x)?;
                    let Value::Count(c) = self.eval(r)? else {
                        return Err(EvalError::Arity("CB expects a count on the right".into()));
                    };
                    self.iterate(f, seed, c)
                }
                _ => Err(EvalError::Arity(format!("router {router} has no reduction rule"))),
            },
        }
    }

    fn iterate(&mut self, f: Value, seed: Value, count: u8) -> Result<Value, EvalError> {
        let mut cur = seed.into_notes()?;
        let mut out = Vec::new();
        for k in 0..count {
            out.extend_from_slice(&cur);
            check_len(out.len())?;
            if k + 1 < count {
                cur = self.apply(f.clone(), Value::Notes(cur))?.into_notes()?;
            }
        }
        Ok(Value::Notes(out))
    }

    fn apply(&mut self, f: Value, x: Value) -> Result<Value, EvalError> {
        self.tick()?;
        match f {
            Value::Func(Func::Prim(p, mut args)) => {
                args.push(x);
                if args.len() < p.arity() {
                    Ok(Value::Func(Func::Prim(p, args)))
                } else {
                    self.delta(p, args)
                }
            }
            Value::Func(Func::Flip(f, y)) => {
                let fx = self.apply(*f, x)?;
                self.apply(fx, *y)
            }
            Value::Func(Func::Share(f, g)) => {
                let fx = self.apply(*f, x.clone())?;
                let gx = self.apply(*g, x)?;
                self.apply(fx, gx)
            }
            _ => Err(EvalError::Arity("applied a non-function value".into())),
        }
    }

    fn delta(&mut self, p: Primitive, args: Vec<Value>) -> Result<Value, EvalError> {
        let mut it = args.into_iter();
        let mut next = || it.next().ok_or_else(|| EvalError::Arity(format!("{} is missing arguments", p.name())));
        let out = match p {
            Primitive::Up => next()?.into_notes()?.into_iter().map(|n| n.shift(1)).collect(),
            Primitive::Down => next()?.into_notes()?.into_iter().map(|n| n.shift(-1)).collect(),
            Primitive::Rep => {
                let n = next()?.into_notes()?;
                let Value::Count(c) = next()? else { return Err(EvalError::Arity("rep expects a count".into())) };
                check_len(n.len() * usize::from(c))?;
                n.repeat(usize::from(c))
            }
            Primitive::Get => {
                let mut n = next()?.into_notes()?;
                let Value::Time(m) = next()? else { return Err(EvalError::Arity("get expects a time index".into())) };
                n.truncate(usize::from(m));
                n
            }
            Primitive::Concat => {
                let mut a = next()?.into_notes()?;
                let b = next()?.into_notes()?;
                check_len(a.len() + b.len())?;
                a.extend(b);
                a
            }
            Primitive::Iter => {
                let f = next()?;
                let seed = next()?;
                let Value::Count(c) = next()? else { return Err(EvalError::Arity("iter expects a count".into())) };
                return self.iterate(f, seed, c);
            }
        };
        Ok(Value::Notes(out))
    }
}

fn check_len(n: usize) -> Result<(), EvalError> {
    if n > OUTPUT_LIMIT {
        Err(EvalError::OutputLimit(OUTPUT_LIMIT))
    } else {
        Ok(())
    }
}

/// Evaluates a closed program applied to `args` and returns its note sequence.
pub fn evaluate(program: &Program, args: &[Value]) -> Result<Vec<NoteSymbol>, EvalError> {
    if program.ty().arity() != args.len() {
        return Err(EvalError::Arity(format!(
            "program of type {} given {} argument(s)",
            program.ty(),
            args.len()
        )));
    }
    let mut m = Machine { steps: 0 };
    let mut v = m.eval(program.root())?;
    for a in args {
        v = m.apply(v, a.clone())?;
    }
    v.into_notes()
}

/// Type-checks and evaluates a closed note-typed term.
pub fn evaluate_term(term: &Term) -> Result<Vec<NoteSymbol>, EvalError> {
    let program = Program::new(term.clone())?;
    evaluate(&program, &[])
}

/// Evaluates a term that is already known to type-check at `n`.
pub(crate) fn evaluate_unchecked(term: &Term) -> Result<Vec<NoteSymbol>, EvalError> {
    debug_assert!(check_type(term).is_ok());
    Machine { steps: 0 }.eval(term)?.into_notes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Router;

    fn p(v: u8) -> NoteSymbol {
        NoteSymbol::Pitch(v)
    }

    fn prim(p: Primitive) -> Term {
        Term::Prim(p)
    }

    #[test]
    fn rep_and_get_ground_truth() {
        let rep = Program::new(prim(Primitive::Rep)).unwrap();
        assert_eq!(evaluate(&rep, &[Value::Notes(vec![p(0)]), Value::Count(2)]).unwrap(), vec![p(0), p(0)]);
        let get = Program::new(prim(Primitive::Get)).unwrap();
        assert_eq!(evaluate(&get, &[Value::Notes(vec![p(0), p(2), p(3)]), Value::Time(2)]).unwrap(), vec![p(0), p(2)]);
    }

    #[test]
    fn routed_run_ascends() {
        let t = Term::parse("[CB, [B, up, n2], c3]").unwrap();
        assert_eq!(evaluate_term(&t).unwrap(), vec![p(2), p(3), p(4)]);
        let via_iter = Term::apply(Term::apply(Term::apply(prim(Primitive::Iter), prim(Primitive::Up)), Term::note(2)), Term::count(3));
        assert_eq!(evaluate_term(&via_iter).unwrap(), vec![p(2), p(3), p(4)]);
    }

    #[test]
    fn flip_and_share_reduce() {
        // [B, [C, rep, c3], n5] = rep n5 c3
        let t = Term::apply(Term::app(Router::c(), prim(Primitive::Rep), Term::count(3)), Term::note(5));
        assert_eq!(evaluate_term(&t).unwrap(), vec![p(5); 3]);
        // [B, [S, concat, up], n11] = concat n11 (up n11)
        let s = Term::apply(Term::app(Router::s(), prim(Primitive::Concat), prim(Primitive::Up)), Term::note(11));
        assert_eq!(evaluate_term(&s).unwrap(), vec![p(11), p(0)]);
    }

    #[test]
    fn pause_is_fixed_under_arithmetic() {
        let t = Term::apply(prim(Primitive::Down), Term::pause());
        assert_eq!(evaluate_term(&t).unwrap(), vec![NoteSymbol::Pause]);
    }

    #[test]
    fn errors() {
        let with_hole = Term::apply(prim(Primitive::Up), Term::Hole(crate::term::TypeTag::note()));
        assert!(matches!(evaluate_term(&with_hole), Err(EvalError::Hole(_))));
        let rep = Program::new(prim(Primitive::Rep)).unwrap();
        assert!(matches!(evaluate(&rep, &[]), Err(EvalError::Arity(_))));
        // 16^4 notes blows the output cap
        let mut t = Term::note(0);
        for _ in 0..4 {
            t = Term::apply(Term::apply(prim(Primitive::Rep), t), Term::count(16));
        }
        assert!(matches!(evaluate_term(&t), Err(EvalError::OutputLimit(_))));
    }
}
