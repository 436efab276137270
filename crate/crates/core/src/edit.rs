//! Structural operations on programs: subprograms, description length,
//! budgeted term deletion and hole filling.

use std::cmp::Ordering;

use crate::adaptor::Model;
use crate::error::{EvalError, GrammarError};
use crate::eval::evaluate_unchecked;
use crate::grammar::expansion_of;
use crate::melody::NoteSymbol;
use crate::seed::Rng;
use crate::term::{Term, TypeTag};

/// Attempts per hole before reconstruction gives up.
pub const FILL_RETRIES: usize = 16;

/// Every hole-free subtree, root first, in preorder. Repeated subtrees are
/// listed once per occurrence.
pub fn subprograms(term: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    collect(term, &mut out);
    out
}

fn collect(term: &Term, out: &mut Vec<Term>) {
    if !term.has_holes() {
        out.push(term.clone());
    }
    if let Term::App(_, l, r) = term {
        collect(l, out);
        collect(r, out);
    }
}

pub fn to_bits(log_prob: f64) -> f64 {
    // adding zero turns the -0.0 of a free hole into 0.0
    -log_prob / std::f64::consts::LN_2 + 0.0
}

/// `-log2 p(term)` under `model`; holes cost nothing.
pub fn description_length(term: &Term, t: &TypeTag, model: &Model) -> Result<f64, GrammarError> {
    let lp = model.log_prob(term, t);
    if lp == f64::NEG_INFINITY {
        return Err(GrammarError::Ungenerable(term.to_string()));
    }
    Ok(to_bits(lp))
}

/// A deletable unit: a leaf, or a subtree the model has cached (a learned
/// primitive of the adapted language).
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub path: Vec<u8>,
    pub ty: TypeTag,
    pub log_prob: f64,
}

/// Deletable units of `term`, preorder. Cached subtrees are not descended into.
pub fn deletion_units(term: &Term, t: &TypeTag, model: &Model) -> Vec<Unit> {
    let mut out = Vec::new();
    let sites = model.grammar().sites(term, t);
    let mut skip: Vec<Vec<u8>> = Vec::new();
    for (path, ty, depth) in sites {
        if skip.iter().any(|s| path.starts_with(s)) {
            continue;
        }
        let sub = term.at(&path).expect("site path");
        if matches!(sub, Term::Hole(_)) {
            continue;
        }
        let cached = !sub.has_holes() && model.is_cached(&ty, sub);
        if sub.is_leaf() || cached {
            out.push(Unit { log_prob: model.log_prob_at(sub, &ty, depth), path: path.clone(), ty });
            skip.push(path);
        } else if expansion_of(sub).is_none() {
            // unroutable node: treat as one unit
            out.push(Unit { log_prob: model.log_prob_at(sub, &ty, depth), path: path.clone(), ty });
            skip.push(path);
        }
    }
    out
}

/// Deletes units across several programs, most probable first, until the
/// summed description length fits `max_bits`. If deleting every unit is not
/// enough, whole programs are replaced by holes, costliest first.
pub fn delete_global(programs: &mut [(Term, TypeTag)], max_bits: f64, model: &Model) {
    let total = |ps: &[(Term, TypeTag)]| ps.iter().map(|(p, t)| model.bits(p, t)).sum::<f64>();
    if total(programs) <= max_bits {
        return;
    }
    let mut order: Vec<(usize, Unit)> = programs
        .iter()
        .enumerate()
        .flat_map(|(i, (p, t))| deletion_units(p, t, model).into_iter().map(move |u| (i, u)))
        .collect();
    // stable: ties keep program order, then preorder
    order.sort_by(|a, b| b.1.log_prob.partial_cmp(&a.1.log_prob).unwrap_or(Ordering::Equal));
    let mut bits: Vec<f64> = programs.iter().map(|(p, t)| model.bits(p, t)).collect();
    let site_lists: Vec<Vec<(Vec<u8>, TypeTag)>> = programs
        .iter()
        .map(|(p, t)| model.grammar().sites(p, t).into_iter().map(|(path, ty, _)| (path, ty)).collect())
        .collect();
    for (i, unit) in order {
        let (p, t) = &programs[i];
        let next = collapse(p.replaced(&unit.path, Term::Hole(unit.ty.clone())), &site_lists[i]);
        bits[i] = model.bits(&next, t);
        programs[i].0 = next;
        if bits.iter().sum::<f64>() <= max_bits {
            return;
        }
    }
    let mut rest: Vec<usize> = (0..programs.len()).collect();
    rest.sort_by(|&a, &b| bits[b].partial_cmp(&bits[a]).unwrap_or(Ordering::Equal));
    for i in rest {
        programs[i].0 = Term::Hole(programs[i].1.clone());
        bits[i] = 0.0;
        if bits.iter().sum::<f64>() <= max_bits {
            return;
        }
    }
}

/// A node whose generated children are all holes carries nothing but its
/// shape, so it becomes a hole itself. Applied bottom up.
fn collapse(mut term: Term, sites: &[(Vec<u8>, TypeTag)]) -> Term {
    let is_hole = |t: &Term, path: &[u8]| t.at(path).is_none_or(|s| matches!(s, Term::Hole(_)));
    for (k, (path, ty)) in sites.iter().enumerate().rev() {
        if is_hole(&term, path) {
            continue;
        }
        let mut kids = sites[k + 1..]
            .iter()
            .take_while(|(p, _)| p.starts_with(path))
            .filter(|(p, _)| !sites[k + 1..].iter().any(|(q, _)| q.len() > path.len() && q.len() < p.len() && p.starts_with(q)))
            .peekable();
        if kids.peek().is_some() && kids.all(|(p, _)| is_hole(&term, p)) {
            term = term.replaced(path, Term::Hole(ty.clone()));
        }
    }
    term
}

/// Replaces leaves by typed holes until the program fits `max_bits`.
pub fn delete_terms(term: &Term, t: &TypeTag, max_bits: f64, model: &Model) -> Term {
    let mut one = [(term.clone(), t.clone())];
    delete_global(&mut one, max_bits, model);
    let [(out, _)] = one;
    out
}

/// Fills every hole with a fresh draw from `model` at the hole's type.
pub fn fill_holes(partial: &Term, model: &Model, rng: &mut Rng) -> Result<Term, GrammarError> {
    Ok(match partial {
        Term::Hole(t) => model.sample(t, rng)?,
        Term::App(r, l, x) => Term::app(r.clone(), fill_holes(l, model, rng)?, fill_holes(x, model, rng)?),
        other => other.clone(),
    })
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("no evaluable filling after {FILL_RETRIES} attempts: {0}")]
    Exhausted(EvalError),
}

/// Samples the holes of a note-typed partial program and evaluates it.
pub fn reconstruct(partial: &Term, model: &Model, rng: &mut Rng) -> Result<Vec<NoteSymbol>, ReconstructError> {
    if !partial.has_holes() {
        return evaluate_unchecked(partial).map_err(ReconstructError::Exhausted);
    }
    let mut last = None;
    for _ in 0..FILL_RETRIES {
        let filled = fill_holes(partial, model, rng)?;
        match evaluate_unchecked(&filled) {
            Ok(v) => return Ok(v),
            Err(e) => last = Some(e),
        }
    }
    Err(ReconstructError::Exhausted(last.expect("at least one attempt")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptor::{Library, PyParams};
    use crate::grammar::{Grammar, GrammarParams};
    use crate::seed;
    use std::sync::Arc;

    fn model() -> Model {
        Model::pcfg(Arc::new(Grammar::new(GrammarParams::default()).unwrap()))
    }

    fn run() -> Term {
        Term::parse("[CB, [B, up, n2], c3]").unwrap()
    }

    #[test]
    fn subprograms_of_a_run() {
        let subs: Vec<String> = subprograms(&run()).iter().map(|t| t.to_string()).collect();
        assert_eq!(subs, ["[CB, [B, up, n2], c3]", "[B, up, n2]", "up", "n2", "c3"]);
        assert_eq!(subprograms(&Term::note(3)), vec![Term::note(3)]);
        let twice = Term::parse("[B, [B, concat, n1], n1]").unwrap();
        assert_eq!(subprograms(&twice).iter().filter(|t| **t == Term::note(1)).count(), 2);
    }

    #[test]
    fn description_length_is_additive_bits() {
        let m = model();
        let t = TypeTag::note();
        let dl = description_length(&run(), &t, &m).unwrap();
        assert!(dl.is_finite() && dl > 0.0);
        let too_deep = Term::parse("[B, up, c3]").unwrap();
        assert!(description_length(&too_deep, &t, &m).is_err());
    }

    #[test]
    fn deletion_respects_budget_and_order() {
        let m = model();
        let t = TypeTag::note();
        let p = run();
        let full = m.bits(&p, &t);
        assert_eq!(delete_terms(&p, &t, full + 1.0, &m), p);
        assert_eq!(delete_terms(&p, &t, 1e-9, &m), Term::Hole(t.clone()));
        let units = deletion_units(&p, &t, &m);
        assert_eq!(units.len(), 3);
        // one step below the full cost removes exactly the most probable unit
        let best = units.iter().max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).unwrap()).unwrap();
        let once = delete_terms(&p, &t, full - 1e-9, &m);
        assert_eq!(once, p.replaced(&best.path, Term::Hole(best.ty.clone())));
        let mut prev = f64::INFINITY;
        for budget in [64.0, 32.0, 16.0, 8.0, 4.0, 1.0] {
            let d = m.bits(&delete_terms(&p, &t, budget, &m), &t);
            assert!(d <= budget && d <= prev);
            prev = d;
        }
    }

    #[test]
    fn cached_subtrees_delete_as_units() {
        let g = Arc::new(Grammar::new(GrammarParams::default()).unwrap());
        let inner = Term::parse("[B, up, n2]").unwrap();
        let lib = Library::from_entries([(TypeTag::note(), inner.clone(), 5)]).unwrap();
        let m = Model::ag(g, PyParams::default(), lib);
        let p = Term::parse("[B, down, [B, up, n2]]").unwrap();
        let paths: Vec<Vec<u8>> = deletion_units(&p, &TypeTag::note(), &m).into_iter().map(|u| u.path).collect();
        assert_eq!(paths, vec![vec![0], vec![1]]);
    }

    #[test]
    fn reconstruct_fills_counts() {
        let m = model();
        let partial = run().replaced(&[1], Term::Hole(TypeTag::count()));
        let mut lengths = std::collections::BTreeSet::new();
        for s in 0..200 {
            let out = reconstruct(&partial, &m, &mut seed::rng(s)).unwrap();
            assert_eq!(out[0], NoteSymbol::Pitch(2));
            lengths.insert(out.len());
        }
        assert!(lengths.len() > 5);
        let a = reconstruct(&partial, &m, &mut seed::rng(4)).unwrap();
        assert_eq!(a, reconstruct(&partial, &m, &mut seed::rng(4)).unwrap());
        assert_eq!(reconstruct(&run(), &m, &mut seed::rng(0)).unwrap().len(), 3);
    }
}
