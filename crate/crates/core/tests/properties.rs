use std::sync::Arc;

use melody_rd::adaptor::{log_prior_with_library, py_probabilities, sample_with_library, Library, Model, PyParams};
use melody_rd::compress::{decode, encode_melody, Budget, NoiseModel, SearchMode};
use melody_rd::edit::{delete_terms, description_length, subprograms};
use melody_rd::error::EvalError;
use melody_rd::eval::evaluate_term;
use melody_rd::experiments::{train, Setup};
use melody_rd::grammar::{expansion_of, Grammar, GrammarParams};
use melody_rd::melody::{preprocess, split, synth_corpus, Melody, NoteSymbol};
use melody_rd::seed;
use melody_rd::term::{check_type, Term, TypeTag};
use melody_rd::ExactPyParams;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::Rng as _;

fn grammar() -> Arc<Grammar> {
    Arc::new(Grammar::new(GrammarParams::default()).unwrap())
}

fn notes() -> impl Strategy<Value = Vec<NoteSymbol>> {
    prop::collection::vec((0u8..13).prop_map(|p| if p == 12 { NoteSymbol::Pause } else { NoteSymbol::Pitch(p) }), 10..20)
}

/// Log-prior rebuilt from the expansion tables, one factor per generation site.
fn log_prior_by_sites(g: &Grammar, term: &Term, t: &TypeTag) -> f64 {
    g.sites(term, t)
        .iter()
        .map(|(path, ty, depth)| {
            let node = term.at(path).unwrap();
            if let Term::Hole(_) = node {
                return 0.0;
            }
            let e = expansion_of(node).unwrap();
            let table = g.expansions(ty, *depth);
            table.iter().find(|(x, _)| *x == e).map(|(_, p)| p.ln()).unwrap_or(f64::NEG_INFINITY)
        })
        .sum()
}

#[test]
fn sampled_programs_type_check_and_evaluate() {
    let g = grammar();
    let mut rng = seed::rng(11);
    let t = TypeTag::note();
    for _ in 0..10_000 {
        let p = g.sample(&t, &mut rng).unwrap();
        assert_eq!(check_type(&p).unwrap(), t);
        let out = evaluate_term(&p);
        assert!(!matches!(out, Err(EvalError::Type(_) | EvalError::Arity(_) | EvalError::NotNotes)), "{p}: {out:?}");
        assert_eq!(out, evaluate_term(&p));
    }
}

#[test]
fn description_length_decomposes_over_sites() {
    let g = grammar();
    let m = Model::pcfg(g.clone());
    let mut rng = seed::rng(12);
    let t = TypeTag::note();
    for _ in 0..2_000 {
        let p = g.sample(&t, &mut rng).unwrap();
        let dl = description_length(&p, &t, &m).unwrap();
        let by_sites = -log_prior_by_sites(&g, &p, &t) / std::f64::consts::LN_2;
        assert!((dl - by_sites).abs() < 1e-9, "{p}: {dl} vs {by_sites}");
        if let Term::App(..) = p {
            // removing a child subtree removes exactly its share of the bits
            for (path, ty, _) in g.sites(&p, &t).into_iter().skip(1) {
                let hollow = p.replaced(&path, Term::Hole(ty.clone()));
                let removed = dl - m.bits(&hollow, &t);
                let sub = -(log_prior_by_sites(&g, &p, &t) - log_prior_by_sites(&g, &hollow, &t)) / std::f64::consts::LN_2;
                assert!((removed - sub).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn atoms_and_routers_are_equiprobable_within_a_branch() {
    let g = grammar();
    for t in [TypeTag::note(), TypeTag::count(), TypeTag::parse("n -> n").unwrap()] {
        for depth in 1..=g.params().max_depth {
            let table = g.expansions(&t, depth);
            let atoms: Vec<f64> = table.iter().filter(|(e, _)| matches!(e, melody_rd::grammar::Expansion::Atom(_))).map(|x| x.1).collect();
            assert!(atoms.windows(2).all(|w| w[0] == w[1]), "{t} at {depth}");
            let total: f64 = table.iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn enumeration_mass_is_complete() {
    let g = grammar();
    for t in [TypeTag::note(), TypeTag::count(), TypeTag::parse("n -> n").unwrap()] {
        for depth in 1..=2 {
            let (items, rest) = g.enumerate(&t, depth).unwrap();
            let mass: f64 = items.iter().map(|(_, lp)| lp.exp()).sum::<f64>() + rest;
            assert!((mass - 1.0).abs() < 1e-9, "{t} depth {depth}: {mass}");
            for (p, lp) in &items {
                assert!((g.log_prior(p, &t) - lp).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn pitman_yor_weights_conserve_mass_exactly() {
    let mut rng = seed::rng(13);
    for _ in 0..100 {
        let k = rng.gen_range(1..8usize);
        let counts: Vec<u64> = (0..k).map(|_| rng.gen_range(1..20)).collect();
        let alpha = Ratio::new(rng.gen_range(1..50i64), rng.gen_range(1..10i64));
        let den = rng.gen_range(2..20i64);
        let discount = Ratio::new(rng.gen_range(1..den), den);
        let params: ExactPyParams = PyParams::new(alpha, discount).unwrap();
        let w = py_probabilities(&counts, &params);
        let (kk, total) = (Ratio::from_integer(k as i64), Ratio::from_integer(counts.iter().sum::<u64>() as i64));
        assert_eq!(w.construct, (alpha + kk * discount) / (alpha + total));
        for (r, &m) in w.reuse.iter().zip(&counts) {
            assert_eq!(*r, (Ratio::from_integer(m as i64) - discount) / (total - kk * discount));
        }
        let one = Ratio::from_integer(1);
        assert_eq!(w.construct + (one - w.construct) * w.reuse.iter().sum::<Ratio<i64>>(), one);
    }
}

#[test]
fn reuse_probability_grows_with_count() {
    let g = grammar();
    let t = TypeTag::note();
    let pi = Term::parse("[CB, [B, up, n0], c4]").unwrap();
    let other = Term::parse("[B, down, n2]").unwrap();
    let mut prev = f64::NEG_INFINITY;
    for k in 1..12 {
        let lib = Library::from_entries([(t.clone(), pi.clone(), k), (t.clone(), other.clone(), 3)]).unwrap();
        let lp = log_prior_with_library(&pi, &t, &lib, &g, &PyParams::default());
        assert!(lp > prev, "k={k}");
        prev = lp;
    }
}

#[test]
fn empty_library_reduces_to_the_grammar() {
    let g = grammar();
    let t = TypeTag::note();
    let lib = Library::new();
    for s in 0..200 {
        let a = sample_with_library(&t, &lib, &g, &PyParams::default(), &mut seed::rng(s)).unwrap();
        let b = g.sample(&t, &mut seed::rng(s)).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_prior_with_library(&a, &t, &lib, &g, &PyParams::default()).to_bits(), g.log_prior(&a, &t).to_bits());
    }
}

#[test]
fn trained_library_survives_json() {
    let setup = Setup::new(grammar());
    let corpus = synth_corpus(6, 20, 4, 3);
    let m = train(&setup, &setup.model(melody_rd::adaptor::ModelKind::Ag), &corpus.melodies, 64, 5);
    let lib = m.library();
    assert!(!lib.is_empty());
    assert_eq!(&Library::from_json(&lib.to_json()).unwrap(), lib);
}

#[test]
fn oracle_map_segment_at_tiny_scale() {
    let params = GrammarParams { max_depth: 2, ..GrammarParams::default() };
    let g = Arc::new(Grammar::new(params).unwrap());
    let m = Model::pcfg(g.clone());
    let noise = NoiseModel::default();
    let t = TypeTag::note();
    let (support, rest) = g.enumerate(&t, 2).unwrap();
    assert!(rest.abs() < 1e-12);
    let baseline = melody_rd::compress::literal_baseline(&m, &noise);
    let mut rng = seed::rng(14);
    let (mut trials, mut hits) = (0, 0);
    for _ in 0..40 {
        let len = rng.gen_range(1..=4usize);
        let start = rng.gen_range(0..12u8);
        let mel: Vec<NoteSymbol> = match rng.gen_range(0..3) {
            0 => (0..len).map(|k| NoteSymbol::Pitch(start).shift(k as i32)).collect(),
            1 => vec![NoteSymbol::Pitch(start); len],
            _ => (0..len).map(|_| NoteSymbol::Pitch(rng.gen_range(0..12))).collect(),
        };
        // exhaustive MAP under the search's own ordering
        let mut best: Option<(f64, usize, f64)> = None;
        for (p, lp) in &support {
            let Ok(out) = evaluate_term(p) else { continue };
            if out.is_empty() {
                continue;
            }
            let n = out.len().min(mel.len());
            let ll = melody_rd::compress::log_likelihood(&mel[..n], &out[..n], &noise);
            let key = (lp + ll + (mel.len() - n) as f64 * baseline, n, *lp);
            if best.is_none_or(|b| key > b) {
                best = Some(key);
            }
        }
        let best = best.unwrap();
        let (found, _) =
            melody_rd::compress::encode_segment(&mel, &m, 10 * support.len(), &noise, baseline, &mut seed::rng(rng.gen()));
        let f = found.unwrap();
        trials += 1;
        if (f.score, f.consumed, f.log_prior) == best {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn encodings_respect_budgets_and_partition(mel in notes(), r_l in 1.0f64..200.0, r_s in 1usize..64, s in any::<u64>()) {
        let m = Model::pcfg(grammar());
        let melody = Melody::new("m", mel);
        let e = encode_melody(&melody, &m, &Budget::new(r_l, r_s).unwrap(), &NoiseModel::default(), SearchMode::POOLED, s);
        prop_assert!(e.rate_bits <= r_l);
        prop_assert!(e.proposals_used <= r_s);
        prop_assert_eq!(e.segments.iter().map(|x| x.consumed).sum::<usize>(), melody.len());
        prop_assert!(e.segments.iter().all(|x| x.consumed >= 1));
        let a = decode(&e, &m, &mut seed::rng(s));
        prop_assert_eq!(&a, &decode(&e, &m, &mut seed::rng(s)));
        prop_assert_eq!(a.len(), melody.len());
    }

    #[test]
    fn deletion_is_monotone_in_the_budget(s in any::<u64>(), b1 in 0.0f64..80.0, b2 in 0.0f64..80.0) {
        let g = grammar();
        let m = Model::pcfg(g.clone());
        let t = TypeTag::note();
        let p = g.sample(&t, &mut seed::rng(s)).unwrap();
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        let (a, b) = (delete_terms(&p, &t, lo, &m), delete_terms(&p, &t, hi, &m));
        prop_assert!(m.bits(&a, &t) <= m.bits(&b, &t) + 1e-12);
        prop_assert!(m.bits(&a, &t) <= lo + 1e-12 || a == Term::Hole(t.clone()));
        prop_assert!(m.bits(&b, &t) <= hi + 1e-12 || b == Term::Hole(t.clone()));
    }

    #[test]
    fn subprograms_list_every_node(s in any::<u64>()) {
        let p = grammar().sample(&TypeTag::note(), &mut seed::rng(s)).unwrap();
        prop_assert_eq!(subprograms(&p).len(), p.size());
    }

    #[test]
    fn growing_a_leaf_lowers_the_prior(s in any::<u64>()) {
        let g = grammar();
        let t = TypeTag::note();
        let mut rng = seed::rng(s);
        let p = g.sample(&t, &mut rng).unwrap();
        let leaves: Vec<_> = g.sites(&p, &t).into_iter().filter(|(path, ty, d)| {
            p.at(path).unwrap().is_leaf() && *ty == t && *d < g.params().max_depth
        }).collect();
        prop_assume!(!leaves.is_empty());
        let (path, _, _) = &leaves[rng.gen_range(0..leaves.len())];
        let grown = p.replaced(path, Term::parse(&format!("[B, up, {}]", p.at(path).unwrap())).unwrap());
        prop_assert!(g.log_prior(&p, &t) > g.log_prior(&grown, &t));
    }

    #[test]
    fn preprocessing_is_idempotent_and_splits_partition(n in 2usize..30, s in any::<u64>(), k in 0usize..30) {
        let c = synth_corpus(n, 12, 3, s);
        let (once, _) = preprocess(&c.to_raw(), 10);
        let (twice, _) = preprocess(&once.to_raw(), 10);
        prop_assert_eq!(&once, &twice);
        let n_train = k.min(n - 1);
        let (tr, ev) = split(&once, n_train, n - n_train, s).unwrap();
        prop_assert_eq!(tr.len(), n_train);
        prop_assert!(tr.ids().iter().all(|id| ev.get(id).is_none()));
    }
}
