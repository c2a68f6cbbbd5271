//! Property tests over randomly generated terms: structural invariants,
//! soundness of the rewrite rules against finite-semigroup evaluation, and
//! the canonicalizer's contract.

use proptest::prelude::*;

use kappabar::canon::{
    canonical_form, canonicalize, decide_equal, is_canonical, is_semi_canonical,
};
use kappabar::lyndon::{is_bordered, is_lyndon, lex_compare, minimal_conjugate, primitive_root};
use kappabar::rewrite::{
    apply_rule, find_applications, invert_step, verify_derivation, Direction, RuleId,
};
use kappabar::semigroup::{curated_family, enumerate_semigroups, FiniteSemigroup};
use kappabar::term::{from_paren_word, parse_term, subterm_slices, Atom, Mode, Term};

fn arb_term() -> impl Strategy<Value = Term> {
    let letter = prop::sample::select(vec!['a', 'b', 'c']).prop_map(|c| Term::letter(c).unwrap());
    letter
        .prop_recursive(3, 24, 4, |inner| {
            prop::collection::vec(
                prop_oneof![
                    3 => prop::sample::select(vec!['a', 'b', 'c'])
                        .prop_map(|c| Term::letter(c).unwrap()),
                    2 => (inner, -5i64..=5).prop_map(|(base, q)| Term::from_atoms(vec![
                        Atom::limit(base, q).unwrap()
                    ])),
                ],
                1..4,
            )
            .prop_map(Term::concat)
        })
        .prop_filter("desk scale", |t| t.paren_len() <= 25 && t.rank() <= 3)
}

fn small_semigroups() -> Vec<FiniteSemigroup> {
    let mut out: Vec<FiniteSemigroup> = enumerate_semigroups(2).unwrap().collect();
    out.extend(
        curated_family()
            .into_iter()
            .filter(|s| s.order <= 6),
    );
    out
}

fn eval_equal_everywhere(a: &Term, b: &Term, semigroups: &[FiniteSemigroup]) -> bool {
    semigroups.iter().all(|sg| sg.satisfies(a, b))
}

proptest! {
    #[test]
    fn parse_render_round_trip(t in arb_term()) {
        prop_assert_eq!(parse_term(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn paren_word_round_trip(t in arb_term()) {
        prop_assert_eq!(from_paren_word(&t.to_paren_word()).unwrap(), t.clone());
        prop_assert_eq!(t.to_paren_word().len(), t.paren_len());
    }

    #[test]
    fn expansion_drops_rank_by_one(t in arb_term(), exps in prop::collection::vec(1usize..=3, 0..8)) {
        if t.rank() >= 1 {
            let n = t.decompose().unwrap().entries.len();
            let mut exps = exps;
            exps.resize(n, 1);
            let e = t.expansion(&exps).unwrap();
            prop_assert_eq!(e.rank(), t.rank() - 1);
            prop_assert!(e.scale() <= t.scale());
            prop_assert!(e.crucial_bound() <= t.crucial_bound());
        }
    }

    #[test]
    fn scale_monotone_on_subterms(t in arb_term()) {
        for sub in subterm_slices(&t) {
            prop_assert!(sub.scale() <= t.scale());
        }
    }

    #[test]
    fn square_has_double_length(t in arb_term()) {
        let sq = Term::concat([t.clone(), t.clone()]);
        prop_assert_eq!(sq.paren_len(), 2 * t.paren_len());
    }

    #[test]
    fn portion_counts(t in arb_term()) {
        if t.rank() >= 1 {
            let n = t.decompose().unwrap().entries.len();
            let p = t.portions().unwrap();
            prop_assert_eq!(p.crucial.len(), n - 1);
            // the circular portion is a crucial portion of the square
            let sq = Term::concat([t.clone(), t.clone()]);
            let sq_crucial = sq.portions().unwrap().crucial;
            prop_assert!(sq_crucial.iter().any(|c| c.term == p.circular.term));
        }
    }

    #[test]
    fn minimal_conjugate_minimal_and_primitive(t in arb_term()) {
        let (root, _) = primitive_root(&t);
        let (lyndon, split) = minimal_conjugate(&root).unwrap();
        prop_assert_eq!(Term::concat([split.left.clone(), split.right.clone()]), root.clone());
        prop_assert_eq!(
            Term::concat([split.right, split.left]),
            lyndon.clone()
        );
        let lw = lyndon.to_paren_word();
        let n = root.atoms().len();
        for k in 0..n {
            let rot = Term::concat([root.slice(k, n), root.slice(0, k)]);
            prop_assert_ne!(
                lex_compare(&rot.to_paren_word(), &lw),
                std::cmp::Ordering::Less
            );
            // conjugates of primitive terms are primitive
            prop_assert_eq!(primitive_root(&rot).1, 1);
        }
        if is_lyndon(&root) {
            prop_assert!(!is_bordered(&root.to_paren_word()));
        }
    }

    #[test]
    fn contractions_preserve_evaluation(t in arb_term()) {
        let semigroups = small_semigroups();
        for (rule, dir) in [
            (RuleId::R1, Direction::Contraction),
            (RuleId::R2, Direction::Contraction),
            (RuleId::R3, Direction::Contraction),
            (RuleId::R4L, Direction::Contraction),
            (RuleId::R4R, Direction::Contraction),
            (RuleId::R4L, Direction::Expansion),
            (RuleId::R4R, Direction::Expansion),
            (RuleId::R5, Direction::ShiftLeft),
            (RuleId::R5, Direction::ShiftRight),
        ] {
            for step in find_applications(&t, rule, dir, Mode::S) {
                let after = apply_rule(&t, &step, Mode::S).unwrap();
                prop_assert!(
                    eval_equal_everywhere(&t, &after, &semigroups),
                    "{rule} {dir:?} at {} broke evaluation on {t}",
                    step.pos
                );
                // the inverse step undoes the change
                let back = apply_rule(&after, &invert_step(&step), Mode::S).unwrap();
                prop_assert_eq!(&back, &t);
            }
        }
    }

    #[test]
    fn canonicalization_contract(t in arb_term()) {
        let report = canonicalize(&t, Mode::S, true).unwrap();
        let c = &report.output;
        prop_assert!(is_canonical(c, Mode::S), "not canonical: {t} -> {c}");
        prop_assert!(c.rank() <= t.rank());
        prop_assert_eq!(&canonical_form(c, Mode::S).unwrap(), c);
        let trace = report.trace.unwrap();
        prop_assert_eq!(verify_derivation(&trace), Ok(()));
        prop_assert_eq!(&trace.start, &t);
        prop_assert_eq!(&trace.end, c);
        // soundness on the order-2 tables
        let tables: Vec<_> = enumerate_semigroups(2).unwrap().collect();
        prop_assert!(eval_equal_everywhere(&t, c, &tables));
        prop_assert!(decide_equal(&t, c, Mode::S).unwrap());
    }

    #[test]
    fn semi_canonical_after_step1(t in arb_term()) {
        if t.rank() >= 1 {
            let s1 = kappabar::canon::step1(&t, Mode::S).unwrap();
            prop_assert!(is_semi_canonical(&s1), "{t} -> {s1}");
        }
    }

    #[test]
    fn a_mode_outputs_are_omega_terms(t in arb_term()) {
        let c = canonical_form(&t, Mode::A).unwrap();
        prop_assert_eq!(c.scale(), 0);
        prop_assert!(is_canonical(&c, Mode::A));
        // sound over the aperiodic semigroups of order <= 2
        let aperiodics: Vec<_> = enumerate_semigroups(2)
            .unwrap()
            .filter(FiniteSemigroup::is_aperiodic)
            .collect();
        prop_assert!(eval_equal_everywhere(&t.zero_offsets(), &c, &aperiodics));
    }

    #[test]
    fn canonical_outputs_close_under_subterms(t in arb_term()) {
        let c = canonical_form(&t, Mode::S).unwrap();
        for sub in subterm_slices(&c) {
            prop_assert!(is_canonical(&sub, Mode::S), "{c} has bad subterm {sub}");
        }
    }

    #[test]
    fn canonicity_ignores_top_level_offsets(t in arb_term(), offs in prop::collection::vec(-5i64..=5, 0..8)) {
        let c = canonical_form(&t, Mode::S).unwrap();
        if c.rank() >= 1 {
            let d = c.decompose().unwrap();
            let mut atoms = c.atoms().to_vec();
            for (k, e) in d.entries.iter().enumerate() {
                let q = offs.get(k).copied().unwrap_or(3);
                atoms[e.atom_index] = Atom::limit(e.base.clone(), q).unwrap();
            }
            let mutated = Term::from_atoms(atoms);
            prop_assert!(is_canonical(&mutated, Mode::S), "{c} vs {mutated}");
        }
    }

    #[test]
    fn kappa_round_trip_preserves_evaluation(t in arb_term()) {
        let kappa = kappabar::term::bk_to_kappa(&t).unwrap();
        let back = kappabar::term::kappa_to_bk(&kappa).unwrap();
        let tables: Vec<_> = enumerate_semigroups(2).unwrap().collect();
        prop_assert!(eval_equal_everywhere(&t, &back, &tables));
        // spot check on all order-3 tables for small terms
        if t.paren_len() <= 8 {
            let order3: Vec<_> = enumerate_semigroups(3).unwrap().collect();
            prop_assert!(eval_equal_everywhere(&t, &back, &order3));
        }
    }

    #[test]
    fn decide_equal_is_reflexive_and_symmetric(a in arb_term(), b in arb_term()) {
        prop_assert!(decide_equal(&a, &a, Mode::S).unwrap());
        prop_assert_eq!(
            decide_equal(&a, &b, Mode::S).unwrap(),
            decide_equal(&b, &a, Mode::S).unwrap()
        );
    }
}

/// ω-power laws on every order-3 table are slow under proptest; run once.
#[test]
fn omega_powers_on_all_small_tables() {
    for sg in enumerate_semigroups(3).unwrap() {
        for s in 0..sg.order {
            let idem = sg.omega_power(s, 0);
            assert_eq!(sg.mul(idem, idem), idem, "idempotent power");
            // the idempotent is a power of s and unique among its powers
            let mut powers = vec![s];
            for _ in 0..2 * sg.order {
                let next = sg.mul(*powers.last().unwrap(), s);
                powers.push(next);
            }
            assert!(powers.contains(&idem));
            let idems: std::collections::BTreeSet<usize> = powers
                .iter()
                .copied()
                .filter(|&p| sg.mul(p, p) == p)
                .collect();
            assert_eq!(idems.len(), 1, "unique idempotent power");
        }
    }
}

#[test]
fn rule_instances_hold_on_all_order_3_tables() {
    // a curated set of rule instances, one per rule
    let pairs = [
        ("((a)^(w+2))^(w-1)", "(a)^(w-2)"),
        ("(aa)^(w+1)", "(a)^(w+2)"),
        ("(ab)^w(ab)^(w-1)", "(ab)^(w-1)"),
        ("ab(ab)^w", "(ab)^(w+1)"),
        ("(ab)^wab", "(ab)^(w+1)"),
        ("(ab)^(w+1)a", "a(ba)^(w+1)"),
    ];
    for sg in enumerate_semigroups(3).unwrap() {
        for (lhs, rhs) in pairs {
            assert!(
                sg.satisfies(&parse_term(lhs).unwrap(), &parse_term(rhs).unwrap()),
                "{lhs} = {rhs} fails on {:?}",
                sg.table
            );
        }
    }
}
