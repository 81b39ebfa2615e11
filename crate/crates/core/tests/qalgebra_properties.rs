use proptest::prelude::*;
use qsb_core::qalgebra::*;
use qsb_core::scalar::{crat, rat};
use qsb_core::{ComplexRational, NcPoly, Rational};

/// C = A Aᵀ with small integer A is positive semidefinite by construction.
fn gram_cov(a: &[i64], k: usize) -> Vec<Vec<Rational>> {
    (0..k)
        .map(|i| (0..k).map(|j| (0..k).map(|m| rat(a[i * k + m] * a[j * k + m], 4)).sum()).collect())
        .collect()
}

fn family() -> impl Strategy<Value = GaussianFamily<Rational>> {
    (-5i64..=5, prop::collection::vec(-3i64..=3, 4))
        .prop_filter_map("covariance needs a positive diagonal", |(qn, a)| {
            let cov = gram_cov(&a, 2);
            (cov[0][0] > rat(0, 1) && cov[1][1] > rat(0, 1)).then(|| GaussianFamily::new(rat(qn, 5), cov).unwrap())
        })
}

fn complex_letters(raw: &[(i64, i64, i64, i64)]) -> Vec<Letter<ComplexRational>> {
    raw.iter().map(|&(a, b, c, d)| Letter::new(vec![crat(rat(a, 1), rat(b, 1)), crat(rat(c, 1), rat(d, 1))])).collect()
}

fn lift(f: &GaussianFamily<Rational>) -> GaussianFamily<ComplexRational> {
    let cov = f.covariance().iter().map(|r| r.iter().map(|c| crat(c.clone(), rat(0, 1))).collect()).collect();
    GaussianFamily::new(crat(f.q().clone(), rat(0, 1)), cov).unwrap()
}

fn letter_strategy(max: usize) -> impl Strategy<Value = Vec<(i64, i64, i64, i64)>> {
    prop::collection::vec((-2i64..=2, -2i64..=2, -2i64..=2, -2i64..=2), 0..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wick_words_annihilate_lower_monomials(f in family(), u in prop::collection::vec(0usize..2, 1..=5), v in prop::collection::vec(0usize..2, 0..5)) {
        prop_assume!(v.len() < u.len());
        let w = wick_word(&u, &f).unwrap();
        prop_assert_eq!(tau(&w.mul(&NcPoly::word(v)), &f).unwrap(), rat(0, 1));
    }

    #[test]
    fn wick_commutes_with_adjoint(f in family(), raw in letter_strategy(5)) {
        let f = lift(&f);
        let letters = complex_letters(&raw);
        let reversed: Vec<_> = letters.iter().rev().map(|l| l.adjoint()).collect();
        prop_assert_eq!(wick_closed(&reversed, &f).unwrap(), wick_closed(&letters, &f).unwrap().adjoint());
    }

    #[test]
    fn wick_inner_matches_expansion(f in family(), a in letter_strategy(4), b in letter_strategy(4)) {
        let f = lift(&f);
        let (u, v) = (complex_letters(&a), complex_letters(&b));
        let direct = tau(&wick_closed(&u, &f).unwrap().mul(&wick_closed(&v, &f).unwrap().adjoint()), &f).unwrap();
        prop_assert_eq!(wick_inner(&u, &v, &f).unwrap(), direct);
    }

    #[test]
    fn conditional_expectation_is_a_contraction(
        qn in -4i64..=4,
        a in prop::collection::vec(-3i64..=3, 9),
        terms in prop::collection::vec((prop::collection::vec(0usize..3, 0..=4), -4i64..=4), 1..5),
    ) {
        let cov = gram_cov(&a, 3);
        prop_assume!((0..3).all(|i| cov[i][i] > rat(0, 1)));
        let f = GaussianFamily::new(rat(qn, 5), cov).unwrap();
        let mut elem = NcPoly::zero();
        for (w, c) in terms {
            elem = elem.add(&NcPoly::term(w, rat(c, 1)));
        }
        let once = conditional_expectation(&elem, &[0, 2], &f, 4).unwrap();
        let twice = conditional_expectation(&once.value, &[0, 2], &f, 4).unwrap();
        prop_assert_eq!(&twice.value, &once.value);
        let norm = |p: &NcPoly<Rational>| tau(&p.mul(&p.adjoint()), &f).unwrap();
        prop_assert!(norm(&once.value) <= norm(&elem));
    }

    #[test]
    fn tower_property_for_independent_blocks(
        qn in -4i64..=4,
        vars in prop::collection::vec(1i64..=4, 3),
        terms in prop::collection::vec((prop::collection::vec(0usize..2, 0..=4), -4i64..=4), 1..5),
    ) {
        let f = GaussianFamily::new(rat(qn, 5), diagonal(&vars.iter().map(|&v| rat(v, 2)).collect::<Vec<_>>())).unwrap();
        let mut elem = NcPoly::zero();
        for (w, c) in terms {
            elem = elem.add(&NcPoly::term(w, rat(c, 1)));
        }
        let onto_xz = conditional_expectation(&elem, &[0, 2], &f, 4).unwrap();
        let onto_x = conditional_expectation(&elem, &[0], &f, 4).unwrap();
        prop_assert_eq!(onto_xz.value, onto_x.value);
    }
}

#[test]
fn closed_form_matches_recursion_for_length_seven() {
    for (q, a) in [(rat(3, 5), [1, 2, 0, 1]), (rat(-4, 5), [2, -1, 1, 1]), (rat(1, 1), [1, 0, 1, 3])] {
        let f = GaussianFamily::new(q, gram_cov(&a, 2)).unwrap();
        for w in NcPoly::<Rational>::all_words(&[0, 1], 7).into_iter().filter(|w| w.len() == 7) {
            let letters = generator_letters(&w, 2);
            assert_eq!(wick_closed(&letters, &f).unwrap(), wick_recursive(&letters, &f).unwrap(), "{w:?}");
        }
    }
}
