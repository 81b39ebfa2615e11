use nalgebra::DMatrix;
use proptest::prelude::*;
use qsb_core::mixedfock::*;
use qsb_core::scalar::rat;
use qsb_core::{NcPoly, Polynomial, Rational};

fn symmetric(n: usize, upper: &[f64]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    let mut it = upper.iter();
    for i in 0..n {
        for j in i..n {
            let v = *it.next().unwrap();
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn rational_spec(n: usize, upper: &[i64]) -> MixedQSpec<Rational> {
    let mut m = vec![vec![rat(0, 1); n]; n];
    let mut it = upper.iter();
    for i in 0..n {
        for j in i..n {
            let v = rat(*it.next().unwrap(), 4);
            m[i][j] = v.clone();
            m[j][i] = v;
        }
    }
    MixedQSpec::new(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_matrix_is_positive(upper in prop::collection::vec(-1.0f64..=1.0, 6)) {
        let spec = MixedQSpec::new(symmetric(3, &upper)).unwrap();
        for len in 1..=4 {
            let words: Vec<Vec<usize>> = NcPoly::<f64>::all_words(&[0, 1, 2], len).into_iter().filter(|w| w.len() == len).collect();
            let g = DMatrix::from_fn(words.len(), words.len(), |a, b| fock_inner(&words[a], &words[b], &spec).unwrap());
            let min = g.symmetric_eigen().eigenvalues.min();
            prop_assert!(min >= -1e-9, "length {}: min eigenvalue {}", len, min);
        }
    }

    #[test]
    fn creation_is_adjoint_to_annihilation(
        upper in prop::collection::vec(-4i64..=4, 10),
        u in prop::collection::vec(0usize..4, 1..=6),
        v in prop::collection::vec(0usize..4, 0..=5),
        i in 0usize..4,
    ) {
        let spec = rational_spec(4, &upper);
        let (uv, vv) = (NcPoly::word(u), NcPoly::word(v));
        let lhs = fock_inner_vec(&annihilate(i, &uv, &spec), &vv, &spec).unwrap();
        let rhs = fock_inner_vec(&uv, &create(i, &vv, 6), &spec).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn commutation_relations(upper in prop::collection::vec(-4i64..=4, 10), v in prop::collection::vec(0usize..4, 0..=5), i in 0usize..4, j in 0usize..4) {
        let spec = rational_spec(4, &upper);
        let vec = NcPoly::word(v);
        let lhs = annihilate(i, &create(j, &vec, 6), &spec).sub(&create(j, &annihilate(i, &vec, &spec), 6).scale(spec.get(i, j)));
        let rhs = if i == j { vec } else { NcPoly::zero() };
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn moments_match_vacuum_expectation(upper in prop::collection::vec(-4i64..=4, 10), w in prop::collection::vec(0usize..4, 0..=6)) {
        let spec = rational_spec(4, &upper);
        prop_assert_eq!(mixed_moment(&w, &spec).unwrap(), vacuum_expectation(&w, &spec).unwrap());
    }

    #[test]
    fn theorem4_error_is_relabeling_invariant(upper in prop::collection::vec(prop::sample::select(vec![-4i64, 4]), 10), perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(), m in 2usize..=3) {
        let spec = rational_spec(4, &upper);
        let permuted = MixedQSpec::new((0..4).map(|a| (0..4).map(|b| spec.get(perm[a], perm[b]).clone()).collect()).collect()).unwrap();
        let p = Polynomial::monomial(m);
        let one = rat(1, 1);
        let a = theorem4_error(&p, &spec, &rat(1, 2), &one, &one, 4).unwrap();
        let b = theorem4_error(&p, &permuted, &rat(1, 2), &one, &one, 4).unwrap();
        prop_assert_eq!(a, b);
    }
}
