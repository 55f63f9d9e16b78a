use oversquash::graph::{diameter, fa_edges, partial_fa_edges, receptive_field, Diameter, Graph};
use oversquash::neighborsmatch::TreeMatchExample;
use oversquash::oracles::{brute_receptive_field, floyd_warshall_diameter, random_graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[test]
fn diameter_matches_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut finite = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let p = rng.random_range(0.05..0.6);
        let g = random_graph(&mut rng, n, p);
        for undirected in [true, false] {
            let got = diameter(&g, undirected);
            assert_eq!(got, floyd_warshall_diameter(&g, undirected), "{g:?}");
            finite += usize::from(got != Diameter::Unreachable);
        }
    }
    // both branches must be exercised
    assert!(finite > 50 && finite < 390, "{finite}");
}

#[test]
fn receptive_field_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let p = rng.random_range(0.05..0.4);
        let g = random_graph(&mut rng, n, p);
        let v = rng.random_range(0..n);
        for k in 1..=5 {
            assert_eq!(receptive_field(&g, v, k).unwrap(), brute_receptive_field(&g, v, k));
        }
    }
}

#[test]
fn tree_receptive_field_grows_by_level() {
    let g = TreeMatchExample::new(3, (0..8).collect(), 0, 0).unwrap().graph();
    let sizes: Vec<usize> = (1..=4).map(|k| receptive_field(&g, 0, k).unwrap().len()).collect();
    assert_eq!(sizes, vec![2, 6, 14, 14]);
    assert_eq!(diameter(&g, true), Diameter::Finite(6));
    assert_eq!(diameter(&g, false), Diameter::Unreachable);
}

#[test]
fn fa_sizes() {
    for n in 1..=20 {
        let fa = fa_edges(n);
        assert_eq!(fa.len(), n * (n - 1));
        let set: BTreeSet<_> = fa.iter().copied().collect();
        assert_eq!(set.len(), fa.len());
        assert!(fa.iter().all(|&(u, v)| u != v && u < n && v < n));
    }
    assert_eq!(fa_edges(18).len(), 306);
    assert_eq!(partial_fa_edges(7, 0.5, 3).unwrap().len(), 21);
    assert_eq!(partial_fa_edges(10, 0.5, 3).unwrap().len(), 45);
}

proptest! {
    #[test]
    fn partial_fa_is_a_reproducible_subset(n in 1usize..25, p in 0.0f64..=1.0, seed: u64) {
        let a = partial_fa_edges(n, p, seed).unwrap();
        prop_assert_eq!(&a, &partial_fa_edges(n, p, seed).unwrap());
        prop_assert_eq!(a.len(), (p * (n * (n - 1)) as f64).floor() as usize);
        let fa: BTreeSet<_> = fa_edges(n).into_iter().collect();
        prop_assert!(a.iter().all(|e| fa.contains(e)));
        let distinct: BTreeSet<_> = a.iter().collect();
        prop_assert_eq!(distinct.len(), a.len());
    }

    #[test]
    fn receptive_field_is_monotone(seed: u64, n in 1usize..12, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, 0.3);
        let v = rng.random_range(0..n);
        let small = receptive_field(&g, v, k).unwrap();
        let big = receptive_field(&g, v, k + 1).unwrap();
        prop_assert!(small.is_subset(&big));
        prop_assert!(big.len() <= n);
    }

    #[test]
    fn undirected_diameter_of_paths(n in 1usize..30) {
        prop_assert_eq!(diameter(&Graph::path(n), true), Diameter::Finite(n - 1));
    }
}
