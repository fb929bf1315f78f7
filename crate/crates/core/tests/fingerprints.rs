mod common;

use common::{brute_force_morgan, corpus_mols, random_molecule, random_perm};
use molrange_core::chem::parse_smiles;
use molrange_core::fingerprints::{morgan_fingerprint, tanimoto, Fingerprint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_brute_force_on_random_molecules() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(1..=12);
        let m = random_molecule(n, &mut rng);
        for radius in 0..=3 {
            let fp = morgan_fingerprint(&m, radius, 2048).unwrap();
            assert_eq!(fp.on_bits(), brute_force_morgan(&m, radius, 2048));
        }
    }
}

#[test]
fn matches_brute_force_on_small_corpus_molecules() {
    for m in corpus_mols().into_iter().filter(|m| m.atom_count() <= 12) {
        let fp = morgan_fingerprint(&m, 2, 1024).unwrap();
        assert_eq!(fp.on_bits(), brute_force_morgan(&m, 2, 1024));
    }
}

#[test]
fn permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for m in corpus_mols() {
        let fp = morgan_fingerprint(&m, 2, 2048).unwrap();
        assert!(fp.popcount() >= 1);
        for _ in 0..5 {
            let p = m.permuted(&random_perm(m.atom_count(), &mut rng));
            assert_eq!(morgan_fingerprint(&p, 2, 2048).unwrap(), fp);
        }
    }
}

#[test]
fn radius_monotone() {
    for m in corpus_mols() {
        for r in 0..3 {
            let a = morgan_fingerprint(&m, r, 2048).unwrap();
            let b = morgan_fingerprint(&m, r + 1, 2048).unwrap();
            assert!(a.is_subset_of(&b));
        }
    }
}

#[test]
fn similar_molecules_score_higher() {
    let fp = |s| morgan_fingerprint(&parse_smiles(s).unwrap(), 2, 2048).unwrap();
    let phenol = fp("Oc1ccccc1");
    let cresol = fp("Cc1ccc(O)cc1");
    let hexane = fp("CCCCCC");
    assert!(tanimoto(&phenol, &cresol).unwrap() > tanimoto(&phenol, &hexane).unwrap());
}

proptest! {
    #[test]
    fn tanimoto_properties(a in proptest::collection::vec(0usize..256, 0..40),
                           b in proptest::collection::vec(0usize..256, 0..40)) {
        let fa = Fingerprint::from_bits(256, 2, &a).unwrap();
        let fb = Fingerprint::from_bits(256, 2, &b).unwrap();
        let t = tanimoto(&fa, &fb).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(t, tanimoto(&fb, &fa).unwrap());
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
    }
}
