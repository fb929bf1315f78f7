//! Morgan (ECFP-style) circular fingerprints and Tanimoto similarity.
//!
//! Radius-0 identifiers hash the atom invariant (atomic number, formal
//! charge, heavy degree, aromatic flag, total H). At radius r each identifier
//! hashes `(r, previous identifier, sorted (bond code, neighbour identifier))`.
//! An environment is dropped when its atom set did not grow from the
//! previous radius, or when the same atom set was already emitted with the
//! same identifier. Bit index is identifier mod width.

use std::fmt::Write as _;

use thiserror::Error;

use crate::chem::MolecularGraph;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_BITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("molecule has no heavy atoms")]
    EmptyMolecule,
    #[error("fingerprint width {0} is not a power of two >= 64")]
    InvalidWidth(usize),
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("invalid hex fingerprint: {0}")]
    InvalidHex(String),
}

const SEED: u64 = 0x243f_6a88_85a3_08d3;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless 64-bit hash over a sequence of words (splitmix64 finalizer
/// applied after each word).
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = SEED ^ (words.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &w in words {
        h = mix(h.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15));
    }
    h
}

/// Radius-0 identifier of atom `i`.
pub fn atom_invariant(mol: &MolecularGraph, i: usize) -> u64 {
    let a = mol.atom(i);
    hash_words(&[
        a.element.atomic_number() as u64,
        a.formal_charge as i64 as u64,
        mol.degree(i) as u64,
        a.aromatic as u64,
        a.total_h() as u64,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomEnvironment {
    pub center: usize,
    pub radius: usize,
    pub identifier: u64,
}

/// Environments for radii `0..=radius`, in order of radius then atom index.
pub fn enumerate_environments(mol: &MolecularGraph, radius: usize) -> Vec<AtomEnvironment> {
    let n = mol.atom_count();
    let mut ids: Vec<u64> = (0..n).map(|i| atom_invariant(mol, i)).collect();
    // Atom sets as sorted index lists.
    let mut sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut emitted: Vec<(Vec<usize>, u64)> = Vec::new();
    let mut out = Vec::new();
    let mut push = |center: usize, r: usize, id: u64, set: &Vec<usize>, out: &mut Vec<AtomEnvironment>| {
        if emitted.iter().any(|(s, e)| *e == id && s == set) {
            return;
        }
        emitted.push((set.clone(), id));
        out.push(AtomEnvironment {
            center,
            radius: r,
            identifier: id,
        });
    };
    for i in 0..n {
        push(i, 0, ids[i], &sets[i], &mut out);
    }
    for r in 1..=radius {
        let mut next_ids = Vec::with_capacity(n);
        let mut next_sets = Vec::with_capacity(n);
        for i in 0..n {
            let mut nb: Vec<(u64, u64)> = mol
                .neighbors(i)
                .iter()
                .map(|&(j, b)| (mol.bonds()[b].order.code(), ids[j]))
                .collect();
            nb.sort_unstable();
            let mut words = vec![r as u64, ids[i]];
            for (code, id) in nb {
                words.push(code);
                words.push(id);
            }
            next_ids.push(hash_words(&words));
            let mut set = sets[i].clone();
            for &(j, _) in mol.neighbors(i) {
                set.extend_from_slice(&sets[j]);
            }
            set.sort_unstable();
            set.dedup();
            next_sets.push(set);
        }
        for i in 0..n {
            if next_sets[i].len() > sets[i].len() {
                push(i, r, next_ids[i], &next_sets[i], &mut out);
            }
        }
        ids = next_ids;
        sets = next_sets;
    }
    out
}

/// Fixed-width bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    n_bits: usize,
    radius: usize,
}

fn check_width(n_bits: usize) -> Result<(), FingerprintError> {
    if n_bits >= 64 && n_bits.is_power_of_two() {
        Ok(())
    } else {
        Err(FingerprintError::InvalidWidth(n_bits))
    }
}

impl Fingerprint {
    pub fn empty(n_bits: usize, radius: usize) -> Result<Self, FingerprintError> {
        check_width(n_bits)?;
        Ok(Self {
            words: vec![0; n_bits / 64],
            n_bits,
            radius,
        })
    }

    pub fn from_bits(n_bits: usize, radius: usize, on: &[usize]) -> Result<Self, FingerprintError> {
        let mut fp = Self::empty(n_bits, radius)?;
        for &b in on {
            fp.set(b % n_bits);
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// On-bit indices in ascending order.
    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.n_bits).filter(|&b| self.get(b)).collect()
    }

    pub fn is_subset_of(&self, other: &Fingerprint) -> bool {
        self.n_bits == other.n_bits && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Hex string, most significant bit (index `n_bits - 1`) first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.n_bits / 4);
        for w in self.words.iter().rev() {
            let _ = write!(s, "{w:016x}");
        }
        s
    }

    pub fn from_hex(hex: &str, radius: usize) -> Result<Self, FingerprintError> {
        let n_bits = hex.len() * 4;
        check_width(n_bits)?;
        let words = hex
            .as_bytes()
            .chunks(16)
            .rev()
            .map(|c| {
                std::str::from_utf8(c)
                    .ok()
                    .and_then(|s| u64::from_str_radix(s, 16).ok())
                    .ok_or_else(|| FingerprintError::InvalidHex(hex.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            words,
            n_bits,
            radius,
        })
    }
}

pub fn morgan_fingerprint(
    mol: &MolecularGraph,
    radius: usize,
    n_bits: usize,
) -> Result<Fingerprint, FingerprintError> {
    check_width(n_bits)?;
    if mol.is_empty() {
        return Err(FingerprintError::EmptyMolecule);
    }
    let mut fp = Fingerprint::empty(n_bits, radius)?;
    for env in enumerate_environments(mol, radius) {
        fp.set((env.identifier % n_bits as u64) as usize);
    }
    Ok(fp)
}

/// |a ∧ b| / |a ∨ b|, with two all-zero fingerprints scoring 1.0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.n_bits != b.n_bits {
        return Err(FingerprintError::WidthMismatch(a.n_bits, b.n_bits));
    }
    let (mut and, mut or) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        and += (x & y).count_ones();
        or += (x | y).count_ones();
    }
    Ok(if or == 0 { 1.0 } else { and as f64 / or as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        morgan_fingerprint(&parse_smiles(s).unwrap(), 2, 2048).unwrap()
    }

    #[test]
    fn small_molecules() {
        assert_eq!(fp("C").popcount(), 1);
        assert!(fp("CC").popcount() <= 2);
        let envs = enumerate_environments(&parse_smiles("C").unwrap(), 2);
        assert_eq!(envs.len(), 1);
        assert_eq!((envs[0].center, envs[0].radius), (0, 0));
    }

    #[test]
    fn ethanol_environments() {
        let envs = enumerate_environments(&parse_smiles("CCO").unwrap(), 1);
        assert_eq!(envs.len(), 6);
        let mut ids: Vec<u64> = envs.iter().map(|e| e.identifier).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn errors() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(morgan_fingerprint(&m, 2, 100), Err(FingerprintError::InvalidWidth(100)));
        assert_eq!(morgan_fingerprint(&m, 2, 32), Err(FingerprintError::InvalidWidth(32)));
        let empty = MolecularGraph::new(vec![], vec![]).unwrap();
        assert_eq!(morgan_fingerprint(&empty, 2, 64), Err(FingerprintError::EmptyMolecule));
        let a = Fingerprint::empty(64, 2).unwrap();
        let b = Fingerprint::empty(128, 2).unwrap();
        assert_eq!(tanimoto(&a, &b), Err(FingerprintError::WidthMismatch(64, 128)));
    }

    #[test]
    fn tanimoto_values() {
        let a = Fingerprint::from_bits(64, 2, &[1, 2, 3, 4]).unwrap();
        let b = Fingerprint::from_bits(64, 2, &[3, 4, 5]).unwrap();
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.4);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_bits(64, 2, &[10, 11]).unwrap();
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let z = Fingerprint::empty(64, 2).unwrap();
        assert_eq!(tanimoto(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn hex_round_trip() {
        let a = Fingerprint::from_bits(64, 2, &[0, 63]).unwrap();
        assert_eq!(a.to_hex(), "8000000000000001");
        let f = fp("c1ccccc1O");
        assert_eq!(Fingerprint::from_hex(&f.to_hex(), 2).unwrap(), f);
        assert_eq!(f.to_hex().len(), 512);
    }
}
