//! Canonical SMILES by iterative rank refinement with exhaustive tie
//! breaking over the lowest tied class.

use super::graph::MolecularGraph;
use super::write::write_ranked;

/// Upper bound on tie-breaking leaves explored per molecule. Past this the
/// search follows only the first member of each tied class.
const LEAF_BUDGET: usize = 256;

fn initial_key(mol: &MolecularGraph, i: usize) -> (u8, i8, usize, bool, u32, u16) {
    let a = mol.atom(i);
    (
        a.element.atomic_number(),
        a.formal_charge,
        mol.degree(i),
        a.aromatic,
        a.total_h(),
        a.isotope.unwrap_or(0),
    )
}

/// Replace arbitrary sortable keys by dense ranks 0..k.
fn densify<K: Ord + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    let ranks = keys
        .iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect();
    (ranks, sorted.len())
}

/// Refine `ranks` by neighbourhood until the number of classes is stable.
fn refine(mol: &MolecularGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut count = {
        let mut r = ranks.clone();
        r.sort_unstable();
        r.dedup();
        r.len()
    };
    loop {
        let keys: Vec<(usize, Vec<(usize, u64)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (ranks[j], mol.bonds()[b].order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let (next, next_count) = densify(&keys);
        ranks = next;
        if next_count == count {
            return ranks;
        }
        count = next_count;
    }
}

/// Equivalence classes after refinement (no tie breaking). Atoms in the same
/// class are topologically indistinguishable to the refinement.
pub fn refinement_classes(mol: &MolecularGraph) -> Vec<usize> {
    let keys: Vec<_> = (0..mol.atom_count()).map(|i| initial_key(mol, i)).collect();
    refine(mol, densify(&keys).0)
}

fn lowest_tied_class(ranks: &[usize]) -> Option<Vec<usize>> {
    let mut counts = vec![0usize; ranks.len()];
    for &r in ranks {
        counts[r] += 1;
    }
    let class = counts.iter().position(|&c| c > 1)?;
    Some((0..ranks.len()).filter(|&i| ranks[i] == class).collect())
}

fn break_tie(mol: &MolecularGraph, ranks: &[usize], chosen: usize) -> Vec<usize> {
    let class = ranks[chosen];
    let keys: Vec<(usize, bool)> = ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, r == class && i != chosen))
        .collect();
    refine(mol, densify(&keys).0)
}

fn emit(mol: &MolecularGraph, ranks: &[usize]) -> String {
    let mut parts = write_ranked(mol, ranks);
    parts.sort();
    parts.join(".")
}

struct Search<'a> {
    mol: &'a MolecularGraph,
    leaves: usize,
    best: Option<String>,
}

impl Search<'_> {
    /// Follow first members only down to a discrete ranking.
    fn first_leaf(&self, mut ranks: Vec<usize>) -> Vec<usize> {
        while let Some(members) = lowest_tied_class(&ranks) {
            ranks = break_tie(self.mol, &ranks, members[0]);
        }
        ranks
    }

    /// Whether mapping the atom of rank r in `a` to the atom of rank r in
    /// `b` preserves the graph.
    fn is_automorphism(&self, a: &[usize], b: &[usize]) -> bool {
        let n = a.len();
        let mut by_rank = vec![0; n];
        for (i, &r) in b.iter().enumerate() {
            by_rank[r] = i;
        }
        let map: Vec<usize> = a.iter().map(|&r| by_rank[r]).collect();
        (0..n).all(|i| initial_key(self.mol, i) == initial_key(self.mol, map[i]))
            && self.mol.bonds().iter().all(|bond| {
                self.mol
                    .bond_between(map[bond.a], map[bond.b])
                    .is_some_and(|o| o.order == bond.order)
            })
    }

    fn leaf(&mut self, ranks: &[usize]) {
        self.leaves += 1;
        let s = emit(self.mol, ranks);
        if self.best.as_ref().is_none_or(|b| s < *b) {
            self.best = Some(s);
        }
    }

    /// Explore the subtree under `ranks`. Sibling branches whose first leaf
    /// is an automorphic image of an explored one are skipped.
    fn visit(&mut self, ranks: Vec<usize>) {
        let Some(members) = lowest_tied_class(&ranks) else {
            self.leaf(&ranks);
            return;
        };
        let mut explored: Vec<Vec<usize>> = Vec::new();
        for &m in &members {
            if !explored.is_empty() && self.leaves >= LEAF_BUDGET {
                break;
            }
            let next = break_tie(self.mol, &ranks, m);
            let probe = self.first_leaf(next.clone());
            if explored.iter().any(|e| self.is_automorphism(e, &probe)) {
                continue;
            }
            explored.push(probe);
            self.visit(next);
        }
    }
}

/// Canonical SMILES: independent of atom input order and deterministic.
/// Fragments are emitted separately and joined in sorted order.
pub fn canonical_smiles(mol: &MolecularGraph) -> String {
    if mol.is_empty() {
        return String::new();
    }
    let mut search = Search {
        mol,
        leaves: 0,
        best: None,
    };
    search.visit(refinement_classes(mol));
    search.best.expect("at least one leaf")
}

/// Convenience: parse then canonicalize.
pub fn canonicalize(smiles: &str) -> Result<String, super::ParseDiagnostic> {
    super::parse_smiles(smiles).map(|m| canonical_smiles(&m))
}
