//! Minimum cycle basis via Horton candidates and GF(2) elimination.

use std::collections::VecDeque;

use super::graph::MolecularGraph;

/// Ring perception result. Each ring lists its atoms in cycle order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingInfo {
    pub rings: Vec<Vec<usize>>,
    /// Per ring, the bond indices it uses.
    pub ring_bonds: Vec<Vec<usize>>,
    pub atom_in_ring: Vec<bool>,
    pub bond_in_ring: Vec<bool>,
}

impl RingInfo {
    pub fn count(&self) -> usize {
        self.rings.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.rings.iter().map(Vec::len).collect()
    }
}

/// Rings of a minimum cycle basis, as atom index cycles.
pub fn ring_perception(mol: &MolecularGraph) -> Vec<Vec<usize>> {
    ring_info(mol).rings
}

fn bfs_tree(mol: &MolecularGraph, root: usize) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
    let n = mol.atom_count();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![None; n];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, b) in mol.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                parent[v] = Some((u, b));
                queue.push_back(v);
            }
        }
    }
    (dist, parent)
}

fn path_to_root(parent: &[Option<(usize, usize)>], mut v: usize) -> (Vec<usize>, Vec<usize>) {
    let mut atoms = vec![v];
    let mut bonds = Vec::new();
    while let Some((p, b)) = parent[v] {
        atoms.push(p);
        bonds.push(b);
        v = p;
    }
    (atoms, bonds)
}

type BitRow = Vec<u64>;

fn bit_row(bonds: &[usize], words: usize) -> BitRow {
    let mut row = vec![0u64; words];
    for &b in bonds {
        row[b / 64] ^= 1 << (b % 64);
    }
    row
}

fn leading_bit(row: &BitRow) -> Option<usize> {
    row.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

pub fn ring_info(mol: &MolecularGraph) -> RingInfo {
    let n = mol.atom_count();
    let m = mol.bond_count();
    let target = m + mol.component_count() - n;
    let mut info = RingInfo {
        rings: Vec::new(),
        ring_bonds: Vec::new(),
        atom_in_ring: vec![false; n],
        bond_in_ring: vec![false; m],
    };
    if target == 0 {
        return info;
    }

    // Horton candidates: root v, edge (x, y), shortest paths v-x and v-y
    // that meet only at v.
    let mut candidates: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for v in 0..n {
        let (dist, parent) = bfs_tree(mol, v);
        for (bi, bond) in mol.bonds().iter().enumerate() {
            let (x, y) = (bond.a, bond.b);
            if dist[x] == usize::MAX || parent[x].map(|p| p.1) == Some(bi) || parent[y].map(|p| p.1) == Some(bi) {
                continue;
            }
            let (px, bx) = path_to_root(&parent, x);
            let (py, by) = path_to_root(&parent, y);
            // Paths must share only the root.
            let mut seen = vec![false; n];
            for &a in &px[..px.len() - 1] {
                seen[a] = true;
            }
            if py[..py.len() - 1].iter().any(|&a| seen[a]) {
                continue;
            }
            // v .. x, then y .. back towards v.
            let mut cycle: Vec<usize> = px.iter().rev().copied().collect();
            cycle.extend(py[..py.len() - 1].iter().copied());
            let mut bonds: Vec<usize> = bx.into_iter().chain(by).collect();
            bonds.push(bi);
            if cycle.len() >= 3 {
                let min_pos = cycle
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &a)| a)
                    .map(|(i, _)| i)
                    .unwrap();
                cycle.rotate_left(min_pos);
                if cycle[cycle.len() - 1] < cycle[1] {
                    cycle[1..].reverse();
                }
                bonds.sort_unstable();
                candidates.push((cycle, bonds));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.1.cmp(&b.1)));
    candidates.dedup_by(|a, b| a.1 == b.1);

    let words = m.div_ceil(64);
    let mut basis: Vec<(usize, BitRow)> = Vec::new();
    for (atoms, bonds) in candidates {
        let mut row = bit_row(&bonds, words);
        for (pivot, b) in &basis {
            if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (w, bw) in row.iter_mut().zip(b) {
                    *w ^= bw;
                }
            }
        }
        let Some(pivot) = leading_bit(&row) else {
            continue;
        };
        // Keep the basis fully reduced on its pivots.
        for (_, b) in basis.iter_mut() {
            if b[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (bw, w) in b.iter_mut().zip(&row) {
                    *bw ^= w;
                }
            }
        }
        basis.push((pivot, row));
        for &a in &atoms {
            info.atom_in_ring[a] = true;
        }
        for &b in &bonds {
            info.bond_in_ring[b] = true;
        }
        info.rings.push(atoms);
        info.ring_bonds.push(bonds);
        if info.rings.len() == target {
            break;
        }
    }
    info
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn sizes(s: &str) -> Vec<usize> {
        let mut v = ring_info(&parse_smiles(s).unwrap()).sizes();
        v.sort_unstable();
        v
    }

    #[test]
    fn simple_rings() {
        assert_eq!(sizes("c1ccccc1"), vec![6]);
        assert!(sizes("CCO").is_empty());
        assert_eq!(sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(sizes("C1CC1"), vec![3]);
        assert_eq!(sizes("C12C3C4C1C5C2C3C45"), vec![4, 4, 4, 4, 4]);
        assert_eq!(sizes("C1CC2CCC1CC2"), vec![6, 6]);
    }

    #[test]
    fn membership() {
        let mol = parse_smiles("c1ccccc1CC").unwrap();
        let info = ring_info(&mol);
        assert_eq!(info.atom_in_ring, vec![true, true, true, true, true, true, false, false]);
        assert_eq!(info.bond_in_ring.iter().filter(|b| **b).count(), 6);
    }
}
