use thiserror::Error;

use super::element::Element;
use super::valence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bonded valence; aromatic bonds count as one.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Small integer code used by hashing and ranking.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Hydrogen count written inside brackets; `None` for bare atoms.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    /// Hydrogens implied by the valence model; always 0 for bracket atoms.
    pub implicit_h: u8,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Self {
            element,
            formal_charge: 0,
            aromatic: false,
            explicit_h: None,
            isotope: None,
            implicit_h: 0,
        }
    }

    pub fn aromatic(element: Element) -> Self {
        Self {
            aromatic: true,
            ..Self::new(element)
        }
    }

    pub fn total_h(&self) -> u32 {
        self.explicit_h.unwrap_or(0) as u32 + self.implicit_h as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Self { a, b, order }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {0} joins an atom to itself")]
    SelfLoop(usize),
    #[error("bond {bond} refers to atom {atom} but there are {count} atoms")]
    OutOfBounds { bond: usize, atom: usize, count: usize },
    #[error("duplicate bond between atoms {0} and {1}")]
    Duplicate(usize, usize),
    #[error("aromatic bond {0} has a non-aromatic endpoint")]
    AromaticMismatch(usize),
}

/// Atoms, bonds and the derived adjacency lists of one molecule (possibly
/// with several disconnected components).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    /// Build a graph, checking structural invariants. Implicit hydrogens of
    /// bare atoms are recomputed from the valence model.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let mut g = Self::from_parts(atoms, bonds)?;
        g.assign_implicit_h();
        Ok(g)
    }

    /// Build a graph keeping the `implicit_h` values as given.
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, b) in bonds.iter().enumerate() {
            for atom in [b.a, b.b] {
                if atom >= n {
                    return Err(GraphError::OutOfBounds {
                        bond: i,
                        atom,
                        count: n,
                    });
                }
            }
            if b.a == b.b {
                return Err(GraphError::SelfLoop(i));
            }
            if adjacency[b.a].iter().any(|&(nb, _)| nb == b.b) {
                return Err(GraphError::Duplicate(b.a.min(b.b), b.a.max(b.b)));
            }
            if b.order == BondOrder::Aromatic && !(atoms[b.a].aromatic && atoms[b.b].aromatic) {
                return Err(GraphError::AromaticMismatch(i));
            }
            adjacency[b.a].push((b.b, i));
            adjacency[b.b].push((b.a, i));
        }
        Ok(Self {
            atoms,
            bonds,
            adjacency,
        })
    }

    fn assign_implicit_h(&mut self) {
        for i in 0..self.atoms.len() {
            let h = if self.atoms[i].explicit_h.is_some() {
                0
            } else {
                valence::bare_implicit_h(&self.atoms[i], self.bonded_valence(i), self.has_multiple_bond(i))
            };
            self.atoms[i].implicit_h = h;
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbor, bond index)` pairs of atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    /// Sum of bond valence contributions at atom `i`.
    pub fn bonded_valence(&self, i: usize) -> u32 {
        self.adjacency[i]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    /// Whether atom `i` has a double or triple bond.
    pub fn has_multiple_bond(&self, i: usize) -> bool {
        self.adjacency[i]
            .iter()
            .any(|&(_, b)| matches!(self.bonds[b].order, BondOrder::Double | BondOrder::Triple))
    }

    /// Connected component label per atom, numbered in order of first atom.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let n = self.atoms.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = count;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().1
    }

    /// Graph with atom `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.atoms.len());
        let mut atoms = vec![None; self.atoms.len()];
        for (i, &p) in perm.iter().enumerate() {
            atoms[p] = Some(self.atoms[i].clone());
        }
        let atoms = atoms.into_iter().map(|a| a.expect("perm is a bijection")).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond::new(perm[b.a], perm[b.b], b.order))
            .collect();
        Self::from_parts(atoms, bonds).expect("permutation preserves invariants")
    }
}
