//! Fixed valence table and hydrogen assignment.
//!
//! Allowed valences: B 3; C 4; N 3,5; O 2; P 3,5; S 2,4,6; halogens 1.
//! A few extra p-block entries (H, Si, As, Se, Te) are included so that
//! bracket atoms of those elements are checked too. Elements without an
//! entry are not checked.

use super::element::Element;
use super::graph::{Atom, MolecularGraph};

fn table(z: u8) -> Option<&'static [u32]> {
    Some(match z {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        33 => &[3, 5],
        34 | 52 => &[2, 4, 6],
        _ => return None,
    })
}

/// Row of the p-block (groups 13-17) containing `z`, if any.
fn p_block_row(z: u8) -> Option<u8> {
    match z {
        5..=9 => Some(2),
        13..=17 => Some(3),
        31..=35 => Some(4),
        49..=53 => Some(5),
        _ => None,
    }
}

/// Allowed valences after charge adjustment.
///
/// A charged p-block atom takes the valences of its isoelectronic neighbour
/// in the same row (N+ behaves like C, O- like F). Outside that, each
/// valence is lowered by the magnitude of the charge.
pub fn allowed_valences(element: Element, charge: i8) -> Option<Vec<u32>> {
    let z = element.atomic_number();
    if charge == 0 {
        return table(z).map(<[u32]>::to_vec);
    }
    let shifted = z as i16 - charge as i16;
    if let (Some(row), true) = (p_block_row(z), (1..=118).contains(&shifted)) {
        if p_block_row(shifted as u8) == Some(row) {
            if let Some(t) = table(shifted as u8) {
                return Some(t.to_vec());
            }
        }
    }
    if shifted >= 1 && p_block_row(z).is_some() {
        // Shifted past the end of the row: Cl-, F- and friends.
        let q = charge.unsigned_abs() as u32;
        return table(z).map(|t| t.iter().map(|v| v.saturating_sub(q)).collect());
    }
    None
}

/// Whether an aromatic atom needs one unit of valence for its pi bond. An
/// exocyclic double or triple bond (as in `O=c1ccoc...`) supplies it instead.
fn aromatic_pi(atom: &Atom, exocyclic_multiple: bool) -> u32 {
    u32::from(atom.aromatic && !exocyclic_multiple && matches!(atom.element.atomic_number(), 5 | 6))
}

/// Implicit hydrogens for a bare (non-bracket) atom with `bonded` valence.
pub fn bare_implicit_h(atom: &Atom, bonded: u32, exocyclic_multiple: bool) -> u8 {
    if atom.aromatic && !matches!(atom.element.atomic_number(), 5 | 6) {
        return 0;
    }
    let Some(allowed) = table(atom.element.atomic_number()) else {
        return 0;
    };
    let used = bonded + aromatic_pi(atom, exocyclic_multiple);
    allowed
        .iter()
        .find(|&&v| v >= used)
        .map_or(0, |&v| (v - used) as u8)
}

/// Whether atom `i` is within its allowed valence.
pub fn atom_valence_ok(mol: &MolecularGraph, i: usize) -> bool {
    let atom = mol.atom(i);
    let Some(allowed) = allowed_valences(atom.element, atom.formal_charge) else {
        return true;
    };
    let used = mol.bonded_valence(i) + atom.total_h() + aromatic_pi(atom, mol.has_multiple_bond(i));
    allowed.iter().any(|&v| used <= v)
}

/// True iff every atom's bonded valence fits its (charge-adjusted) valence set.
pub fn validate_valence(mol: &MolecularGraph) -> bool {
    (0..mol.atom_count()).all(|i| atom_valence_ok(mol, i))
}

/// First atom that violates its valence, if any.
pub fn first_violation(mol: &MolecularGraph) -> Option<usize> {
    (0..mol.atom_count()).find(|&i| !atom_valence_ok(mol, i))
}
