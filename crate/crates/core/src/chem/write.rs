//! SMILES writer.

use std::fmt::Write as _;

use super::graph::{Atom, BondOrder, MolecularGraph};
use super::valence;

/// Write `mol` as SMILES, traversing atoms in input order.
pub fn write_smiles(mol: &MolecularGraph) -> String {
    let ranks: Vec<usize> = (0..mol.atom_count()).collect();
    write_ranked(mol, &ranks).join(".")
}

/// Emit one SMILES string per connected component. Each component starts at
/// its lowest-ranked atom and neighbours are visited in rank order.
pub(crate) fn write_ranked(mol: &MolecularGraph, ranks: &[usize]) -> Vec<String> {
    let n = mol.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (ranks[i], i));
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = mol.neighbors(i).to_vec();
            v.sort_by_key(|&(nb, _)| (ranks[nb], nb));
            v
        })
        .collect();

    let mut visited = vec![false; n];
    let mut out = Vec::new();
    for &start in &order {
        if visited[start] {
            continue;
        }
        let plan = plan_component(mol, start, &sorted_nbrs, &mut visited);
        out.push(emit_component(mol, start, &plan));
    }
    out
}

struct Plan {
    /// DFS tree children, in visit order.
    children: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds opened at each atom (partner, bond), in order.
    ring_opens: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds closed at each atom.
    ring_closes: Vec<Vec<(usize, usize)>>,
}

fn plan_component(
    mol: &MolecularGraph,
    start: usize,
    nbrs: &[Vec<(usize, usize)>],
    visited: &mut [bool],
) -> Plan {
    let n = mol.atom_count();
    let mut plan = Plan {
        children: vec![Vec::new(); n],
        ring_opens: vec![Vec::new(); n],
        ring_closes: vec![Vec::new(); n],
    };
    let mut used_bond = vec![false; mol.bond_count()];
    // Iterative DFS; each frame is (atom, next neighbour index).
    let mut stack = vec![(start, 0usize)];
    visited[start] = true;
    while let Some(&mut (u, ref mut k)) = stack.last_mut() {
        if *k >= nbrs[u].len() {
            stack.pop();
            continue;
        }
        let (v, b) = nbrs[u][*k];
        *k += 1;
        if used_bond[b] {
            continue;
        }
        used_bond[b] = true;
        if visited[v] {
            // Back edge: v is an ancestor still open on the stack.
            plan.ring_opens[v].push((u, b));
            plan.ring_closes[u].push((v, b));
        } else {
            visited[v] = true;
            plan.children[u].push((v, b));
            stack.push((v, 0));
        }
    }
    plan
}

fn bond_symbol(mol: &MolecularGraph, a: usize, order: BondOrder, b: usize) -> &'static str {
    match order {
        BondOrder::Single if mol.atom(a).aromatic && mol.atom(b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

fn emit_component(
    mol: &MolecularGraph,
    start: usize,
    plan: &Plan,
) -> String {
    let mut s = String::new();
    let mut digits_in_use: Vec<bool> = vec![false; 100];
    let mut open_digit = vec![None; mol.bond_count()];

    enum Step {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    let mut stack = vec![Step::Atom(start, None)];
    while let Some(step) = stack.pop() {
        let (u, via) = match step {
            Step::Open => {
                s.push('(');
                continue;
            }
            Step::Close => {
                s.push(')');
                continue;
            }
            Step::Atom(u, via) => (u, via),
        };
        if let Some(b) = via {
            let bond = &mol.bonds()[b];
            s.push_str(bond_symbol(mol, bond.a, bond.order, bond.b));
        }
        s.push_str(&atom_token(mol, u));
        // Ring bonds: closings first (their digits were allocated earlier),
        // then openings in rank order.
        for &(_, b) in &plan.ring_closes[u] {
            if let Some(d) = open_digit[b].take() {
                s.push_str(&ring_label(d));
                digits_in_use[d] = false;
            }
        }
        for &(_, b) in &plan.ring_opens[u] {
            let d = (1..100).find(|&d| !digits_in_use[d]).expect("fewer than 100 open rings");
            digits_in_use[d] = true;
            open_digit[b] = Some(d);
            let bond = &mol.bonds()[b];
            s.push_str(bond_symbol(mol, bond.a, bond.order, bond.b));
            s.push_str(&ring_label(d));
        }
        let kids = &plan.children[u];
        if let Some((&(last, lb), rest)) = kids.split_last() {
            stack.push(Step::Atom(last, Some(lb)));
            for &(c, cb) in rest.iter().rev() {
                stack.push(Step::Close);
                stack.push(Step::Atom(c, Some(cb)));
                stack.push(Step::Open);
            }
        }
    }
    s
}

/// Token for one atom, bare when the bare form reproduces it.
fn atom_token(mol: &MolecularGraph, i: usize) -> String {
    let atom = mol.atom(i);
    if can_write_bare(mol, i, atom) {
        return if atom.aromatic {
            atom.element.symbol().to_ascii_lowercase()
        } else {
            atom.element.symbol().to_string()
        };
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        let _ = write!(s, "{iso}");
    }
    if atom.aromatic {
        s.push_str(&atom.element.symbol().to_ascii_lowercase());
    } else {
        s.push_str(atom.element.symbol());
    }
    match atom.total_h() {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => {
            let _ = write!(s, "+{c}");
        }
        c => {
            let _ = write!(s, "-{}", -c);
        }
    }
    s.push(']');
    s
}

fn can_write_bare(mol: &MolecularGraph, i: usize, atom: &Atom) -> bool {
    if atom.formal_charge != 0 || atom.isotope.is_some() || !atom.element.is_organic_subset() {
        return false;
    }
    if atom.aromatic && !atom.element.is_aromatic_organic() {
        return false;
    }
    let bare = valence::bare_implicit_h(atom, mol.bonded_valence(i), mol.has_multiple_bond(i));
    atom.total_h() == bare as u32
}
