//! Thirty graph-computable molecular attributes.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::chem::{refinement_classes, ring_info, BondOrder, Element, MolecularGraph};

pub const SCHEMA_VERSION: u32 = 1;
pub const N_DESCRIPTORS: usize = 30;
pub const N_BINS: usize = 30;

pub const NAMES: [&str; N_DESCRIPTORS] = [
    "mol_weight",
    "heavy_atoms",
    "bonds",
    "rings",
    "aromatic_atoms",
    "aromatic_rings",
    "heteroatoms",
    "n_count",
    "o_count",
    "s_count",
    "halogens",
    "hbond_donors",
    "hbond_acceptors",
    "rotatable_bonds",
    "net_charge",
    "positive_atoms",
    "negative_atoms",
    "frac_csp3",
    "max_ring_size",
    "min_ring_size",
    "diameter",
    "wiener",
    "zagreb1",
    "zagreb2",
    "randic",
    "avg_degree",
    "ipc_entropy",
    "ring_atoms",
    "hydrogens",
    "double_bonds",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("molecule has no heavy atoms")]
    EmptyMolecule,
    #[error("descriptor corpus is empty or too small")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub values: [f64; N_DESCRIPTORS],
    pub schema_version: u32,
}

impl DescriptorSet {
    pub fn get(&self, name: &str) -> Option<f64> {
        NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// Shortest path lengths from `s` (usize::MAX when unreachable).
pub fn bfs_distances(mol: &MolecularGraph, s: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; mol.atom_count()];
    d[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &(v, _) in mol.neighbors(u) {
            if d[v] == usize::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

/// Wiener index and diameter, each summed over connected components.
pub fn wiener_and_diameter(mol: &MolecularGraph) -> (u64, u64) {
    let (labels, count) = mol.component_labels();
    let mut wiener = 0u64;
    let mut diam = vec![0u64; count];
    for s in 0..mol.atom_count() {
        for (t, &d) in bfs_distances(mol, s).iter().enumerate() {
            if t > s && d != usize::MAX {
                wiener += d as u64;
                diam[labels[s]] = diam[labels[s]].max(d as u64);
            }
        }
    }
    (wiener, diam.iter().sum())
}

pub fn compute_descriptors(mol: &MolecularGraph) -> Result<DescriptorSet, DescriptorError> {
    if mol.is_empty() {
        return Err(DescriptorError::EmptyMolecule);
    }
    let n = mol.atom_count();
    let atoms = mol.atoms();
    let rings = ring_info(mol);
    let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count() as f64;
    let z = |i: usize| atoms[i].element.atomic_number();

    let mass: f64 = atoms
        .iter()
        .map(|a| {
            let heavy = a.isotope.map_or(a.element.mass(), f64::from);
            heavy + a.total_h() as f64 * Element::H.mass()
        })
        .sum();
    let aromatic_rings = rings
        .rings
        .iter()
        .filter(|r| r.iter().all(|&i| atoms[i].aromatic))
        .count();
    let rotatable = mol
        .bonds()
        .iter()
        .enumerate()
        .filter(|&(bi, b)| {
            b.order == BondOrder::Single
                && !rings.bond_in_ring[bi]
                && mol.degree(b.a) > 1
                && mol.degree(b.b) > 1
        })
        .count();
    let carbons = count(&|i| z(i) == 6);
    let sp3 = count(&|i| {
        z(i) == 6
            && !atoms[i].aromatic
            && mol
                .neighbors(i)
                .iter()
                .all(|&(_, b)| mol.bonds()[b].order == BondOrder::Single)
    });
    let sizes = rings.sizes();
    let (wiener, diameter) = wiener_and_diameter(mol);
    let deg = |i: usize| mol.degree(i) as f64;
    let zagreb1: f64 = (0..n).map(|i| deg(i) * deg(i)).sum();
    let zagreb2: f64 = mol.bonds().iter().map(|b| deg(b.a) * deg(b.b)).sum();
    let randic: f64 = mol
        .bonds()
        .iter()
        .map(|b| 1.0 / (deg(b.a) * deg(b.b)).sqrt())
        .sum();

    let classes = refinement_classes(mol);
    let mut class_sizes = vec![0usize; n];
    for c in classes {
        class_sizes[c] += 1;
    }
    let entropy: f64 = class_sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();

    let values = [
        mass,
        n as f64,
        mol.bond_count() as f64,
        rings.count() as f64,
        count(&|i| atoms[i].aromatic),
        aromatic_rings as f64,
        count(&|i| !matches!(z(i), 1 | 6)),
        count(&|i| z(i) == 7),
        count(&|i| z(i) == 8),
        count(&|i| z(i) == 16),
        count(&|i| atoms[i].element.is_halogen()),
        count(&|i| matches!(z(i), 7 | 8) && atoms[i].total_h() >= 1),
        count(&|i| matches!(z(i), 7 | 8)),
        rotatable as f64,
        atoms.iter().map(|a| a.formal_charge as f64).sum(),
        count(&|i| atoms[i].formal_charge > 0),
        count(&|i| atoms[i].formal_charge < 0),
        if carbons > 0.0 { sp3 / carbons } else { 0.0 },
        sizes.iter().copied().max().unwrap_or(0) as f64,
        sizes.iter().copied().min().unwrap_or(0) as f64,
        diameter as f64,
        wiener as f64,
        zagreb1,
        zagreb2,
        randic,
        2.0 * mol.bond_count() as f64 / n as f64,
        entropy * n as f64,
        rings.atom_in_ring.iter().filter(|&&r| r).count() as f64,
        atoms.iter().map(|a| a.total_h() as f64).sum(),
        mol.bonds().iter().filter(|b| b.order == BondOrder::Double).count() as f64,
    ];
    Ok(DescriptorSet {
        values,
        schema_version: SCHEMA_VERSION,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub schema_version: u32,
}

/// Per-column min, max, mean and population standard deviation.
pub fn fit_stats(corpus: &[DescriptorSet]) -> Result<DescriptorStats, DescriptorError> {
    if corpus.is_empty() {
        return Err(DescriptorError::EmptyCorpus);
    }
    let n = corpus.len() as f64;
    let mut stats = DescriptorStats {
        min: vec![f64::INFINITY; N_DESCRIPTORS],
        max: vec![f64::NEG_INFINITY; N_DESCRIPTORS],
        mean: vec![0.0; N_DESCRIPTORS],
        std: vec![0.0; N_DESCRIPTORS],
        schema_version: SCHEMA_VERSION,
    };
    for d in corpus {
        for (j, &v) in d.values.iter().enumerate() {
            stats.min[j] = stats.min[j].min(v);
            stats.max[j] = stats.max[j].max(v);
            stats.mean[j] += v;
        }
    }
    for m in &mut stats.mean {
        *m /= n;
    }
    for d in corpus {
        for (j, &v) in d.values.iter().enumerate() {
            stats.std[j] += (v - stats.mean[j]).powi(2);
        }
    }
    for s in &mut stats.std {
        *s = (*s / n).sqrt();
    }
    Ok(stats)
}

impl DescriptorStats {
    /// Equal-width bin in `0..N_BINS` over [min, max]; values are clamped and
    /// a degenerate range maps to bin 0.
    pub fn bin(&self, column: usize, value: f64) -> usize {
        let (lo, hi) = (self.min[column], self.max[column]);
        if hi <= lo || value.is_nan() {
            return 0;
        }
        let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((t * N_BINS as f64) as usize).min(N_BINS - 1)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Greedy scan in column order: a column is dropped when its absolute Pearson
/// correlation with any retained column exceeds `threshold`. Constant columns
/// have correlation 0 with everything.
pub fn redundancy_filter(columns: &[Vec<f64>], threshold: f64) -> Result<Vec<usize>, DescriptorError> {
    if columns.is_empty() || columns[0].len() < 2 {
        return Err(DescriptorError::EmptyCorpus);
    }
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..columns.len() {
        if kept
            .iter()
            .all(|&k| pearson(&columns[k], &columns[j]).abs() <= threshold)
        {
            kept.push(j);
        }
    }
    Ok(kept)
}

/// `redundancy_filter` over the schema columns of a descriptor corpus.
pub fn redundancy_filter_sets(corpus: &[DescriptorSet], threshold: f64) -> Result<Vec<usize>, DescriptorError> {
    let columns: Vec<Vec<f64>> = (0..N_DESCRIPTORS)
        .map(|j| corpus.iter().map(|d| d.values[j]).collect())
        .collect();
    redundancy_filter(&columns, threshold)
}

/// CSV header for descriptor export.
pub fn csv_header() -> String {
    format!("smiles,{},fingerprint", NAMES.join(","))
}

pub fn csv_row(smiles: &str, desc: &DescriptorSet, fingerprint_hex: &str) -> String {
    let mut row = String::from(smiles);
    for v in desc.values {
        let _ = write!(row, ",{v}");
    }
    let _ = write!(row, ",{fingerprint_hex}");
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn d(s: &str) -> DescriptorSet {
        compute_descriptors(&parse_smiles(s).unwrap()).unwrap()
    }

    #[test]
    fn methane() {
        let m = d("C");
        assert!((m.get("mol_weight").unwrap() - 16.043).abs() < 1e-3);
        assert_eq!(m.get("heavy_atoms"), Some(1.0));
        assert_eq!(m.get("hydrogens"), Some(4.0));
        for name in ["rings", "wiener", "diameter", "zagreb1", "zagreb2", "randic", "min_ring_size"] {
            assert_eq!(m.get(name), Some(0.0), "{name}");
        }
    }

    #[test]
    fn benzene() {
        let b = d("c1ccccc1");
        assert_eq!(b.get("wiener"), Some(27.0));
        assert_eq!(b.get("aromatic_atoms"), Some(6.0));
        assert_eq!(b.get("aromatic_rings"), Some(1.0));
        assert_eq!(b.get("diameter"), Some(3.0));
        assert_eq!(b.get("frac_csp3"), Some(0.0));
        assert_eq!(b.get("ipc_entropy"), Some(0.0));
    }

    #[test]
    fn propane_and_ethanol() {
        assert_eq!(d("CCC").get("zagreb1"), Some(6.0));
        let e = d("CCO");
        assert_eq!(e.get("hbond_donors"), Some(1.0));
        assert_eq!(e.get("frac_csp3"), Some(1.0));
        assert!((e.get("ipc_entropy").unwrap() - 3.0 * 3f64.log2()).abs() < 1e-12);
        assert_eq!(e.get("rotatable_bonds"), Some(0.0));
        assert_eq!(d("CCCC").get("rotatable_bonds"), Some(1.0));
    }

    #[test]
    fn disconnected_sums_components() {
        let x = d("CCC.CC");
        assert_eq!(x.get("diameter"), Some(3.0));
        assert_eq!(x.get("wiener"), Some(5.0));
    }

    #[test]
    fn stats_and_bins() {
        let mut a = d("C");
        let mut b = a.clone();
        a.values[0] = 0.0;
        b.values[0] = 2.0;
        let s = fit_stats(&[a.clone(), b]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        let one = fit_stats(&[a.clone()]).unwrap();
        assert_eq!((one.min[3], one.max[3], one.std[3]), (a.values[3], a.values[3], 0.0));
        assert_eq!(one.bin(3, 100.0), 0);
        assert_eq!(s.bin(0, -1.0), 0);
        assert_eq!(s.bin(0, 2.0), N_BINS - 1);
        assert_eq!(s.bin(0, 1.0), 15);
        assert_eq!(fit_stats(&[]), Err(DescriptorError::EmptyCorpus));
    }

    #[test]
    fn redundancy() {
        let x = vec![1.0, 2.0, 3.0, 5.0];
        let y = vec![2.0, 1.0, 7.0, 0.0];
        assert_eq!(redundancy_filter(&[x.clone(), x.clone(), y.clone()], 0.99).unwrap(), vec![0, 2]);
        assert_eq!(redundancy_filter(&[x.clone(), x.clone()], 1.0).unwrap(), vec![0, 1]);
        assert!(redundancy_filter(&[vec![1.0]], 0.5).is_err());
    }
}
