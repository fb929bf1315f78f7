//! Molecular graphs and SMILES.

mod canon;
mod element;
mod graph;
mod parse;
mod rings;
pub mod valence;
mod write;

pub use canon::{canonical_smiles, canonicalize, refinement_classes};
pub use element::Element;
pub use graph::{Atom, Bond, BondOrder, GraphError, MolecularGraph};
pub use parse::{
    parse_smiles, parse_structure, read_smiles_file, read_smiles_lines, ParseDiagnostic,
    ParseErrorKind,
};
pub use rings::{ring_info, ring_perception, RingInfo};
pub use valence::validate_valence;
pub use write::write_smiles;

#[cfg(test)]
mod tests {
    use super::*;

    fn h_counts(s: &str) -> Vec<u32> {
        parse_smiles(s).unwrap().atoms().iter().map(Atom::total_h).collect()
    }

    #[test]
    fn ethanol() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atom_count(), 3);
        assert_eq!(m.bond_count(), 2);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(h_counts("CCO"), vec![3, 2, 1]);
        assert!(validate_valence(&m));
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic));
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
        assert_eq!(ring_perception(&m).len(), 1);
        assert_eq!(h_counts("c1ccccc1"), vec![1; 6]);
    }

    #[test]
    fn hydrogen_rules() {
        assert_eq!(h_counts("C=O"), vec![2, 0]);
        assert_eq!(h_counts("C#N"), vec![1, 0]);
        assert_eq!(h_counts("c1ccncc1"), vec![1, 1, 1, 0, 1, 1]);
        assert_eq!(h_counts("c1cc[nH]c1"), vec![1, 1, 1, 1, 1]);
        assert_eq!(h_counts("CS(=O)(=O)C"), vec![3, 0, 0, 0, 3]);
        assert_eq!(h_counts("[NH4+]"), vec![4]);
        assert_eq!(h_counts("O=N(=O)C"), vec![0, 0, 0, 3]);
        assert_eq!(h_counts("ClC(Br)I"), vec![0, 1, 0, 0]);
    }

    #[test]
    fn errors() {
        let e = parse_smiles("C1CC").unwrap_err();
        assert_eq!((e.kind, e.position), (ParseErrorKind::UnclosedRing, 1));
        assert_eq!(parse_smiles("").unwrap_err().kind, ParseErrorKind::EmptyInput);
        assert_eq!(parse_smiles("C(C").unwrap_err().kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(parse_smiles("CC)").unwrap_err().kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(parse_smiles("CXC").unwrap_err().kind, ParseErrorKind::UnknownElement);
        assert_eq!(parse_smiles("[Xx]").unwrap_err().kind, ParseErrorKind::UnknownElement);
        let e = parse_smiles("CC(C)(C)(C)(C)C").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::ValenceViolation);
        assert_eq!(e.position, 1);
        assert_eq!(parse_smiles("[CH3").unwrap_err().kind, ParseErrorKind::UnclosedBracket);
        assert_eq!(parse_smiles("C=").unwrap_err().kind, ParseErrorKind::InvalidBond);
        assert_eq!(parse_smiles("C1C1").unwrap_err().kind, ParseErrorKind::InvalidBond);
    }

    #[test]
    fn five_bonded_carbon_fails_valence() {
        let (m, _) = parse_structure("C(C)(C)(C)(C)C").unwrap();
        assert!(!validate_valence(&m));
    }

    #[test]
    fn charged_and_bracket_atoms() {
        for s in ["[NH4+]", "C[N+](C)(C)C", "[O-]C", "C[N+](=O)[O-]", "[13CH4]", "[Na+].[Cl-]", "[nH]1cccc1"] {
            assert!(parse_smiles(s).is_ok(), "{s}");
        }
        assert!(parse_smiles("[NH5+]").is_err());
        assert!(parse_smiles("C[O-](C)").is_err());
        let m = parse_smiles("[13CH3+]").unwrap();
        let a = m.atom(0);
        assert_eq!((a.isotope, a.explicit_h, a.formal_charge), (Some(13), Some(3), 1));
    }

    #[test]
    fn stereo_and_dots() {
        let m = parse_smiles("F/C=C/F.C[C@@H](O)N").unwrap();
        assert_eq!(m.component_count(), 2);
        assert_eq!(m.atom_count(), 8);
    }

    #[test]
    fn ring_closure_forms() {
        let m = parse_smiles("C%12CCCC%12").unwrap();
        assert_eq!(ring_perception(&m).len(), 1);
        let m = parse_smiles("C=1CCCC1").unwrap();
        assert_eq!(m.bond_between(0, 4).unwrap().order, BondOrder::Double);
    }

    #[test]
    fn writer_examples() {
        assert_eq!(write_smiles(&parse_smiles("C").unwrap()), "C");
        assert_eq!(write_smiles(&parse_smiles("CCO").unwrap()), "CCO");
        assert_eq!(write_smiles(&parse_smiles("c1ccccc1").unwrap()), "c1ccccc1");
        assert_eq!(write_smiles(&parse_smiles("CC(C)(O)C=O").unwrap()), "CC(C)(O)C=O");
        assert_eq!(write_smiles(&parse_smiles("c1ccccc1-c1ccccc1").unwrap()), "c1ccccc1-c1ccccc1");
        assert_eq!(write_smiles(&parse_smiles("[NH4+]").unwrap()), "[NH4+]");
        assert_eq!(write_smiles(&parse_smiles("[CH4]").unwrap()), "C");
    }

    #[test]
    fn canonical_examples() {
        let c = |s: &str| canonical_smiles(&parse_smiles(s).unwrap());
        assert_eq!(c("C"), "C");
        assert_eq!(c("OCC"), c("CCO"));
        assert_eq!(c("c1ccccc1O"), c("Oc1ccccc1"));
        assert_eq!(c("CC.O"), c("O.CC"));
        let once = c("OC(=O)c1ccccc1OC(C)=O");
        assert_eq!(c(&once), once);
    }

    #[test]
    fn smiles_lines() {
        let lines = read_smiles_lines("# header\nCCO ethanol\n\n  c1ccccc1\n");
        assert_eq!(lines, vec![(2, "CCO".into()), (4, "c1ccccc1".into())]);
    }
}
