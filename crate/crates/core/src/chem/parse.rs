//! SMILES reader.
//!
//! Supported: organic-subset bare atoms, bracket atoms with isotope, H count,
//! charge and atom class, bond symbols `- = # :`, ring closures `0-9` and
//! `%nn`, branches and dot-separated fragments. Stereo markers `/ \ @` are
//! accepted and dropped.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::element::Element;
use super::graph::{Atom, Bond, BondOrder, MolecularGraph};
use super::valence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyInput,
    UnexpectedCharacter,
    UnknownElement,
    UnclosedBracket,
    UnbalancedParenthesis,
    UnclosedRing,
    InvalidBond,
    ValenceViolation,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Where and why a SMILES string was rejected. `position` is a byte offset
/// into the input (0 for empty input).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {position}: {message}")]
pub struct ParseDiagnostic {
    pub kind: ParseErrorKind,
    pub position: usize,
    pub message: String,
}

impl ParseDiagnostic {
    fn new(kind: ParseErrorKind, position: usize, message: impl Into<String>) -> Self {
        Self {
            kind,
            position,
            message: message.into(),
        }
    }
}

/// Parse and valence-check a SMILES string.
pub fn parse_smiles(input: &str) -> Result<MolecularGraph, ParseDiagnostic> {
    let (mol, positions) = parse_structure(input)?;
    if let Some(i) = valence::first_violation(&mol) {
        return Err(ParseDiagnostic::new(
            ParseErrorKind::ValenceViolation,
            positions[i],
            format!("atom {} ({}) exceeds its allowed valence", i, mol.atom(i).element),
        ));
    }
    Ok(mol)
}

/// Parse without the valence check. Also returns each atom's source offset.
pub fn parse_structure(input: &str) -> Result<(MolecularGraph, Vec<usize>), ParseDiagnostic> {
    Parser::new(input).run()
}

#[derive(Clone, Copy)]
enum BondSym {
    Explicit(BondOrder),
    /// `/` or `\`: a plain bond with dropped stereo.
    Directional,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    positions: Vec<usize>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondSym, usize)>,
    branches: Vec<(usize, usize)>,
    rings: HashMap<u32, (usize, Option<BondSym>, usize)>,
    /// Whether the last token was `(`, to reject empty branches.
    just_opened: bool,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Self {
            s: input.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            positions: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            pending: None,
            branches: Vec::new(),
            rings: HashMap::new(),
            just_opened: false,
        }
    }

    fn err(&self, kind: ParseErrorKind, pos: usize, msg: impl Into<String>) -> ParseDiagnostic {
        ParseDiagnostic::new(kind, pos, msg)
    }

    fn run(mut self) -> Result<(MolecularGraph, Vec<usize>), ParseDiagnostic> {
        if self.s.is_empty() {
            return Err(self.err(ParseErrorKind::EmptyInput, 0, "empty SMILES"));
        }
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let start = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.err(
                            ParseErrorKind::UnexpectedCharacter,
                            start,
                            "branch must follow an atom",
                        ));
                    }
                    self.branches.push((self.prev.unwrap(), start));
                    self.pos += 1;
                    self.just_opened = true;
                    continue;
                }
                b')' => {
                    if self.just_opened {
                        return Err(self.err(
                            ParseErrorKind::UnexpectedCharacter,
                            start,
                            "empty branch",
                        ));
                    }
                    if let Some((_, p)) = self.pending {
                        return Err(self.err(ParseErrorKind::InvalidBond, p, "bond without a partner atom"));
                    }
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(self.err(
                            ParseErrorKind::UnbalancedParenthesis,
                            start,
                            "unmatched ')'",
                        ));
                    };
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.err(ParseErrorKind::InvalidBond, start, "misplaced bond symbol"));
                    }
                    let sym = match c {
                        b'-' => BondSym::Explicit(BondOrder::Single),
                        b'=' => BondSym::Explicit(BondOrder::Double),
                        b'#' => BondSym::Explicit(BondOrder::Triple),
                        b':' => BondSym::Explicit(BondOrder::Aromatic),
                        _ => BondSym::Directional,
                    };
                    self.pending = Some((sym, start));
                    self.pos += 1;
                }
                b'.' => {
                    if self.prev.is_none() || !self.branches.is_empty() {
                        return Err(self.err(
                            ParseErrorKind::UnexpectedCharacter,
                            start,
                            "misplaced '.'",
                        ));
                    }
                    if let Some((_, p)) = self.pending {
                        return Err(self.err(ParseErrorKind::InvalidBond, p, "bond without a partner atom"));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start)?;
                }
                _ => {
                    let atom = self.bare_atom()?;
                    self.add_atom(atom, start)?;
                }
            }
            self.just_opened = false;
        }
        if let Some((_, p)) = self.pending {
            return Err(self.err(ParseErrorKind::InvalidBond, p, "bond without a partner atom"));
        }
        if let Some(&(_, p)) = self.branches.last() {
            return Err(self.err(ParseErrorKind::UnbalancedParenthesis, p, "unclosed '('"));
        }
        if let Some(p) = self.rings.values().map(|r| r.2).min() {
            return Err(self.err(ParseErrorKind::UnclosedRing, p, "ring bond never closed"));
        }
        let mol = MolecularGraph::new(self.atoms, self.bonds)
            .map_err(|e| ParseDiagnostic::new(ParseErrorKind::InvalidBond, 0, e.to_string()))?;
        Ok((mol, self.positions))
    }

    fn resolve_order(&self, sym: Option<BondSym>, a: usize, b: usize, at: usize) -> Result<BondOrder, ParseDiagnostic> {
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        match sym {
            Some(BondSym::Explicit(BondOrder::Aromatic)) if !both_aromatic => Err(self.err(
                ParseErrorKind::InvalidBond,
                at,
                "aromatic bond between non-aromatic atoms",
            )),
            Some(BondSym::Explicit(o)) => Ok(o),
            None | Some(BondSym::Directional) => Ok(if both_aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            }),
        }
    }

    fn add_atom(&mut self, atom: Atom, start: usize) -> Result<(), ParseDiagnostic> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.positions.push(start);
        if let Some(p) = self.prev {
            let (sym, at) = match self.pending.take() {
                Some((s, at)) => (Some(s), at),
                None => (None, start),
            };
            let order = self.resolve_order(sym, p, idx, at)?;
            self.bonds.push(Bond::new(p, idx, order));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), ParseDiagnostic> {
        let start = self.pos;
        let Some(atom) = self.prev else {
            return Err(self.err(
                ParseErrorKind::UnexpectedCharacter,
                start,
                "ring bond must follow an atom",
            ));
        };
        let number = if self.s[self.pos] == b'%' {
            let digits = self.s.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                }
                _ => {
                    return Err(self.err(
                        ParseErrorKind::UnexpectedCharacter,
                        start,
                        "'%' must be followed by two digits",
                    ))
                }
            }
        } else {
            self.pos += 1;
            (self.s[start] - b'0') as u32
        };
        let sym = self.pending.take().map(|p| p.0);
        match self.rings.remove(&number) {
            None => {
                self.rings.insert(number, (atom, sym, start));
            }
            Some((open_atom, open_sym, _)) => {
                if open_atom == atom {
                    return Err(self.err(ParseErrorKind::InvalidBond, start, "ring bond to itself"));
                }
                if self.bonds.iter().any(|b| {
                    (b.a == atom && b.b == open_atom) || (b.a == open_atom && b.b == atom)
                }) {
                    return Err(self.err(ParseErrorKind::InvalidBond, start, "duplicate bond"));
                }
                let order = match (open_sym, sym) {
                    (Some(BondSym::Explicit(a)), Some(BondSym::Explicit(b))) if a != b => {
                        return Err(self.err(
                            ParseErrorKind::InvalidBond,
                            start,
                            "conflicting ring bond symbols",
                        ))
                    }
                    (Some(BondSym::Explicit(a)), _) | (_, Some(BondSym::Explicit(a))) => {
                        self.resolve_order(Some(BondSym::Explicit(a)), open_atom, atom, start)?
                    }
                    _ => self.resolve_order(None, open_atom, atom, start)?,
                };
                self.bonds.push(Bond::new(open_atom, atom, order));
            }
        }
        Ok(())
    }

    fn bare_atom(&mut self) -> Result<Atom, ParseDiagnostic> {
        let start = self.pos;
        let c = self.s[self.pos];
        let next = self.s.get(self.pos + 1).copied();
        let (atom, len) = match (c, next) {
            (b'C', Some(b'l')) => (Atom::new(Element::CL), 2),
            (b'B', Some(b'r')) => (Atom::new(Element::BR), 2),
            (b'B', _) => (Atom::new(Element::B), 1),
            (b'C', _) => (Atom::new(Element::C), 1),
            (b'N', _) => (Atom::new(Element::N), 1),
            (b'O', _) => (Atom::new(Element::O), 1),
            (b'P', _) => (Atom::new(Element::P), 1),
            (b'S', _) => (Atom::new(Element::S), 1),
            (b'F', _) => (Atom::new(Element::F), 1),
            (b'I', _) => (Atom::new(Element::I), 1),
            (b'b', _) => (Atom::aromatic(Element::B), 1),
            (b'c', _) => (Atom::aromatic(Element::C), 1),
            (b'n', _) => (Atom::aromatic(Element::N), 1),
            (b'o', _) => (Atom::aromatic(Element::O), 1),
            (b'p', _) => (Atom::aromatic(Element::P), 1),
            (b's', _) => (Atom::aromatic(Element::S), 1),
            (c, _) if c.is_ascii_alphabetic() || c == b'*' => {
                return Err(self.err(
                    ParseErrorKind::UnknownElement,
                    start,
                    format!("'{}' is not an organic-subset atom", c as char),
                ))
            }
            (c, _) => {
                return Err(self.err(
                    ParseErrorKind::UnexpectedCharacter,
                    start,
                    format!("unexpected character {:?}", c as char),
                ))
            }
        };
        self.pos += len;
        Ok(atom)
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() && self.pos - start < 4 {
            self.pos += 1;
        }
        (self.pos > start).then(|| {
            std::str::from_utf8(&self.s[start..self.pos])
                .unwrap()
                .parse()
                .unwrap()
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, ParseDiagnostic> {
        let open = self.pos;
        let close = self.s[open..]
            .iter()
            .position(|&c| c == b']')
            .map(|i| open + i)
            .ok_or_else(|| self.err(ParseErrorKind::UnclosedBracket, open, "unclosed '['"))?;
        self.pos += 1;
        let isotope = self.digits().map(|v| v as u16);

        let sym_start = self.pos;
        let rest = &self.s[self.pos..close];
        let aromatic_two = [(b"se", 34u8), (b"as", 33u8), (b"te", 52u8)];
        let mut atom = None;
        for (sym, z) in aromatic_two {
            if rest.starts_with(sym) {
                atom = Some(Atom::aromatic(Element::from_atomic_number(z).unwrap()));
                self.pos += 2;
                break;
            }
        }
        if atom.is_none() {
            let c = rest.first().copied().unwrap_or(b']');
            if c.is_ascii_lowercase() {
                let e = match c {
                    b'b' => Some(Element::B),
                    b'c' => Some(Element::C),
                    b'n' => Some(Element::N),
                    b'o' => Some(Element::O),
                    b'p' => Some(Element::P),
                    b's' => Some(Element::S),
                    _ => None,
                };
                let e = e.ok_or_else(|| {
                    self.err(ParseErrorKind::UnknownElement, sym_start, "unknown aromatic symbol")
                })?;
                atom = Some(Atom::aromatic(e));
                self.pos += 1;
            } else if c.is_ascii_uppercase() {
                let two = rest
                    .get(..2)
                    .filter(|t| t[1].is_ascii_lowercase())
                    .and_then(|t| Element::from_symbol(std::str::from_utf8(t).unwrap()));
                if let Some(e) = two {
                    atom = Some(Atom::new(e));
                    self.pos += 2;
                } else {
                    let e = Element::from_symbol(std::str::from_utf8(&rest[..1]).unwrap())
                        .ok_or_else(|| {
                            self.err(ParseErrorKind::UnknownElement, sym_start, "unknown element")
                        })?;
                    atom = Some(Atom::new(e));
                    self.pos += 1;
                }
            } else {
                return Err(self.err(ParseErrorKind::UnknownElement, sym_start, "missing element symbol"));
            }
        }
        let mut atom = atom.unwrap();
        atom.isotope = isotope;

        while self.pos < close && self.s[self.pos] == b'@' {
            self.pos += 1;
        }
        // Extended chirality classes like @TH1 are not part of the subset.
        let mut h = 0u8;
        if self.pos < close && self.s[self.pos] == b'H' {
            self.pos += 1;
            h = self.digits().map_or(1, |v| v as u8);
        }
        atom.explicit_h = Some(h);
        if self.pos < close && matches!(self.s[self.pos], b'+' | b'-') {
            let sign: i8 = if self.s[self.pos] == b'+' { 1 } else { -1 };
            let sign_char = self.s[self.pos];
            self.pos += 1;
            let mut magnitude = 1i8;
            if let Some(d) = self.digits() {
                magnitude = d.min(15) as i8;
            } else {
                while self.pos < close && self.s[self.pos] == sign_char {
                    magnitude += 1;
                    self.pos += 1;
                }
            }
            atom.formal_charge = sign * magnitude;
        }
        if self.pos < close && self.s[self.pos] == b':' {
            self.pos += 1;
            if self.digits().is_none() {
                return Err(self.err(ParseErrorKind::UnexpectedCharacter, self.pos, "atom class needs digits"));
            }
        }
        if self.pos != close {
            return Err(self.err(
                ParseErrorKind::UnexpectedCharacter,
                self.pos,
                "unexpected content in bracket atom",
            ));
        }
        self.pos = close + 1;
        Ok(atom)
    }
}

/// One SMILES per line; blank lines and `#` comments are skipped. Anything
/// after the first whitespace on a line (e.g. a name) is ignored.
pub fn read_smiles_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let smiles = line.split_whitespace().next()?;
            Some((i + 1, smiles.to_string()))
        })
        .collect()
}

pub fn read_smiles_file(path: impl AsRef<std::path::Path>) -> std::io::Result<Vec<(usize, String)>> {
    Ok(read_smiles_lines(&std::fs::read_to_string(path)?))
}
