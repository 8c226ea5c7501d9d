//! A deliberately small SMILES reader.
//!
//! Supported: the organic subset `B C N O P S F Cl Br I`, bracket atoms with
//! charge and explicit hydrogen count, bonds `- = #`, branches, ring closures
//! (`1`..`9`, `%nn`) and `.` component separators. Aromatic (lowercase) atoms,
//! wildcards, stereo markers, isotopes and atom classes are rejected with
//! [`Error::Unsupported`]; aromatic input has to be kekulized beforehand.
//!
//! The result contains heavy atoms only. Hydrogens on organic-subset atoms are
//! derived from the lowest standard valence that accommodates the bond-order
//! sum.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{Atom, MolecularGraph};

const SUPPORTED: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

/// Standard valences in ascending order.
pub fn standard_valences(element: &str) -> Option<&'static [u32]> {
    Some(match element {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => return None,
    })
}

struct ParsedAtom {
    element: String,
    charge: i32,
    /// `Some(h)` for bracket atoms, where the hydrogen count is explicit.
    explicit_h: Option<u32>,
}

struct RingOpen {
    atom: usize,
    order: Option<u8>,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    bonds: Vec<(usize, usize, u8)>,
    edge_set: BTreeSet<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(u8, usize)>,
    branches: Vec<(Option<usize>, usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parse a single SMILES string into a heavy-atom [`MolecularGraph`].
pub fn parse_smiles(text: &str) -> Result<MolecularGraph> {
    if text.is_empty() {
        return Err(Error::parse(0, "empty SMILES"));
    }
    if let Some(p) = text.bytes().position(|b| !b.is_ascii()) {
        return Err(Error::parse(p, "non-ASCII character"));
    }
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        edge_set: BTreeSet::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    parser.run()?;
    parser.finish()
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<()> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'A'..=b'Z' => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, start)?;
                }
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    return Err(Error::unsupported(start, "aromatic atom; input must be kekulized"));
                }
                b'*' => return Err(Error::unsupported(start, "wildcard atom")),
                b'/' | b'\\' | b'@' => return Err(Error::unsupported(start, "stereo marker")),
                b':' | b'$' => return Err(Error::unsupported(start, "bond symbol outside - = #")),
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start)?;
                }
                b'-' | b'=' | b'#' => {
                    if self.prev.is_none() {
                        return Err(Error::parse(start, "bond without a preceding atom"));
                    }
                    if self.pending.is_some() {
                        return Err(Error::parse(start, "consecutive bond symbols"));
                    }
                    let order = match c {
                        b'-' => 1,
                        b'=' => 2,
                        _ => 3,
                    };
                    self.pending = Some((order, start));
                    self.pos += 1;
                }
                b'(' => {
                    if self.prev.is_none() {
                        return Err(Error::parse(start, "branch without a preceding atom"));
                    }
                    if self.pending.is_some() {
                        return Err(Error::parse(start, "bond symbol before branch"));
                    }
                    self.branches.push((self.prev, self.atoms.len(), start));
                    self.pos += 1;
                }
                b')' => {
                    let (prev, count, _) = self.branches.pop().ok_or_else(|| Error::parse(start, "unmatched ')'"))?;
                    if self.pending.is_some() {
                        return Err(Error::parse(start, "dangling bond at end of branch"));
                    }
                    if self.atoms.len() == count {
                        return Err(Error::parse(start, "empty branch"));
                    }
                    self.prev = prev;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let label = self.ring_label()?;
                    self.ring_bond(label, start)?;
                }
                b'.' => {
                    if self.prev.is_none() || self.pending.is_some() || !self.branches.is_empty() {
                        return Err(Error::parse(start, "misplaced '.'"));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                _ => return Err(Error::parse(start, format!("unexpected character {:?}", c as char))),
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<ParsedAtom> {
        let start = self.pos;
        let two = self.text.get(start..start + 2);
        let symbol =
            match two {
                Some(b"Cl") => "Cl",
                Some(b"Br") => "Br",
                _ => {
                    let one = &self.text[start..start + 1];
                    SUPPORTED.iter().copied().find(|s| s.as_bytes() == one).ok_or_else(|| {
                        Error::unsupported(start, format!("atom {:?} outside the organic subset", one[0] as char))
                    })?
                }
            };
        self.pos += symbol.len();
        Ok(ParsedAtom {
            element: symbol.to_string(),
            charge: 0,
            explicit_h: None,
        })
    }

    fn bracket_atom(&mut self) -> Result<ParsedAtom> {
        let open = self.pos;
        self.pos += 1;
        if matches!(self.peek(), Some(b'0'..=b'9')) {
            return Err(Error::unsupported(self.pos, "isotope label"));
        }
        let sym_start = self.pos;
        match self.peek() {
            Some(b'A'..=b'Z') => self.pos += 1,
            Some(b'a'..=b'z') => return Err(Error::unsupported(sym_start, "aromatic bracket atom")),
            Some(b'*') => return Err(Error::unsupported(sym_start, "wildcard atom")),
            _ => return Err(Error::parse(sym_start, "expected element symbol in bracket atom")),
        }
        // Two-letter symbols, but not the hydrogen-count `H` suffix.
        if matches!(self.peek(), Some(b'a'..=b'z')) {
            self.pos += 1;
        }
        let symbol = std::str::from_utf8(&self.text[sym_start..self.pos]).unwrap();
        if !SUPPORTED.contains(&symbol) {
            return Err(Error::unsupported(sym_start, format!("element {symbol:?} not supported")));
        }
        if self.peek() == Some(b'@') {
            return Err(Error::unsupported(self.pos, "chirality marker"));
        }
        let mut h = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = 1;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                h = u32::from(d - b'0');
                self.pos += 1;
            }
        }
        let mut charge = 0i32;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            charge = unit;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                charge = unit * i32::from(d - b'0');
                self.pos += 1;
            } else {
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b':') => return Err(Error::unsupported(self.pos, "atom class")),
            Some(b'@') => return Err(Error::unsupported(self.pos, "chirality marker")),
            Some(_) => return Err(Error::parse(self.pos, "unexpected character in bracket atom")),
            None => return Err(Error::parse(open, "unclosed bracket atom")),
        }
        Ok(ParsedAtom {
            element: symbol.to_string(),
            charge,
            explicit_h: Some(h),
        })
    }

    fn ring_label(&mut self) -> Result<u32> {
        let start = self.pos;
        if self.peek() == Some(b'%') {
            let digits = self.text.get(start + 1..start + 3);
            match digits {
                Some([a @ b'0'..=b'9', b @ b'0'..=b'9']) => {
                    self.pos += 3;
                    Ok(u32::from(a - b'0') * 10 + u32::from(b - b'0'))
                }
                _ => Err(Error::parse(start, "'%' must be followed by two digits")),
            }
        } else {
            self.pos += 1;
            Ok(u32::from(self.text[start] - b'0'))
        }
    }

    fn ring_bond(&mut self, label: u32, start: usize) -> Result<()> {
        let current = self
            .prev
            .ok_or_else(|| Error::parse(start, "ring closure without a preceding atom"))?;
        let order = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::parse(start, format!("conflicting bond orders on ring {label}")));
                    }
                    (a, b) => a.or(b).unwrap_or(1),
                };
                if open.atom == current {
                    return Err(Error::parse(start, format!("ring {label} closes on its own atom")));
                }
                self.add_bond(open.atom, current, order, start)
            }
            None => {
                self.rings.insert(label, RingOpen { atom: current, order });
                Ok(())
            }
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: u8, pos: usize) -> Result<()> {
        let key = (a.min(b), a.max(b));
        if !self.edge_set.insert(key) {
            return Err(Error::parse(
                pos,
                format!("duplicate bond between atoms {} and {}", key.0, key.1),
            ));
        }
        self.bonds.push((a, b, order));
        Ok(())
    }

    fn add_atom(&mut self, atom: ParsedAtom, pos: usize) -> Result<()> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let order = self.pending.take().map_or(1, |(o, _)| o);
            self.add_bond(prev, idx, order, pos)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn finish(self) -> Result<MolecularGraph> {
        if let Some((_, p)) = self.pending {
            return Err(Error::parse(p, "dangling bond at end of input"));
        }
        if let Some(&(_, _, p)) = self.branches.last() {
            return Err(Error::parse(p, "unclosed branch"));
        }
        if let Some((label, _)) = self.rings.iter().next() {
            return Err(Error::parse(self.text.len(), format!("unclosed ring {label}")));
        }
        if self.atoms.is_empty() {
            return Err(Error::parse(0, "no atoms"));
        }

        let mut sums = vec![0u32; self.atoms.len()];
        for &(a, b, o) in &self.bonds {
            sums[a] += u32::from(o);
            sums[b] += u32::from(o);
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (idx, (parsed, &sum)) in self.atoms.iter().zip(&sums).enumerate() {
            let valences = standard_valences(&parsed.element).expect("parser only admits supported elements");
            let max = *valences.last().unwrap();
            let implicit_h = match parsed.explicit_h {
                None => {
                    let v = valences.iter().copied().find(|&v| v >= sum).ok_or(Error::Valence {
                        atom: idx,
                        element: parsed.element.clone(),
                        bond_sum: sum,
                        max,
                    })?;
                    v - sum
                }
                Some(h) => {
                    // Charged bracket atoms may exceed the neutral valence by |charge|.
                    let limit = max + parsed.charge.unsigned_abs();
                    if sum + h > limit {
                        return Err(Error::Valence {
                            atom: idx,
                            element: parsed.element.clone(),
                            bond_sum: sum + h,
                            max: limit,
                        });
                    }
                    h
                }
            };
            atoms.push(Atom {
                element: parsed.element.clone(),
                implicit_h,
                charge: parsed.charge,
            });
        }
        MolecularGraph::new(atoms, self.bonds)
    }
}

/// One molecule from a SMILES corpus file.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub id: String,
    /// 1-based line number in the source file.
    pub line: usize,
    pub graph: MolecularGraph,
}

/// Parse a SMILES corpus: one molecule per line, optionally followed by
/// whitespace and an identifier. Blank lines and lines starting with `#` are
/// skipped (`#` elsewhere is a triple bond).
/// Molecules without an identifier are named `mol<line>`.
///
/// Errors carry the 1-based line number of the offending entry.
pub fn parse_smiles_corpus(text: &str) -> std::result::Result<Vec<CorpusEntry>, (usize, Error)> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut fields = content.split_whitespace();
        let smiles = fields.next().unwrap();
        // A whitespace-separated `#` after the SMILES token starts a comment.
        let id = fields
            .next()
            .filter(|f| !f.starts_with('#'))
            .map_or_else(|| format!("mol{line}"), str::to_string);
        let graph = parse_smiles(smiles).map_err(|e| (line, e))?;
        out.push(CorpusEntry { id, line, graph });
    }
    Ok(out)
}
