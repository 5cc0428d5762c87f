//! SMILES parsing into hydrogen-suppressed molecular graphs.
//!
//! The accepted grammar covers organic-subset atoms, bracket atoms (isotope,
//! symbol, hydrogen count, charge, atom class), branches, ring closures
//! (`0`-`9` and `%NN`), the bond symbols `- = # :` and `.` disconnection.
//! Stereo markers (`/`, `\`, `@`) are accepted and discarded. Wildcards are
//! rejected.
//!
//! Hydrogens never become graph nodes: organic-subset atoms receive implicit
//! hydrogens from the valence rule, bracket atoms keep their stated count,
//! and explicit `[H]` atoms are folded into their heavy neighbour.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Element symbol for an atomic number, if it exists.
pub fn element_symbol(atomic_number: u8) -> Option<&'static str> {
    ELEMENTS.get((atomic_number as usize).checked_sub(1)?).copied()
}

fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS
        .iter()
        .position(|&s| s == symbol)
        .map(|i| (i + 1) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order in half-units, so aromatic bonds (1.5) stay integral.
    fn half_units(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    /// Small stable tag used by the fingerprint hash.
    pub fn tag(self) -> u64 {
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
    pub element: u8,
    pub formal_charge: i8,
    pub explicit_h: u8,
    pub aromatic: bool,
    pub isotope: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub endpoints: (usize, usize),
    pub order: BondOrder,
}

/// A parsed molecule. Only heavy atoms are nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per atom: (neighbour index, bond index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Self {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, b) in bonds.iter().enumerate() {
            let (a, c) = b.endpoints;
            adjacency[a].push((c, i));
            adjacency[c].push((a, i));
        }
        Molecule {
            atoms,
            bonds,
            adjacency,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Neighbours of `atom` as (neighbour index, bond index) pairs.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Number of heavy-atom neighbours.
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Number of non-hydrogen atoms. Equal to the node count, since
    /// hydrogens are stored as counts.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.len()
    }
}

/// Free-function form of [`Molecule::heavy_atom_count`].
pub fn heavy_atom_count(mol: &Molecule) -> usize {
    mol.heavy_atom_count()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty input")]
    Empty,
    #[error("unknown atom symbol '{0}'")]
    UnknownAtom(String),
    #[error("wildcard atoms are not supported")]
    Wildcard,
    #[error("unmatched '['")]
    UnclosedBracket,
    #[error("unmatched ']'")]
    StrayCloseBracket,
    #[error("malformed bracket atom: {0}")]
    BadBracket(&'static str),
    #[error("ring closure {0} never closed")]
    UnclosedRing(u16),
    #[error("ring closure {0} joins an atom to itself")]
    SelfRingBond(u16),
    #[error("ring closure {0} duplicates an existing bond")]
    DuplicateBond(u16),
    #[error("ring closure {0} has conflicting bond symbols")]
    RingBondConflict(u16),
    #[error("malformed ring closure number")]
    BadRingNumber,
    #[error("unmatched '('")]
    UnclosedParen,
    #[error("unmatched ')'")]
    StrayCloseParen,
    #[error("bond symbol not followed by an atom")]
    DanglingBond,
    #[error("empty branch")]
    EmptyBranch,
    #[error("branch, ring closure or bond before any atom")]
    NothingToAttach,
    #[error("'.' must separate two atoms")]
    BadDot,
    #[error("unexpected character '{0}'")]
    Unexpected(char),
    #[error("no heavy atoms")]
    NoHeavyAtoms,
}

/// A syntax error at a byte offset of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

impl fmt::Display for SmilesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SMILES error at position {}: {}", self.position, self.kind)
    }
}

struct OpenRing {
    atom: usize,
    bond: Option<BondOrder>,
    position: usize,
}

/// A bond symbol waiting for the atom (or ring closure) it attaches to.
/// `order` is `None` for the directional markers `/` and `\`, which behave
/// like an unspecified bond.
#[derive(Clone, Copy)]
struct PendingBond {
    order: Option<BondOrder>,
    position: usize,
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bracket: Vec<bool>,
    bonds: Vec<Bond>,
    rings: BTreeMap<u16, OpenRing>,
}

fn err(position: usize, kind: SmilesErrorKind) -> SmilesError {
    SmilesError { position, kind }
}

/// Parse a SMILES string into a [`Molecule`].
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.trim().is_empty() {
        return Err(err(0, SmilesErrorKind::Empty));
    }
    let mut p = Parser {
        input: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bracket: Vec::new(),
        bonds: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.parse()?;
    p.finish()
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn parse(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<PendingBond> = None;
        // Open branches: (atom the branch hangs from, position of '(').
        let mut branches: Vec<(usize, usize)> = Vec::new();
        // Set right after '(' until the branch receives its first atom.
        let mut branch_empty = false;
        let mut last_dot: Option<usize> = None;

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(anchor) = prev else {
                        return Err(err(start, SmilesErrorKind::NothingToAttach));
                    };
                    if let Some(b) = pending {
                        return Err(err(b.position, SmilesErrorKind::DanglingBond));
                    }
                    if branch_empty {
                        return Err(err(start, SmilesErrorKind::EmptyBranch));
                    }
                    branches.push((anchor, start));
                    branch_empty = true;
                    self.pos += 1;
                }
                b')' => {
                    if let Some(b) = pending {
                        return Err(err(b.position, SmilesErrorKind::DanglingBond));
                    }
                    let Some((anchor, _)) = branches.pop() else {
                        return Err(err(start, SmilesErrorKind::StrayCloseParen));
                    };
                    if branch_empty {
                        return Err(err(start, SmilesErrorKind::EmptyBranch));
                    }
                    prev = Some(anchor);
                    self.pos += 1;
                }
                b'.' => {
                    if let Some(b) = pending {
                        return Err(err(b.position, SmilesErrorKind::DanglingBond));
                    }
                    if prev.is_none() || branch_empty {
                        return Err(err(start, SmilesErrorKind::BadDot));
                    }
                    prev = None;
                    last_dot = Some(start);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if prev.is_none() {
                        return Err(err(start, SmilesErrorKind::NothingToAttach));
                    }
                    if let Some(b) = pending {
                        return Err(err(b.position, SmilesErrorKind::DanglingBond));
                    }
                    let order = match c {
                        b'-' => Some(BondOrder::Single),
                        b'=' => Some(BondOrder::Double),
                        b'#' => Some(BondOrder::Triple),
                        b':' => Some(BondOrder::Aromatic),
                        _ => None,
                    };
                    pending = Some(PendingBond {
                        order,
                        position: start,
                    });
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(atom) = prev else {
                        return Err(err(start, SmilesErrorKind::NothingToAttach));
                    };
                    if branch_empty {
                        return Err(err(start, SmilesErrorKind::NothingToAttach));
                    }
                    let number = self.ring_number()?;
                    let bond = pending.take().and_then(|b| b.order);
                    self.ring_closure(number, atom, bond, start)?;
                }
                b'*' => return Err(err(start, SmilesErrorKind::Wildcard)),
                b']' => return Err(err(start, SmilesErrorKind::StrayCloseBracket)),
                _ => {
                    let idx = self.atom()?;
                    match (prev, pending.take()) {
                        (Some(p), bond) => {
                            let order = bond
                                .and_then(|b| b.order)
                                .unwrap_or_else(|| self.implicit_order(p, idx));
                            self.bonds.push(Bond {
                                endpoints: (p, idx),
                                order,
                            });
                        }
                        (None, Some(b)) => {
                            return Err(err(b.position, SmilesErrorKind::DanglingBond))
                        }
                        (None, None) => {}
                    }
                    branch_empty = false;
                    last_dot = None;
                    prev = Some(idx);
                }
            }
        }
        if let Some(b) = pending {
            return Err(err(b.position, SmilesErrorKind::DanglingBond));
        }
        if let Some(at) = last_dot {
            return Err(err(at, SmilesErrorKind::BadDot));
        }
        if let Some(&(_, at)) = branches.last() {
            return Err(err(at, SmilesErrorKind::UnclosedParen));
        }
        if let Some((&n, ring)) = self.rings.iter().next() {
            return Err(err(ring.position, SmilesErrorKind::UnclosedRing(n)));
        }
        Ok(())
    }

    fn implicit_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn ring_number(&mut self) -> Result<u16, SmilesError> {
        let start = self.pos;
        let digit = |b: Option<u8>| match b {
            Some(d @ b'0'..=b'9') => Some((d - b'0') as u16),
            _ => None,
        };
        if self.peek() == Some(b'%') {
            let hi = digit(self.input.get(start + 1).copied());
            let lo = digit(self.input.get(start + 2).copied());
            match (hi, lo) {
                (Some(h), Some(l)) => {
                    self.pos += 3;
                    Ok(h * 10 + l)
                }
                _ => Err(err(start, SmilesErrorKind::BadRingNumber)),
            }
        } else {
            let d = digit(self.peek()).ok_or_else(|| err(start, SmilesErrorKind::BadRingNumber))?;
            self.pos += 1;
            Ok(d)
        }
    }

    fn ring_closure(
        &mut self,
        number: u16,
        atom: usize,
        bond: Option<BondOrder>,
        position: usize,
    ) -> Result<(), SmilesError> {
        let Some(open) = self.rings.remove(&number) else {
            self.rings.insert(
                number,
                OpenRing {
                    atom,
                    bond,
                    position,
                },
            );
            return Ok(());
        };
        if open.atom == atom {
            return Err(err(position, SmilesErrorKind::SelfRingBond(number)));
        }
        let order = match (open.bond, bond) {
            (Some(a), Some(b)) if a != b => {
                return Err(err(position, SmilesErrorKind::RingBondConflict(number)))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => self.implicit_order(open.atom, atom),
        };
        let duplicate = self.bonds.iter().any(|b| {
            b.endpoints == (open.atom, atom) || b.endpoints == (atom, open.atom)
        });
        if duplicate {
            return Err(err(position, SmilesErrorKind::DuplicateBond(number)));
        }
        self.bonds.push(Bond {
            endpoints: (open.atom, atom),
            order,
        });
        Ok(())
    }

    fn push_atom(&mut self, atom: Atom, bracket: bool) -> usize {
        self.atoms.push(atom);
        self.bracket.push(bracket);
        self.atoms.len() - 1
    }

    fn atom(&mut self) -> Result<usize, SmilesError> {
        if self.peek() == Some(b'[') {
            return self.bracket_atom();
        }
        let start = self.pos;
        let rest = &self.input[start..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (17, false, 2),
            [b'B', b'r', ..] => (35, false, 2),
            [b'B', ..] => (5, false, 1),
            [b'C', ..] => (6, false, 1),
            [b'N', ..] => (7, false, 1),
            [b'O', ..] => (8, false, 1),
            [b'P', ..] => (15, false, 1),
            [b'S', ..] => (16, false, 1),
            [b'F', ..] => (9, false, 1),
            [b'I', ..] => (53, false, 1),
            [b'b', ..] => (5, true, 1),
            [b'c', ..] => (6, true, 1),
            [b'n', ..] => (7, true, 1),
            [b'o', ..] => (8, true, 1),
            [b'p', ..] => (15, true, 1),
            [b's', ..] => (16, true, 1),
            [c, ..] if c.is_ascii_alphabetic() => {
                let len = if rest.get(1).is_some_and(|b| b.is_ascii_lowercase()) {
                    2
                } else {
                    1
                };
                let sym = String::from_utf8_lossy(&rest[..len]).into_owned();
                return Err(err(start, SmilesErrorKind::UnknownAtom(sym)));
            }
            _ => {
                let ch = std::str::from_utf8(rest)
                    .ok()
                    .and_then(|s| s.chars().next())
                    .unwrap_or('?');
                return Err(err(start, SmilesErrorKind::Unexpected(ch)));
            }
        };
        self.pos += len;
        Ok(self.push_atom(
            Atom {
                element,
                formal_charge: 0,
                explicit_h: 0,
                aromatic,
                isotope: None,
            },
            false,
        ))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.input[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let Some(close) = self.input[open..].iter().position(|&b| b == b']') else {
            return Err(err(open, SmilesErrorKind::UnclosedBracket));
        };
        let close = open + close;
        if self.input[open + 1..close].contains(&b'[') {
            return Err(err(open, SmilesErrorKind::UnclosedBracket));
        }
        self.pos = open + 1;
        let bad = |kind| err(open, SmilesErrorKind::BadBracket(kind));

        let isotope = match self.number() {
            Some(n) if n > 0 && n < u16::MAX as u32 => Some(n as u16),
            Some(_) => return Err(bad("isotope out of range")),
            None => None,
        };

        let sym_start = self.pos;
        if self.peek() == Some(b'*') {
            return Err(err(sym_start, SmilesErrorKind::Wildcard));
        }
        let upper = self.peek().filter(|b| b.is_ascii_alphabetic());
        let Some(first) = upper else {
            return Err(bad("missing element symbol"));
        };
        let second = self
            .input
            .get(self.pos + 1)
            .copied()
            .filter(|b| b.is_ascii_lowercase() && self.pos + 1 < close);
        let (element, aromatic) = if first.is_ascii_uppercase() {
            // Prefer the two-letter symbol when it names an element.
            let two = second.and_then(|s| {
                let sym = [first, s];
                atomic_number(std::str::from_utf8(&sym).ok()?)
            });
            match two {
                Some(z) => {
                    self.pos += 2;
                    (z, false)
                }
                None => {
                    let sym = (first as char).to_string();
                    let z = atomic_number(&sym).ok_or_else(|| {
                        let shown = match second {
                            Some(s) => format!("{sym}{}", s as char),
                            None => sym,
                        };
                        err(sym_start, SmilesErrorKind::UnknownAtom(shown))
                    })?;
                    self.pos += 1;
                    (z, false)
                }
            }
        } else {
            let rest = &self.input[self.pos..close];
            let (z, len) = match rest {
                [b's', b'e', ..] => (34, 2),
                [b'a', b's', ..] => (33, 2),
                [b't', b'e', ..] => (52, 2),
                [b'b', ..] => (5, 1),
                [b'c', ..] => (6, 1),
                [b'n', ..] => (7, 1),
                [b'o', ..] => (8, 1),
                [b'p', ..] => (15, 1),
                [b's', ..] => (16, 1),
                _ => {
                    let sym = String::from_utf8_lossy(&rest[..rest.len().min(2)]).into_owned();
                    return Err(err(sym_start, SmilesErrorKind::UnknownAtom(sym)));
                }
            };
            self.pos += len;
            (z, true)
        };

        // Chirality: '@', '@@', and the long forms like '@TH1' / '@SP2'.
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else {
                while self.peek().is_some_and(|b| b.is_ascii_uppercase() && b != b'H') {
                    self.pos += 1;
                }
                self.number();
            }
        }

        let mut explicit_h = 0u32;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = self.number().unwrap_or(1);
            if explicit_h > 9 {
                return Err(bad("hydrogen count out of range"));
            }
        }

        let mut formal_charge = 0i32;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.number() {
                formal_charge = unit * n as i32;
            } else {
                formal_charge = unit;
                while self.peek() == Some(sign) {
                    formal_charge += unit;
                    self.pos += 1;
                }
            }
            if !(-9..=9).contains(&formal_charge) {
                return Err(bad("charge out of range"));
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number().is_none() {
                return Err(bad("missing atom class"));
            }
        }

        if self.pos != close {
            return Err(bad("unexpected content"));
        }
        self.pos = close + 1;
        Ok(self.push_atom(
            Atom {
                element,
                formal_charge: formal_charge as i8,
                explicit_h: explicit_h as u8,
                aromatic,
                isotope,
            },
            true,
        ))
    }

    /// Fill implicit hydrogens, then fold hydrogen nodes into their heavy
    /// neighbours and renumber.
    fn finish(mut self) -> Result<Molecule, SmilesError> {
        let n = self.atoms.len();
        let mut valence_half = vec![0u32; n];
        for b in &self.bonds {
            valence_half[b.endpoints.0] += b.order.half_units();
            valence_half[b.endpoints.1] += b.order.half_units();
        }
        for i in 0..n {
            if !self.bracket[i] {
                let used = valence_half[i] / 2;
                self.atoms[i].explicit_h = implicit_hydrogens(&self.atoms[i], used);
            }
        }

        let is_h = |a: &Atom| a.element == 1;
        let mut extra_h = vec![0u32; n];
        for b in &self.bonds {
            let (a, c) = b.endpoints;
            match (is_h(&self.atoms[a]), is_h(&self.atoms[c])) {
                (true, false) => extra_h[c] += 1,
                (false, true) => extra_h[a] += 1,
                _ => {}
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut atoms = Vec::with_capacity(n);
        for (i, atom) in self.atoms.into_iter().enumerate() {
            if is_h(&atom) {
                continue;
            }
            remap[i] = atoms.len();
            let mut atom = atom;
            atom.explicit_h = (atom.explicit_h as u32 + extra_h[i]).min(u8::MAX as u32) as u8;
            atoms.push(atom);
        }
        if atoms.is_empty() {
            return Err(err(0, SmilesErrorKind::NoHeavyAtoms));
        }
        let bonds = self
            .bonds
            .into_iter()
            .filter(|b| remap[b.endpoints.0] != usize::MAX && remap[b.endpoints.1] != usize::MAX)
            .map(|b| Bond {
                endpoints: (remap[b.endpoints.0], remap[b.endpoints.1]),
                order: b.order,
            })
            .collect();
        Ok(Molecule::from_parts(atoms, bonds))
    }
}

/// Allowed valences for the organic subset, lowest first.
fn valences(element: u8) -> &'static [u32] {
    match element {
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        9 | 17 | 35 | 53 => &[1],
        _ => &[],
    }
}

/// Implicit hydrogen count for an organic-subset atom whose bonds use
/// `used` valence units (aromatic bonds count 1.5, sum rounded down).
///
/// Aromatic atoms use only their default valence. Aliphatic atoms take the
/// lowest allowed valence that accommodates their bonds, or none when every
/// valence is exceeded.
fn implicit_hydrogens(atom: &Atom, used: u32) -> u8 {
    let allowed = valences(atom.element);
    let target = if atom.aromatic {
        allowed.first().copied()
    } else {
        allowed.iter().copied().find(|&v| v >= used)
    };
    target.map_or(0, |v| v.saturating_sub(used) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h_counts(m: &Molecule) -> Vec<u8> {
        m.atoms().iter().map(|a| a.explicit_h).collect()
    }

    #[test]
    fn ethanol() {
        let m = parse_smiles("CCO").unwrap();
        let elems: Vec<u8> = m.atoms().iter().map(|a| a.element).collect();
        assert_eq!(elems, vec![6, 6, 8]);
        assert_eq!(m.bonds().len(), 2);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(h_counts(&m), vec![3, 2, 1]);
        assert_eq!(heavy_atom_count(&m), 3);
    }

    #[test]
    fn benzene_ring() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.element == 6));
        assert_eq!(m.bonds().len(), 6);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
        assert!((0..6).all(|i| m.degree(i) == 2));
        assert_eq!(h_counts(&m), vec![1; 6]);
    }

    #[test]
    fn ammonium() {
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atom_count(), 1);
        let a = &m.atoms()[0];
        assert_eq!((a.element, a.formal_charge, a.explicit_h), (7, 1, 4));
    }

    #[test]
    fn unclosed_ring() {
        let e = parse_smiles("C1CC").unwrap_err();
        assert_eq!(e.kind, SmilesErrorKind::UnclosedRing(1));
        assert_eq!(e.position, 1);
    }

    #[test]
    fn disconnected_count() {
        assert_eq!(parse_smiles("C.O").unwrap().heavy_atom_count(), 2);
    }

    #[test]
    fn explicit_hydrogen_is_folded() {
        let m = parse_smiles("[H]C([H])([H])[H]").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.atoms()[0].explicit_h, 4);
    }

    #[test]
    fn percent_ring_and_stereo() {
        let m = parse_smiles("C%12CC%12").unwrap();
        assert_eq!(m.bonds().len(), 3);
        let m = parse_smiles("F/C=C\\F").unwrap();
        assert_eq!(m.bonds()[1].order, BondOrder::Double);
        let m = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(m.atoms()[1].explicit_h, 1);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let m = parse_smiles("CC(C)(C)c1ccc(O)cc1").unwrap();
        for i in 0..m.atom_count() {
            for &(j, b) in m.neighbors(i) {
                assert!(m.neighbors(j).iter().any(|&(k, bb)| k == i && bb == b));
            }
        }
    }

    #[test]
    fn errors() {
        use SmilesErrorKind::*;
        let kind = |s: &str| parse_smiles(s).unwrap_err().kind;
        assert_eq!(kind("CX"), UnknownAtom("X".into()));
        assert_eq!(kind("C[NH4+"), UnclosedBracket);
        assert_eq!(kind("C(C"), UnclosedParen);
        assert_eq!(kind("CC)"), StrayCloseParen);
        assert_eq!(kind("CC="), DanglingBond);
        assert_eq!(kind("C()C"), EmptyBranch);
        assert_eq!(kind("C11"), SelfRingBond(1));
        assert_eq!(kind("C12CC12"), DuplicateBond(2));
        assert_eq!(kind("C*"), Wildcard);
        assert_eq!(kind(""), Empty);
    }
}
