//! Token stream to molecular graph, with hydrogen inference and valence checks.

use std::collections::BTreeMap;

use crate::element::Element;
use crate::error::SmilesError;
use crate::mol::{Atom, BondOrder, BondStereo, Chirality, MolGraph};
use crate::rings::ring_bonds;
use crate::token::{tokenize, Token, TokenKind};

/// Tokenizes and parses in one step.
pub fn parse_smiles(smiles: &str) -> Result<MolGraph, SmilesError> {
    parse(&tokenize(smiles)?)
}

#[derive(Clone, Copy)]
struct BondSpec {
    order: BondOrder,
    stereo: BondStereo,
    offset: usize,
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSpec>,
}

fn bond_spec(tok: &Token) -> BondSpec {
    let (order, stereo) = match tok.text.as_str() {
        "-" => (BondOrder::Single, BondStereo::None),
        "=" => (BondOrder::Double, BondStereo::None),
        "#" => (BondOrder::Triple, BondStereo::None),
        ":" => (BondOrder::Aromatic, BondStereo::None),
        "/" => (BondOrder::Single, BondStereo::Up),
        "\\" => (BondOrder::Single, BondStereo::Down),
        other => unreachable!("lexer produced bond token {other:?}"),
    };
    BondSpec {
        order,
        stereo,
        offset: tok.offset,
    }
}

fn syntax(offset: usize, reason: &str) -> SmilesError {
    SmilesError::Syntax {
        offset,
        reason: reason.to_string(),
    }
}

fn organic_atom(tok: &Token) -> Atom {
    let (sym, aromatic) = match tok.text.as_str() {
        s @ ("b" | "c" | "n" | "o" | "p" | "s") => (s.to_ascii_uppercase(), true),
        s => (s.to_string(), false),
    };
    let mut atom = Atom::new(Element::from_symbol(&sym).expect("lexer admits organic subset only"));
    atom.aromatic = aromatic;
    atom
}

fn parse_bracket(tok: &Token) -> Result<Atom, SmilesError> {
    let inner = &tok.text[1..tok.text.len() - 1];
    let b = inner.as_bytes();
    let at = |i: usize| tok.offset + 1 + i;
    let mut i = 0;

    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        (start < *i).then(|| &inner[start..*i])
    };

    let isotope = match digits(&mut i) {
        Some(d) => Some(d.parse::<u16>().map_err(|_| syntax(at(0), "isotope out of range"))?),
        None => None,
    };

    // element symbol
    let rest = &inner[i..];
    let (element, aromatic, len) = if let Some(sym) = ["se", "as"].iter().find(|s| rest.starts_with(**s)) {
        (Element::from_symbol(&capitalize(sym)).unwrap(), true, 2)
    } else if let Some(c) = rest.chars().next().filter(|c| "bcnops".contains(*c)) {
        (Element::from_symbol(&c.to_ascii_uppercase().to_string()).unwrap(), true, 1)
    } else if rest.starts_with(|c: char| c.is_ascii_uppercase()) {
        let two = rest.get(..2).and_then(Element::from_symbol);
        match two {
            Some(e) if rest.as_bytes()[1].is_ascii_lowercase() => (e, false, 2),
            _ => match rest.get(..1).and_then(Element::from_symbol) {
                Some(e) => (e, false, 1),
                None => {
                    return Err(SmilesError::Unsupported {
                        offset: at(i),
                        feature: format!("unknown element in {}", tok.text),
                    })
                }
            },
        }
    } else if rest.starts_with('*') {
        return Err(SmilesError::Unsupported {
            offset: at(i),
            feature: "wildcard atom".into(),
        });
    } else {
        return Err(syntax(at(i), "bracket atom lacks an element symbol"));
    };
    i += len;

    let mut chirality = None;
    if b.get(i) == Some(&b'@') {
        if b.get(i + 1) == Some(&b'@') {
            chirality = Some(Chirality::Clockwise);
            i += 2;
        } else {
            chirality = Some(Chirality::Anticlockwise);
            i += 1;
        }
        if b.get(i).is_some_and(|c| c.is_ascii_uppercase() && *c != b'H') {
            return Err(SmilesError::Unsupported {
                offset: at(i),
                feature: "extended chirality class".into(),
            });
        }
    }

    let mut hydrogens = 0u8;
    if b.get(i) == Some(&b'H') {
        i += 1;
        hydrogens = match digits(&mut i) {
            Some(d) => d.parse().map_err(|_| syntax(at(i), "hydrogen count out of range"))?,
            None => 1,
        };
    }

    let mut charge: i32 = 0;
    if let Some(&sign) = b.get(i).filter(|c| **c == b'+' || **c == b'-') {
        let unit = if sign == b'+' { 1 } else { -1 };
        i += 1;
        if let Some(d) = digits(&mut i) {
            charge = unit * d.parse::<i32>().map_err(|_| syntax(at(i), "bad charge"))?;
        } else {
            charge = unit;
            while b.get(i) == Some(&sign) {
                charge += unit;
                i += 1;
            }
        }
        if charge.abs() > 7 {
            return Err(syntax(at(i), "charge out of range"));
        }
    }

    if b.get(i) == Some(&b':') {
        return Err(SmilesError::Unsupported {
            offset: at(i),
            feature: "atom class".into(),
        });
    }
    if i != b.len() {
        return Err(syntax(at(i), "unexpected characters in bracket atom"));
    }
    if aromatic && !element.can_be_aromatic() {
        return Err(SmilesError::Aromaticity {
            atom: 0,
            reason: format!("{element} cannot be aromatic"),
        });
    }

    Ok(Atom {
        element,
        aromatic,
        charge: charge as i8,
        hydrogens,
        isotope,
        chirality,
        bracketed: true,
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn implicit_order(g: &MolGraph, a: usize, b: usize) -> BondOrder {
    if g.atom(a).aromatic && g.atom(b).aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    }
}

pub fn parse(tokens: &[Token]) -> Result<MolGraph, SmilesError> {
    let (mut g, explicit_aromatic) = build(tokens)?;
    finalize(&mut g, &explicit_aromatic)?;
    Ok(g)
}

/// Graph for a substructure pattern: syntax is checked, but no hydrogen
/// inference, aromaticity or valence rules are applied. Hydrogen counts are
/// those written in brackets.
pub(crate) fn parse_pattern(smiles: &str) -> Result<MolGraph, SmilesError> {
    Ok(build(&tokenize(smiles)?)?.0)
}

fn build(tokens: &[Token]) -> Result<(MolGraph, Vec<bool>), SmilesError> {
    if tokens.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut g = MolGraph::new();
    // bonds written explicitly as ':' must stay aromatic
    let mut explicit_aromatic: Vec<bool> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<BondSpec> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: BTreeMap<u8, RingOpen> = BTreeMap::new();
    let mut last_kind: Option<TokenKind> = None;

    for tok in tokens {
        match tok.kind {
            TokenKind::Atom | TokenKind::BracketAtom => {
                let atom = if tok.kind == TokenKind::Atom {
                    organic_atom(tok)
                } else {
                    parse_bracket(tok).map_err(|e| match e {
                        SmilesError::Aromaticity { reason, .. } => SmilesError::Aromaticity {
                            atom: g.atom_count(),
                            reason,
                        },
                        other => other,
                    })?
                };
                let idx = g.add_atom(atom);
                match prev {
                    Some(p) => {
                        let spec = pending.take();
                        let order = spec.map_or_else(|| implicit_order(&g, p, idx), |s| s.order);
                        let stereo = spec.map_or(BondStereo::None, |s| s.stereo);
                        g.add_bond(p, idx, order, stereo).expect("new atom cannot be bonded yet");
                        explicit_aromatic.push(spec.is_some_and(|s| s.order == BondOrder::Aromatic));
                    }
                    None => {
                        if let Some(spec) = pending {
                            return Err(syntax(spec.offset, "bond without a preceding atom"));
                        }
                    }
                }
                prev = Some(idx);
            }
            TokenKind::Bond => {
                if prev.is_none() {
                    return Err(syntax(tok.offset, "bond without a preceding atom"));
                }
                if pending.is_some() {
                    return Err(syntax(tok.offset, "consecutive bond symbols"));
                }
                pending = Some(bond_spec(tok));
            }
            TokenKind::RingClosure => {
                let Some(cur) = prev else {
                    return Err(syntax(tok.offset, "ring closure without a preceding atom"));
                };
                let label = tok.ring_label().expect("lexer validated ring label");
                let spec = pending.take();
                match rings.remove(&label) {
                    None => {
                        rings.insert(
                            label,
                            RingOpen {
                                atom: cur,
                                bond: spec,
                            },
                        );
                    }
                    Some(open) => {
                        let conflict = |reason: &str| SmilesError::RingBondConflict {
                            offset: tok.offset,
                            reason: reason.to_string(),
                        };
                        let chosen = match (open.bond, spec) {
                            (Some(a), Some(b)) if a.order != b.order => {
                                return Err(conflict("ring bond orders differ at the two ends"))
                            }
                            (Some(a), _) => Some(a),
                            (None, b) => b,
                        };
                        if open.atom == cur {
                            return Err(conflict("ring closure bonds an atom to itself"));
                        }
                        let order = chosen.map_or_else(|| implicit_order(&g, open.atom, cur), |s| s.order);
                        let stereo = chosen.map_or(BondStereo::None, |s| s.stereo);
                        if g.add_bond(open.atom, cur, order, stereo).is_none() {
                            return Err(conflict("ring closure duplicates an existing bond"));
                        }
                        explicit_aromatic.push(chosen.is_some_and(|s| s.order == BondOrder::Aromatic));
                    }
                }
            }
            TokenKind::BranchOpen => {
                let Some(cur) = prev else {
                    return Err(syntax(tok.offset, "branch without a preceding atom"));
                };
                if pending.is_some() {
                    return Err(syntax(tok.offset, "bond symbol before '('"));
                }
                branches.push((cur, tok.offset));
            }
            TokenKind::BranchClose => {
                if pending.is_some() {
                    return Err(syntax(tok.offset, "bond symbol before ')'"));
                }
                if last_kind == Some(TokenKind::BranchOpen) {
                    return Err(syntax(tok.offset, "empty branch"));
                }
                let (atom, _) = branches
                    .pop()
                    .ok_or(SmilesError::UnmatchedBranch { offset: tok.offset })?;
                prev = Some(atom);
            }
            TokenKind::Dot => {
                if pending.is_some() {
                    return Err(syntax(tok.offset, "bond symbol before '.'"));
                }
                if prev.is_none() {
                    return Err(syntax(tok.offset, "'.' without a preceding atom"));
                }
                if !branches.is_empty() {
                    return Err(SmilesError::Unsupported {
                        offset: tok.offset,
                        feature: "'.' inside a branch".into(),
                    });
                }
                prev = None;
            }
        }
        last_kind = Some(tok.kind);
    }

    if let Some(spec) = pending {
        return Err(syntax(spec.offset, "dangling bond at end of input"));
    }
    if last_kind == Some(TokenKind::Dot) {
        let offset = tokens.last().map_or(0, |t| t.offset);
        return Err(syntax(offset, "'.' at end of input"));
    }
    if let Some(&(_, offset)) = branches.first() {
        return Err(SmilesError::UnmatchedBranch { offset });
    }
    if let Some((&label, _)) = rings.iter().next() {
        return Err(SmilesError::UnclosedRing { label });
    }
    if g.is_empty() {
        return Err(SmilesError::Empty);
    }

    Ok((g, explicit_aromatic))
}

/// Aromaticity sanity checks, hydrogen inference and valence validation.
fn finalize(g: &mut MolGraph, explicit_aromatic: &[bool]) -> Result<(), SmilesError> {
    let in_ring = ring_bonds(g);
    for bi in 0..g.bond_count() {
        let b = g.bond(bi).clone();
        if b.order != BondOrder::Aromatic {
            continue;
        }
        if !(g.atom(b.a).aromatic && g.atom(b.b).aromatic) {
            let atom = if g.atom(b.a).aromatic { b.b } else { b.a };
            return Err(SmilesError::Aromaticity {
                atom,
                reason: "aromatic bond to a non-aromatic atom".into(),
            });
        }
        if !in_ring[bi] {
            if explicit_aromatic[bi] {
                return Err(SmilesError::Aromaticity {
                    atom: b.a,
                    reason: "aromatic bond outside a ring".into(),
                });
            }
            // link between two aromatic systems, e.g. biphenyl
            g.bond_mut(bi).order = BondOrder::Single;
        }
    }

    for ai in 0..g.atom_count() {
        let atom = g.atom(ai);
        if atom.aromatic
            && !g
                .neighbors(ai)
                .iter()
                .any(|&(_, b)| in_ring[b] && g.bond(b).order == BondOrder::Aromatic)
        {
            return Err(SmilesError::Aromaticity {
                atom: ai,
                reason: "aromatic atom not on an aromatic ring".into(),
            });
        }
    }

    for ai in 0..g.atom_count() {
        if !g.atom(ai).bracketed {
            let h = g.implicit_hydrogens(ai);
            g.atom_mut(ai).hydrogens = h;
        }
        check_valence(g, ai)?;
    }
    check_kekule(g)
}

/// Whether an aromatic atom must take one double bond inside the aromatic
/// system. Pyrrole-type atoms (lone-pair donors) and atoms with an exocyclic
/// double bond do not.
fn needs_pi_bond(g: &MolGraph, ai: usize) -> bool {
    let a = g.atom(ai);
    if g.has_double_bond(ai) {
        return false;
    }
    let connections = g.degree(ai) + a.hydrogens as usize;
    match a.element {
        Element::C => a.charge == 0,
        Element::B => a.charge == -1 || (a.charge == 0 && connections < 3),
        Element::N | Element::P => match a.charge {
            0 => connections == 2,
            1 => connections == 3,
            _ => false,
        },
        Element::O | Element::S | Element::SE => a.charge == 1,
        _ => false,
    }
}

/// Aromatic systems must admit an alternating single/double assignment:
/// every atom that needs a pi bond is paired with exactly one aromatic
/// neighbor that also needs one.
fn check_kekule(g: &MolGraph) -> Result<(), SmilesError> {
    let n = g.atom_count();
    let need: Vec<bool> = (0..n).map(|v| g.atom(v).aromatic && needs_pi_bond(g, v)).collect();
    let partners: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            g.neighbors(v)
                .iter()
                .filter(|&&(w, b)| need[w] && g.bond(b).order == BondOrder::Aromatic)
                .map(|&(w, _)| w)
                .collect()
        })
        .collect();
    let fail = |atom: usize| SmilesError::Aromaticity {
        atom,
        reason: "aromatic system has no alternating bond assignment".into(),
    };
    // cheap parity test per connected component first
    let mut comp = vec![usize::MAX; n];
    for s in (0..n).filter(|&v| need[v]) {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = s;
        let (mut stack, mut size) = (vec![s], 0usize);
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &partners[v] {
                if comp[w] == usize::MAX {
                    comp[w] = s;
                    stack.push(w);
                }
            }
        }
        if size % 2 == 1 {
            return Err(fail(s));
        }
    }
    let mut matched: Vec<bool> = need.iter().map(|&x| !x).collect();
    let mut budget = KEKULE_BUDGET;
    match assign(&partners, &mut matched, &mut budget) {
        true => Ok(()),
        false => Err(fail((0..n).find(|&v| need[v]).unwrap_or(0))),
    }
}

const KEKULE_BUDGET: usize = 1 << 20;

/// Backtracking perfect matching. Always extends the unmatched atom with
/// the fewest free partners, which resolves ordinary ring systems without
/// any branching.
fn assign(partners: &[Vec<usize>], matched: &mut [bool], budget: &mut usize) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let mut best: Option<(usize, usize)> = None;
    for v in (0..matched.len()).filter(|&v| !matched[v]) {
        let free = partners[v].iter().filter(|&&w| !matched[w]).count();
        if free == 0 {
            return false;
        }
        if best.is_none_or(|(_, f)| free < f) {
            best = Some((v, free));
        }
    }
    let Some((v, _)) = best else {
        return true;
    };
    matched[v] = true;
    for &w in &partners[v] {
        if matched[w] {
            continue;
        }
        matched[w] = true;
        if assign(partners, matched, budget) {
            return true;
        }
        matched[w] = false;
    }
    matched[v] = false;
    false
}

fn check_valence(g: &MolGraph, ai: usize) -> Result<(), SmilesError> {
    let atom = g.atom(ai);
    let allowed = atom.element.valences_with_charge(atom.charge);
    let Some(&max) = allowed.last() else {
        return Ok(());
    };
    let mut total = g.bond_order_sum(ai) + atom.hydrogens as u32;
    // aromatic carbon and boron supply one pi electron unless an exocyclic
    // double bond already does
    if atom.aromatic && matches!(atom.element, Element::C | Element::B) && !g.has_double_bond(ai) {
        total += 1;
    }
    if total > max as u32 {
        return Err(SmilesError::Valence {
            atom: ai,
            element: atom.element.symbol().to_string(),
            valence: total,
        });
    }
    Ok(())
}
