//! The eight drug-likeness descriptors.
//!
//! logP and polar surface area come from bundled atom-contribution tables
//! (a reduced Wildman–Crippen typing and the Ertl N/O polar contributions).

use crate::alerts::count_alerts;
use crate::element::Element;
use crate::mol::{BondOrder, MolGraph};
use crate::rings::{ring_bonds, sssr};

const H_MASS: f64 = 1.008;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptors {
    pub mw: f64,
    pub alogp: f64,
    pub hbd: u32,
    pub hba: u32,
    pub psa: f64,
    pub rotb: u32,
    pub arom: u32,
    pub alerts: u32,
}

impl Descriptors {
    /// Values in the fixed order MW, ALOGP, HBA, HBD, PSA, ROTB, AROM, ALERTS
    /// used by the desirability tables.
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.mw,
            self.alogp,
            self.hba as f64,
            self.hbd as f64,
            self.psa,
            self.rotb as f64,
            self.arom as f64,
            self.alerts as f64,
        ]
    }
}

pub fn descriptors(g: &MolGraph) -> Descriptors {
    Descriptors {
        mw: molecular_weight(g),
        alogp: crippen_logp(g),
        hbd: h_bond_donors(g),
        hba: h_bond_acceptors(g),
        psa: polar_surface_area(g),
        rotb: rotatable_bonds(g),
        arom: aromatic_rings(g),
        alerts: count_alerts(g),
    }
}

pub fn molecular_weight(g: &MolGraph) -> f64 {
    g.atoms()
        .iter()
        .map(|a| {
            let heavy = match a.isotope {
                Some(iso) => iso as f64,
                None => a.element.mass(),
            };
            heavy + a.hydrogens as f64 * H_MASS
        })
        .sum()
}

pub fn h_bond_donors(g: &MolGraph) -> u32 {
    g.atoms()
        .iter()
        .filter(|a| matches!(a.element, Element::N | Element::O) && a.hydrogens > 0)
        .count() as u32
}

fn bonded_to_carbonyl_like(g: &MolGraph, v: usize) -> bool {
    g.neighbors(v).iter().any(|&(w, _)| {
        matches!(g.atom(w).element, Element::C | Element::S | Element::P)
            && g.neighbors(w).iter().any(|&(x, b)| {
                x != v && g.bond(b).order == BondOrder::Double && g.atom(x).element == Element::O
            })
    })
}

/// Oxygens (except positively charged), pyridine-type aromatic nitrogens,
/// nitriles, and neutral trivalent amines that are not amides or
/// sulfonamides.
pub fn h_bond_acceptors(g: &MolGraph) -> u32 {
    (0..g.atom_count())
        .filter(|&v| {
            let a = g.atom(v);
            match a.element {
                Element::O => a.charge <= 0,
                Element::N if a.charge != 0 => false,
                Element::N if a.aromatic => a.hydrogens == 0 && g.degree(v) == 2,
                Element::N => {
                    let sum = g.bond_order_sum(v) + a.hydrogens as u32;
                    let nitrile = g.degree(v) == 1 && g.bond_order_sum(v) == 3;
                    nitrile || (sum == 3 && !g.has_double_bond(v) && !bonded_to_carbonyl_like(g, v))
                }
                _ => false,
            }
        })
        .count() as u32
}

/// Single, non-ring bonds between heavy atoms that both have degree ≥ 2,
/// excluding amide C–N bonds.
pub fn rotatable_bonds(g: &MolGraph) -> u32 {
    let in_ring = ring_bonds(g);
    let is_amide_carbon = |c: usize| {
        g.atom(c).element == Element::C
            && g.neighbors(c).iter().any(|&(x, b)| {
                g.bond(b).order == BondOrder::Double && g.atom(x).element == Element::O
            })
    };
    g.bonds()
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            if b.order != BondOrder::Single || in_ring[*i] {
                return false;
            }
            if g.degree(b.a) < 2 || g.degree(b.b) < 2 {
                return false;
            }
            let amide = (g.atom(b.a).element == Element::N && is_amide_carbon(b.b))
                || (g.atom(b.b).element == Element::N && is_amide_carbon(b.a));
            !amide
        })
        .count() as u32
}

pub fn aromatic_rings(g: &MolGraph) -> u32 {
    sssr(g)
        .iter()
        .filter(|r| r.atoms.iter().all(|&a| g.atom(a).aromatic))
        .count() as u32
}

/// Topological polar surface area from N and O contributions.
pub fn polar_surface_area(g: &MolGraph) -> f64 {
    let in_ring3 = small_ring_atoms(g, 3);
    (0..g.atom_count())
        .map(|v| {
            let a = g.atom(v);
            let h = a.hydrogens;
            let (mut single, mut double, mut triple, mut arom) = (0, 0, 0, 0);
            for &(_, b) in g.neighbors(v) {
                match g.bond(b).order {
                    BondOrder::Single => single += 1,
                    BondOrder::Double => double += 1,
                    BondOrder::Triple => triple += 1,
                    BondOrder::Aromatic => arom += 1,
                }
            }
            match (a.element, a.charge) {
                (Element::N, 0) if arom > 0 => match (h, single, double, arom) {
                    (0, 0, 0, 2) => 12.89,
                    (0, 0, 0, 3) => 4.41,
                    (0, 1, 0, 2) => 4.93,
                    (0, 0, 1, 2) => 8.39,
                    (1, 0, 0, 2) => 15.79,
                    _ => 4.41,
                },
                (Element::N, 0) => match (h, single, double, triple) {
                    (0, 3, 0, 0) if in_ring3[v] => 3.01,
                    (0, 3, 0, 0) => 3.24,
                    (0, 1, 1, 0) => 12.36,
                    (0, 0, 0, 1) => 23.79,
                    (0, 1, 2, 0) => 11.68,
                    (0, 0, 1, 1) => 13.60,
                    (1, 2, 0, 0) if in_ring3[v] => 21.94,
                    (1, 2, 0, 0) => 12.03,
                    (1, 0, 1, 0) => 23.85,
                    (2, 1, 0, 0) => 26.02,
                    (3, 0, 0, 0) => 26.02,
                    _ => 0.0,
                },
                (Element::N, 1) if arom > 0 => match (h, single) {
                    (0, 0) => 4.10,
                    (0, _) => 3.88,
                    _ => 14.14,
                },
                (Element::N, 1) => match (h, single, double, triple) {
                    (0, 4, 0, 0) => 0.0,
                    (0, 2, 1, 0) => 3.01,
                    (0, 1, 0, 1) => 4.36,
                    (1, 3, 0, 0) => 4.44,
                    (1, 1, 1, 0) => 13.97,
                    (2, 2, 0, 0) => 16.61,
                    (2, 0, 1, 0) => 25.59,
                    (3, 1, 0, 0) => 27.64,
                    _ => 0.0,
                },
                (Element::O, 0) if arom > 0 => 13.14,
                (Element::O, 0) => match (h, single, double) {
                    (0, 2, 0) if in_ring3[v] => 12.53,
                    (0, 2, 0) => 9.23,
                    (0, 0, 1) => 17.07,
                    (1, 1, 0) => 20.23,
                    (2, 0, 0) => 20.23,
                    _ => 0.0,
                },
                (Element::O, -1) => 23.06,
                _ => 0.0,
            }
        })
        .sum()
}

fn small_ring_atoms(g: &MolGraph, size: usize) -> Vec<bool> {
    let mut out = vec![false; g.atom_count()];
    for r in sssr(g).iter().filter(|r| r.len() == size) {
        for &a in &r.atoms {
            out[a] = true;
        }
    }
    out
}

fn is_hetero(e: Element) -> bool {
    !matches!(e, Element::C | Element::H)
}

/// Atom-contribution logP (reduced Wildman–Crippen typing). Hydrogens are
/// typed by the heavy atom they sit on.
pub fn crippen_logp(g: &MolGraph) -> f64 {
    let mut total = 0.0;
    for v in 0..g.atom_count() {
        let a = g.atom(v);
        let nbrs = g.neighbors(v);
        let hetero_nbr = nbrs.iter().any(|&(w, _)| is_hetero(g.atom(w).element));
        let arom_nbr = nbrs.iter().any(|&(w, _)| g.atom(w).aromatic);
        let double_to_hetero = nbrs.iter().any(|&(w, b)| {
            g.bond(b).order == BondOrder::Double && is_hetero(g.atom(w).element)
        });
        let (heavy, h_each) = match a.element {
            Element::C if a.aromatic => {
                let exo = nbrs
                    .iter()
                    .find(|&&(_, b)| g.bond(b).order != BondOrder::Aromatic)
                    .map(|&(w, b)| (g.atom(w), g.bond(b).order));
                let c = match exo {
                    None if a.hydrogens > 0 => 0.1581,
                    None => 0.2955,
                    Some((_, BondOrder::Double)) => -0.8186,
                    Some((w, _)) if w.aromatic => 0.2713,
                    Some((w, _)) => match w.element {
                        Element::C => 0.1360,
                        Element::N => 0.4619,
                        Element::O => 0.5437,
                        Element::S => 0.1893,
                        Element::F => 0.0,
                        Element::CL => 0.2450,
                        Element::BR => 0.1980,
                        Element::I => 0.0,
                        _ => -0.5443,
                    },
                };
                (c, 0.123)
            }
            Element::C => {
                let order_sum = g.bond_order_sum(v);
                let c = if nbrs.iter().any(|&(_, b)| g.bond(b).order == BondOrder::Triple) {
                    0.0017
                } else if double_to_hetero {
                    -0.2783
                } else if g.has_double_bond(v) {
                    if arom_nbr { 0.2640 } else { 0.1551 }
                } else if arom_nbr {
                    match a.hydrogens {
                        3 => 0.08452,
                        2 => -0.0516,
                        1 => 0.1193,
                        _ => -0.0967,
                    }
                } else if hetero_nbr {
                    if a.hydrogens >= 2 { -0.2035 } else { -0.2051 }
                } else if a.hydrogens >= 2 || order_sum == 0 {
                    0.1441
                } else {
                    0.0
                };
                (c, 0.123)
            }
            Element::N => {
                let c = if a.charge > 0 {
                    if a.aromatic { -1.119 } else if a.hydrogens > 0 { -1.950 } else { -0.3396 }
                } else if a.aromatic {
                    -0.4806
                } else if g.bond_order_sum(v) > g.degree(v) as u32 {
                    // imine, nitrile, azo
                    -0.3239
                } else {
                    match (a.hydrogens, arom_nbr) {
                        (2, false) => -1.019,
                        (1, false) => -0.7096,
                        (0, false) => -0.3187,
                        (2, true) => -1.027,
                        (1, true) => -0.5188,
                        _ => -0.4458,
                    }
                };
                (c, 0.2142)
            }
            Element::O => {
                let carbonyl_partner = nbrs
                    .iter()
                    .find(|&&(_, b)| g.bond(b).order == BondOrder::Double)
                    .map(|&(w, _)| w);
                let c = if a.aromatic {
                    0.1552
                } else if a.charge < 0 {
                    let acid = nbrs.iter().any(|&(w, _)| {
                        g.atom(w).element == Element::C && g.has_double_bond(w)
                    });
                    if acid { -1.326 } else { -1.189 }
                } else if let Some(w) = carbonyl_partner {
                    let wa = g.atom(w);
                    if wa.element != Element::C {
                        0.0335
                    } else if wa.aromatic {
                        0.1788
                    } else if g
                        .neighbors(w)
                        .iter()
                        .any(|&(x, _)| x != v && is_hetero(g.atom(x).element))
                    {
                        -0.1526
                    } else if g.neighbors(w).iter().any(|&(x, _)| g.atom(x).aromatic) {
                        0.1129
                    } else {
                        -0.1526
                    }
                } else if a.hydrogens > 0 {
                    -0.2893
                } else if arom_nbr {
                    -0.0684 - 0.3511 * 0.5
                } else {
                    -0.0684
                };
                let acid_h = nbrs.iter().any(|&(w, _)| {
                    g.atom(w).element == Element::C
                        && g.neighbors(w).iter().any(|&(x, b)| {
                            x != v && g.bond(b).order == BondOrder::Double && g.atom(x).element == Element::O
                        })
                });
                (c, if acid_h { 0.298 } else { -0.2677 })
            }
            Element::S => (
                if a.aromatic { 0.6237 } else if a.charge != 0 { -0.0024 } else { 0.6482 },
                0.1125,
            ),
            Element::P => (0.8612, 0.1125),
            Element::F => (0.4202, 0.0),
            Element::CL => (0.6895, 0.0),
            Element::BR => (0.8456, 0.0),
            Element::I => (0.8857, 0.0),
            Element::B => (0.0, 0.123),
            _ => (-0.3808, 0.123),
        };
        total += heavy + h_each * a.hydrogens as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_smiles;

    fn d(s: &str) -> Descriptors {
        descriptors(&parse_smiles(s).unwrap())
    }

    #[test]
    fn methane() {
        let m = d("C");
        assert!((m.mw - 16.043).abs() < 0.01);
        assert_eq!((m.hbd, m.hba, m.rotb, m.arom), (0, 0, 0, 0));
    }

    #[test]
    fn water() {
        let w = d("O");
        assert_eq!((w.hbd, w.hba), (1, 1));
    }

    #[test]
    fn benzene() {
        let b = d("c1ccccc1");
        assert_eq!((b.arom, b.rotb), (1, 0));
        assert!(b.psa.abs() < 1e-12);
    }

    #[test]
    fn aspirin() {
        let a = d("CC(=O)Oc1ccccc1C(=O)O");
        assert!((a.mw - 180.159).abs() < 1e-3, "{}", a.mw);
        assert!((a.psa - 63.60).abs() < 1e-9, "{}", a.psa);
        assert_eq!(a.hbd, 1);
        assert_eq!(a.arom, 1);
        assert_eq!(a.rotb, 3);
    }

    #[test]
    fn rotatable_bonds_skip_amides_and_termini() {
        assert_eq!(d("CCCC").rotb, 1);
        assert_eq!(d("CC(=O)NC").rotb, 0);
        assert_eq!(d("CC(=O)NCC").rotb, 1);
        assert_eq!(d("c1ccccc1-c1ccccc1").rotb, 1);
        assert_eq!(d("C1CCCCC1").rotb, 0);
    }

    #[test]
    fn polar_surface_area_groups() {
        assert!((d("c1ccccc1[N+](=O)[O-]").psa - 43.14).abs() < 1e-9);
        assert!((d("CC#N").psa - 23.79).abs() < 1e-9);
        assert!((d("c1ccncc1").psa - 12.89).abs() < 1e-9);
    }

    #[test]
    fn logp_orders_sensibly() {
        assert!(d("CCCCCCCC").alogp > d("CCCCO").alogp);
        assert!(d("c1ccccc1Cl").alogp > d("c1ccccc1").alogp);
        assert!(d("OCC(O)CO").alogp < 0.0);
    }
}
