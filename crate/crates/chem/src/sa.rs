//! Synthetic accessibility.
//!
//! A fragment score rewards circular environments that are common in a
//! reference corpus; complexity penalties for size, stereocenters, spiro
//! atoms, bridgeheads and macrocycles are subtracted. The raw value is
//! mapped onto the usual 1 (easy) to 10 (hard) scale and then normalized to
//! [0, 1] with 1 meaning easiest.

use std::collections::HashMap;

use crate::canon::symmetry_classes;
use crate::element::Element;
use crate::error::MetricsError;
use crate::fingerprint::morgan_environments;
use crate::mol::MolGraph;
use crate::rings::{sssr, Ring};

const RADIUS: u32 = 2;
const UNKNOWN_FRAGMENT: f64 = -4.0;
const COVERAGE: f64 = 0.8;

/// Fragment contributions keyed by environment identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SaTables {
    fragments: HashMap<u64, f64>,
}

impl SaTables {
    /// Counts every radius ≤ 2 environment in `corpus`. The count reached
    /// at 80% cumulative coverage (most frequent first) becomes the unit:
    /// a fragment scores ln(count / unit).
    pub fn from_corpus<'a>(corpus: impl IntoIterator<Item = &'a MolGraph>) -> Result<Self, MetricsError> {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for g in corpus {
            for id in morgan_environments(g, RADIUS) {
                *counts.entry(id).or_default() += 1;
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: HashMap<u64, u64>) -> Result<Self, MetricsError> {
        if counts.is_empty() {
            return Err(MetricsError::EmptyFragmentTable);
        }
        let mut sorted: Vec<u64> = counts.values().copied().collect();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let total: u64 = sorted.iter().sum();
        let mut acc = 0u64;
        let mut unit = *sorted.last().expect("non-empty");
        for &c in &sorted {
            acc += c;
            if acc as f64 >= COVERAGE * total as f64 {
                unit = c;
                break;
            }
        }
        let fragments = counts
            .into_iter()
            .map(|(id, c)| (id, (c as f64 / unit as f64).ln()))
            .collect();
        Ok(SaTables { fragments })
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn fragment_score(&self, id: u64) -> f64 {
        self.fragments.get(&id).copied().unwrap_or(UNKNOWN_FRAGMENT)
    }
}

/// Individual terms of the raw score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaTerms {
    pub fragment: f64,
    pub size: f64,
    pub stereo: f64,
    pub spiro: f64,
    pub bridge: f64,
    pub macrocycle: f64,
    pub symmetry: f64,
}

impl SaTerms {
    pub fn total(&self) -> f64 {
        self.fragment - self.size - self.stereo - self.spiro - self.bridge - self.macrocycle + self.symmetry
    }
}

pub fn sa_terms(g: &MolGraph, tables: &SaTables) -> SaTerms {
    let envs = morgan_environments(g, RADIUS);
    let fragment = if envs.is_empty() {
        0.0
    } else {
        envs.iter().map(|&id| tables.fragment_score(id)).sum::<f64>() / envs.len() as f64
    };
    let mut distinct = envs.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let n = g.heavy_atom_count() as f64;
    let rings = sssr(g);
    let symmetry = if n > distinct.len() as f64 && !distinct.is_empty() {
        0.5 * (n / distinct.len() as f64).ln()
    } else {
        0.0
    };
    SaTerms {
        fragment,
        size: n.powf(1.005) - n,
        stereo: ((stereocenters(g) + 1) as f64).log10(),
        spiro: ((spiro_atoms(&rings) + 1) as f64).log10(),
        bridge: ((bridgehead_atoms(g, &rings) + 1) as f64).log10(),
        macrocycle: if rings.iter().any(|r| r.len() > 8) { 2f64.log10() } else { 0.0 },
        symmetry,
    }
}

/// Maps a raw score onto the 1..10 scale (1 = easy).
pub fn raw_to_scale(s: f64) -> f64 {
    const MIN: f64 = -4.0;
    const MAX: f64 = 2.5;
    let mut v = 11.0 - (s - MIN + 1.0) / (MAX - MIN) * 9.0;
    if v > 8.0 {
        v = 8.0 + (v - 8.0).ln();
    }
    v.clamp(1.0, 10.0)
}

/// Score on the 1 (easy) to 10 (hard) scale.
pub fn sa_raw(g: &MolGraph, tables: &SaTables) -> f64 {
    raw_to_scale(sa_terms(g, tables).total())
}

/// Normalized score in [0, 1], higher meaning easier to make.
pub fn sa_score(g: &MolGraph, tables: &SaTables) -> f64 {
    (10.0 - sa_raw(g, tables)) / 9.0
}

/// Annotated chiral atoms plus unannotated tetrahedral carbons whose four
/// substituents fall in distinct symmetry classes.
pub fn stereocenters(g: &MolGraph) -> usize {
    let classes = symmetry_classes(g);
    (0..g.atom_count())
        .filter(|&v| {
            let a = g.atom(v);
            if a.chirality.is_some() {
                return true;
            }
            if a.aromatic || a.hydrogens > 1 || g.degree(v) + a.hydrogens as usize != 4 {
                return false;
            }
            if g.bond_order_sum(v) != g.degree(v) as u32 || a.element != Element::C {
                return false;
            }
            let mut c: Vec<usize> = g.neighbors(v).iter().map(|&(w, _)| classes[w]).collect();
            c.sort_unstable();
            c.dedup();
            c.len() == g.degree(v)
        })
        .count()
}

/// Atoms shared by two rings that have exactly that one atom in common.
pub fn spiro_atoms(rings: &[Ring]) -> usize {
    let mut spiro: Vec<usize> = Vec::new();
    for (i, r) in rings.iter().enumerate() {
        for s in &rings[i + 1..] {
            let shared: Vec<usize> = r.atoms.iter().copied().filter(|a| s.contains_atom(*a)).collect();
            if shared.len() == 1 {
                spiro.push(shared[0]);
            }
        }
    }
    spiro.sort_unstable();
    spiro.dedup();
    spiro.len()
}

/// Bridgeheads: for ring pairs sharing at least three atoms, shared atoms
/// with neighbors outside the shared set in both rings.
pub fn bridgehead_atoms(g: &MolGraph, rings: &[Ring]) -> usize {
    let mut heads: Vec<usize> = Vec::new();
    for (i, r) in rings.iter().enumerate() {
        for s in &rings[i + 1..] {
            let shared: Vec<usize> = r.atoms.iter().copied().filter(|a| s.contains_atom(*a)).collect();
            if shared.len() < 3 {
                continue;
            }
            for &a in &shared {
                let outside = |ring: &Ring| {
                    g.neighbors(a)
                        .iter()
                        .any(|&(w, _)| ring.contains_atom(w) && !shared.contains(&w))
                };
                if outside(r) && outside(s) {
                    heads.push(a);
                }
            }
        }
    }
    heads.sort_unstable();
    heads.dedup();
    heads.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_smiles;
    use proptest::prelude::*;

    fn mol(s: &str) -> MolGraph {
        parse_smiles(s).unwrap()
    }

    fn tables() -> SaTables {
        let corpus: Vec<MolGraph> = [
            "CCCC", "CCCCC", "CCCO", "CCC(=O)O", "c1ccccc1", "Cc1ccccc1", "CCOCC", "CCN", "CC(C)C",
            "c1ccccc1O", "CC(=O)Oc1ccccc1C(=O)O", "CCCCCC",
        ]
        .iter()
        .map(|s| mol(s))
        .collect();
        SaTables::from_corpus(&corpus).unwrap()
    }

    #[test]
    fn empty_table_is_an_error() {
        assert_eq!(SaTables::from_counts(HashMap::new()), Err(MetricsError::EmptyFragmentTable));
        assert_eq!(SaTables::from_corpus(&[]), Err(MetricsError::EmptyFragmentTable));
    }

    #[test]
    fn scale_transform() {
        assert_eq!(raw_to_scale(10.0), 1.0);
        assert_eq!(raw_to_scale(-100.0), 10.0);
        // s - min + 1 = 4.25
        assert!((raw_to_scale(-0.75) - (11.0 - 4.25 / 6.5 * 9.0)).abs() < 1e-12);
        // above 8 the scale is compressed logarithmically
        let s = -4.0;
        let v: f64 = 11.0 - 1.0 / 6.5 * 9.0;
        assert!((raw_to_scale(s) - (8.0 + (v - 8.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn chain_easier_than_fused_polycycle() {
        // both have 8 heavy atoms
        let t = tables();
        let chain = sa_score(&mol("CCCCCCCC"), &t);
        let cage = sa_score(&mol("C12C3C4C1C5C2C3C45"), &t);
        assert!(chain > cage, "{chain} vs {cage}");
        let butane = sa_score(&mol("CCCC"), &t);
        let bicyclic = sa_score(&mol("C12CC1C2"), &t);
        assert!(butane > bicyclic);
    }

    #[test]
    fn complexity_counts() {
        assert_eq!(spiro_atoms(&sssr(&mol("C1CCC2(C1)CCCC2"))), 1);
        let norbornane = mol("C1CC2CCC1C2");
        assert_eq!(bridgehead_atoms(&norbornane, &sssr(&norbornane)), 2);
        let decalin = mol("C1CCC2CCCCC2C1");
        assert_eq!(bridgehead_atoms(&decalin, &sssr(&decalin)), 0);
        assert_eq!(stereocenters(&mol("CC(O)CC")), 1);
        assert_eq!(stereocenters(&mol("CC(C)CC")), 0);
        assert_eq!(stereocenters(&mol("C[C@H](O)CC")), 1);
    }

    #[test]
    fn pure() {
        let t = tables();
        let g = mol("CC(=O)Oc1ccccc1C(=O)O");
        assert_eq!(sa_score(&g, &t), sa_score(&g, &t));
    }

    proptest! {
        #[test]
        fn normalized_in_unit_interval(n in 1usize..20, ring in proptest::bool::ANY) {
            let s = if ring && n >= 3 { format!("C1{}C1", "C".repeat(n - 2)) } else { "C".repeat(n) };
            let v = sa_score(&mol(&s), &tables());
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
