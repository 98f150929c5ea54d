//! Canonical SMILES.
//!
//! Atoms are ranked by iterated Morgan-style refinement of local invariants.
//! When symmetry leaves ties, each tied atom of the first ambiguous class is
//! individualized in turn and the lexicographically smallest resulting
//! string wins, which makes the output independent of input atom order.

use crate::error::SmilesError;
use crate::mol::MolGraph;
use crate::parse::parse_smiles;
use crate::write::write_ranked;

/// Parses and re-writes `smiles` in canonical form.
pub fn canonicalize(smiles: &str) -> Result<String, SmilesError> {
    Ok(canonical_smiles(&parse_smiles(smiles)?))
}

pub fn canonical_smiles(g: &MolGraph) -> String {
    if g.is_empty() {
        return String::new();
    }
    let mut best: Option<String> = None;
    search(g, initial_ranks(g), &mut best);
    best.unwrap_or_default()
}

/// Ranks after refinement only; equal ranks mark (likely) symmetry-equivalent
/// atoms. Chirality is not part of the invariant.
pub fn symmetry_classes(g: &MolGraph) -> Vec<usize> {
    refine(g, initial_ranks(g))
}

fn initial_ranks(g: &MolGraph) -> Vec<usize> {
    let keys: Vec<_> = (0..g.atom_count())
        .map(|v| {
            let a = g.atom(v);
            (
                g.degree(v),
                a.element.atomic_number(),
                a.isotope.unwrap_or(0),
                a.charge,
                a.hydrogens,
                a.aromatic,
            )
        })
        .collect();
    dense_rank(&keys)
}

fn dense_rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    let mut seen = ranks.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn refine(g: &MolGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..g.atom_count())
            .map(|v| {
                let mut nb: Vec<(usize, u8)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(w, b)| (ranks[w], g.bond(b).order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[v], nb)
            })
            .collect();
        let next = dense_rank(&keys);
        let next_classes = class_count(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

fn search(g: &MolGraph, ranks: Vec<usize>, best: &mut Option<String>) {
    let ranks = refine(g, ranks);
    let n = ranks.len();
    if class_count(&ranks) == n {
        let s = write_ranked(g, &ranks);
        if best.as_ref().is_none_or(|b| s < *b) {
            *best = Some(s);
        }
        return;
    }
    // first (lowest-ranked) class with more than one member
    let mut counts = vec![0usize; n];
    for &r in &ranks {
        counts[r] += 1;
    }
    let target = (0..n).find(|&r| counts[r] > 1).expect("a tie exists");
    let tied: Vec<usize> = (0..n).filter(|&v| ranks[v] == target).collect();
    for &chosen in &tied {
        let split: Vec<usize> = ranks
            .iter()
            .enumerate()
            .map(|(v, &r)| 2 * r + usize::from(r == target && v != chosen))
            .collect();
        search(g, split, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn canon(s: &str) -> String {
        canonicalize(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn same_molecule_same_string() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C1=CC=CC=C1O"), canon("OC1=CC=CC=C1"));
        assert_eq!(canon("c1ccccc1C(=O)O"), canon("OC(=O)c1ccccc1"));
        assert_ne!(canon("CCO"), canon("COC"));
    }

    #[test]
    fn idempotent() {
        for s in ["CCO", "c1ccc2ccccc2c1", "CC(=O)Oc1ccccc1C(=O)O", "C[N+](C)(C)C", "F/C=C/F"] {
            let once = canon(s);
            assert_eq!(canon(&once), once);
        }
    }

    #[test]
    fn invariant_under_atom_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in [
            "CC(=O)Oc1ccccc1C(=O)O",
            "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
            "C1CC2CCC1C2",
            "CC(C)(C)c1ccc(cc1)C(F)(F)F",
            "O=C(O)C1=CC=CC=C1.[Na+]",
        ] {
            let g = parse_smiles(s).unwrap();
            let reference = canonical_smiles(&g);
            for _ in 0..30 {
                let mut order: Vec<usize> = (0..g.atom_count()).collect();
                order.shuffle(&mut rng);
                let mut bonds: Vec<usize> = (0..g.bond_count()).collect();
                bonds.shuffle(&mut rng);
                let p = g.permuted(&order, &bonds);
                assert_eq!(canonical_smiles(&p), reference, "{s}");
            }
        }
    }

    proptest! {
        #[test]
        fn alkane_chains_are_stable(n in 1usize..12, branch in 0usize..6) {
            let mut s = "C".repeat(n);
            if branch < n {
                s.insert_str(branch + 1, "(C)");
            }
            if let Ok(c) = canonicalize(&s) {
                prop_assert_eq!(canonicalize(&c).unwrap(), c);
            }
        }
    }
}
