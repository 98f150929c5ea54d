//! Structural alerts: reactive or otherwise undesirable substructures.
//!
//! Patterns are written in SMILES syntax and matched by subgraph
//! isomorphism. A pattern atom matches a molecule atom of the same element,
//! aromaticity and charge; a bracketed pattern atom additionally requires at
//! least as many hydrogens as it lists. Bond orders must match exactly.

use std::sync::OnceLock;

use crate::mol::MolGraph;
use crate::parse::parse_pattern;

pub const ALERT_PATTERNS: &[(&str, &str)] = &[
    ("acyl chloride", "C(=O)Cl"),
    ("acyl bromide", "C(=O)Br"),
    ("aldehyde", "[CH]=O"),
    ("michael acceptor", "C=CC=O"),
    ("azo", "N=N"),
    ("azide", "N=[N+]=[N-]"),
    ("peroxide", "OO"),
    ("disulfide", "SS"),
    ("thiol", "[SH]"),
    ("isocyanate", "N=C=O"),
    ("isothiocyanate", "N=C=S"),
    ("thiocarbonyl", "C=S"),
    ("epoxide", "C1OC1"),
    ("aziridine", "C1NC1"),
    ("phenol ester", "C(=O)Oc"),
    ("anhydride", "C(=O)OC(=O)"),
    ("alkyne", "C#C"),
    ("hydrazine", "NN"),
    ("nitroso", "N=O"),
    ("nitro", "[N+](=O)[O-]"),
    ("sulfonyl halide", "S(=O)(=O)Cl"),
    ("sulfonate ester", "CS(=O)(=O)OC"),
    ("primary alkyl bromide", "[CH2]Br"),
    ("primary alkyl iodide", "[CH2]I"),
    ("primary alkyl chloride", "[CH2]Cl"),
    ("1,2-dicarbonyl", "O=CC=O"),
    ("hydroxamic acid", "C(=O)N[OH]"),
    ("long aliphatic chain", "[CH2][CH2][CH2][CH2][CH2][CH2]"),
    ("phosphorus", "P"),
];

fn patterns() -> &'static [MolGraph] {
    static CELL: OnceLock<Vec<MolGraph>> = OnceLock::new();
    CELL.get_or_init(|| {
        ALERT_PATTERNS
            .iter()
            .map(|(name, s)| parse_pattern(s).unwrap_or_else(|e| panic!("alert {name}: {e}")))
            .collect()
    })
}

/// Number of distinct alert patterns present in `g`.
pub fn count_alerts(g: &MolGraph) -> u32 {
    patterns().iter().filter(|p| has_substructure(g, p)).count() as u32
}

/// Names of the alert patterns present in `g`.
pub fn matched_alerts(g: &MolGraph) -> Vec<&'static str> {
    patterns()
        .iter()
        .zip(ALERT_PATTERNS)
        .filter(|(p, _)| has_substructure(g, p))
        .map(|(_, (name, _))| *name)
        .collect()
}

fn atom_matches(g: &MolGraph, v: usize, p: &MolGraph, u: usize) -> bool {
    let (a, q) = (g.atom(v), p.atom(u));
    a.element == q.element
        && a.aromatic == q.aromatic
        && a.charge == q.charge
        && (!q.bracketed || a.hydrogens >= q.hydrogens)
        && g.degree(v) >= p.degree(u)
}

/// True when `pattern` maps injectively onto atoms and bonds of `g`.
pub fn has_substructure(g: &MolGraph, pattern: &MolGraph) -> bool {
    let m = pattern.atom_count();
    if m == 0 {
        return true;
    }
    if m > g.atom_count() {
        return false;
    }
    // visit pattern atoms so that each one after the first (per component)
    // has an already-placed neighbor
    let mut order = Vec::with_capacity(m);
    let mut placed = vec![false; m];
    for start in 0..m {
        if placed[start] {
            continue;
        }
        placed[start] = true;
        order.push(start);
        let mut head = order.len() - 1;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(w, _) in pattern.neighbors(u) {
                if !placed[w] {
                    placed[w] = true;
                    order.push(w);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; m];
    let mut used = vec![false; g.atom_count()];
    extend(g, pattern, &order, 0, &mut map, &mut used)
}

fn extend(
    g: &MolGraph,
    p: &MolGraph,
    order: &[usize],
    depth: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let u = order[depth];
    let anchor = p.neighbors(u).iter().find(|&&(w, _)| map[w] != usize::MAX);
    let candidates: Vec<usize> = match anchor {
        Some(&(w, _)) => g.neighbors(map[w]).iter().map(|&(v, _)| v).collect(),
        None => (0..g.atom_count()).collect(),
    };
    for v in candidates {
        if used[v] || !atom_matches(g, v, p, u) {
            continue;
        }
        let bonds_ok = p.neighbors(u).iter().all(|&(w, pb)| {
            map[w] == usize::MAX
                || g
                    .bond_between(v, map[w])
                    .is_some_and(|gb| g.bond(gb).order == p.bond(pb).order)
        });
        if !bonds_ok {
            continue;
        }
        map[u] = v;
        used[v] = true;
        if extend(g, p, order, depth + 1, map, used) {
            return true;
        }
        map[u] = usize::MAX;
        used[v] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_smiles;

    fn alerts(s: &str) -> Vec<&'static str> {
        matched_alerts(&parse_smiles(s).unwrap())
    }

    #[test]
    fn patterns_compile() {
        assert_eq!(patterns().len(), ALERT_PATTERNS.len());
    }

    #[test]
    fn aspirin_has_one_alert() {
        assert_eq!(alerts("CC(=O)Oc1ccccc1C(=O)O"), vec!["phenol ester"]);
    }

    #[test]
    fn clean_molecules() {
        for s in ["CCO", "c1ccccc1", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "CC(=O)Nc1ccc(O)cc1"] {
            assert!(alerts(s).is_empty(), "{s}: {:?}", alerts(s));
        }
    }

    #[test]
    fn typical_alerts() {
        assert_eq!(alerts("CC=O"), vec!["aldehyde"]);
        assert_eq!(alerts("CC(=O)Cl"), vec!["acyl chloride"]);
        assert_eq!(alerts("CCS"), vec!["thiol"]);
        assert_eq!(alerts("C1CO1"), vec!["epoxide"]);
        assert!(alerts("c1ccccc1[N+](=O)[O-]").contains(&"nitro"));
        // ketone carbon has no hydrogen, so it is not an aldehyde
        assert!(alerts("CC(=O)C").is_empty());
    }

    #[test]
    fn substructure_basics() {
        let g = parse_smiles("CCOC").unwrap();
        assert!(has_substructure(&g, &parse_pattern("COC").unwrap()));
        assert!(!has_substructure(&g, &parse_pattern("CCC").unwrap()));
        assert!(!has_substructure(&g, &parse_pattern("C=O").unwrap()));
    }
}
