//! Ring perception: ring-bond detection and the smallest set of smallest rings.

use std::collections::VecDeque;

use crate::mol::MolGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    /// Atoms in cyclic order.
    pub atoms: Vec<usize>,
    pub bonds: Vec<usize>,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains_atom(&self, atom: usize) -> bool {
        self.atoms.contains(&atom)
    }
}

/// Marks bonds that lie on at least one cycle (i.e. are not bridges).
pub fn ring_bonds(g: &MolGraph) -> Vec<bool> {
    // iterative Tarjan bridge finding
    let n = g.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut in_ring = vec![true; g.bond_count()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, parent bond, next neighbor index)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent_bond, ref mut next)) = stack.last_mut() {
            if let Some(&(w, b)) = g.neighbors(v).get(*next) {
                *next += 1;
                if Some(b) == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, Some(b), 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let (Some(b), Some(&(p, _, _))) = (parent_bond, stack.last()) {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        in_ring[b] = false;
                    }
                }
            }
        }
    }
    in_ring
}

pub fn ring_atoms(g: &MolGraph) -> Vec<bool> {
    let rb = ring_bonds(g);
    let mut out = vec![false; g.atom_count()];
    for (i, b) in g.bonds().iter().enumerate() {
        if rb[i] {
            out[b.a] = true;
            out[b.b] = true;
        }
    }
    out
}

fn bfs_tree(g: &MolGraph, root: usize) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
    let n = g.atom_count();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![None; n];
    let mut queue = VecDeque::from([root]);
    dist[root] = 0;
    while let Some(v) = queue.pop_front() {
        for &(w, b) in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                parent[w] = Some((v, b));
                queue.push_back(w);
            }
        }
    }
    (dist, parent)
}

/// Path from `v` back to the BFS root as (atoms, bonds), atoms starting at `v`.
fn path_to_root(parent: &[Option<(usize, usize)>], mut v: usize) -> (Vec<usize>, Vec<usize>) {
    let mut atoms = vec![v];
    let mut bonds = Vec::new();
    while let Some((p, b)) = parent[v] {
        atoms.push(p);
        bonds.push(b);
        v = p;
    }
    (atoms, bonds)
}

/// Smallest set of smallest rings (a minimum cycle basis), via Horton
/// candidate cycles and GF(2) elimination over bond incidence vectors.
pub fn sssr(g: &MolGraph) -> Vec<Ring> {
    let n_bonds = g.bond_count();
    let n_components = g.components().len();
    let rank_target = (n_bonds + n_components).saturating_sub(g.atom_count());
    if rank_target == 0 {
        return Vec::new();
    }
    let in_ring = ring_bonds(g);
    let words = n_bonds.div_ceil(64);

    let mut candidates: Vec<Ring> = Vec::new();
    for root in 0..g.atom_count() {
        let (dist, parent) = bfs_tree(g, root);
        for (bi, bond) in g.bonds().iter().enumerate() {
            if !in_ring[bi] || dist[bond.a] == usize::MAX {
                continue;
            }
            let (x, y) = (bond.a, bond.b);
            if parent[x].map(|p| p.1) == Some(bi) || parent[y].map(|p| p.1) == Some(bi) {
                continue;
            }
            let (px, bx) = path_to_root(&parent, x);
            let (py, by) = path_to_root(&parent, y);
            // paths must meet only at the root
            if px[..px.len() - 1].iter().any(|a| py.contains(a)) {
                continue;
            }
            let mut bonds = bx;
            bonds.extend(by);
            bonds.push(bi);
            candidates.push(Ring {
                atoms: cyclic_order(g, &bonds),
                bonds,
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.bonds.len().cmp(&b.bonds.len()).then_with(|| {
            let mut ka = a.bonds.clone();
            let mut kb = b.bonds.clone();
            ka.sort_unstable();
            kb.sort_unstable();
            ka.cmp(&kb)
        })
    });

    // incremental Gaussian elimination keyed by pivot bit
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::new();
    for cand in candidates {
        let mut v = vec![0u64; words];
        for &b in &cand.bonds {
            v[b / 64] ^= 1 << (b % 64);
        }
        for (pivot, row) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (x, r) in v.iter_mut().zip(row) {
                    *x ^= r;
                }
            }
        }
        let pivot = v
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i * 64 + w.trailing_zeros() as usize);
        if let Some(p) = pivot {
            // keep rows reduced with respect to the new pivot
            for (_, row) in basis.iter_mut() {
                if row[p / 64] >> (p % 64) & 1 == 1 {
                    for (x, r) in row.iter_mut().zip(&v) {
                        *x ^= r;
                    }
                }
            }
            basis.push((p, v));
            rings.push(cand);
            if rings.len() == rank_target {
                break;
            }
        }
    }
    rings
}

/// Orders the atoms of a simple cycle given by its bonds.
fn cyclic_order(g: &MolGraph, bonds: &[usize]) -> Vec<usize> {
    let first = g.bond(bonds[0]);
    let mut atoms = vec![first.a, first.b];
    let mut used = vec![false; bonds.len()];
    used[0] = true;
    while atoms.len() < bonds.len() {
        let last = *atoms.last().unwrap();
        let next = bonds.iter().enumerate().find(|(i, &b)| {
            !used[*i] && (g.bond(b).a == last || g.bond(b).b == last)
        });
        match next {
            Some((i, &b)) => {
                used[i] = true;
                atoms.push(g.bond(b).other(last));
            }
            None => break,
        }
    }
    atoms
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_smiles;

    fn ring_sizes(s: &str) -> Vec<usize> {
        let g = parse_smiles(s).unwrap();
        let mut sizes: Vec<usize> = sssr(&g).iter().map(Ring::len).collect();
        sizes.sort_unstable();
        sizes
    }

    #[test]
    fn ring_counts() {
        assert_eq!(ring_sizes("CCO"), Vec::<usize>::new());
        assert_eq!(ring_sizes("c1ccccc1"), [6]);
        assert_eq!(ring_sizes("c1ccc2ccccc2c1"), [6, 6]);
        assert_eq!(ring_sizes("C1CC2CCC1C2"), [5, 5]);
        assert_eq!(ring_sizes("C12(CC1)CC2"), [3, 3]);
        assert_eq!(ring_sizes("C1CCC2(CC1)CCCC2"), [5, 6]);
        // cubane: 5 independent rings, all 4-membered
        assert_eq!(ring_sizes("C12C3C4C1C5C2C3C45"), [4, 4, 4, 4, 4]);
    }

    #[test]
    fn bridges_are_not_ring_bonds() {
        let g = parse_smiles("c1ccccc1CC1CC1").unwrap();
        let rb = ring_bonds(&g);
        assert_eq!(rb.iter().filter(|&&r| r).count(), 9);
        let ra = ring_atoms(&g);
        assert!(!ra[6]);
    }
}
