//! Molecular graph.

use crate::element::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum. Aromatic bonds count as one;
    /// the extra pi contribution is handled per atom.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// Directional marker of a `/` or `\` bond, kept verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BondStereo {
    #[default]
    None,
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chirality {
    Anticlockwise,
    Clockwise,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    /// Total attached hydrogens (explicit for bracket atoms, inferred otherwise).
    pub hydrogens: u8,
    pub isotope: Option<u16>,
    pub chirality: Option<Chirality>,
    pub bracketed: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            aromatic: false,
            charge: 0,
            hydrogens: 0,
            isotope: None,
            chirality: None,
            bracketed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per atom: (neighbor, bond index), in insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Adds a bond; returns `None` for self-bonds or an already bonded pair.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, stereo: BondStereo) -> Option<usize> {
        if a == b || self.bond_between(a, b).is_some() {
            return None;
        }
        let idx = self.bonds.len();
        self.bonds.push(Bond { a, b, order, stereo });
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        Some(idx)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub(crate) fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, i: usize) -> &Bond {
        &self.bonds[i]
    }

    pub(crate) fn bond_mut(&mut self, i: usize) -> &mut Bond {
        &mut self.bonds[i]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    /// Heavy-atom degree (hydrogens are never graph nodes here).
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| bi)
    }

    /// Sum of bond-order contributions, aromatic bonds counted as one.
    pub fn bond_order_sum(&self, atom: usize) -> u32 {
        self.adjacency[atom]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    pub fn has_double_bond(&self, atom: usize) -> bool {
        self.adjacency[atom]
            .iter()
            .any(|&(_, b)| self.bonds[b].order == BondOrder::Double)
    }

    /// Hydrogens an unbracketed organic-subset atom would carry given its
    /// current bonds. Aliphatic atoms take the smallest allowed valence not
    /// below the bond sum; aromatic atoms fill up to one less than their
    /// lowest valence, leaving room for the ring's pi bond.
    pub fn implicit_hydrogens(&self, atom: usize) -> u8 {
        let a = &self.atoms[atom];
        let sum = self.bond_order_sum(atom);
        let valences = a.element.default_valences();
        if valences.is_empty() {
            return 0;
        }
        if a.aromatic {
            let target = valences[0] as u32 - 1;
            return target.saturating_sub(sum) as u8;
        }
        valences
            .iter()
            .map(|&v| v as u32)
            .find(|&v| v >= sum)
            .map_or(0, |v| (v - sum) as u8)
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub fn total_hydrogens(&self) -> usize {
        self.atoms.iter().map(|a| a.hydrogens as usize).sum::<usize>()
            + self.atoms.iter().filter(|a| a.element == Element::H).count()
    }

    /// Rebuilds the graph with atoms reordered: new atom `i` is old atom
    /// `order[i]`. Bonds are re-added in the given bond order.
    pub fn permuted(&self, order: &[usize], bond_order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.atom_count());
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let mut g = MolGraph::new();
        for &old in order {
            g.add_atom(self.atoms[old].clone());
        }
        for &bi in bond_order {
            let b = &self.bonds[bi];
            g.add_bond(inverse[b.a], inverse[b.b], b.order, b.stereo);
        }
        g
    }

    /// Connected components as atom lists, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atom_count()];
        let mut out = Vec::new();
        for start in 0..self.atom_count() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let v = comp[i];
                for &(n, _) in &self.adjacency[v] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_and_duplicate_bonds() {
        let mut g = MolGraph::new();
        let a = g.add_atom(Atom::new(Element::C));
        let b = g.add_atom(Atom::new(Element::C));
        assert!(g.add_bond(a, a, BondOrder::Single, BondStereo::None).is_none());
        assert!(g.add_bond(a, b, BondOrder::Single, BondStereo::None).is_some());
        assert!(g.add_bond(b, a, BondOrder::Double, BondStereo::None).is_none());
        assert_eq!(g.implicit_hydrogens(a), 3);
    }
}
