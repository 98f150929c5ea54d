//! Molecular graph to SMILES.

use std::fmt::Write as _;

use crate::mol::{BondOrder, BondStereo, Chirality, MolGraph};

/// Writes the graph using atom indices as the traversal priority.
pub fn write_smiles(g: &MolGraph) -> String {
    let ranks: Vec<usize> = (0..g.atom_count()).collect();
    write_ranked(g, &ranks)
}

/// Depth-first SMILES writer. Each component starts at its lowest-ranked
/// atom and neighbors are visited in ascending rank, so the output is a
/// function of the graph and the ranking alone.
pub fn write_ranked(g: &MolGraph, ranks: &[usize]) -> String {
    let n = g.atom_count();
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|v| {
            let mut nb = g.neighbors(v).to_vec();
            nb.sort_by_key(|&(w, _)| ranks[w]);
            nb
        })
        .collect();

    // Pass 1: spanning forest and ring-closure bonds.
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; g.bond_count()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    // ring bonds opened at an atom, in discovery order: (partner, bond)
    let mut openings: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    // ring bonds closed at an atom: (partner, bond)
    let mut closings: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| ranks[v]);
    for &root in &order {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, idx)) = stack.pop() {
            let nbrs = &sorted_nbrs[v];
            if idx >= nbrs.len() {
                continue;
            }
            stack.push((v, idx + 1));
            let (w, b) = nbrs[idx];
            if bond_used[b] {
                continue;
            }
            bond_used[b] = true;
            if visited[w] {
                // w is an ancestor: the ring opens at w, closes here
                openings[w].push((v, b));
                closings[v].push((w, b));
            } else {
                visited[w] = true;
                children[v].push((w, b));
                stack.push((w, 0));
            }
        }
    }

    // Pass 2: emit.
    let mut out = String::new();
    let mut free_labels: Vec<bool> = vec![true; 100];
    let mut label_of_bond: Vec<Option<usize>> = vec![None; g.bond_count()];
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        // explicit stack of (atom, incoming bond, child cursor)
        enum Step {
            Enter(usize, Option<usize>),
            Open,
            Close,
        }
        let mut stack = vec![Step::Enter(root, None)];
        while let Some(step) = stack.pop() {
            match step {
                Step::Open => out.push('('),
                Step::Close => out.push(')'),
                Step::Enter(v, via) => {
                    if let Some(b) = via {
                        out.push_str(bond_text(g, b));
                    }
                    atom_text(g, v, &mut out);
                    for &(_, b) in &closings[v] {
                        let label = label_of_bond[b].expect("ring opened before it closes");
                        free_labels[label] = true;
                        write_label(&mut out, label);
                    }
                    for &(_, b) in &openings[v] {
                        let label = (1..100).find(|&l| free_labels[l]).expect("more than 99 open rings");
                        free_labels[label] = false;
                        label_of_bond[b] = Some(label);
                        out.push_str(bond_text(g, b));
                        write_label(&mut out, label);
                    }
                    let kids = &children[v];
                    // last child continues the chain; earlier ones are branches
                    for (k, &(w, b)) in kids.iter().enumerate().rev() {
                        if k + 1 == kids.len() {
                            stack.push(Step::Enter(w, Some(b)));
                        } else {
                            stack.push(Step::Close);
                            stack.push(Step::Enter(w, Some(b)));
                            stack.push(Step::Open);
                        }
                    }
                }
            }
        }
    }
    out
}

fn write_label(out: &mut String, label: usize) {
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label}");
    }
}

fn bond_text(g: &MolGraph, b: usize) -> &'static str {
    let bond = g.bond(b);
    match (bond.order, bond.stereo) {
        (BondOrder::Single, BondStereo::Up) => "/",
        (BondOrder::Single, BondStereo::Down) => "\\",
        (BondOrder::Single, BondStereo::None) => {
            if g.atom(bond.a).aromatic && g.atom(bond.b).aromatic {
                "-"
            } else {
                ""
            }
        }
        (BondOrder::Double, _) => "=",
        (BondOrder::Triple, _) => "#",
        (BondOrder::Aromatic, _) => "",
    }
}

fn atom_text(g: &MolGraph, v: usize, out: &mut String) {
    let a = g.atom(v);
    let symbol = a.element.symbol();
    let needs_bracket = !a.element.is_organic_subset()
        || a.charge != 0
        || a.isotope.is_some()
        || a.chirality.is_some()
        || a.hydrogens != g.implicit_hydrogens(v)
        || (a.aromatic && !matches!(symbol, "B" | "C" | "N" | "O" | "P" | "S"));
    let sym = if a.aromatic {
        symbol.to_ascii_lowercase()
    } else {
        symbol.to_string()
    };
    if !needs_bracket {
        out.push_str(&sym);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&sym);
    match a.chirality {
        Some(Chirality::Anticlockwise) => out.push('@'),
        Some(Chirality::Clockwise) => out.push_str("@@"),
        None => {}
    }
    match a.hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match a.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}
