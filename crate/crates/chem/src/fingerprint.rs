//! Extended-connectivity (Morgan) fingerprints and Tanimoto similarity.
//!
//! Identifiers are produced with a fixed 64-bit mixer so fingerprints are
//! identical across platforms and releases:
//!
//! * `mix64` is the splitmix64 finalizer (constants `0xbf58476d1ce4e5b9`,
//!   `0x94d049bb133111eb`);
//! * `combine(h, v) = mix64(h ^ (v + 0x9e3779b97f4a7c15 + (h << 6) + (h >> 2)))`
//!   with wrapping arithmetic.
//!
//! Atom invariants are (atomic number, heavy degree, formal charge, total H,
//! aromatic flag). Each round combines the round number, the atom's previous
//! identifier and its neighbors' (bond order, identifier) pairs sorted
//! ascending. Environments that cover a bond set already seen are dropped,
//! keeping the smallest identifier among same-round duplicates.

use crate::error::MetricsError;
use crate::mol::MolGraph;

pub const DEFAULT_NBITS: usize = 2048;
pub const DEFAULT_RADIUS: u32 = 2;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn combine(h: u64, v: u64) -> u64 {
    mix64(h ^ v.wrapping_add(GOLDEN).wrapping_add(h << 6).wrapping_add(h >> 2))
}

/// Fixed-width bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    nbits: usize,
    radius: u32,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(nbits: usize, radius: u32) -> Self {
        assert!(nbits > 0, "fingerprint width must be positive");
        Fingerprint {
            nbits,
            radius,
            words: vec![0; nbits.div_ceil(64)],
        }
    }

    pub fn from_bits(nbits: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::empty(nbits, 0);
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.nbits, "bit {bit} out of range");
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn contains(&self, bit: usize) -> bool {
        bit < self.nbits && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbits).filter(|&b| self.contains(b))
    }
}

/// All environment identifiers up to `radius`, with multiplicity.
pub fn morgan_environments(g: &MolGraph, radius: u32) -> Vec<u64> {
    let n = g.atom_count();
    let words = g.bond_count().div_ceil(64).max(1);
    let mut ids: Vec<u64> = (0..n)
        .map(|v| {
            let a = g.atom(v);
            [
                a.element.atomic_number() as u64,
                g.degree(v) as u64,
                a.charge as i64 as u64,
                a.hydrogens as u64,
                a.aromatic as u64,
            ]
            .into_iter()
            .fold(0, combine)
        })
        .collect();
    let mut out = ids.clone();

    let mut env: Vec<Vec<u64>> = vec![vec![0; words]; n];
    let mut seen: Vec<Vec<u64>> = vec![vec![0; words]];
    for round in 1..=radius {
        let mut round_envs: Vec<(Vec<u64>, u64)> = Vec::with_capacity(n);
        let mut next_env = env.clone();
        let mut next_ids = ids.clone();
        for v in 0..n {
            let mut nbrs: Vec<(u8, u64)> = g
                .neighbors(v)
                .iter()
                .map(|&(w, b)| (g.bond(b).order.code(), ids[w]))
                .collect();
            nbrs.sort_unstable();
            let mut h = combine(round as u64, ids[v]);
            for (code, id) in nbrs {
                h = combine(combine(h, code as u64), id);
            }
            next_ids[v] = h;
            for &(w, b) in g.neighbors(v) {
                next_env[v][b / 64] |= 1 << (b % 64);
                for (x, y) in next_env[v].iter_mut().zip(&env[w]) {
                    *x |= y;
                }
            }
            round_envs.push((next_env[v].clone(), h));
        }
        round_envs.sort();
        for (bonds, id) in round_envs {
            if !seen.contains(&bonds) {
                seen.push(bonds);
                out.push(id);
            }
        }
        env = next_env;
        ids = next_ids;
    }
    out
}

pub fn ecfp(g: &MolGraph, radius: u32, nbits: usize) -> Fingerprint {
    let mut fp = Fingerprint::empty(nbits, radius);
    for id in morgan_environments(g, radius) {
        fp.set((id % nbits as u64) as usize);
    }
    fp
}

/// Radius-2, 2048-bit fingerprint.
pub fn ecfp4(g: &MolGraph) -> Fingerprint {
    ecfp(g, DEFAULT_RADIUS, DEFAULT_NBITS)
}

/// |A ∩ B| / |A ∪ B|, defined as 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, MetricsError> {
    if a.nbits != b.nbits {
        return Err(MetricsError::WidthMismatch(a.nbits, b.nbits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Similarity of one query against many references.
pub fn bulk_tanimoto(query: &Fingerprint, refs: &[Fingerprint]) -> Result<Vec<f64>, MetricsError> {
    refs.iter().map(|r| tanimoto(query, r)).collect()
}
