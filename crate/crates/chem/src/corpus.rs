//! Bundled reference corpora.

use crate::error::ErrorKind;

const DRUGLIKE: &str = include_str!("../data/druglike.smi");
const INVALID: &str = include_str!("../data/invalid.tsv");

/// Drug-like molecules that must parse, one SMILES each.
pub fn druglike() -> Vec<&'static str> {
    DRUGLIKE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Malformed strings paired with the error kind the parser must report.
pub fn invalid_cases() -> Vec<(&'static str, ErrorKind)> {
    INVALID
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (smiles, kind) = l.split_once('\t').expect("tab-separated invalid corpus");
            (smiles, kind.trim().parse().expect("known error kind"))
        })
        .collect()
}
