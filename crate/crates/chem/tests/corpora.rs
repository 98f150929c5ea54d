use std::collections::HashSet;

use exprmol_chem::corpus::{druglike, invalid_cases};
use exprmol_chem::{canonical_smiles, canonicalize, parse_smiles, tokenize};

#[test]
fn druglike_corpus_parses_and_round_trips() {
    let mols = druglike();
    assert!(mols.len() >= 500);
    let mut failures = Vec::new();
    for s in &mols {
        assert!(s.len() <= 80, "{s} longer than 80");
        match parse_smiles(s) {
            Ok(g) => {
                let c = canonical_smiles(&g);
                let again = canonicalize(&c).map_err(|e| format!("{s} -> {c}: {e}"));
                if again.as_deref() != Ok(c.as_str()) {
                    failures.push(format!("{s} -> {c} -> {again:?}"));
                }
            }
            Err(e) => failures.push(format!("{s}: {e}")),
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn druglike_corpus_is_mostly_distinct() {
    let mols = druglike();
    let distinct: HashSet<String> = mols.iter().map(|s| canonicalize(s).unwrap()).collect();
    assert!(distinct.len() >= 500, "{} distinct", distinct.len());
}

#[test]
fn invalid_corpus_rejected_with_expected_kind() {
    let cases = invalid_cases();
    assert!(cases.len() >= 50);
    let mut wrong = Vec::new();
    for (s, kind) in cases {
        match parse_smiles(s) {
            Ok(_) => wrong.push(format!("{s:?} accepted")),
            Err(e) if e.kind() != kind => wrong.push(format!("{s:?}: expected {kind:?}, got {e}")),
            Err(_) => {}
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn short_subset_is_large_enough_for_toy_training() {
    let short = druglike()
        .into_iter()
        .filter(|s| tokenize(s).unwrap().len() <= 40)
        .count();
    assert!(short >= 300, "{short}");
}
