use std::collections::HashSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exprmol_chem::corpus::druglike;
use exprmol_chem::stats::canonical_forms;
use exprmol_chem::{ecfp4, evaluate, parse_smiles, Exec, MolGraph, QedTables, SaTables};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_canonical(c: &mut Criterion) {
    let mols = druglike();
    let mut group = c.benchmark_group("canonicalize");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| canonical_forms(black_box(&mols), exec))
        });
    }
    group.finish();
}

fn bench_fingerprints(c: &mut Criterion) {
    let graphs: Vec<MolGraph> = druglike().iter().map(|s| parse_smiles(s).unwrap()).collect();
    let mut group = c.benchmark_group("ecfp4");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| exec.map(black_box(&graphs), ecfp4))
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let mols = druglike();
    let graphs: Vec<MolGraph> = mols.iter().map(|s| parse_smiles(s).unwrap()).collect();
    let sa = SaTables::from_corpus(&graphs).unwrap();
    let qed = QedTables::bundled();
    let training: HashSet<String> = HashSet::new();
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(black_box(&mols), &training, None, &qed, &sa, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_canonical, bench_fingerprints, bench_evaluate);
criterion_main!(benches);
