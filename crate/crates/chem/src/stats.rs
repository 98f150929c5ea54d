//! Generated-set statistics, per-molecule scores and the evaluation report.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::canon::canonical_smiles;
use crate::error::MetricsError;
use crate::exec::Exec;
use crate::fingerprint::{ecfp4, tanimoto, Fingerprint};
use crate::parse::parse_smiles;
use crate::qed::{qed, QedTables};
use crate::sa::{sa_score, SaTables};

/// Validity, uniqueness and novelty counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub generated: usize,
    pub valid: usize,
    pub unique: usize,
    pub novel: usize,
}

impl CorpusStats {
    /// valid / generated; 0 when nothing was generated.
    pub fn validity(&self) -> f64 {
        ratio(self.valid, self.generated).unwrap_or(0.0)
    }

    /// distinct canonical / valid; `None` without valid molecules.
    pub fn uniqueness(&self) -> Option<f64> {
        ratio(self.unique, self.valid)
    }

    /// valid and absent from training / valid; `None` without valid molecules.
    pub fn novelty(&self) -> Option<f64> {
        ratio(self.novel, self.valid)
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Canonical form of each string, `None` where it does not parse.
pub fn canonical_forms<S: AsRef<str> + Sync>(smiles: &[S], exec: Exec) -> Vec<Option<String>> {
    exec.map(smiles, |s| parse_smiles(s.as_ref()).ok().map(|g| canonical_smiles(&g)))
}

/// Statistics from canonical forms (`None` = invalid) against the set of
/// training canonical SMILES. Novelty counts valid molecules, repeats
/// included.
pub fn stats_from_canonical(canonical: &[Option<String>], training: &HashSet<String>) -> CorpusStats {
    let valid: Vec<&String> = canonical.iter().flatten().collect();
    let distinct: HashSet<&String> = valid.iter().copied().collect();
    CorpusStats {
        generated: canonical.len(),
        valid: valid.len(),
        unique: distinct.len(),
        novel: valid.iter().filter(|c| !training.contains(c.as_str())).count(),
    }
}

pub fn corpus_stats<S: AsRef<str> + Sync>(generated: &[S], training: &HashSet<String>, exec: Exec) -> CorpusStats {
    stats_from_canonical(&canonical_forms(generated, exec), training)
}

/// Picks the molecule with the highest similarity to any ligand. Ties go
/// to the lexicographically smallest canonical SMILES.
pub fn select_candidate<'a>(
    molecules: &'a [(String, Fingerprint)],
    ligands: &[Fingerprint],
) -> Result<(&'a str, f64), MetricsError> {
    if molecules.is_empty() {
        return Err(MetricsError::EmptyInput("no valid generated molecules"));
    }
    if ligands.is_empty() {
        return Err(MetricsError::EmptyInput("no reference ligands"));
    }
    let mut best: Option<(&str, f64)> = None;
    for (smiles, fp) in molecules {
        let score = max_similarity(fp, ligands)?;
        let better = match best {
            None => true,
            Some((s, b)) => score > b || (score == b && smiles.as_str() < s),
        };
        if better {
            best = Some((smiles, score));
        }
    }
    Ok(best.expect("non-empty"))
}

pub fn max_similarity(fp: &Fingerprint, ligands: &[Fingerprint]) -> Result<f64, MetricsError> {
    let mut best = 0.0f64;
    for l in ligands {
        best = best.max(tanimoto(fp, l)?);
    }
    Ok(best)
}

/// Per-molecule row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub index: usize,
    pub smiles: String,
    pub canonical: Option<String>,
    pub qed: Option<f64>,
    pub sa: Option<f64>,
    pub max_tanimoto: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub canonical: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub stats: CorpusStats,
    pub molecules: Vec<MoleculeRecord>,
    pub candidate: Option<Candidate>,
}

pub const TOP_K: [usize; 4] = [1, 10, 100, 1000];

/// Mean of the `k` largest values; `None` when fewer than `k` exist.
pub fn top_k_mean(values: &[f64], k: usize) -> Option<f64> {
    if k == 0 || values.len() < k {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Some(v[..k].iter().sum::<f64>() / k as f64)
}

/// Scores a generated set. `training` holds canonical training SMILES;
/// `ligands`, when given, adds the max-similarity column and a candidate.
pub fn evaluate<S: AsRef<str> + Sync>(
    generated: &[S],
    training: &HashSet<String>,
    ligands: Option<&[Fingerprint]>,
    qed_tables: &QedTables,
    sa_tables: &SaTables,
    exec: Exec,
) -> Result<MetricsReport, MetricsError> {
    let molecules: Vec<MoleculeRecord> = exec.map_range(generated.len(), |i| {
        let smiles = generated[i].as_ref();
        let mut rec = MoleculeRecord {
            index: i,
            smiles: smiles.to_string(),
            canonical: None,
            qed: None,
            sa: None,
            max_tanimoto: None,
        };
        if let Ok(g) = parse_smiles(smiles) {
            rec.canonical = Some(canonical_smiles(&g));
            rec.qed = Some(qed(&g, qed_tables));
            rec.sa = Some(sa_score(&g, sa_tables));
            if let Some(l) = ligands {
                rec.max_tanimoto = max_similarity(&ecfp4(&g), l).ok();
            }
        }
        rec
    });
    let canonical: Vec<Option<String>> = molecules.iter().map(|m| m.canonical.clone()).collect();
    let stats = stats_from_canonical(&canonical, training);

    let candidate = match ligands {
        Some(l) if l.is_empty() => return Err(MetricsError::EmptyInput("no reference ligands")),
        Some(_) => molecules
            .iter()
            .filter_map(|m| Some((m.index, m.canonical.clone()?, m.max_tanimoto?)))
            .fold(None::<Candidate>, |best, (index, canonical, score)| match best {
                Some(b) if b.score > score || (b.score == score && b.canonical <= canonical) => Some(b),
                _ => Some(Candidate { index, canonical, score }),
            }),
        None => None,
    };
    Ok(MetricsReport {
        stats,
        molecules,
        candidate,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    /// One score per distinct valid molecule, first occurrence wins.
    fn distinct_scores(&self, pick: impl Fn(&MoleculeRecord) -> Option<f64>) -> Vec<f64> {
        let mut seen = HashSet::new();
        self.molecules
            .iter()
            .filter(|m| m.canonical.as_ref().is_some_and(|c| seen.insert(c.clone())))
            .filter_map(pick)
            .collect()
    }

    pub fn mean_qed(&self) -> Option<f64> {
        mean(&self.molecules.iter().filter_map(|m| m.qed).collect::<Vec<_>>())
    }

    pub fn mean_sa(&self) -> Option<f64> {
        mean(&self.molecules.iter().filter_map(|m| m.sa).collect::<Vec<_>>())
    }

    pub fn top_k_qed(&self, k: usize) -> Option<f64> {
        top_k_mean(&self.distinct_scores(|m| m.qed), k)
    }

    pub fn top_k_sa(&self, k: usize) -> Option<f64> {
        top_k_mean(&self.distinct_scores(|m| m.sa), k)
    }

    /// `key = value` summary, a blank line, then a tab-separated table with
    /// one row per generated string.
    pub fn render(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        let _ = writeln!(out, "generated = {}", s.generated);
        let _ = writeln!(out, "valid = {}", s.valid);
        let _ = writeln!(out, "unique = {}", s.unique);
        let _ = writeln!(out, "novel = {}", s.novel);
        let _ = writeln!(out, "validity = {:.6}", s.validity());
        let _ = writeln!(out, "uniqueness = {}", fmt_opt(s.uniqueness()));
        let _ = writeln!(out, "novelty = {}", fmt_opt(s.novelty()));
        let _ = writeln!(out, "mean_qed = {}", fmt_opt(self.mean_qed()));
        let _ = writeln!(out, "mean_sa = {}", fmt_opt(self.mean_sa()));
        for k in TOP_K {
            let _ = writeln!(out, "top{k}_qed = {}", fmt_opt(self.top_k_qed(k)));
        }
        for k in TOP_K {
            let _ = writeln!(out, "top{k}_sa = {}", fmt_opt(self.top_k_sa(k)));
        }
        if let Some(c) = &self.candidate {
            let _ = writeln!(out, "candidate_index = {}", c.index);
            let _ = writeln!(out, "candidate_smiles = {}", c.canonical);
            let _ = writeln!(out, "candidate_tanimoto = {:.6}", c.score);
        }
        out.push('\n');
        out.push_str("index\tsmiles\tvalid\tcanonical\tqed\tsa\tmax_tanimoto\n");
        for m in &self.molecules {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                m.index,
                m.smiles,
                u8::from(m.canonical.is_some()),
                m.canonical.as_deref().unwrap_or(""),
                fmt_opt(m.qed),
                fmt_opt(m.sa),
                fmt_opt(m.max_tanimoto),
            );
        }
        out
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
