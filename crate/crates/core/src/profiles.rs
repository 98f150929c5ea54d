//! Gene expression profiles: ingestion, standardization and the
//! replicate-averaging and disease-reversal transforms.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub sample_id: String,
    pub values: Vec<f64>,
}

/// Per-gene standardization statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Genes with zero variance; they standardize to 0.
    pub degenerate: Vec<bool>,
}

impl NormStats {
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(j, &x)| if self.degenerate[j] { 0.0 } else { (x - self.mean[j]) / self.std[j] })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub gene_ids: Vec<String>,
    pub profiles: Vec<Profile>,
    pub stats: Option<NormStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    /// Tab for `.tsv`/`.tab` files, comma otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab") => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }

    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

impl ProfileSet {
    pub fn genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.profiles.iter().position(|p| p.sample_id == sample_id)
    }

    /// Refuses sets whose gene-id header differs from `expected`.
    pub fn check_genes(&self, expected: &[String]) -> Result<(), CoreError> {
        if self.gene_ids == expected {
            return Ok(());
        }
        let detail = if self.gene_ids.len() != expected.len() {
            format!("{} genes, expected {}", self.gene_ids.len(), expected.len())
        } else {
            let j = self.gene_ids.iter().zip(expected).position(|(a, b)| a != b).unwrap_or(0);
            format!("column {} is '{}', expected '{}'", j + 2, self.gene_ids[j], expected[j])
        };
        Err(CoreError::GeneMismatch(detail))
    }
}

pub(crate) fn ingest(path: &str, line: usize, column: usize, reason: impl Into<String>) -> CoreError {
    CoreError::Ingest {
        path: path.to_string(),
        line,
        column,
        reason: reason.into(),
    }
}

fn reader<R: Read>(r: R, delim: Delimiter) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delim.byte())
        .from_reader(r)
}

fn csv_error(name: &str, e: csv::Error) -> CoreError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    ingest(name, line, 0, e.to_string())
}

/// Reads `sample_id,<gene_1>,...,<gene_T>` followed by one row per sample.
/// `name` labels error locations. Lines and columns are 1-based.
pub fn load_profiles<R: Read>(input: R, name: &str, delim: Delimiter) -> Result<ProfileSet, CoreError> {
    let mut rdr = reader(input, delim);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(name, e))?,
        None => return Err(ingest(name, 1, 1, "empty file, expected a header row")),
    };
    if header.get(0).map(str::trim) != Some("sample_id") {
        return Err(ingest(name, 1, 1, "first header cell must be 'sample_id'"));
    }
    let gene_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if gene_ids.is_empty() {
        return Err(ingest(name, 1, 2, "header lists no genes"));
    }
    let mut seen_genes = HashSet::new();
    for (j, g) in gene_ids.iter().enumerate() {
        if g.is_empty() || !seen_genes.insert(g) {
            return Err(ingest(name, 1, j + 2, format!("empty or duplicate gene id '{g}'")));
        }
    }
    let t = gene_ids.len();
    let mut profiles = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != t + 1 {
            return Err(ingest(name, line, rec.len().min(t + 1) + 1, format!("expected {} cells, found {}", t + 1, rec.len())));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(ingest(name, line, 1, "empty sample_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(ingest(name, line, 1, format!("duplicate sample_id '{id}'")));
        }
        let mut values = Vec::with_capacity(t);
        for (j, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| ingest(name, line, j + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(ingest(name, line, j + 1, format!("non-finite value '{cell}'")));
            }
            values.push(v);
        }
        profiles.push(Profile { sample_id: id, values });
    }
    if profiles.is_empty() {
        return Err(ingest(name, 2, 1, "no profile rows"));
    }
    Ok(ProfileSet {
        gene_ids,
        profiles,
        stats: None,
    })
}

pub fn load_profiles_path(path: &Path) -> Result<ProfileSet, CoreError> {
    let f = File::open(path).map_err(|e| CoreError::io(path, e))?;
    load_profiles(f, &path.display().to_string(), Delimiter::for_path(path))
}

/// Writes the set in the format read by [`load_profiles`]. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_profiles<W: Write>(set: &ProfileSet, out: W, delim: Delimiter) -> Result<(), CoreError> {
    let mut w = csv::WriterBuilder::new().delimiter(delim.byte()).from_writer(out);
    let io = |e: csv::Error| CoreError::Data(format!("writing profiles: {e}"));
    let mut header = vec!["sample_id".to_string()];
    header.extend(set.gene_ids.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for p in &set.profiles {
        let mut row = vec![p.sample_id.clone()];
        row.extend(p.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CoreError::Data(format!("writing profiles: {e}")))
}

/// Population mean and standard deviation per gene.
pub fn compute_stats(set: &ProfileSet) -> NormStats {
    let n = set.profiles.len() as f64;
    let t = set.genes();
    let mut mean = vec![0.0; t];
    for p in &set.profiles {
        for (m, v) in mean.iter_mut().zip(&p.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; t];
    for p in &set.profiles {
        for j in 0..t {
            let d = p.values[j] - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let degenerate = std
        .iter()
        .zip(&mean)
        .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
        .collect();
    NormStats { mean, std, degenerate }
}

/// Per-gene zero mean and unit variance. The stats are returned and also
/// stored on the output set.
pub fn standardize(set: &ProfileSet) -> Result<(ProfileSet, NormStats), CoreError> {
    if set.is_empty() {
        return Err(CoreError::Data("cannot standardize an empty profile set".into()));
    }
    let stats = compute_stats(set);
    let out = apply_stats(set, &stats)?;
    Ok((out, stats))
}

/// Standardizes with previously computed stats (e.g. from a checkpoint).
pub fn apply_stats(set: &ProfileSet, stats: &NormStats) -> Result<ProfileSet, CoreError> {
    if stats.mean.len() != set.genes() {
        return Err(CoreError::GeneMismatch(format!(
            "stats cover {} genes, profiles have {}",
            stats.mean.len(),
            set.genes()
        )));
    }
    let profiles = set
        .profiles
        .iter()
        .map(|p| Profile {
            sample_id: p.sample_id.clone(),
            values: stats.apply(&p.values),
        })
        .collect();
    Ok(ProfileSet {
        gene_ids: set.gene_ids.clone(),
        profiles,
        stats: Some(stats.clone()),
    })
}

/// One profile per group key (elementwise mean), in order of each key's
/// first appearance.
pub fn average_replicates(set: &ProfileSet, group: &HashMap<String, String>) -> Result<ProfileSet, CoreError> {
    let mut order: Vec<&str> = Vec::new();
    let mut sums: HashMap<&str, (Vec<f64>, usize)> = HashMap::new();
    for p in &set.profiles {
        let key = group
            .get(&p.sample_id)
            .ok_or_else(|| CoreError::Data(format!("sample '{}' has no group", p.sample_id)))?;
        let entry = sums.entry(key.as_str()).or_insert_with(|| {
            order.push(key);
            (vec![0.0; set.genes()], 0)
        });
        for (s, v) in entry.0.iter_mut().zip(&p.values) {
            *s += v;
        }
        entry.1 += 1;
    }
    let profiles = order
        .into_iter()
        .map(|k| {
            let (sum, n) = &sums[k];
            Profile {
                sample_id: k.to_string(),
                values: sum.iter().map(|s| s / *n as f64).collect(),
            }
        })
        .collect();
    Ok(ProfileSet {
        gene_ids: set.gene_ids.clone(),
        profiles,
        stats: set.stats.clone(),
    })
}

/// Reads a two-column `sample_id,group` file with a header row.
pub fn load_groups<R: Read>(input: R, name: &str, delim: Delimiter) -> Result<HashMap<String, String>, CoreError> {
    let mut map = HashMap::new();
    for (i, rec) in reader(input, delim).records().enumerate() {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 {
            continue;
        }
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(ingest(name, line, 1, format!("expected 2 cells, found {}", rec.len())));
        }
        let id = rec[0].trim().to_string();
        if map.insert(id.clone(), rec[1].trim().to_string()).is_some() {
            return Err(ingest(name, line, 1, format!("sample '{id}' listed twice")));
        }
    }
    Ok(map)
}

/// Disease-reversal signature: values negated, id suffixed `_rev`.
pub fn reverse_profile(p: &Profile) -> Profile {
    Profile {
        sample_id: format!("{}_rev", p.sample_id),
        values: p.values.iter().map(|&v| if v == 0.0 { 0.0 } else { -v }).collect(),
    }
}

pub fn reverse_set(set: &ProfileSet) -> ProfileSet {
    ProfileSet {
        gene_ids: set.gene_ids.clone(),
        profiles: set.profiles.iter().map(reverse_profile).collect(),
        stats: set.stats.clone(),
    }
}

/// One training pair: a profile (by index into its set) and a SMILES string.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub profile: usize,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedCorpus {
    pub pairs: Vec<Pair>,
}

impl PairedCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn smiles(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.smiles.as_str())
    }
}

/// Reads `sample_id<TAB>smiles` rows (an optional `sample_id	smiles` header
/// is skipped). Every SMILES must parse and be at most `max_chars` long.
pub fn load_pairs<R: Read>(input: R, name: &str, set: &ProfileSet, max_chars: usize) -> Result<PairedCorpus, CoreError> {
    let index: HashMap<&str, usize> = set
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (p.sample_id.as_str(), i))
        .collect();
    let mut pairs = Vec::new();
    for (i, rec) in reader(input, Delimiter::Tab).records().enumerate() {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if i == 0 && rec.get(0) == Some("sample_id") {
            continue;
        }
        if rec.len() != 2 {
            return Err(ingest(name, line, 1, format!("expected sample_id<TAB>smiles, found {} cells", rec.len())));
        }
        let id = rec[0].trim();
        let smiles = rec[1].trim();
        let profile = *index
            .get(id)
            .ok_or_else(|| ingest(name, line, 1, format!("unknown sample_id '{id}'")))?;
        if smiles.len() > max_chars {
            return Err(ingest(name, line, 2, format!("SMILES longer than {max_chars} characters")));
        }
        exprmol_chem::parse_smiles(smiles).map_err(|e| ingest(name, line, 2, format!("invalid SMILES: {e}")))?;
        pairs.push(Pair {
            profile,
            smiles: smiles.to_string(),
        });
    }
    if pairs.is_empty() {
        return Err(CoreError::Data(format!("{name}: no training pairs")));
    }
    Ok(PairedCorpus { pairs })
}

pub fn load_pairs_path(path: &Path, set: &ProfileSet, max_chars: usize) -> Result<PairedCorpus, CoreError> {
    let f = File::open(path).map_err(|e| CoreError::io(path, e))?;
    load_pairs(f, &path.display().to_string(), set, max_chars)
}
