//! End-to-end commands: transform, train-vae, train-gen, generate, evaluate.
//!
//! Each command reads its inputs from disk, writes its outputs and returns a
//! short summary. All randomness derives from the master seed.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use exprmol_chem::{canonicalize, ecfp4, evaluate, parse_smiles, Exec, Fingerprint, MetricsReport, QedTables, SaTables};
use rand::seq::SliceRandom;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::RunConfig;
use crate::error::CoreError;
use crate::generator::{generate_batch, held_out_nll, train_generator, write_generated, Example, GenModel, GeneratedBatch};
use crate::profiles::{
    average_replicates, ingest, load_groups, load_pairs_path, load_profiles_path, reverse_set, write_profiles, Delimiter,
    ProfileSet,
};
use crate::rng::{stream, DATA_SPLIT, PAIR_SPLIT};
use crate::vae::{eval_loss, train_vae, VaeModel};

/// Shuffled train/validation/test index split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the given stream and cuts off
/// `floor(n * valid)` validation and `floor(n * test)` test indices.
pub fn split_indices(n: usize, valid: f64, test: f64, seed: u64, stream_id: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, stream_id));
    let nv = (n as f64 * valid).floor() as usize;
    let nt = (n as f64 * test).floor() as usize;
    let test_part = idx.split_off(n - nt);
    let valid_part = idx.split_off(n - nt - nv);
    Split {
        train: idx,
        valid: valid_part,
        test: test_part,
    }
}

fn subset(set: &ProfileSet, idx: &[usize]) -> ProfileSet {
    ProfileSet {
        gene_ids: set.gene_ids.clone(),
        profiles: idx.iter().map(|&i| set.profiles[i].clone()).collect(),
        stats: set.stats.clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CoreError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CoreError::io(path, e))
}

/// Append-only CSV log; the header is written only to an empty file.
struct Log {
    path: PathBuf,
    file: File,
    error: Option<std::io::Error>,
}

impl Log {
    fn open(path: &Path, header: &str) -> Result<Self, CoreError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CoreError::io(path, e))?;
        let empty = file.metadata().map_err(|e| CoreError::io(path, e))?.len() == 0;
        if empty {
            writeln!(file, "{header}").map_err(|e| CoreError::io(path, e))?;
        }
        Ok(Log {
            path: path.to_path_buf(),
            file,
            error: None,
        })
    }

    fn line(&mut self, text: String) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.file, "{text}") {
                self.error = Some(e);
            }
        }
    }

    fn finish(self) -> Result<(), CoreError> {
        match self.error {
            Some(e) => Err(CoreError::io(&self.path, e)),
            None => Ok(()),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

// ---------------------------------------------------------------- transform

#[derive(Debug, Clone, Default)]
pub struct TransformArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// `sample_id,group` file; samples sharing a group are averaged.
    pub average_by: Option<PathBuf>,
    pub reverse: bool,
}

/// Averaging runs before reversal. Returns the number of output rows.
pub fn transform(args: &TransformArgs) -> Result<usize, CoreError> {
    let mut set = load_profiles_path(&args.input)?;
    if let Some(groups) = &args.average_by {
        let f = File::open(groups).map_err(|e| CoreError::io(groups, e))?;
        let map = load_groups(f, &groups.display().to_string(), Delimiter::for_path(groups))?;
        set = average_replicates(&set, &map)?;
    }
    if args.reverse {
        set = reverse_set(&set);
    }
    let mut out = create(&args.output)?;
    write_profiles(&set, &mut out, Delimiter::for_path(&args.output))?;
    out.flush().map_err(|e| CoreError::io(&args.output, e))?;
    Ok(set.len())
}

// ---------------------------------------------------------------- train-vae

#[derive(Debug, Clone, Default)]
pub struct TrainVaeArgs {
    pub profiles: PathBuf,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeSummary {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub best_epoch: usize,
    pub final_loss: f64,
    pub test_loss: Option<f64>,
}

pub const VAE_LOG_HEADER: &str = "epoch,loss,recon,kl,val_loss";

pub fn train_vae_cmd(args: &TrainVaeArgs, cfg: &RunConfig) -> Result<VaeSummary, CoreError> {
    cfg.validate()?;
    let set = load_profiles_path(&args.profiles)?;
    let split = split_indices(set.len(), cfg.data.valid_fraction, cfg.data.test_fraction, cfg.seed, DATA_SPLIT);
    let train = subset(&set, &split.train);
    let valid = subset(&set, &split.valid);
    let mut log = Log::open(&args.log, VAE_LOG_HEADER)?;
    let run = train_vae(&train, (!valid.is_empty()).then_some(&valid), &cfg.vae, cfg.seed, |e| {
        log.line(format!("{},{},{},{},{}", e.epoch, e.loss, e.recon, e.kl, opt(e.val_loss)));
    })?;
    log.finish()?;
    let test_loss = if split.test.is_empty() {
        None
    } else {
        Some(eval_loss(&run.model, &run.model.standardized_matrix(&subset(&set, &split.test))?)?)
    };
    run.model.to_checkpoint().save(&args.checkpoint)?;
    Ok(VaeSummary {
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        best_epoch: run.best_epoch,
        final_loss: run.log.last().map_or(f64::NAN, |e| e.loss),
        test_loss,
    })
}

pub fn load_vae(path: &Path) -> Result<VaeModel, CoreError> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_kind(ModelKind::Vae)?;
    VaeModel::from_checkpoint(&ckpt)
}

pub fn load_generator(path: &Path) -> Result<GenModel, CoreError> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_kind(ModelKind::Generator)?;
    GenModel::from_checkpoint(&ckpt)
}

// ---------------------------------------------------------------- train-gen

#[derive(Debug, Clone, Default)]
pub struct TrainGenArgs {
    pub pairs: PathBuf,
    pub profiles: PathBuf,
    pub vae: PathBuf,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub validity_log: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub vocab: usize,
    pub best_epoch: usize,
    pub final_token_nll: f64,
    pub final_validity: f64,
    pub test_loss: Option<f64>,
}

pub const GEN_LOG_HEADER: &str = "epoch,loss,token_nll,val_loss";
pub const VALIDITY_LOG_HEADER: &str = "epoch,validity";

pub fn train_gen_cmd(args: &TrainGenArgs, cfg: &RunConfig) -> Result<GenSummary, CoreError> {
    cfg.validate()?;
    let vae = load_vae(&args.vae)?;
    let set = load_profiles_path(&args.profiles)?;
    set.check_genes(&vae.gene_ids)?;
    let corpus = load_pairs_path(&args.pairs, &set, cfg.data.max_smiles_chars)?;
    let conds = vae.conditions(&set)?;
    let examples: Vec<Example> = corpus
        .pairs
        .iter()
        .map(|p| Example {
            smiles: p.smiles.clone(),
            cond_row: p.profile,
        })
        .collect();
    let split = split_indices(examples.len(), cfg.data.valid_fraction, cfg.data.test_fraction, cfg.seed, PAIR_SPLIT);
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    let (train, valid, test) = (pick(&split.train), pick(&split.valid), pick(&split.test));

    let mut log = Log::open(&args.log, GEN_LOG_HEADER)?;
    let mut vlog = Log::open(&args.validity_log, VALIDITY_LOG_HEADER)?;
    let run = train_generator(&train, &valid, &conds, &cfg.generator, cfg.seed, |e| {
        log.line(format!("{},{},{},{}", e.epoch, e.loss, e.token_nll, opt(e.val_loss)));
        vlog.line(format!("{},{}", e.epoch, e.validity));
    })?;
    log.finish()?;
    vlog.finish()?;
    let test_loss = if test.is_empty() {
        None
    } else {
        Some(held_out_nll(&run.model, &test, &conds)?)
    };
    run.model.to_checkpoint().save(&args.checkpoint)?;
    let last = run.log.last();
    Ok(GenSummary {
        train: train.len(),
        valid: valid.len(),
        test: test.len(),
        vocab: run.model.vocab.len(),
        best_epoch: run.best_epoch,
        final_token_nll: last.map_or(f64::NAN, |e| e.token_nll),
        final_validity: last.map_or(f64::NAN, |e| e.validity),
        test_loss,
    })
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Default)]
pub struct GenerateArgs {
    pub profiles: PathBuf,
    /// Row to condition on; may be omitted when the file has one row.
    pub sample_id: Option<String>,
    pub vae: PathBuf,
    pub generator: PathBuf,
    pub output: PathBuf,
    pub count: Option<usize>,
    pub temperature: Option<f64>,
}

pub fn generate_cmd(args: &GenerateArgs, cfg: &RunConfig, exec: Exec) -> Result<GeneratedBatch, CoreError> {
    let vae = load_vae(&args.vae)?;
    let gen = load_generator(&args.generator)?;
    if gen.cond_dim != vae.latent() {
        return Err(CoreError::Checkpoint(format!(
            "generator expects {}-dim conditions, VAE produces {}",
            gen.cond_dim,
            vae.latent()
        )));
    }
    let set = load_profiles_path(&args.profiles)?;
    set.check_genes(&vae.gene_ids).map_err(|e| match e {
        CoreError::GeneMismatch(m) => {
            CoreError::GeneMismatch(format!("{} does not match the VAE checkpoint: {m}", args.profiles.display()))
        }
        other => other,
    })?;
    let row = match &args.sample_id {
        Some(id) => set
            .index_of(id)
            .ok_or_else(|| CoreError::Data(format!("sample '{id}' not found in {}", args.profiles.display())))?,
        None if set.len() == 1 => 0,
        None => {
            return Err(CoreError::Data(format!(
                "{} has {} rows; choose one with --sample-id",
                args.profiles.display(),
                set.len()
            )))
        }
    };
    let cond = vae.extract_condition(&set.profiles[row].values)?;
    let count = args.count.unwrap_or(cfg.generate.count);
    let temperature = args.temperature.unwrap_or(gen.config.temperature);
    let batch = generate_batch(&gen, &cond, count, cfg.seed, temperature, gen.config.max_len, exec)?;
    let mut out = create(&args.output)?;
    write_generated(&batch, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CoreError::io(&args.output, e))?;
    Ok(batch)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub generated: PathBuf,
    pub pairs: PathBuf,
    pub ligands: Option<PathBuf>,
    /// Report destination; `None` leaves writing to the caller.
    pub output: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String, CoreError> {
    fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

/// SMILES column of a `generated.tsv` file, in file order.
pub fn read_generated(path: &Path) -> Result<Vec<String>, CoreError> {
    let name = path.display().to_string();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').nth(1) == Some("smiles") => {}
        _ => return Err(ingest(&name, 1, 1, "expected a header with 'smiles' in column 2")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split('\t')
                .nth(1)
                .map(str::to_string)
                .ok_or_else(|| ingest(&name, i + 1, 2, "missing smiles column"))
        })
        .collect()
}

/// Second column of a `sample_id<TAB>smiles` file, header skipped.
pub fn read_pair_smiles(path: &Path) -> Result<Vec<String>, CoreError> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, l) in read_text(path)?.lines().enumerate() {
        if l.trim().is_empty() || (i == 0 && l.starts_with("sample_id\t")) {
            continue;
        }
        let s = l
            .split('\t')
            .nth(1)
            .ok_or_else(|| ingest(&name, i + 1, 2, "expected sample_id<TAB>smiles"))?;
        out.push(s.trim().to_string());
    }
    if out.is_empty() {
        return Err(CoreError::Data(format!("{name}: no training pairs")));
    }
    Ok(out)
}

/// One SMILES per line (first tab-separated field); blank lines and `#`
/// comments are skipped.
pub fn read_ligands(path: &Path) -> Result<Vec<Fingerprint>, CoreError> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, l) in read_text(path)?.lines().enumerate() {
        let s = l.split('\t').next().unwrap_or("").trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let g = parse_smiles(s).map_err(|e| ingest(&name, i + 1, 1, format!("invalid ligand SMILES: {e}")))?;
        out.push(ecfp4(&g));
    }
    if out.is_empty() {
        return Err(CoreError::Data(format!("{name}: no ligands")));
    }
    Ok(out)
}

/// Scores generated molecules against the training corpus. SA fragment
/// statistics come from the training molecules.
pub fn evaluate_cmd(args: &EvaluateArgs, exec: Exec) -> Result<MetricsReport, CoreError> {
    let generated = read_generated(&args.generated)?;
    let name = args.pairs.display().to_string();
    let training = read_pair_smiles(&args.pairs)?;
    let mut graphs = Vec::with_capacity(training.len());
    let mut canonical = HashSet::with_capacity(training.len());
    for (i, s) in training.iter().enumerate() {
        let g = parse_smiles(s).map_err(|e| ingest(&name, i + 1, 2, format!("invalid SMILES: {e}")))?;
        canonical.insert(exprmol_chem::canonical_smiles(&g));
        graphs.push(g);
    }
    let sa = SaTables::from_corpus(&graphs)?;
    let ligands = args.ligands.as_deref().map(read_ligands).transpose()?;
    let report = evaluate(&generated, &canonical, ligands.as_deref(), &QedTables::bundled(), &sa, exec)?;
    if let Some(path) = &args.output {
        let mut out = create(path)?;
        out.write_all(report.render().as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| CoreError::io(path, e))?;
    }
    Ok(report)
}

/// Canonical forms of the valid molecules in a generated file, by index.
pub fn canonical_generated(path: &Path) -> Result<HashMap<usize, String>, CoreError> {
    Ok(read_generated(path)?
        .iter()
        .enumerate()
        .filter_map(|(i, s)| canonicalize(s).ok().map(|c| (i, c)))
        .collect())
}
