//! Conditional LSTM over SMILES tokens.
//!
//! The condition vector is concatenated to the token embedding at every
//! step. Training is teacher-forced; sampling is autoregressive from
//! `<SOS>` until `<EOS>` or the length limit.

use std::io::Write;

use exprmol_chem::{canonicalize, Exec};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{sigmoid, Axis, Tape, Var};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::error::CoreError;
use crate::optim::{clip_global_norm, Adam};
use crate::params::{uniform, ParamStore};
use crate::rng::{probe_stream, sample_stream, stream, GEN_DROPOUT, GEN_INIT, GEN_PROBE, GEN_SHUFFLE};
use crate::tensor::{gemm, Tensor};
use crate::vocab::{Vocab, EOS, PAD, SOS, UNK};

/// Rows sampled together in one lockstep batch.
const SAMPLE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub embedding: usize,
    pub layers: usize,
    pub hidden: usize,
    /// Dropout between stacked LSTM layers.
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Maximum number of generated tokens, excluding markers.
    pub max_len: usize,
    pub temperature: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub clip: f64,
    /// Number of fixed probe conditions sampled after every epoch.
    pub probe: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            embedding: 128,
            layers: 3,
            hidden: 256,
            dropout: 0.1,
            lr: 5e-4,
            batch: 64,
            epochs: 300,
            max_len: 100,
            temperature: 1.0,
            clip: 5.0,
            probe: 64,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let err = |m: &str| Err(CoreError::Config(format!("generator: {m}")));
        if self.embedding == 0 || self.layers == 0 || self.hidden == 0 || self.batch == 0 {
            return err("embedding, layers, hidden and batch must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must lie in [0, 1)");
        }
        if self.max_len < 2 {
            return err("max_len must be at least 2");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return err("temperature must be positive");
        }
        if !(self.lr > 0.0) || !(self.clip >= 0.0) {
            return err("lr must be positive and clip non-negative");
        }
        if self.probe > 256 {
            return err("probe is limited to 256 conditions");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenModel {
    pub config: GenConfig,
    pub cond_dim: usize,
    pub vocab: Vocab,
    pub params: ParamStore,
}

/// Teacher-forcing batch in time-major layout.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Input ids per step, one per row.
    inputs: Vec<Vec<usize>>,
    /// Next-token targets per (step, row); `None` at padding.
    targets: Vec<Option<usize>>,
    cond: Tensor,
    tokens: usize,
}

impl Batch {
    /// `seqs` are encoded `<SOS>…<EOS>` sequences; row `i` of `cond` is the
    /// condition of `seqs[i]`.
    pub fn new(seqs: &[&[usize]], cond: Tensor) -> Result<Self, CoreError> {
        if seqs.is_empty() || cond.rows() != seqs.len() {
            return Err(CoreError::Shape(format!("{} sequences for {} condition rows", seqs.len(), cond.rows())));
        }
        if let Some(s) = seqs.iter().find(|s| s.len() < 2 || s[0] != SOS) {
            return Err(CoreError::Data(format!("sequence {s:?} must start with <SOS> and hold a target")));
        }
        let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0) - 1;
        let mut inputs = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps * seqs.len());
        for t in 0..steps {
            inputs.push(seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect());
            targets.extend(seqs.iter().map(|s| s.get(t + 1).copied().filter(|&id| id != PAD)));
        }
        let tokens = targets.iter().flatten().count();
        Ok(Batch {
            inputs,
            targets,
            cond,
            tokens,
        })
    }

    pub fn rows(&self) -> usize {
        self.cond.rows()
    }

    /// Number of scored (non-padding) positions.
    pub fn tokens(&self) -> usize {
        self.tokens
    }
}

/// Recurrent state for lockstep sampling.
struct State {
    h: Vec<Tensor>,
    c: Vec<Tensor>,
}

/// One sampled string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub smiles: String,
    /// Emitted tokens, excluding markers.
    pub tokens: usize,
    /// The length limit was reached before `<EOS>`.
    pub truncated: bool,
}

impl GenModel {
    pub fn new<R: Rng + ?Sized>(config: GenConfig, cond_dim: usize, vocab: Vocab, rng: &mut R) -> Result<Self, CoreError> {
        config.validate()?;
        if cond_dim == 0 {
            return Err(CoreError::Config("generator: condition dimension must be positive".into()));
        }
        let (e, h, v) = (config.embedding, config.hidden, vocab.len());
        let a = 1.0 / (h as f64).sqrt();
        let mut params = ParamStore::new();
        params.push("embed", uniform(rng, v, e, 0.1));
        let mut input = e + cond_dim;
        for l in 0..config.layers {
            params.push(format!("lstm{l}.w"), uniform(rng, input + h, 4 * h, a));
            let mut b = Tensor::zeros(&[1, 4 * h]);
            // forget-gate bias starts at 1
            for x in &mut b.data_mut()[h..2 * h] {
                *x = 1.0;
            }
            params.push(format!("lstm{l}.b"), b);
            input = h;
        }
        params.push("out.w", uniform(rng, h, v, a));
        params.push("out.b", Tensor::zeros(&[1, v]));
        Ok(GenModel {
            config,
            cond_dim,
            vocab,
            params,
        })
    }

    fn lstm_w(&self, l: usize) -> usize {
        1 + 2 * l
    }

    fn out_w(&self) -> usize {
        1 + 2 * self.config.layers
    }

    /// Summed next-token NLL over the batch's non-padding positions.
    /// Inter-layer dropout is active only when `rng` is given.
    pub fn nll_on(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        batch: &Batch,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, CoreError> {
        if batch.cond.cols() != self.cond_dim {
            return Err(CoreError::shape_pair("condition", batch.cond.shape(), &[batch.rows(), self.cond_dim]));
        }
        let (b, h) = (batch.rows(), self.config.hidden);
        let cond = tape.constant(batch.cond.clone());
        let zeros = tape.constant(Tensor::zeros(&[b, h]));
        let mut hs = vec![zeros; self.config.layers];
        let mut cs = vec![zeros; self.config.layers];
        let mut tops = Vec::with_capacity(batch.inputs.len());
        for ids in &batch.inputs {
            let e = tape.gather(vars[0], ids)?;
            let mut x = tape.concat(&[e, cond], Axis::Cols)?;
            for l in 0..self.config.layers {
                if l > 0 {
                    if let Some(r) = rng.as_deref_mut() {
                        x = tape.dropout(x, self.config.dropout, true, r)?;
                    }
                }
                let z = tape.concat(&[x, hs[l]], Axis::Cols)?;
                let w = self.lstm_w(l);
                let gates = tape.matmul(z, vars[w])?;
                let gates = tape.add_row(gates, vars[w + 1])?;
                let i = tape.slice(gates, Axis::Cols, 0, h)?;
                let i = tape.sigmoid(i);
                let f = tape.slice(gates, Axis::Cols, h, h)?;
                let f = tape.sigmoid(f);
                let g = tape.slice(gates, Axis::Cols, 2 * h, h)?;
                let g = tape.tanh(g);
                let o = tape.slice(gates, Axis::Cols, 3 * h, h)?;
                let o = tape.sigmoid(o);
                let keep = tape.mul(f, cs[l])?;
                let write = tape.mul(i, g)?;
                cs[l] = tape.add(keep, write)?;
                let squashed = tape.tanh(cs[l]);
                hs[l] = tape.mul(o, squashed)?;
                x = hs[l];
            }
            tops.push(x);
        }
        let all = tape.concat(&tops, Axis::Rows)?;
        let o = self.out_w();
        let logits = tape.matmul(all, vars[o])?;
        let logits = tape.add_row(logits, vars[o + 1])?;
        tape.softmax_cross_entropy(logits, &batch.targets)
    }

    /// Eval-mode summed NLL of a batch.
    pub fn nll(&self, batch: &Batch) -> Result<f64, CoreError> {
        let mut tape = Tape::new();
        let vars = self.params.on_tape(&mut tape);
        let l = self.nll_on(&mut tape, &vars, batch, None)?;
        Ok(tape.scalar(l))
    }

    /// Encodes SMILES with this model's vocabulary (`<UNK>` allowed) and
    /// returns the eval-mode summed NLL.
    pub fn nll_of(&self, smiles: &[&str], cond: Tensor) -> Result<f64, CoreError> {
        let seqs: Vec<Vec<usize>> = smiles
            .iter()
            .map(|s| self.vocab.encode(s, true))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        self.nll(&Batch::new(&refs, cond)?)
    }

    fn start(&self, rows: usize) -> State {
        let z = Tensor::zeros(&[rows, self.config.hidden]);
        State {
            h: vec![z.clone(); self.config.layers],
            c: vec![z; self.config.layers],
        }
    }

    /// One recurrent step without a tape; returns `rows × |V|` logits.
    fn step(&self, ids: &[usize], cond: &Tensor, state: &mut State) -> Tensor {
        let (rows, h) = (ids.len(), self.config.hidden);
        let emb = self.params.get(0);
        let mut x: Vec<f64> = Vec::with_capacity(rows * (emb.cols() + self.cond_dim));
        for (r, &id) in ids.iter().enumerate() {
            x.extend_from_slice(emb.row_slice(id));
            x.extend_from_slice(cond.row_slice(r));
        }
        let mut width = emb.cols() + self.cond_dim;
        for l in 0..self.config.layers {
            let w = self.params.get(self.lstm_w(l));
            let b = self.params.get(self.lstm_w(l) + 1);
            let zw = width + h;
            let mut z = Vec::with_capacity(rows * zw);
            for r in 0..rows {
                z.extend_from_slice(&x[r * width..(r + 1) * width]);
                z.extend_from_slice(state.h[l].row_slice(r));
            }
            let mut gates = vec![0.0; rows * 4 * h];
            gemm(&z, rows, zw, false, w.data(), zw, 4 * h, false, &mut gates, false);
            let c = state.c[l].data_mut();
            let mut hn = vec![0.0; rows * h];
            for r in 0..rows {
                let g = &mut gates[r * 4 * h..(r + 1) * 4 * h];
                for (gj, bj) in g.iter_mut().zip(b.data()) {
                    *gj += bj;
                }
                for j in 0..h {
                    let i = sigmoid(g[j]);
                    let f = sigmoid(g[h + j]);
                    let cand = g[2 * h + j].tanh();
                    let o = sigmoid(g[3 * h + j]);
                    let k = r * h + j;
                    c[k] = f * c[k] + i * cand;
                    hn[k] = o * c[k].tanh();
                }
            }
            state.h[l] = Tensor::matrix(rows, h, hn.clone()).expect("shape");
            x = hn;
            width = h;
        }
        let wo = self.params.get(self.out_w());
        let bo = self.params.get(self.out_w() + 1);
        let v = wo.cols();
        let mut logits = vec![0.0; rows * v];
        gemm(&x, rows, h, false, wo.data(), h, v, false, &mut logits, false);
        for row in logits.chunks_mut(v) {
            for (a, b) in row.iter_mut().zip(bo.data()) {
                *a += b;
            }
        }
        Tensor::matrix(rows, v, logits).expect("shape")
    }

    /// Samples one string per condition row, row `i` drawing from `rngs[i]`.
    pub fn sample_rows(
        &self,
        cond: &Tensor,
        rngs: &mut [ChaCha8Rng],
        temperature: f64,
        max_len: usize,
    ) -> Result<Vec<Sample>, CoreError> {
        if !(temperature > 0.0) {
            return Err(CoreError::Config("temperature must be positive".into()));
        }
        if cond.cols() != self.cond_dim || cond.rows() != rngs.len() {
            return Err(CoreError::shape_pair("sample condition", cond.shape(), &[rngs.len(), self.cond_dim]));
        }
        let n = rngs.len();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut truncated = vec![false; n];
        let mut active: Vec<usize> = (0..n).collect();
        let mut ids = vec![SOS; n];
        let mut cond_rows = cond.clone();
        let mut state = self.start(n);
        let mut probs = vec![0.0; self.vocab.len()];
        while !active.is_empty() {
            let logits = self.step(&ids, &cond_rows, &mut state);
            let mut keep = Vec::with_capacity(active.len());
            for (k, &row) in active.iter().enumerate() {
                let tok = draw(logits.row_slice(k), temperature, &mut rngs[row], &mut probs);
                if tok == EOS {
                    continue;
                }
                out[row].push(tok);
                if out[row].len() >= max_len {
                    truncated[row] = true;
                    continue;
                }
                ids[k] = tok;
                keep.push(k);
            }
            if keep.is_empty() {
                break;
            }
            if keep.len() != active.len() {
                active = keep.iter().map(|&k| active[k]).collect();
                ids = keep.iter().map(|&k| ids[k]).collect();
                cond_rows = cond_rows.gather_rows(&keep);
                for l in 0..self.config.layers {
                    state.h[l] = state.h[l].gather_rows(&keep);
                    state.c[l] = state.c[l].gather_rows(&keep);
                }
            }
        }
        Ok(out
            .into_iter()
            .zip(truncated)
            .map(|(ids, truncated)| Sample {
                smiles: self.vocab.decode(&ids),
                tokens: ids.len(),
                truncated,
            })
            .collect())
    }

    pub fn sample(&self, cond: &[f64], rng: &mut ChaCha8Rng, temperature: f64, max_len: usize) -> Result<Sample, CoreError> {
        let c = Tensor::row(cond.to_vec());
        let mut rngs = [rng.clone()];
        let s = self.sample_rows(&c, &mut rngs, temperature, max_len)?;
        *rng = rngs[0].clone();
        Ok(s.into_iter().next().expect("one row"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Generator,
            meta: json!({
                "config": self.config,
                "cond_dim": self.cond_dim,
                "vocab": self.vocab,
            }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CoreError> {
        ckpt.expect_kind(ModelKind::Generator)?;
        let field = |k: &str| ckpt.meta.get(k).cloned().ok_or_else(|| CoreError::Checkpoint(format!("missing '{k}'")));
        let parse = |e: serde_json::Error| CoreError::Checkpoint(e.to_string());
        let config: GenConfig = serde_json::from_value(field("config")?).map_err(parse)?;
        let cond_dim: usize = serde_json::from_value(field("cond_dim")?).map_err(parse)?;
        let vocab: Vocab = serde_json::from_value(field("vocab")?).map_err(parse)?;
        let mut model = GenModel::new(config, cond_dim, vocab, &mut stream(0, GEN_INIT))?;
        ckpt.expect_layout(&model.params)?;
        model.params = ckpt.params.clone();
        Ok(model)
    }
}

/// Multinomial draw from `softmax(logits / temperature)`, never picking
/// `<SOS>`, `<PAD>` or `<UNK>`.
fn draw(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng, probs: &mut [f64]) -> usize {
    let allowed = |i: usize| i != SOS && i != PAD && i != UNK;
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, &v)| v / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (i, (p, &v)) in probs.iter_mut().zip(logits).enumerate() {
        *p = if allowed(i) { ((v / temperature) - max).exp() } else { 0.0 };
        total += *p;
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = EOS;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// One row of a generated batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub index: usize,
    pub smiles: String,
    pub valid: bool,
    pub canonical: Option<String>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedBatch {
    pub molecules: Vec<Generated>,
    pub valid: usize,
}

/// `count` independent samples for one condition. Sample `i` draws from
/// its own seed-derived stream, so the output does not depend on `exec`.
pub fn generate_batch(
    model: &GenModel,
    cond: &[f64],
    count: usize,
    seed: u64,
    temperature: f64,
    max_len: usize,
    exec: Exec,
) -> Result<GeneratedBatch, CoreError> {
    if count == 0 {
        return Err(CoreError::Config("count must be at least 1".into()));
    }
    if cond.len() != model.cond_dim {
        return Err(CoreError::shape_pair("condition", &[cond.len()], &[model.cond_dim]));
    }
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let parts = exec.map_range(chunks, |k| -> Result<Vec<Generated>, CoreError> {
        let lo = k * SAMPLE_CHUNK;
        let hi = (lo + SAMPLE_CHUNK).min(count);
        let rows = hi - lo;
        let c = Tensor::matrix(rows, cond.len(), cond.repeat(rows))?;
        let mut rngs: Vec<ChaCha8Rng> = (lo..hi).map(|i| sample_stream(seed, i as u64)).collect();
        let samples = model.sample_rows(&c, &mut rngs, temperature, max_len)?;
        Ok(samples
            .into_iter()
            .enumerate()
            .map(|(j, s)| {
                let canonical = canonicalize(&s.smiles).ok();
                Generated {
                    index: lo + j,
                    valid: canonical.is_some(),
                    canonical,
                    smiles: s.smiles,
                    truncated: s.truncated,
                }
            })
            .collect())
    });
    let mut molecules = Vec::with_capacity(count);
    for p in parts {
        molecules.extend(p?);
    }
    let valid = molecules.iter().filter(|m| m.valid).count();
    Ok(GeneratedBatch { molecules, valid })
}

pub const GENERATED_HEADER: &str = "index\tsmiles\tvalid\tcanonical";

/// Writes `index, smiles, valid, canonical` rows under a header line; the
/// canonical column is empty for invalid strings.
pub fn write_generated<W: Write>(batch: &GeneratedBatch, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GENERATED_HEADER}")?;
    for m in &batch.molecules {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            m.index,
            m.smiles,
            m.valid,
            m.canonical.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

/// A training example: SMILES plus the row of its condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub smiles: String,
    pub cond_row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenEpoch {
    pub epoch: usize,
    /// Mean per-sequence NLL.
    pub loss: f64,
    /// Mean per-token NLL.
    pub token_nll: f64,
    /// Fraction of valid probe samples after the epoch.
    pub validity: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GenTraining {
    pub model: GenModel,
    pub log: Vec<GenEpoch>,
    pub best_epoch: usize,
}

fn encode_all(vocab: &Vocab, examples: &[Example], allow_unk: bool) -> Result<Vec<Vec<usize>>, CoreError> {
    examples.iter().map(|e| vocab.encode(&e.smiles, allow_unk)).collect()
}

fn make_batch(seqs: &[Vec<usize>], examples: &[Example], idx: &[usize], conds: &Tensor) -> Result<Batch, CoreError> {
    let refs: Vec<&[usize]> = idx.iter().map(|&i| seqs[i].as_slice()).collect();
    let rows: Vec<usize> = idx.iter().map(|&i| examples[i].cond_row).collect();
    Batch::new(&refs, conds.gather_rows(&rows))
}

/// Mean per-sequence eval NLL over `examples` in batches.
fn mean_loss(model: &GenModel, seqs: &[Vec<usize>], examples: &[Example], conds: &Tensor) -> Result<f64, CoreError> {
    let idx: Vec<usize> = (0..examples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(model.config.batch) {
        total += model.nll(&make_batch(seqs, examples, chunk, conds)?)?;
    }
    Ok(total / examples.len() as f64)
}

/// Mean per-sequence eval NLL of held-out examples; tokens missing from
/// the vocabulary count as UNK.
pub fn held_out_nll(model: &GenModel, examples: &[Example], conds: &Tensor) -> Result<f64, CoreError> {
    if examples.is_empty() {
        return Err(CoreError::Data("no held-out examples".into()));
    }
    let seqs = encode_all(&model.vocab, examples, true)?;
    mean_loss(model, &seqs, examples, conds)
}

/// Teacher-forced mini-batch Adam. `conds` holds one precomputed condition
/// per row referenced by the examples. The vocabulary comes from `train`.
/// With validation examples the best-by-validation weights are kept.
pub fn train_generator(
    train: &[Example],
    valid: &[Example],
    conds: &Tensor,
    config: &GenConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&GenEpoch),
) -> Result<GenTraining, CoreError> {
    config.validate()?;
    if train.is_empty() {
        return Err(CoreError::Data("empty training corpus".into()));
    }
    if let Some(e) = train.iter().chain(valid).find(|e| e.cond_row >= conds.rows()) {
        return Err(CoreError::Data(format!("condition row {} out of range", e.cond_row)));
    }
    let vocab = Vocab::from_corpus(train.iter().map(|e| e.smiles.as_str()))?;
    let seqs = encode_all(&vocab, train, false)?;
    let val_seqs = encode_all(&vocab, valid, true)?;
    let mut model = GenModel::new(config.clone(), conds.cols(), vocab, &mut stream(seed, GEN_INIT))?;
    let mut adam = Adam::new(config.lr, &model.params);
    let mut shuffle = stream(seed, GEN_SHUFFLE);
    let mut drop = stream(seed, GEN_DROPOUT);

    let probe_rows: Vec<usize> = {
        let mut r = stream(seed, GEN_PROBE);
        let rows: Vec<usize> = train.iter().map(|e| e.cond_row).collect();
        (0..config.probe).map(|_| *rows.choose(&mut r).expect("non-empty")).collect()
    };
    let probe_cond = conds.gather_rows(&probe_rows);

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let (mut total, mut tokens) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(config.batch).enumerate() {
            let batch = make_batch(&seqs, train, chunk, conds)?;
            let (sum, mut grads) = {
                let mut tape = Tape::new();
                let vars = model.params.on_tape(&mut tape);
                let nll = model.nll_on(&mut tape, &vars, &batch, Some(&mut drop))?;
                let sum = tape.scalar(nll);
                if !sum.is_finite() {
                    return Err(CoreError::NonFinite(format!("generator loss {sum} at epoch {epoch}, batch {}", bi + 1)));
                }
                let loss = tape.scale(nll, 1.0 / batch.rows() as f64);
                let mut g = tape.backward(loss)?;
                let grads: Vec<Tensor> = vars
                    .iter()
                    .zip(model.params.tensors())
                    .map(|(&v, p)| g.take_or_zeros(v, p))
                    .collect();
                (sum, grads)
            };
            if config.clip > 0.0 {
                clip_global_norm(&mut grads, config.clip);
            }
            adam.step(&mut model.params, &grads)?;
            total += sum;
            tokens += batch.tokens();
        }
        let validity = if config.probe > 0 {
            let mut rngs: Vec<ChaCha8Rng> = (0..config.probe as u64).map(|k| probe_stream(seed, epoch as u64, k)).collect();
            let samples = model.sample_rows(&probe_cond, &mut rngs, config.temperature, config.max_len)?;
            samples.iter().filter(|s| canonicalize(&s.smiles).is_ok()).count() as f64 / config.probe as f64
        } else {
            0.0
        };
        let val_loss = if valid.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &val_seqs, valid, conds)?)
        };
        let entry = GenEpoch {
            epoch,
            loss: total / n as f64,
            token_nll: total / tokens as f64,
            validity,
            val_loss,
        };
        if let Some(vl) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.params.clone()));
            }
        }
        on_epoch(&entry);
        log.push(entry);
    }
    let best_epoch = match best {
        Some((_, e, params)) => {
            model.params = params;
            e
        }
        None => config.epochs,
    };
    Ok(GenTraining { model, log, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use rand::SeedableRng;

    fn tiny(hidden: usize, layers: usize) -> GenConfig {
        GenConfig {
            embedding: 4,
            layers,
            hidden,
            dropout: 0.0,
            lr: 1e-2,
            batch: 8,
            epochs: 1,
            max_len: 20,
            temperature: 1.0,
            clip: 5.0,
            probe: 8,
        }
    }

    fn model(config: GenConfig, corpus: &[&str], cond_dim: usize, seed: u64) -> GenModel {
        let vocab = Vocab::from_corpus(corpus.iter().copied()).unwrap();
        GenModel::new(config, cond_dim, vocab, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn defaults_follow_published_settings() {
        let c = GenConfig::default();
        assert_eq!((c.embedding, c.layers, c.hidden), (128, 3, 256));
        assert_eq!((c.dropout, c.lr, c.batch, c.epochs, c.max_len), (0.1, 5e-4, 64, 300, 100));
        assert!(GenConfig { max_len: 1, ..c.clone() }.validate().is_err());
        assert!(GenConfig { temperature: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn uniform_init_loss_is_log_vocab() {
        // one real token: |V| = 4 specials + 1
        let m = model(tiny(8, 1), &["C"], 2, 1);
        assert_eq!(m.vocab.len(), 5);
        let cond = Tensor::matrix(1, 2, vec![0.1, -0.2]).unwrap();
        let per_pos = m.nll_of(&["CCCC"], cond).unwrap() / 5.0;
        assert!((per_pos - 5f64.ln()).abs() < 0.1, "{per_pos}");
    }

    #[test]
    fn padding_does_not_change_loss() {
        let m = model(tiny(8, 2), &["CCO", "c1ccccc1"], 3, 2);
        let seq = m.vocab.encode("CCO", false).unwrap();
        let cond = Tensor::matrix(1, 3, vec![0.3, 0.1, -0.5]).unwrap();
        let alone = m.nll(&Batch::new(&[&seq], cond.clone()).unwrap()).unwrap();
        let mut padded = seq.clone();
        padded.extend([PAD; 5]);
        let with_pad = m.nll(&Batch::new(&[&padded], cond.clone()).unwrap()).unwrap();
        assert!((alone - with_pad).abs() < 1e-12);
        // padding introduced by a longer neighbor in the batch
        let long = m.vocab.encode("c1ccccc1", false).unwrap();
        let both = Tensor::matrix(2, 3, vec![0.3, 0.1, -0.5, 0.0, 0.0, 1.0]).unwrap();
        let pair = m.nll(&Batch::new(&[&seq, &long], both).unwrap()).unwrap();
        let other = m.nll(&Batch::new(&[&long], Tensor::matrix(1, 3, vec![0.0, 0.0, 1.0]).unwrap()).unwrap()).unwrap();
        assert!((pair - alone - other).abs() < 1e-9);
    }

    #[test]
    fn unknown_token_is_an_error_without_unk() {
        let m = model(tiny(4, 1), &["CC"], 1, 3);
        assert!(matches!(m.vocab.encode("CN", false), Err(CoreError::UnknownToken(_))));
        assert!(m.nll_of(&["CN"], Tensor::row(vec![0.0])).is_ok());
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        // two real tokens: |V| = 6
        let m = model(tiny(8, 1), &["CO"], 2, 4);
        assert_eq!(m.vocab.len(), 6);
        let seqs = [m.vocab.encode("COC", false).unwrap(), m.vocab.encode("O", false).unwrap()];
        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        let batch = Batch::new(&refs, Tensor::matrix(2, 2, vec![0.5, -0.3, 1.0, 0.2]).unwrap()).unwrap();
        let mut params = m.params.tensors().to_vec();
        let worst = check_gradients(&mut params, &|tape, vars| m.nll_on(tape, vars, &batch, None).unwrap());
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn sampler_step_matches_tape_forward() {
        let m = model(tiny(6, 2), &["CCO", "c1ccccc1"], 2, 5);
        let seq = m.vocab.encode("CCO", false).unwrap();
        let cond = Tensor::matrix(1, 2, vec![0.4, -0.1]).unwrap();
        let teacher = m.nll(&Batch::new(&[&seq], cond.clone()).unwrap()).unwrap();
        let mut state = m.start(1);
        let mut manual = 0.0;
        for w in seq.windows(2) {
            let logits = m.step(&[w[0]], &cond, &mut state);
            let row = logits.row_slice(0);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            manual += lse - row[w[1]];
        }
        assert!((teacher - manual).abs() < 1e-10, "{teacher} vs {manual}");
    }

    #[test]
    fn sampling_contracts() {
        let m = model(tiny(8, 2), &["CCO", "c1ccccc1N"], 2, 6);
        let cond = [0.2, 0.7];
        let a = m.sample(&cond, &mut ChaCha8Rng::seed_from_u64(1), 1.0, 30).unwrap();
        let b = m.sample(&cond, &mut ChaCha8Rng::seed_from_u64(1), 1.0, 30).unwrap();
        assert_eq!(a, b);
        let g1 = m.sample(&cond, &mut ChaCha8Rng::seed_from_u64(2), 1e-9, 30).unwrap();
        let g2 = m.sample(&cond, &mut ChaCha8Rng::seed_from_u64(3), 1e-9, 30).unwrap();
        assert_eq!(g1, g2);
        let batch = generate_batch(&m, &cond, 200, 7, 1.0, 12, Exec::Sequential).unwrap();
        assert_eq!(batch.molecules.len(), 200);
        for (i, g) in batch.molecules.iter().enumerate() {
            assert_eq!(g.index, i);
            assert!(!g.smiles.contains('<'));
            let n = exprmol_chem::tokenize(&g.smiles).map(|t| t.len()).unwrap_or(0);
            assert!(n <= 12);
            assert_eq!(g.valid, g.canonical.is_some());
        }
        assert_eq!(batch.valid, batch.molecules.iter().filter(|g| g.valid).count());
        assert_eq!(generate_batch(&m, &cond, 200, 7, 1.0, 12, Exec::Parallel).unwrap(), batch);
        assert!(generate_batch(&m, &cond, 0, 7, 1.0, 12, Exec::Sequential).is_err());
        assert!(generate_batch(&m, &[0.0], 5, 7, 1.0, 12, Exec::Sequential).is_err());
    }

    #[test]
    fn generated_tsv_layout() {
        let batch = GeneratedBatch {
            molecules: vec![
                Generated {
                    index: 0,
                    smiles: "OCC".into(),
                    valid: true,
                    canonical: Some("CCO".into()),
                    truncated: false,
                },
                Generated {
                    index: 1,
                    smiles: "C1CC".into(),
                    valid: false,
                    canonical: None,
                    truncated: false,
                },
            ],
            valid: 1,
        };
        let mut out = Vec::new();
        write_generated(&batch, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "index\tsmiles\tvalid\tcanonical\n0\tOCC\ttrue\tCCO\n1\tC1CC\tfalse\t\n"
        );
    }

    fn examples(smiles: &[&str]) -> Vec<Example> {
        smiles
            .iter()
            .enumerate()
            .map(|(i, s)| Example {
                smiles: s.to_string(),
                cond_row: i % 2,
            })
            .collect()
    }

    #[test]
    fn memorizes_a_single_pair() {
        let train = examples(&["CC(=O)Nc1ccc(O)cc1"]);
        let conds = Tensor::matrix(2, 2, vec![0.5, -0.5, 0.1, 0.2]).unwrap();
        let cfg = GenConfig {
            embedding: 8,
            hidden: 32,
            layers: 1,
            epochs: 200,
            lr: 3e-2,
            probe: 0,
            ..tiny(32, 1)
        };
        let run = train_generator(&train, &[], &conds, &cfg, 1, |_| {}).unwrap();
        assert!(run.log[199].loss < 0.05, "{}", run.log[199].loss);
    }

    #[test]
    fn training_is_reproducible_and_checkpoints_round_trip() {
        let train = examples(&["CCO", "CCN", "c1ccccc1", "CC(=O)O", "OCCO", "NCCN"]);
        let valid = examples(&["CCCO", "CBr"]);
        let conds = Tensor::matrix(2, 3, vec![0.5, -0.5, 0.0, 0.1, 0.2, 0.3]).unwrap();
        let cfg = GenConfig {
            epochs: 5,
            dropout: 0.1,
            ..tiny(8, 2)
        };
        let a = train_generator(&train, &valid, &conds, &cfg, 3, |_| {}).unwrap();
        let b = train_generator(&train, &valid, &conds, &cfg, 3, |_| {}).unwrap();
        let bits = |l: &[GenEpoch]| l.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.log), bits(&b.log));
        assert_eq!(a.model, b.model);
        assert!(a.log.iter().all(|e| (0.0..=1.0).contains(&e.validity) && e.val_loss.is_some()));
        let best = a.log.iter().min_by(|x, y| x.val_loss.unwrap().total_cmp(&y.val_loss.unwrap())).unwrap();
        assert_eq!(a.best_epoch, best.epoch);

        let bytes = a.model.to_checkpoint().to_bytes().unwrap();
        let back = GenModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, a.model);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let cond = Tensor::row(c.clone());
            let x = a.model.nll_of(&["CCO"], cond.clone()).unwrap();
            let y = back.nll_of(&["CCO"], cond).unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(train_generator(&[], &[], &conds, &cfg, 3, |_| {}).is_err());
    }
}
