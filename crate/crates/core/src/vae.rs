//! Variational autoencoder over expression profiles. The encoder mean is
//! the condition fed to the generator.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{Tape, Var};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::error::CoreError;
use crate::optim::{clip_global_norm, Adam};
use crate::params::{glorot, ParamStore};
use crate::profiles::{apply_stats, standardize, NormStats, ProfileSet};
use crate::rng::{stream, VAE_DROPOUT, VAE_INIT, VAE_REPARAM, VAE_SHUFFLE};
use crate::tensor::Tensor;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub encoder: Vec<usize>,
    pub latent: usize,
    pub decoder: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// KL weight.
    pub beta: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub clip: f64,
    pub standardize: bool,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            encoder: vec![512, 256, 128],
            latent: 64,
            decoder: vec![128, 256, 512],
            dropout: 0.2,
            lr: 1e-4,
            batch: 64,
            epochs: 2000,
            beta: 1.0,
            clip: 0.0,
            standardize: true,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let err = |m: &str| Err(CoreError::Config(format!("vae: {m}")));
        if self.encoder.iter().chain(&self.decoder).any(|&w| w == 0) || self.latent == 0 {
            return err("layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must lie in [0, 1)");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return err("beta must be non-negative");
        }
        if !(self.lr > 0.0) || self.batch == 0 {
            return err("lr and batch must be positive");
        }
        if !(self.clip >= 0.0) {
            return err("clip must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub gene_ids: Vec<String>,
    /// Standardization applied to raw profiles before encoding.
    pub stats: Option<NormStats>,
    pub params: ParamStore,
}

/// Scalar nodes of the training objective.
#[derive(Debug, Clone, Copy)]
pub struct Elbo {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
}

fn dense(tape: &mut Tape<'_>, x: Var, w: Var, b: Var) -> Result<Var, CoreError> {
    let h = tape.matmul(x, w)?;
    tape.add_row(h, b)
}

fn hidden(tape: &mut Tape<'_>, x: Var, w: Var, b: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var, CoreError> {
    let h = dense(tape, x, w, b)?;
    let h = tape.relu(h);
    match rng {
        Some(r) => tape.dropout(h, p, true, r),
        None => Ok(h),
    }
}

impl VaeModel {
    /// Glorot-initialized weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        config: VaeConfig,
        gene_ids: Vec<String>,
        stats: Option<NormStats>,
        rng: &mut R,
    ) -> Result<Self, CoreError> {
        config.validate()?;
        if gene_ids.is_empty() {
            return Err(CoreError::Config("vae: no genes".into()));
        }
        let mut params = ParamStore::new();
        let mut add = |params: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize| {
            params.push(format!("{name}.w"), glorot(rng, fan_in, fan_out));
            params.push(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
        };
        let t = gene_ids.len();
        let mut prev = t;
        for (i, &w) in config.encoder.iter().enumerate() {
            add(&mut params, &format!("enc{i}"), prev, w);
            prev = w;
        }
        add(&mut params, "mu", prev, config.latent);
        add(&mut params, "logvar", prev, config.latent);
        prev = config.latent;
        for (i, &w) in config.decoder.iter().enumerate() {
            add(&mut params, &format!("dec{i}"), prev, w);
            prev = w;
        }
        add(&mut params, "out", prev, t);
        Ok(VaeModel {
            config,
            gene_ids,
            stats,
            params,
        })
    }

    pub fn genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    fn heads(&self) -> usize {
        2 * self.config.encoder.len()
    }

    /// `(μ, log σ²)` for a batch of standardized rows. Dropout is active
    /// only when `rng` is given.
    pub fn encode_on(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        x: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var), CoreError> {
        let mut h = x;
        for i in 0..self.config.encoder.len() {
            h = hidden(tape, h, vars[2 * i], vars[2 * i + 1], self.config.dropout, rng.as_deref_mut())?;
        }
        let k = self.heads();
        let mu = dense(tape, h, vars[k], vars[k + 1])?;
        let lv = dense(tape, h, vars[k + 2], vars[k + 3])?;
        let lv = tape.clamp(lv, LOGVAR_MIN, LOGVAR_MAX);
        Ok((mu, lv))
    }

    pub fn decode_on(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        z: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, CoreError> {
        let mut h = z;
        let base = self.heads() + 4;
        for i in 0..self.config.decoder.len() {
            h = hidden(tape, h, vars[base + 2 * i], vars[base + 2 * i + 1], self.config.dropout, rng.as_deref_mut())?;
        }
        let o = vars.len() - 2;
        dense(tape, h, vars[o], vars[o + 1])
    }

    fn check_width(&self, x: &Tensor) -> Result<(), CoreError> {
        if x.shape().len() != 2 || x.cols() != self.genes() {
            return Err(CoreError::shape_pair("vae input", x.shape(), &[x.rows(), self.genes()]));
        }
        Ok(())
    }

    /// Eval-mode `(μ, log σ²)` for standardized rows.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor), CoreError> {
        self.check_width(x)?;
        let mut tape = Tape::new();
        let vars = self.params.on_tape(&mut tape);
        let xv = tape.constant_ref(x);
        let (mu, lv) = self.encode_on(&mut tape, &vars, xv, None)?;
        Ok((tape.value(mu).clone(), tape.value(lv).clone()))
    }

    /// Eval-mode reconstruction of latent rows.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor, CoreError> {
        let mut tape = Tape::new();
        let vars = self.params.on_tape(&mut tape);
        let zv = tape.constant_ref(z);
        let r = self.decode_on(&mut tape, &vars, zv, None)?;
        Ok(tape.value(r).clone())
    }

    /// Standardizes raw values with the model's stats (if any).
    pub fn prepare(&self, raw: &[f64]) -> Result<Vec<f64>, CoreError> {
        if raw.len() != self.genes() {
            return Err(CoreError::GeneMismatch(format!(
                "profile has {} values, model expects {}",
                raw.len(),
                self.genes()
            )));
        }
        Ok(match &self.stats {
            Some(s) => s.apply(raw),
            None => raw.to_vec(),
        })
    }

    /// Condition vector for one raw profile: the encoder mean in eval mode.
    pub fn extract_condition(&self, raw: &[f64]) -> Result<Vec<f64>, CoreError> {
        let x = Tensor::row(self.prepare(raw)?);
        Ok(self.encode(&x)?.0.into_data())
    }

    /// Conditions for every profile of a raw set, one row each. The set's
    /// gene header must match the model's.
    pub fn conditions(&self, set: &ProfileSet) -> Result<Tensor, CoreError> {
        set.check_genes(&self.gene_ids)?;
        let x = self.standardized_matrix(set)?;
        Ok(self.encode(&x)?.0)
    }

    /// Raw profile rows of `set` after the stored normalization.
    pub fn standardized_matrix(&self, set: &ProfileSet) -> Result<Tensor, CoreError> {
        let mut data = Vec::with_capacity(set.len() * self.genes());
        for p in &set.profiles {
            data.extend(self.prepare(&p.values)?);
        }
        Tensor::matrix(set.len(), self.genes(), data)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Vae,
            meta: json!({
                "config": self.config,
                "gene_ids": self.gene_ids,
                "stats": self.stats,
            }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CoreError> {
        ckpt.expect_kind(ModelKind::Vae)?;
        let field = |k: &str| ckpt.meta.get(k).cloned().ok_or_else(|| CoreError::Checkpoint(format!("missing '{k}'")));
        let parse = |e: serde_json::Error| CoreError::Checkpoint(e.to_string());
        let config: VaeConfig = serde_json::from_value(field("config")?).map_err(parse)?;
        let gene_ids: Vec<String> = serde_json::from_value(field("gene_ids")?).map_err(parse)?;
        let stats: Option<NormStats> = serde_json::from_value(field("stats")?).map_err(parse)?;
        let mut rng = stream(0, VAE_INIT);
        let mut model = VaeModel::new(config, gene_ids, stats, &mut rng)?;
        ckpt.expect_layout(&model.params)?;
        model.params = ckpt.params.clone();
        Ok(model)
    }
}

/// `z = μ + exp(½ log σ²) ⊙ ε` with `ε ~ N(0, I)`.
pub fn reparameterize(tape: &mut Tape<'_>, mu: Var, logvar: Var, rng: &mut ChaCha8Rng) -> Result<Var, CoreError> {
    let shape = tape.value(mu).shape().to_vec();
    let n = tape.value(mu).len();
    let eps = Tensor::new(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect())?;
    let eps = tape.constant(eps);
    let half = tape.scale(logvar, 0.5);
    let std = tape.exp(half);
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}

/// Reconstruction error summed over genes and the closed-form KL to
/// `N(0, I)`, both averaged over the batch; `loss = recon + β·kl`.
pub fn elbo(tape: &mut Tape<'_>, x: Var, recon: Var, mu: Var, logvar: Var, beta: f64) -> Result<Elbo, CoreError> {
    let rows = tape.value(mu).rows() as f64;
    let rec = tape.mse(recon, x)?;
    let one = tape.add_scalar(logvar, 1.0);
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar);
    let t = tape.sub(one, mu2)?;
    let t = tape.sub(t, var)?;
    let s = tape.sum(t);
    let kl = tape.scale(s, -0.5 / rows);
    let weighted = tape.scale(kl, beta);
    let loss = tape.add(rec, weighted)?;
    Ok(Elbo { loss, recon: rec, kl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VaeTraining {
    pub model: VaeModel,
    pub log: Vec<VaeEpoch>,
    /// Epoch whose weights were kept (best validation loss, or the last).
    pub best_epoch: usize,
}

fn matrix_of(set: &ProfileSet) -> Result<Tensor, CoreError> {
    let t = set.genes();
    let data = set.profiles.iter().flat_map(|p| p.values.iter().copied()).collect();
    Tensor::matrix(set.len(), t, data)
}

/// Deterministic ELBO of standardized rows with `z = μ` and no dropout.
pub fn eval_loss(model: &VaeModel, x: &Tensor) -> Result<f64, CoreError> {
    let mut tape = Tape::new();
    let vars = model.params.on_tape(&mut tape);
    let xv = tape.constant_ref(x);
    let (mu, lv) = model.encode_on(&mut tape, &vars, xv, None)?;
    let r = model.decode_on(&mut tape, &vars, mu, None)?;
    let e = elbo(&mut tape, xv, r, mu, lv, model.config.beta)?;
    Ok(tape.scalar(e.loss))
}

/// Mini-batch Adam on raw profiles. With `config.standardize` the stats are
/// computed on `train` and stored on the model. When `valid` is given, the
/// weights with the lowest validation loss are kept.
pub fn train_vae(
    train: &ProfileSet,
    valid: Option<&ProfileSet>,
    config: &VaeConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&VaeEpoch),
) -> Result<VaeTraining, CoreError> {
    config.validate()?;
    if train.is_empty() {
        return Err(CoreError::Data("no training profiles".into()));
    }
    let (train_set, stats) = if config.standardize {
        let (s, st) = standardize(train)?;
        (s, Some(st))
    } else {
        (train.clone(), None)
    };
    let val_x = match valid {
        Some(v) => {
            v.check_genes(&train.gene_ids)?;
            let v = match &stats {
                Some(st) => apply_stats(v, st)?,
                None => v.clone(),
            };
            (!v.is_empty()).then(|| matrix_of(&v)).transpose()?
        }
        None => None,
    };
    let x_all = matrix_of(&train_set)?;
    let mut model = VaeModel::new(config.clone(), train.gene_ids.clone(), stats, &mut stream(seed, VAE_INIT))?;
    let mut adam = Adam::new(config.lr, &model.params);
    let mut shuffle = stream(seed, VAE_SHUFFLE);
    let mut drop = stream(seed, VAE_DROPOUT);
    let mut noise = stream(seed, VAE_REPARAM);
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let (mut sl, mut sr, mut sk) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            let xb = x_all.gather_rows(chunk);
            let (values, mut grads) = {
                let mut tape = Tape::new();
                let vars = model.params.on_tape(&mut tape);
                let x = tape.constant_ref(&xb);
                let (mu, lv) = model.encode_on(&mut tape, &vars, x, Some(&mut drop))?;
                let z = reparameterize(&mut tape, mu, lv, &mut noise)?;
                let r = model.decode_on(&mut tape, &vars, z, Some(&mut drop))?;
                let e = elbo(&mut tape, x, r, mu, lv, config.beta)?;
                let values = [tape.scalar(e.loss), tape.scalar(e.recon), tape.scalar(e.kl)];
                if !values[0].is_finite() {
                    return Err(CoreError::NonFinite(format!("VAE loss {} at epoch {epoch}, batch {}", values[0], b + 1)));
                }
                let mut g = tape.backward(e.loss)?;
                let grads: Vec<Tensor> = vars
                    .iter()
                    .zip(model.params.tensors())
                    .map(|(&v, p)| g.take_or_zeros(v, p))
                    .collect();
                (values, grads)
            };
            if config.clip > 0.0 {
                clip_global_norm(&mut grads, config.clip);
            }
            adam.step(&mut model.params, &grads)?;
            let w = chunk.len() as f64;
            sl += values[0] * w;
            sr += values[1] * w;
            sk += values[2] * w;
        }
        let val_loss = val_x.as_ref().map(|v| eval_loss(&model, v)).transpose()?;
        let entry = VaeEpoch {
            epoch,
            loss: sl / n as f64,
            recon: sr / n as f64,
            kl: sk / n as f64,
            val_loss,
        };
        if let Some(vl) = val_loss {
            if !vl.is_finite() {
                return Err(CoreError::NonFinite(format!("VAE validation loss at epoch {epoch}")));
            }
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
    Ok(VaeTraining { model, log, best_epoch })
}

/// Per-gene mean of eval-mode reconstructions (`z = μ`) against per-gene
/// mean of the standardized inputs, as a mean absolute difference.
pub fn reconstruction_mean_gap(model: &VaeModel, set: &ProfileSet) -> Result<f64, CoreError> {
    let x = model.standardized_matrix(set)?;
    let (mu, _) = model.encode(&x)?;
    let r = model.decode(&mu)?;
    let (n, t) = (x.rows() as f64, x.cols());
    let mut gap = 0.0;
    for j in 0..t {
        let mx: f64 = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
        let mr: f64 = (0..r.rows()).map(|i| r.get(i, j)).sum::<f64>() / n;
        gap += (mx - mr).abs();
    }
    Ok(gap / t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::profiles::Profile;
    use rand::SeedableRng;

    fn toy_config() -> VaeConfig {
        VaeConfig {
            encoder: vec![3],
            latent: 2,
            decoder: vec![3],
            dropout: 0.0,
            lr: 1e-2,
            batch: 4,
            epochs: 1,
            beta: 1.0,
            clip: 0.0,
            standardize: false,
        }
    }

    fn genes(t: usize) -> Vec<String> {
        (0..t).map(|j| format!("g{j}")).collect()
    }

    fn toy_set(n: usize, t: usize, seed: u64) -> ProfileSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // two latent factors plus noise
        let load: Vec<[f64; 2]> = (0..t).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let profiles = (0..n)
            .map(|i| {
                let f: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let values = load
                    .iter()
                    .map(|l| l[0] * f[0] + l[1] * f[1] + 0.1 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Profile {
                    sample_id: format!("s{i}"),
                    values,
                }
            })
            .collect();
        ProfileSet {
            gene_ids: genes(t),
            profiles,
            stats: None,
        }
    }

    #[test]
    fn defaults_follow_published_settings() {
        let c = VaeConfig::default();
        assert_eq!(c.encoder, vec![512, 256, 128]);
        assert_eq!(c.latent, 64);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.lr, 1e-4);
        assert_eq!(c.epochs, 2000);
        assert!(c.validate().is_ok());
        assert!(VaeConfig { dropout: 1.0, ..c.clone() }.validate().is_err());
        assert!(VaeConfig { beta: -1.0, ..c.clone() }.validate().is_err());
        assert!(VaeConfig { encoder: vec![0], ..c }.validate().is_err());
    }

    #[test]
    fn zero_heads_give_standard_normal() {
        let mut m = VaeModel::new(toy_config(), genes(4), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for name in ["mu.w", "logvar.w"] {
            let i = m.params.find(name).unwrap();
            let shape = m.params.get(i).shape().to_vec();
            *m.params.get_mut(i) = Tensor::zeros(&shape);
        }
        let (mu, lv) = m.encode(&Tensor::row(vec![0.3, -1.0, 2.0, 0.5])).unwrap();
        assert!(mu.data().iter().chain(lv.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        let m = VaeModel::new(toy_config(), genes(4), None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = [0.5, -1.0, 2.0, 0.25];
        let p = |name: &str| m.params.get(m.params.find(name).unwrap()).clone();
        let affine = |v: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            (0..w.cols())
                .map(|j| b.data()[j] + (0..v.len()).map(|i| v[i] * w.get(i, j)).sum::<f64>())
                .collect()
        };
        let h: Vec<f64> = affine(&x, &p("enc0.w"), &p("enc0.b")).into_iter().map(|v| v.max(0.0)).collect();
        let mu = affine(&h, &p("mu.w"), &p("mu.b"));
        let lv: Vec<f64> = affine(&h, &p("logvar.w"), &p("logvar.b")).into_iter().map(|v| v.clamp(-10.0, 10.0)).collect();
        let (gm, gl) = m.encode(&Tensor::row(x.to_vec())).unwrap();
        for (a, b) in gm.data().iter().zip(&mu).chain(gl.data().iter().zip(&lv)) {
            assert!((a - b).abs() < 1e-12);
        }
        let d: Vec<f64> = affine(&mu, &p("dec0.w"), &p("dec0.b")).into_iter().map(|v| v.max(0.0)).collect();
        let out = affine(&d, &p("out.w"), &p("out.b"));
        let r = m.decode(&gm).unwrap();
        for (a, b) in r.data().iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.encode(&Tensor::row(vec![1.0; 3])).is_err());
    }

    #[test]
    fn kl_closed_form_examples() {
        let kl_of = |mu: Vec<f64>, lv: Vec<f64>| {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::row(vec![0.0; 2]));
            let m = tape.constant(Tensor::row(mu));
            let l = tape.constant(Tensor::row(lv));
            let e = elbo(&mut tape, x, x, m, l, 1.0).unwrap();
            assert_eq!(tape.scalar(e.recon), 0.0);
            tape.scalar(e.kl)
        };
        assert_eq!(kl_of(vec![0.0; 64], vec![0.0; 64]), 0.0);
        let mut mu = vec![0.0; 64];
        mu[0] = 1.0;
        assert!((kl_of(mu, vec![0.0; 64]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let closed: f64 = mu
            .iter()
            .zip(&lv)
            .map(|(m, l)| -0.5 * (1.0 + l - m * m - l.exp()))
            .sum();
        // E_q[log q(z) - log p(z)]
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            for (m, l) in mu.iter().zip(&lv) {
                let e: f64 = rng.sample(StandardNormal);
                let z = m + (0.5 * l).exp() * e;
                let log_q = -0.5 * (l + e * e);
                let log_p = -0.5 * z * z;
                acc += log_q - log_p;
            }
        }
        let mc = acc / draws as f64;
        assert!((mc - closed).abs() / closed < 0.02, "{mc} vs {closed}");
    }

    #[test]
    fn reparameterization_properties() {
        let mut tape = Tape::new();
        let mu = tape.constant(Tensor::row(vec![0.7, -1.2]));
        let lv = tape.constant(Tensor::row(vec![-10.0, -10.0]));
        let z = reparameterize(&mut tape, mu, lv, &mut stream(1, VAE_REPARAM)).unwrap();
        for (a, b) in tape.value(z).data().iter().zip([0.7, -1.2]) {
            assert!((a - b).abs() < 3.0 * (-5f64).exp());
        }
        let z2 = reparameterize(&mut tape, mu, lv, &mut stream(1, VAE_REPARAM)).unwrap();
        assert_eq!(tape.value(z).data(), tape.value(z2).data());

        let draws = 100_000;
        let mu_v = [0.4, -2.0];
        let lv_v = [0.3, -0.5];
        let mut tape = Tape::new();
        let mu = tape.constant(Tensor::matrix(draws, 2, mu_v.repeat(draws)).unwrap());
        let lv = tape.constant(Tensor::matrix(draws, 2, lv_v.repeat(draws)).unwrap());
        let z = reparameterize(&mut tape, mu, lv, &mut stream(2, VAE_REPARAM)).unwrap();
        for j in 0..2 {
            let mean = (0..draws).map(|i| tape.value(z).get(i, j)).sum::<f64>() / draws as f64;
            let se = (lv_v[j] as f64).exp().sqrt() / (draws as f64).sqrt();
            assert!((mean - mu_v[j]).abs() < 3.0 * se, "{mean}");
        }
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let m = VaeModel::new(toy_config(), genes(4), None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.5, -1.0, 2.0, 0.25, -0.3, 0.8, 0.1, -1.5]).unwrap();
        let mut params = m.params.tensors().to_vec();
        let worst = check_gradients(&mut params, &|tape, vars| {
            let xv = tape.constant(x.clone());
            let (mu, lv) = m.encode_on(tape, vars, xv, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let z = reparameterize(tape, mu, lv, &mut rng).unwrap();
            let r = m.decode_on(tape, vars, z, None).unwrap();
            elbo(tape, xv, r, mu, lv, 1.0).unwrap().loss
        });
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn training_is_reproducible_and_improves() {
        let data = toy_set(40, 6, 5);
        let cfg = VaeConfig {
            encoder: vec![8],
            decoder: vec![8],
            latent: 2,
            epochs: 200,
            lr: 3e-3,
            batch: 8,
            dropout: 0.1,
            standardize: true,
            ..VaeConfig::default()
        };
        let a = train_vae(&data, None, &VaeConfig { epochs: 1, ..cfg.clone() }, 9, |_| {}).unwrap();
        let b = train_vae(&data, None, &VaeConfig { epochs: 1, ..cfg.clone() }, 9, |_| {}).unwrap();
        assert_eq!(a.log[0].loss.to_bits(), b.log[0].loss.to_bits());
        assert_eq!(a.model, b.model);

        let run = train_vae(&data, None, &cfg, 9, |_| {}).unwrap();
        assert!(run.log[199].loss < run.log[0].loss);
        assert!(run.model.stats.is_some());

        let c1 = run.model.extract_condition(&data.profiles[0].values).unwrap();
        assert_eq!(c1.len(), 2);
        assert_eq!(c1, run.model.extract_condition(&data.profiles[0].values).unwrap());
        let x = Tensor::row(run.model.prepare(&data.profiles[0].values).unwrap());
        assert_eq!(c1, run.model.encode(&x).unwrap().0.into_data());
    }

    #[test]
    fn zero_beta_fits_reconstruction_faster() {
        let data = toy_set(40, 6, 6);
        let cfg = VaeConfig {
            encoder: vec![8],
            decoder: vec![8],
            latent: 2,
            epochs: 50,
            lr: 3e-3,
            batch: 8,
            dropout: 0.0,
            ..VaeConfig::default()
        };
        let free = train_vae(&data, None, &VaeConfig { beta: 0.0, ..cfg.clone() }, 1, |_| {}).unwrap();
        let tied = train_vae(&data, None, &cfg, 1, |_| {}).unwrap();
        let drop = |l: &[VaeEpoch]| l[0].recon - l[49].recon;
        assert!(drop(&free.log) > drop(&tied.log), "{} vs {}", drop(&free.log), drop(&tied.log));
    }

    #[test]
    fn validation_keeps_best_epoch() {
        let data = toy_set(30, 5, 7);
        let valid = toy_set(10, 5, 8);
        let cfg = VaeConfig {
            encoder: vec![6],
            decoder: vec![6],
            latent: 2,
            epochs: 20,
            lr: 1e-2,
            batch: 10,
            ..VaeConfig::default()
        };
        let run = train_vae(&data, Some(&valid), &cfg, 3, |_| {}).unwrap();
        let best = run
            .log
            .iter()
            .min_by(|a, b| a.val_loss.unwrap().total_cmp(&b.val_loss.unwrap()))
            .unwrap();
        assert_eq!(run.best_epoch, best.epoch);
        let x = {
            let v = apply_stats(&valid, run.model.stats.as_ref().unwrap()).unwrap();
            matrix_of(&v).unwrap()
        };
        assert_eq!(eval_loss(&run.model, &x).unwrap(), best.val_loss.unwrap());
    }

    #[test]
    fn checkpoint_round_trip_reproduces_forward() {
        let data = toy_set(20, 5, 9);
        let cfg = VaeConfig {
            encoder: vec![6],
            decoder: vec![6],
            latent: 3,
            epochs: 3,
            batch: 5,
            ..VaeConfig::default()
        };
        let m = train_vae(&data, None, &cfg, 4, |_| {}).unwrap().model;
        let bytes = m.to_checkpoint().to_bytes().unwrap();
        let back = VaeModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = m.extract_condition(&raw).unwrap();
            let b = back.extract_condition(&raw).unwrap();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        let mut other = data.clone();
        other.gene_ids[0] = "zzz".into();
        assert!(matches!(back.conditions(&other), Err(CoreError::GeneMismatch(_))));
    }
}
