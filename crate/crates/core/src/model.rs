//! The relevance-gated recurrent predictor: forward pass over day windows,
//! simulated-label and refinement losses, joint training and refinement.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    linear, lstm_sequence, AdamParams, AdamState, Graph, GrdaParams, LinearParams, LstmParams,
    Tensor, Var,
};
use crate::features::{EmbeddingTable, EncodedLake, Task};
use crate::interact::{
    init_genome, input_width, record_input, ActiveSet, Genome, InputVars, OpProjections,
    RELEVANCE_INIT,
};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding size.
    pub d: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    /// Window length in days.
    pub window: usize,
    pub stride: usize,
    /// Windows per mini-batch.
    pub batch: usize,
    pub rho: f64,
    /// Training aborts when a loss exceeds this.
    pub divergence: f64,
    pub adam: AdamParams,
    pub grda_alpha: GrdaParams,
    pub grda_beta: GrdaParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 15,
            hidden: 32,
            window: 60,
            stride: 30,
            batch: 16,
            rho: 0.1,
            divergence: 1e6,
            adam: AdamParams::default(),
            grda_alpha: GrdaParams::default(),
            grda_beta: GrdaParams::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.window == 0 || self.stride == 0 || self.batch == 0 {
            return Err(Error::Config("model sizes, window, stride and batch must be positive".into()));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config(format!("rho must be non-negative, got {}", self.rho)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(format!("adam learning rate must be positive, got {}", self.adam.lr)));
        }
        self.grda_alpha.validate()?;
        self.grda_beta.validate()
    }
}

/// Fixed affine map from the head's output to DO units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for LabelScale {
    fn default() -> Self {
        LabelScale { mean: 0.0, std: 1.0 }
    }
}

impl LabelScale {
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return LabelScale::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        LabelScale { mean, std }
    }
}

/// Parameters updated by Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub embed: EmbeddingTable,
    pub proj: OpProjections,
    pub lstm: LstmParams,
    pub head: LinearParams,
}

impl Network {
    pub fn init<R: Rng + ?Sized>(cardinalities: &[usize], cfg: &ModelConfig, rng: &mut R) -> Self {
        let m = cardinalities.len();
        Network {
            embed: EmbeddingTable::init(cardinalities, cfg.d, rng),
            proj: OpProjections::init(cfg.d, rng),
            lstm: LstmParams::init(input_width(m, cfg.d), cfg.hidden, rng),
            head: LinearParams::init(cfg.hidden, 1, rng),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.embed.tables.iter().collect();
        v.extend([
            &self.proj.catp,
            &self.proj.kerp,
            &self.lstm.wx,
            &self.lstm.wh,
            &self.lstm.bias,
            &self.head.w,
            &self.head.b,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.embed.tables.iter_mut().collect();
        v.extend([
            &mut self.proj.catp,
            &mut self.proj.kerp,
            &mut self.lstm.wx,
            &mut self.lstm.wh,
            &mut self.lstm.bias,
            &mut self.head.w,
            &mut self.head.b,
        ]);
        v
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.numel()).collect()
    }
}

/// Mini-batch of equal-length windows in time-major layout
/// (`row = t·size + b`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub steps: usize,
    pub size: usize,
    /// Leading steps that feed the recurrence but carry no loss weight.
    pub burn_in: usize,
    /// `[field][row]` embedding rows.
    pub codes: Vec<Vec<usize>>,
    pub sim: Vec<f64>,
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Batch {
    /// Windows `(lake, start)` of `steps` days for `task`.
    pub fn build(
        lakes: &[&EncodedLake],
        spans: &[(usize, usize)],
        steps: usize,
        burn_in: usize,
        task: Task,
    ) -> Result<Batch> {
        if spans.is_empty() || steps == 0 {
            return Err(Error::Config("batch: no windows".into()));
        }
        if burn_in >= steps {
            return Err(Error::Config(format!("batch: burn-in {burn_in} leaves no scored steps of {steps}")));
        }
        let size = spans.len();
        let m = lakes[spans[0].0].codes[0].len();
        let n = steps * size;
        let mut codes = vec![vec![0usize; n]; m];
        let (mut sim, mut obs, mut mask) = (vec![0.0; n], vec![0.0; n], vec![false; n]);
        let ti = task.index();
        for (b, &(li, start)) in spans.iter().enumerate() {
            let lake = lakes
                .get(li)
                .ok_or_else(|| Error::Internal(format!("batch: lake index {li} out of range")))?;
            if start + steps > lake.len() {
                return Err(Error::Config(format!(
                    "batch: window {start}+{steps} exceeds lake '{}' ({} days)",
                    lake.lake_id,
                    lake.len()
                )));
            }
            for t in 0..steps {
                let (day, r) = (start + t, t * size + b);
                for (i, col) in codes.iter_mut().enumerate() {
                    col[r] = lake.codes[day][i];
                }
                sim[r] = lake.sim[ti][day];
                if let Some(y) = lake.obs[ti][day] {
                    obs[r] = y;
                    mask[r] = true;
                }
            }
        }
        Ok(Batch {
            steps,
            size,
            burn_in,
            codes,
            sim,
            obs,
            mask,
        })
    }

    pub fn rows(&self) -> usize {
        self.steps * self.size
    }

    pub fn scored(&self, row: usize) -> bool {
        row / self.size >= self.burn_in
    }

    pub fn scored_rows(&self) -> usize {
        (self.steps - self.burn_in) * self.size
    }

    pub fn observed_rows(&self) -> usize {
        (0..self.rows()).filter(|&r| self.scored(r) && self.mask[r]).count()
    }

    /// Per-row targets and weights for a loss.
    fn targets(&self, kind: LossKind) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows();
        let mut target = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        for r in 0..n {
            let on = if self.scored(r) { 1.0 } else { 0.0 };
            match kind {
                LossKind::Sim => {
                    target.push(self.sim[r]);
                    weight.push(on);
                }
                LossKind::Refine { rho } => {
                    if self.mask[r] {
                        target.push(self.obs[r]);
                        weight.push(on);
                    } else {
                        target.push(self.sim[r]);
                        weight.push(on * rho);
                    }
                }
            }
        }
        (target, weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Mean squared error against simulated labels.
    Sim,
    /// Observed labels where present, simulated ones weighted by `rho`.
    Refine { rho: f64 },
}

/// Mean squared error over all entries.
pub fn loss_sim(pred: &[f64], sim: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != sim.len() {
        return Err(Error::Config(format!(
            "loss_sim: {} predictions for {} labels",
            pred.len(),
            sim.len()
        )));
    }
    Ok(pred.iter().zip(sim).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// `mean[mask·(y − ŷ)² + ρ·(1 − mask)·(ỹ − ŷ)²]`.
pub fn loss_refine(pred: &[f64], obs: &[f64], mask: &[bool], sim: &[f64], rho: f64) -> Result<f64> {
    let n = pred.len();
    if n == 0 || obs.len() != n || mask.len() != n || sim.len() != n {
        return Err(Error::Config("loss_refine: length mismatch or empty batch".into()));
    }
    let total: f64 = (0..n)
        .map(|r| {
            if mask[r] {
                (obs[r] - pred[r]).powi(2)
            } else {
                rho * (sim[r] - pred[r]).powi(2)
            }
        })
        .sum();
    Ok(total / n as f64)
}

/// One organism: genome, network weights and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub task: Task,
    pub genome: Genome,
    pub net: Network,
    pub adam: AdamState,
    pub scale: LabelScale,
    /// Loss on the population's validation set, once evaluated.
    pub fitness: Option<f64>,
    pub lineage: u64,
    /// Set by refinement: gates are constants and only these entries remain.
    pub frozen: Option<ActiveSet>,
    pub divergence: f64,
}

struct Recorded {
    graph: Graph,
    pred: Var,
    net: Vec<Var>,
    inputs: InputVars,
}

impl Predictor {
    pub fn new<R: Rng + ?Sized>(
        task: Task,
        cardinalities: &[usize],
        cfg: &ModelConfig,
        scale: LabelScale,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let genome = init_genome(cardinalities.len(), rng, RELEVANCE_INIT, cfg.grda_alpha, cfg.grda_beta)?;
        let net = Network::init(cardinalities, cfg, rng);
        Ok(Predictor {
            task,
            adam: AdamState::new(&net.sizes(), cfg.adam),
            genome,
            net,
            scale,
            fitness: None,
            lineage: 0,
            frozen: None,
            divergence: cfg.divergence,
        })
    }

    pub fn m(&self) -> usize {
        self.genome.m()
    }

    fn record(&self, batch: &Batch, trainable: bool) -> Result<Recorded> {
        let m = self.m();
        if batch.codes.len() != m {
            return Err(Error::Config(format!("batch has {} fields, model has {m}", batch.codes.len())));
        }
        let mut g = Graph::new();
        let leaf = |g: &mut Graph, t: &Tensor, on: bool| if on { g.param(t.clone()) } else { g.constant(t.clone()) };
        let tables: Vec<Var> = self.net.embed.tables.iter().map(|t| leaf(&mut g, t, trainable)).collect();
        let catp = leaf(&mut g, &self.net.proj.catp, trainable);
        let kerp = leaf(&mut g, &self.net.proj.kerp, trainable);
        let lstm = self.net.lstm.record(&mut g, trainable);
        let head = self.net.head.record(&mut g, trainable);
        let gates_trainable = trainable && self.frozen.is_none();
        let inputs = InputVars {
            alpha: leaf(&mut g, &Tensor::vector(self.genome.alphas().to_vec()), gates_trainable),
            beta: leaf(&mut g, &Tensor::vector(self.genome.betas().to_vec()), gates_trainable),
            catp,
            kerp,
        };
        let mut feats = Vec::with_capacity(m);
        for (i, &table) in tables.iter().enumerate() {
            feats.push(g.gather(table, &batch.codes[i])?);
        }
        let x = record_input(&mut g, &feats, &self.genome, &inputs, self.frozen.as_ref())?;
        let h = lstm_sequence(&mut g, x, batch.size, &lstm)?;
        let y = linear(&mut g, h, &head)?;
        let pred = g.affine(y, self.scale.std, self.scale.mean)?;
        let mut net = tables;
        net.extend([catp, kerp, lstm.wx, lstm.wh, lstm.bias, head.w, head.b]);
        Ok(Recorded {
            graph: g,
            pred,
            net,
            inputs,
        })
    }

    fn diagnose(&self, e: Error) -> Error {
        match e {
            Error::Numerical(msg) => Error::Numerical(format!("lineage {} ({}): {msg}", self.lineage, self.task)),
            other => other,
        }
    }

    /// Predictions for every batch row, time-major.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let rec = self.record(batch, false).map_err(|e| self.diagnose(e))?;
        Ok(rec.graph.value(rec.pred).data().to_vec())
    }

    /// Loss value without gradients.
    pub fn loss(&self, batch: &Batch, kind: LossKind) -> Result<f64> {
        let pred = self.predict(batch)?;
        let (target, weight) = batch.targets(kind);
        let total: f64 = pred
            .iter()
            .zip(&target)
            .zip(&weight)
            .map(|((p, t), w)| w * (p - t) * (p - t))
            .sum();
        Ok(total / batch.scored_rows() as f64)
    }

    /// Loss and gradients: one vector per network tensor, then α, then β.
    pub fn gradients(&self, batch: &Batch, kind: LossKind) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut rec = self.record(batch, true).map_err(|e| self.diagnose(e))?;
        let (target, weight) = batch.targets(kind);
        let loss = rec
            .graph
            .weighted_squared_error(rec.pred, &target, &weight, batch.scored_rows() as f64)
            .map_err(|e| self.diagnose(e))?;
        let value = rec.graph.value(loss).data()[0];
        rec.graph.backward(loss)?;
        let mut grads = Vec::with_capacity(rec.net.len() + 2);
        for &v in &rec.net {
            grads.push(rec.graph.gradient(v)?);
        }
        grads.push(rec.graph.gradient(rec.inputs.alpha)?);
        grads.push(rec.graph.gradient(rec.inputs.beta)?);
        Ok((value, grads))
    }

    /// One joint update: Adam on the network, gRDA on the gates (unless
    /// frozen). Returns the loss before the update.
    pub fn train_step(&mut self, batch: &Batch, kind: LossKind) -> Result<f64> {
        let (loss, mut grads) = self.gradients(batch, kind)?;
        if !loss.is_finite() || loss > self.divergence {
            return Err(Error::Numerical(format!(
                "lineage {} ({}): loss {loss} exceeds the divergence bound {}",
                self.lineage, self.task, self.divergence
            )));
        }
        let beta_grad = grads.pop().unwrap_or_default();
        let alpha_grad = grads.pop().unwrap_or_default();
        let mut params = self.net.tensors_mut();
        self.adam.update(&mut params, &grads).map_err(|e| self.diagnose(e))?;
        if self.frozen.is_none() {
            self.genome.alpha.update(&alpha_grad)?;
            self.genome.beta.update(&beta_grad)?;
        }
        Ok(loss)
    }

    /// Mean simulated-label loss over a fixed batch set.
    pub fn evaluate(&self, batches: &[Batch]) -> Result<f64> {
        if batches.is_empty() {
            return Err(Error::Config("evaluation needs at least one batch".into()));
        }
        let (mut total, mut count) = (0.0, 0usize);
        for b in batches {
            total += self.loss(b, LossKind::Sim)? * b.scored_rows() as f64;
            count += b.scored_rows();
        }
        Ok(total / count as f64)
    }

    /// Evaluates and stores the fitness.
    pub fn fitness(&mut self, batches: &[Batch]) -> Result<f64> {
        let f = self.evaluate(batches)?;
        self.fitness = Some(f);
        Ok(f)
    }

    /// Freezes the gates, drops pruned entries and fine-tunes the network on
    /// the refinement loss. Returns the number of optimizer steps taken.
    pub fn refine(&mut self, batches: &[Batch], rho: f64, epochs: usize) -> Result<usize> {
        let observed: usize = batches.iter().map(Batch::observed_rows).sum();
        if observed == 0 {
            log::warn!("lineage {} ({}): no observed labels, refinement skipped", self.lineage, self.task);
            return Ok(0);
        }
        self.frozen = Some(self.genome.prune());
        self.adam = AdamState::new(&self.net.sizes(), self.adam.hp);
        let mut steps = 0;
        for _ in 0..epochs {
            for b in batches {
                if b.observed_rows() == 0 && rho == 0.0 {
                    continue;
                }
                self.train_step(b, LossKind::Refine { rho })?;
                steps += 1;
            }
        }
        Ok(steps)
    }

    /// All trainable values, network first, then α and β.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.net.tensors().iter().flat_map(|t| t.data().iter().copied()).collect();
        v.extend_from_slice(self.genome.alphas());
        v.extend_from_slice(self.genome.betas());
        v
    }

    /// Inverse of [`Predictor::flat_params`]. Gate values are placed
    /// directly, bypassing their optimizer history.
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.flat_params().len();
        if values.len() != expected {
            return Err(Error::Config(format!("{} values for {expected} parameters", values.len())));
        }
        let mut at = 0;
        for t in self.net.tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        for i in 0..self.genome.m() {
            self.genome.alpha.set_fixed(i, values[at]);
            at += 1;
        }
        for k in 0..self.genome.n_pairs() {
            self.genome.beta.set_fixed(k, values[at]);
            at += 1;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, schema_hash: &str) -> Result<()> {
        let ck = CheckpointRef {
            version: CHECKPOINT_VERSION,
            schema_hash,
            predictor: self,
        };
        let text = serde_json::to_string(&ck).map_err(|e| Error::Internal(format!("checkpoint: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, schema_hash: &str) -> Result<Predictor> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: malformed checkpoint: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "{}: checkpoint version {} is not supported",
                path.display(),
                ck.version
            )));
        }
        if ck.schema_hash != schema_hash {
            return Err(Error::Data(format!(
                "{}: checkpoint was written for schema {}, expected {schema_hash}",
                path.display(),
                ck.schema_hash
            )));
        }
        Ok(ck.predictor)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    schema_hash: &'a str,
    predictor: &'a Predictor,
}

#[derive(Deserialize)]
struct Checkpoint {
    version: u32,
    schema_hash: String,
    predictor: Predictor,
}
