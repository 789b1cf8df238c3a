//! Teacher-forced training with Adam, gradient clipping and dev-BLEU model
//! selection.

use std::fmt;

use amrgen_autodiff::{Gradients, ParamStore, Tape, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bleu::corpus_bleu;
use crate::config::TrainConfig;
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::model::{EncoderInput, Instance, Model, Target};

/// `−Σ_t log P_t(gold_t)` over per-step `1 × W` distributions.
pub fn sequence_loss(tape: &mut Tape, dists: &[Var], gold: &[usize]) -> Result<Var> {
    if dists.len() != gold.len() || dists.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} distributions for {} gold tokens",
            dists.len(),
            gold.len()
        )));
    }
    let mut terms = Vec::with_capacity(gold.len());
    for (&p, &g) in dists.iter().zip(gold) {
        let pg = tape.pick(p, 0, g)?;
        terms.push(tape.log(pg));
    }
    let total = tape.sum_list(&terms)?;
    Ok(tape.neg(total))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update of every trainable parameter from its
    /// accumulated gradient.
    pub fn step(&self, store: &mut ParamStore) {
        for p in store.iter_mut().filter(|p| !p.frozen) {
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let g = p.grad.data();
            let m = p.m.data_mut();
            for (m, &g) in m.iter_mut().zip(g) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            }
            let v = p.v.data_mut();
            for (v, &g) in v.iter_mut().zip(p.grad.data()) {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            }
            let (m, v) = (p.m.data(), p.v.data());
            for ((w, &m), &v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                *w -= self.lr * (m / c1) / ((v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Rescales accumulated gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter(|(_, p)| !p.frozen)
        .map(|(_, p)| p.grad.norm_sq())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}

/// A training pair converted to ids.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub instance: Instance,
    pub target: Target,
}

impl Prepared {
    fn size(&self) -> usize {
        let n = match &self.instance.input {
            EncoderInput::Graph(g) => g.concepts.len(),
            EncoderInput::Seq(s) => s.tokens.len(),
        };
        n + self.target.ids.len()
    }
}

pub fn prepare(model: &Model, examples: &[Example]) -> Vec<Prepared> {
    examples
        .iter()
        .map(|ex| {
            let instance = model.net.prepare(&ex.graph);
            let target = model.net.target(&instance, &ex.tokens);
            Prepared { instance, target }
        })
        .collect()
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_bleu: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{:.4}", self.epoch, self.train_loss, self.dev_bleu)
    }
}

/// Owns the optimiser state and the batch-order RNG of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub adam: Adam,
    rng: ChaCha8Rng,
    pub epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            adam: Adam::new(config.lr),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            epoch: 0,
        })
    }

    /// Examples bucketed by size into batches; batch order is shuffled.
    fn batches(&mut self, data: &[Prepared]) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by_key(|&i| (data[i].size(), i));
        let mut batches: Vec<Vec<usize>> = order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        batches.shuffle(&mut self.rng);
        batches
    }

    /// One optimisation step on `batch`; returns `(summed loss, tokens)`.
    pub fn train_batch(&mut self, model: &mut Model, batch: &[&Prepared]) -> Result<(f64, usize)> {
        let seeds: Vec<u64> = batch.iter().map(|_| self.rng.gen()).collect();
        let rate = self.config.dropout;
        let (store, net) = (&model.store, &model.net);
        let results: Vec<(Gradients, f64, usize)> = batch
            .par_iter()
            .zip(seeds)
            .map(|(p, seed)| {
                let mut tape = Tape::with_dropout(store, rate, seed);
                let loss = net.loss(&mut tape, &p.instance, &p.target)?;
                let mut grads = Gradients::new(store);
                tape.backward(loss, &mut grads)?;
                Ok((grads, tape.value(loss).item()?, p.target.ids.len()))
            })
            .collect::<Result<_>>()?;
        model.store.zero_grads();
        let (mut loss, mut tokens) = (0.0, 0);
        for (g, l, n) in &results {
            model.store.accumulate(g);
            loss += l;
            tokens += n;
        }
        let scale = 1.0 / tokens.max(1) as f64;
        for p in model.store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
        clip_grad_norm(&mut model.store, self.config.clip_norm);
        self.adam.step(&mut model.store);
        Ok((loss, tokens))
    }

    /// One pass over `data`; returns the mean per-token loss.
    pub fn run_epoch(&mut self, model: &mut Model, data: &[Prepared]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let (mut loss, mut tokens) = (0.0, 0);
        for batch in self.batches(data) {
            let refs: Vec<&Prepared> = batch.iter().map(|&i| &data[i]).collect();
            let (l, n) = self.train_batch(model, &refs)?;
            loss += l;
            tokens += n;
        }
        self.epoch += 1;
        Ok(loss / tokens as f64)
    }
}

/// Corpus BLEU of decoded `examples` against their references.
pub fn evaluate_bleu(model: &Model, examples: &[Example], beam: usize, max_len: usize) -> Result<f64> {
    let graphs: Vec<_> = examples.iter().map(|e| &e.graph).collect();
    let hyps = model.generate_all(&graphs, beam, max_len)?;
    let refs: Vec<Vec<String>> = examples.iter().map(|e| e.tokens.clone()).collect();
    corpus_bleu(&hyps, &refs)
}

/// Mean per-token loss without dropout.
pub fn evaluate_loss(model: &Model, data: &[Prepared]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = data
        .par_iter()
        .map(|p| {
            let mut tape = Tape::new(&model.store);
            let loss = model.net.loss(&mut tape, &p.instance, &p.target)?;
            Ok((tape.value(loss).item()?, p.target.ids.len()))
        })
        .collect::<Result<_>>()?;
    let (l, n) = parts.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(l / n.max(1) as f64)
}

pub struct TrainOutcome {
    /// The model from the epoch with the highest dev BLEU, or from the last
    /// epoch when there is no dev set.
    pub best: Model,
    pub best_epoch: usize,
    pub best_bleu: f64,
    pub logs: Vec<EpochLog>,
}

/// Trains for `config.epochs` epochs, keeping the best model by dev BLEU.
///
/// With `pretrain` set, every epoch first runs over that corpus and then
/// fine-tunes on `train`. `on_epoch` sees every log line and the model as it
/// stands after the epoch.
pub fn train(
    mut model: Model,
    train: &[Example],
    dev: &[Example],
    pretrain: Option<&[Example]>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = Trainer::new(config.clone())?;
    let data = prepare(&model, train);
    let silver = pretrain.map(|p| prepare(&model, p));
    let mut best: Option<(Model, usize, f64)> = None;
    let mut logs = Vec::new();
    for epoch in 1..=config.epochs {
        if let Some(s) = &silver {
            trainer.run_epoch(&mut model, s)?;
        }
        let train_loss = trainer.run_epoch(&mut model, &data)?;
        let dev_bleu = if dev.is_empty() {
            0.0
        } else {
            evaluate_bleu(&model, dev, config.beam, config.max_len)?
        };
        let log = EpochLog {
            epoch,
            train_loss,
            dev_bleu,
        };
        on_epoch(&log, &model)?;
        logs.push(log);
        if best.as_ref().is_none_or(|b| dev_bleu > b.2 || dev.is_empty()) {
            best = Some((model.clone(), epoch, dev_bleu));
        }
    }
    let (best, best_epoch, best_bleu) = best.ok_or_else(|| Error::Config("epochs must be positive".into()))?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_bleu,
        logs,
    })
}
