//! Attention LSTM decoder with coverage, copy switch and beam search.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use amrgen_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::lstm::{glorot, Lstm};
use crate::vocab::Vocab;

/// Maps attention positions to output tokens.
///
/// Copyable words missing from the vocabulary get transient ids
/// `|V|, |V|+1, …` in order of first appearance, valid for this example only.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyMap {
    /// Surface token copied from each position; `None` for positions that
    /// cannot be copied (relations and brackets of a linearization).
    pub surfaces: Vec<Option<String>>,
    /// Extended-vocabulary id per position.
    pub slots: Arc<Vec<Option<usize>>>,
    pub extra: Vec<String>,
    pub vocab_len: usize,
}

impl CopyMap {
    pub fn new(surfaces: Vec<Option<String>>, vocab: &Vocab) -> Self {
        let mut extra: Vec<String> = Vec::new();
        let mut extra_ids: HashMap<String, usize> = HashMap::new();
        let slots = surfaces
            .iter()
            .map(|s| {
                s.as_ref().map(|w| match vocab.get(w) {
                    Some(id) => id,
                    None => *extra_ids.entry(w.clone()).or_insert_with(|| {
                        extra.push(w.clone());
                        vocab.len() + extra.len() - 1
                    }),
                })
            })
            .collect();
        CopyMap {
            surfaces,
            slots: Arc::new(slots),
            extra,
            vocab_len: vocab.len(),
        }
    }

    /// Number of attention positions.
    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Size of the extended vocabulary.
    pub fn width(&self) -> usize {
        self.vocab_len + self.extra.len()
    }

    pub fn can_copy(&self, word: &str) -> bool {
        self.surfaces.iter().any(|s| s.as_deref() == Some(word))
    }

    /// Output string for an extended id.
    pub fn token<'a>(&'a self, id: usize, vocab: &'a Vocab) -> &'a str {
        if id < self.vocab_len {
            vocab.token(id)
        } else {
            &self.extra[id - self.vocab_len]
        }
    }

    /// Id a gold word is scored against. Without copying, or when the word is
    /// neither in the vocabulary nor copyable, that is the unk id.
    pub fn target_id(&self, word: &str, vocab: &Vocab, copy: bool) -> usize {
        if let Some(id) = vocab.get(word) {
            return id;
        }
        if copy {
            if let Some(k) = self.extra.iter().position(|w| w == word) {
                return self.vocab_len + k;
            }
        }
        Vocab::UNK_ID
    }
}

/// Attention memory with its step-independent projection.
#[derive(Clone, Copy, Debug)]
pub struct Memory {
    /// `N × D` attention vectors `a_i`.
    pub a: Var,
    /// `a_i W_a + b_2`, `N × H`.
    pub keys: Var,
    /// `N × d` encoder states averaged for the initial decoder state.
    pub states: Var,
    pub len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub s: Var,
    pub c: Var,
    /// Context vector `μ`, `1 × D`.
    pub mu: Var,
    /// Coverage `γ`, `1 × N`.
    pub gamma: Var,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub alpha: Var,
    pub p_vocab: Var,
    pub theta: Option<Var>,
    pub p_final: Var,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub embed: ParamId,
    pub lstm: Lstm,
    pub init: Option<(ParamId, ParamId)>,
    pub w_a: ParamId,
    pub w_s: ParamId,
    /// Column `w_γ` stored as a `1 × H` row.
    pub w_gamma: ParamId,
    pub b2: ParamId,
    pub v2: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub switch_w: ParamId,
    pub switch_b: ParamId,
    pub copy: bool,
    pub hidden: usize,
    pub memory_dim: usize,
    pub vocab_len: usize,
}

impl Decoder {
    pub fn new(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        embed: ParamId,
        vocab_len: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (h, d, e) = (cfg.hidden, cfg.memory_dim(), cfg.word_dim);
        let state_dim = d - cfg.input_dim;
        let init = if state_dim != h {
            Some((
                store.add("dec.init.w", glorot(rng, state_dim, h))?,
                store.add("dec.init.b", Tensor::zeros(1, h))?,
            ))
        } else {
            None
        };
        Ok(Decoder {
            embed,
            lstm: Lstm::new(store, "dec.lstm", e + d, h, rng)?,
            init,
            w_a: store.add("dec.att.w_a", glorot(rng, d, h))?,
            w_s: store.add("dec.att.w_s", glorot(rng, h, h))?,
            w_gamma: store.add("dec.att.w_gamma", glorot(rng, 1, h))?,
            b2: store.add("dec.att.b", Tensor::zeros(1, h))?,
            v2: store.add("dec.att.v", glorot(rng, h, 1))?,
            out_w: store.add("dec.out.w", glorot(rng, h + d, vocab_len))?,
            out_b: store.add("dec.out.b", Tensor::zeros(1, vocab_len))?,
            switch_w: store.add("dec.switch.w", glorot(rng, d + h + e, 1))?,
            switch_b: store.add("dec.switch.b", Tensor::zeros(1, 1))?,
            copy: cfg.copy,
            hidden: h,
            memory_dim: d,
            vocab_len,
        })
    }

    pub fn memory(&self, tape: &mut Tape, a: Var, states: Var) -> Result<Memory> {
        let (len, width) = tape.shape(a);
        if len == 0 {
            return Err(Error::Mismatch("empty attention memory".into()));
        }
        if width != self.memory_dim {
            return Err(Error::Mismatch(format!(
                "attention memory width {} but decoder expects {}",
                width, self.memory_dim
            )));
        }
        let (w, b) = (tape.param(self.w_a), tape.param(self.b2));
        let keys = tape.affine(a, w, b)?;
        Ok(Memory { a, keys, states, len })
    }

    /// `s_0` is the mean encoder state (projected when its width differs
    /// from the decoder's); cell, context and coverage start at zero.
    pub fn init(&self, tape: &mut Tape, memory: &Memory) -> Result<DecoderState> {
        let mean = tape.mean_rows(memory.states)?;
        let s = match self.init {
            Some((w, b)) => {
                let (w, b) = (tape.param(w), tape.param(b));
                tape.affine(mean, w, b)?
            }
            None => mean,
        };
        Ok(DecoderState {
            s,
            c: tape.constant(Tensor::zeros(1, self.hidden)),
            mu: tape.constant(Tensor::zeros(1, self.memory_dim)),
            gamma: tape.constant(Tensor::zeros(1, memory.len)),
            steps: 0,
        })
    }

    /// Embedding of an output id; transient copy ids read as unk.
    pub fn embed_token(&self, tape: &mut Tape, id: usize) -> Result<Var> {
        let id = if id < self.vocab_len { id } else { Vocab::UNK_ID };
        let table = tape.param(self.embed);
        Ok(tape.gather_rows(table, vec![id])?)
    }

    /// LSTM update on `[e_t; μ_{t-1}]`.
    pub fn lstm_step(&self, tape: &mut Tape, state: &DecoderState, e: Var) -> Result<(Var, Var)> {
        let x = tape.concat_cols(&[e, state.mu])?;
        self.lstm.step(tape, x, state.s, state.c)
    }

    /// Returns `(α_t, μ_t, γ_t)`.
    pub fn attend(&self, tape: &mut Tape, s: Var, memory: &Memory, gamma: Var) -> Result<(Var, Var, Var)> {
        let ws = tape.param(self.w_s);
        let query = tape.matmul(s, ws)?;
        let wg = tape.param(self.w_gamma);
        let gcol = tape.transpose(gamma);
        let cov = tape.matmul(gcol, wg)?;
        let pre = tape.add(memory.keys, query)?;
        let pre = tape.add(pre, cov)?;
        let act = tape.tanh(pre);
        let v = tape.param(self.v2);
        let scores = tape.matmul(act, v)?;
        let scores = tape.transpose(scores);
        let alpha = tape.softmax_rows(scores);
        let mu = tape.matmul(alpha, memory.a)?;
        let gamma = tape.add(gamma, alpha)?;
        Ok((alpha, mu, gamma))
    }

    /// `softmax(V3 [s; μ] + b3)`.
    pub fn vocab_distribution(&self, tape: &mut Tape, s: Var, mu: Var) -> Result<Var> {
        let x = tape.concat_cols(&[s, mu])?;
        let (w, b) = (tape.param(self.out_w), tape.param(self.out_b));
        let logits = tape.affine(x, w, b)?;
        Ok(tape.softmax_rows(logits))
    }

    /// `θ = σ(w_μ·μ + w_s·s + w_e·e + b5)`.
    pub fn copy_switch(&self, tape: &mut Tape, mu: Var, s: Var, e: Var) -> Result<Var> {
        let x = tape.concat_cols(&[mu, s, e])?;
        let (w, b) = (tape.param(self.switch_w), tape.param(self.switch_b));
        let z = tape.affine(x, w, b)?;
        Ok(tape.sigmoid(z))
    }

    /// `θ P_vocab + (1 − θ) P_attn` over the extended vocabulary.
    pub fn final_distribution(
        &self,
        tape: &mut Tape,
        theta: Var,
        p_vocab: Var,
        alpha: Var,
        map: &CopyMap,
    ) -> Result<Var> {
        let n = tape.shape(alpha).1;
        if map.len() != n {
            return Err(Error::Mismatch(format!(
                "copy map has {} positions, attention has {}",
                map.len(),
                n
            )));
        }
        let p_attn = tape.copy_scatter(alpha, map.slots.clone(), map.width())?;
        Ok(tape.interpolate(theta, p_vocab, p_attn)?)
    }

    /// One decoding step fed with output id `input`.
    pub fn step(
        &self,
        tape: &mut Tape,
        memory: &Memory,
        map: &CopyMap,
        state: &DecoderState,
        input: usize,
    ) -> Result<(DecoderState, StepOutput)> {
        let e = self.embed_token(tape, input)?;
        let (s, c) = self.lstm_step(tape, state, e)?;
        let (alpha, mu, gamma) = self.attend(tape, s, memory, state.gamma)?;
        let s_out = tape.dropout(s);
        let p_vocab = self.vocab_distribution(tape, s_out, mu)?;
        let (theta, p_final) = if self.copy {
            let theta = self.copy_switch(tape, mu, s_out, e)?;
            (Some(theta), self.final_distribution(tape, theta, p_vocab, alpha, map)?)
        } else {
            (None, p_vocab)
        };
        let next = DecoderState {
            s,
            c,
            mu,
            gamma,
            steps: state.steps + 1,
        };
        Ok((
            next,
            StepOutput {
                alpha,
                p_vocab,
                theta,
                p_final,
            },
        ))
    }

    /// Teacher-forced outputs for `gold` (which should end with `</s>`).
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        memory: &Memory,
        map: &CopyMap,
        gold: &[usize],
    ) -> Result<Vec<StepOutput>> {
        let mut state = self.init(tape, memory)?;
        let mut input = Vocab::START_ID;
        let mut out = Vec::with_capacity(gold.len());
        for &g in gold {
            let (next, o) = self.step(tape, memory, map, &state, input)?;
            out.push(o);
            state = next;
            input = g;
        }
        Ok(out)
    }

    pub fn greedy(&self, tape: &mut Tape, memory: &Memory, map: &CopyMap, max_len: usize) -> Result<Vec<usize>> {
        let mut state = self.init(tape, memory)?;
        let mut input = Vocab::START_ID;
        let mut out = Vec::new();
        while out.len() < max_len {
            let (next, o) = self.step(tape, memory, map, &state, input)?;
            let best = ranked(tape.value(o.p_final).data())[0].0;
            if best == Vocab::END_ID {
                break;
            }
            out.push(best);
            state = next;
            input = best;
        }
        Ok(out)
    }

    /// Beam search ranked by total log probability. Returns the output ids
    /// without `</s>`.
    pub fn beam_search(
        &self,
        tape: &mut Tape,
        memory: &Memory,
        map: &CopyMap,
        beam: usize,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        struct Hyp {
            score: f64,
            tokens: Vec<usize>,
            state: DecoderState,
        }
        let beam = beam.max(1);
        let mut live = vec![Hyp {
            score: 0.0,
            tokens: Vec::new(),
            state: self.init(tape, memory)?,
        }];
        let mut done: Vec<(f64, Vec<usize>)> = Vec::new();
        for _ in 0..max_len {
            // (score, hypothesis, token, next state)
            let mut cands: Vec<(f64, usize, usize, DecoderState)> = Vec::new();
            for (h, hyp) in live.iter().enumerate() {
                let input = hyp.tokens.last().copied().unwrap_or(Vocab::START_ID);
                let (next, o) = self.step(tape, memory, map, &hyp.state, input)?;
                for (tok, p) in ranked(tape.value(o.p_final).data()).into_iter().take(beam) {
                    cands.push((hyp.score + p.max(f64::MIN_POSITIVE).ln(), h, tok, next));
                }
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            cands.truncate(beam);
            let mut next_live = Vec::new();
            for (score, h, tok, state) in cands {
                if tok == Vocab::END_ID {
                    done.push((score, live[h].tokens.clone()));
                } else {
                    let mut tokens = live[h].tokens.clone();
                    tokens.push(tok);
                    next_live.push(Hyp { score, tokens, state });
                }
            }
            live = next_live;
            let best_done = done.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if live.is_empty() || best_done >= best_live {
                break;
            }
        }
        done.extend(live.into_iter().map(|h| (h.score, h.tokens)));
        let mut best: Option<(f64, Vec<usize>)> = None;
        for d in done {
            if best.as_ref().is_none_or(|b| d.0 > b.0) {
                best = Some(d);
            }
        }
        Ok(best.map(|b| b.1).unwrap_or_default())
    }
}

/// Candidate ids by descending probability, ties to the lower id. Padding
/// and the start symbol are never produced.
fn ranked(p: &[f64]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = p
        .iter()
        .copied()
        .enumerate()
        .filter(|&(k, _)| k != Vocab::PAD_ID && k != Vocab::START_ID)
        .collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    v
}
