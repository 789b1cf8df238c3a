//! BiLSTM baseline over the linearized graph.

use amrgen_autodiff::{ParamStore, Tape, Var};
use rand::Rng;

use crate::config::SeqDirection;
use crate::error::{Error, Result};
use crate::lstm::Lstm;

/// Token ids of one linearization.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqInput {
    pub tokens: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

/// Per-token states as `N × H` matrices; a direction switched off by the
/// ablation setting is `None`.
#[derive(Clone, Copy, Debug)]
pub struct SeqEncoding {
    pub forward: Option<Var>,
    pub backward: Option<Var>,
    pub x: Var,
}

#[derive(Clone, Debug)]
pub struct SeqEncoder {
    pub forward: Lstm,
    pub backward: Lstm,
    pub direction: SeqDirection,
}

impl SeqEncoder {
    pub fn new(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        direction: SeqDirection,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(SeqEncoder {
            forward: Lstm::new(store, "seq.fwd", input, hidden, rng)?,
            backward: Lstm::new(store, "seq.bwd", input, hidden, rng)?,
            direction,
        })
    }

    /// Runs the enabled directions over the rows of `x`, each from a zero state.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<SeqEncoding> {
        if tape.shape(x).0 == 0 {
            return Err(Error::Mismatch("cannot encode an empty sequence".into()));
        }
        let forward = if self.direction != SeqDirection::BackwardOnly {
            let hs = self.forward.run(tape, x, false)?;
            Some(tape.concat_rows(&hs)?)
        } else {
            None
        };
        let backward = if self.direction != SeqDirection::ForwardOnly {
            let hs = self.backward.run(tape, x, true)?;
            Some(tape.concat_rows(&hs)?)
        } else {
            None
        };
        Ok(SeqEncoding { forward, backward, x })
    }
}

impl SeqEncoding {
    /// `[←h_j; →h_j]` per token (only the enabled directions).
    pub fn states(&self, tape: &mut Tape) -> Result<Var> {
        let parts: Vec<Var> = [self.backward, self.forward].into_iter().flatten().collect();
        Ok(tape.concat_cols(&parts)?)
    }
}

/// `a_j = [←h_j; →h_j; x_j]`.
pub fn seq_attention_memory(tape: &mut Tape, enc: &SeqEncoding) -> Result<Var> {
    let parts: Vec<Var> = [enc.backward, enc.forward, Some(enc.x)].into_iter().flatten().collect();
    Ok(tape.concat_cols(&parts)?)
}
