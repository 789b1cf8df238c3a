//! Word embeddings, the character LSTM and token input representations.

use std::io::{BufRead, BufReader};
use std::path::Path;

use amrgen_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lstm::{glorot, Lstm};
use crate::vocab::Vocab;

/// Range of the uniform initialisation for rows without a pretrained vector.
pub const OOV_INIT: f64 = 0.05;

/// A `|V| × dim` embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub frozen: bool,
}

impl EmbeddingTable {
    /// Every row uniform in `(-0.05, 0.05)` from `seed`.
    pub fn random(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * dim).map(|_| rng.gen_range(-OOV_INIT..OOV_INIT)).collect();
        EmbeddingTable {
            matrix: Tensor::from_vec(rows, dim, data).expect("sized by construction"),
            frozen: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Reads a `word v1 … vD` text file. Vocabulary words found in the file
    /// get their vector; the rest keep the seeded random row they would have
    /// in [`EmbeddingTable::random`]. Returns the table and the number of
    /// matched words.
    pub fn load_pretrained(path: impl AsRef<Path>, vocab: &Vocab, seed: u64) -> Result<(Self, usize)> {
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Self::read_pretrained(BufReader::new(file), vocab, seed)
            .map_err(|e| Error::Format(format!("{}: {}", path.as_ref().display(), e)))
    }

    pub fn read_pretrained(reader: impl BufRead, vocab: &Vocab, seed: u64) -> Result<(Self, usize)> {
        let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
        let mut dim = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let Some(word) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {}", n + 1, e)))?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Format(format!(
                        "line {}: {} values, expected {}",
                        n + 1,
                        values.len(),
                        d
                    )))
                }
                _ => {}
            }
            if let Some(id) = vocab.get(word) {
                found[id].get_or_insert(values);
            }
        }
        let dim = match dim {
            Some(d) if d > 0 => d,
            _ => return Err(Error::Format("no vectors in file".into())),
        };
        let mut table = Self::random(vocab.len(), dim, seed);
        let mut matched = 0;
        for (id, v) in found.into_iter().enumerate() {
            if let Some(v) = v {
                table.matrix.row_slice_mut(id).copy_from_slice(&v);
                matched += 1;
            }
        }
        Ok((table, matched))
    }
}

/// Character inventory over the given tokens.
pub fn build_char_vocab<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
    let mut chars: Vec<String> = tokens.into_iter().flat_map(|t| t.chars()).map(String::from).collect();
    chars.sort();
    chars.dedup();
    Vocab::from_tokens(chars)
}

/// Forward LSTM over the first `max_chars` characters of a token.
#[derive(Clone, Debug)]
pub struct CharEncoder {
    pub table: ParamId,
    pub lstm: Lstm,
    pub max_chars: usize,
}

impl CharEncoder {
    pub fn new(
        store: &mut ParamStore,
        chars: usize,
        char_dim: usize,
        hidden: usize,
        max_chars: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let table = store.add("char.embed", glorot(rng, chars, char_dim))?;
        let lstm = Lstm::new(store, "char.lstm", char_dim, hidden, rng)?;
        Ok(CharEncoder { table, lstm, max_chars })
    }

    /// Character ids for `token`, truncated; unknown characters map to unk.
    pub fn char_ids(&self, chars: &Vocab, token: &str) -> Vec<usize> {
        let ids: Vec<usize> = token
            .chars()
            .take(self.max_chars)
            .map(|c| chars.id(&c.to_string()))
            .collect();
        if ids.is_empty() {
            vec![Vocab::UNK_ID]
        } else {
            ids
        }
    }

    /// Last hidden state, `1 × hidden`.
    pub fn encode(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        let table = tape.param(self.table);
        let xs = tape.gather_rows(table, ids.to_vec())?;
        let states = self.lstm.run(tape, xs, false)?;
        Ok(*states.last().expect("at least one character"))
    }

    /// One row per token; identical tokens share one encoding.
    pub fn encode_all(&self, tape: &mut Tape, tokens: &[Vec<usize>]) -> Result<Var> {
        let mut cache: Vec<(&[usize], Var)> = Vec::new();
        let mut rows = Vec::with_capacity(tokens.len());
        for ids in tokens {
            let v = match cache.iter().find(|(k, _)| *k == ids.as_slice()) {
                Some(&(_, v)) => v,
                None => {
                    let v = self.encode(tape, ids)?;
                    cache.push((ids, v));
                    v
                }
            };
            rows.push(v);
        }
        Ok(tape.concat_rows(&rows)?)
    }
}

/// `x_j = W1 [e_j; h_j^c] + b1`, the character part being optional.
#[derive(Clone, Debug)]
pub struct InputProjection {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl InputProjection {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add(format!("{prefix}.w"), glorot(rng, in_dim, out_dim))?;
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(1, out_dim))?;
        Ok(InputProjection { w, b, in_dim, out_dim })
    }

    /// `e` is `N × word_dim`, `hc` (when present) `N × char_hidden`.
    pub fn forward(&self, tape: &mut Tape, e: Var, hc: Option<Var>) -> Result<Var> {
        let features = match hc {
            Some(hc) => {
                if tape.shape(hc).0 != tape.shape(e).0 {
                    return Err(Error::Mismatch(format!(
                        "input projection: {} embeddings but {} character states",
                        tape.shape(e).0,
                        tape.shape(hc).0
                    )));
                }
                tape.concat_cols(&[e, hc])?
            }
            None => e,
        };
        let width = tape.shape(features).1;
        if width != self.in_dim {
            return Err(Error::Mismatch(format!(
                "input projection expects width {}, got {}",
                self.in_dim, width
            )));
        }
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        Ok(tape.affine(features, w, b)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::from_tokens(["cat", "dog", "emu"])
    }

    #[test]
    fn pretrained_rows_copied_exactly() {
        let text = "cat 0.1 0.2 0.3\nzebra 1 1 1\ndog -1.5 2 0.25\n";
        let (t, matched) = EmbeddingTable::read_pretrained(text.as_bytes(), &vocab(), 9).unwrap();
        assert_eq!(matched, 2);
        assert_eq!(t.dim(), 3);
        let v = vocab();
        assert_eq!(t.matrix.row_slice(v.id("cat")), &[0.1, 0.2, 0.3]);
        assert_eq!(t.matrix.row_slice(v.id("dog")), &[-1.5, 2.0, 0.25]);
        let emu = t.matrix.row_slice(v.id("emu"));
        assert!(emu.iter().all(|x| x.abs() < OOV_INIT));
        let (again, _) = EmbeddingTable::read_pretrained(text.as_bytes(), &vocab(), 9).unwrap();
        assert_eq!(again.matrix.row_slice(v.id("emu")), emu);
        assert_eq!(EmbeddingTable::random(v.len(), 3, 9).matrix.row_slice(v.id("emu")), emu);
    }

    #[test]
    fn inconsistent_dimension_is_an_error() {
        let text = "cat 0.1 0.2 0.3\ndog 0.1 0.2\n";
        let err = EmbeddingTable::read_pretrained(text.as_bytes(), &vocab(), 0).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    fn char_setup(max_chars: usize) -> (ParamStore, CharEncoder, Vocab) {
        let chars = build_char_vocab(["abcdefghijklmnopqrstuvwxyz"]);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = CharEncoder::new(&mut store, chars.len(), 6, 100, max_chars, &mut rng).unwrap();
        (store, enc, chars)
    }

    #[test]
    fn char_encoding_truncates_and_is_deterministic() {
        let (store, enc, chars) = char_setup(20);
        let long = "abcdefghijklmnopqrstuvwxy";
        assert_eq!(long.len(), 25);
        let mut tape = Tape::new(&store);
        let a = enc.encode(&mut tape, &enc.char_ids(&chars, long)).unwrap();
        let b = enc.encode(&mut tape, &enc.char_ids(&chars, &long[..20])).unwrap();
        let c = enc.encode(&mut tape, &enc.char_ids(&chars, long)).unwrap();
        assert_eq!(tape.shape(a), (1, 100));
        assert_eq!(tape.value(a), tape.value(b));
        assert_eq!(tape.value(a), tape.value(c));
        assert_eq!(enc.char_ids(&chars, "a!")[1], Vocab::UNK_ID);
    }

    #[test]
    fn projection_examples() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = InputProjection::new(&mut store, "in", 3, 3, &mut rng).unwrap();
        store.get_mut(p.w).value = Tensor::identity(3);
        let mut tape = Tape::new(&store);
        let e = tape.constant(Tensor::row(vec![0.5, -1.0, 2.0]));
        let x = p.forward(&mut tape, e, None).unwrap();
        assert_eq!(tape.value(x).data(), &[0.5, -1.0, 2.0]);

        let bias = Tensor::row(vec![0.1, 0.2, 0.3]);
        store.get_mut(p.b).value = bias.clone();
        let mut tape = Tape::new(&store);
        let z = tape.constant(Tensor::zeros(1, 3));
        let x = p.forward(&mut tape, z, None).unwrap();
        assert_eq!(tape.value(x), &bias);

        let hc = tape.constant(Tensor::zeros(1, 2));
        assert!(matches!(p.forward(&mut tape, z, Some(hc)), Err(Error::Mismatch(_))));

        let mut store = ParamStore::new();
        let wide = InputProjection::new(&mut store, "in", 400, 300, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let e = tape.constant(Tensor::zeros(2, 300));
        let hc = tape.constant(Tensor::zeros(2, 100));
        let x = wide.forward(&mut tape, e, Some(hc)).unwrap();
        assert_eq!(tape.shape(x), (2, 300));
    }
}
