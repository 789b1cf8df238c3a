//! The full encoder-decoder network and per-example preparation.

use amrgen_autodiff::{ParamId, ParamStore, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amr::{linearize, AmrGraph};
use crate::config::{EncoderKind, ModelConfig};
use crate::corpus::Example;
use crate::decoder::{CopyMap, Decoder, Memory, StepOutput};
use crate::embed::{build_char_vocab, CharEncoder, EmbeddingTable, InputProjection};
use crate::error::{Error, Result};
use crate::graph_encoder::{graph_attention_memory, GraphEncoder, GraphInput, Neighborhoods};
use crate::seq_encoder::{seq_attention_memory, SeqEncoder, SeqInput};
use crate::vocab::{Vocab, END};

/// Word, edge-label and character inventories.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabs {
    pub words: Vocab,
    pub labels: Vocab,
    pub chars: Vocab,
}

impl Vocabs {
    /// Words come from linearizations, node surfaces and references.
    pub fn build(corpus: &[Example], min_count: usize) -> Result<Vocabs> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut words = Vec::new();
        let mut labels = Vec::new();
        for ex in corpus {
            words.extend(linearize(&ex.graph).tokens);
            words.extend(ex.graph.nodes().iter().map(|n| n.surface()));
            words.extend(ex.tokens.iter().cloned());
            labels.extend(ex.graph.edges().iter().map(|e| edge_label(&e.label)));
        }
        let chars = build_char_vocab(words.iter().map(String::as_str));
        Ok(Vocabs {
            words: Vocab::build(&words, min_count)?,
            labels: if labels.is_empty() {
                Vocab::from_tokens(Vec::<String>::new())
            } else {
                Vocab::build(&labels, 1)?
            },
            chars,
        })
    }
}

fn edge_label(label: &str) -> String {
    label.to_lowercase()
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncoderInput {
    Graph(GraphInput),
    Seq(SeqInput),
}

/// An input graph converted to ids, plus its copy map.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub input: EncoderInput,
    pub copy: CopyMap,
}

/// Gold output ids for teacher forcing, `</s>` included.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub ids: Vec<usize>,
    pub words: Vec<String>,
    /// Gold words that can be neither generated nor copied.
    pub unreachable: usize,
}

/// Layers and vocabularies; parameter values live in a separate
/// [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub embed: ParamId,
    pub chars: Option<CharEncoder>,
    pub input: InputProjection,
    pub graph: Option<GraphEncoder>,
    pub seq: Option<SeqEncoder>,
    pub decoder: Decoder,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub store: ParamStore,
    pub net: Network,
}

impl Model {
    /// Fresh parameters from `seed`. `embeddings`, when given, must match
    /// the word vocabulary and `word_dim`; otherwise rows are seeded uniform.
    pub fn new(config: ModelConfig, vocabs: Vocabs, embeddings: Option<EmbeddingTable>, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let table = match embeddings {
            Some(t) => {
                if t.matrix.shape() != (vocabs.words.len(), config.word_dim) {
                    return Err(Error::Mismatch(format!(
                        "embedding table is {:?}, expected {:?}",
                        t.matrix.shape(),
                        (vocabs.words.len(), config.word_dim)
                    )));
                }
                t
            }
            None => EmbeddingTable::random(vocabs.words.len(), config.word_dim, seed.wrapping_add(0x5eed)),
        };
        let embed = if config.freeze_embeddings {
            store.add_frozen("embed.words", table.matrix)?
        } else {
            store.add("embed.words", table.matrix)?
        };
        let chars = if config.char {
            Some(CharEncoder::new(
                &mut store,
                vocabs.chars.len(),
                config.char_dim,
                config.char_hidden,
                config.max_chars,
                &mut rng,
            )?)
        } else {
            None
        };
        let input = InputProjection::new(
            &mut store,
            "input",
            config.token_feature_dim(),
            config.input_dim,
            &mut rng,
        )?;
        let (graph, seq) = match config.encoder {
            EncoderKind::Graph => (
                Some(GraphEncoder::new(
                    &mut store,
                    vocabs.labels.len(),
                    config.edge_label_dim,
                    config.token_feature_dim(),
                    config.hidden,
                    config.graph_direction,
                    &mut rng,
                )?),
                None,
            ),
            EncoderKind::Seq => (
                None,
                Some(SeqEncoder::new(
                    &mut store,
                    config.input_dim,
                    config.hidden,
                    config.seq_direction,
                    &mut rng,
                )?),
            ),
        };
        let decoder = Decoder::new(&mut store, &config, embed, vocabs.words.len(), &mut rng)?;
        Ok(Model {
            store,
            net: Network {
                config,
                vocabs,
                embed,
                chars,
                input,
                graph,
                seq,
                decoder,
            },
        })
    }

    /// Decodes one graph with beam search (`beam == 1` is greedy).
    pub fn generate(&self, graph: &AmrGraph, beam: usize, max_len: usize) -> Result<Vec<String>> {
        let inst = self.net.prepare(graph);
        let mut tape = Tape::new(&self.store);
        let memory = self.net.encode(&mut tape, &inst)?;
        let ids = if beam <= 1 {
            self.net.decoder.greedy(&mut tape, &memory, &inst.copy, max_len)?
        } else {
            self.net
                .decoder
                .beam_search(&mut tape, &memory, &inst.copy, beam, max_len)?
        };
        Ok(self.net.words(&inst, &ids))
    }

    /// Decodes every graph, in parallel across graphs; output order follows input.
    pub fn generate_all(&self, graphs: &[&AmrGraph], beam: usize, max_len: usize) -> Result<Vec<Vec<String>>> {
        graphs.par_iter().map(|g| self.generate(g, beam, max_len)).collect()
    }

    /// Teacher-forced argmax accuracy over all gold tokens including `</s>`,
    /// as `(correct, total)`.
    pub fn token_accuracy(&self, examples: &[Example]) -> Result<(usize, usize)> {
        let counts: Vec<(usize, usize)> = examples
            .par_iter()
            .map(|ex| {
                let inst = self.net.prepare(&ex.graph);
                let target = self.net.target(&inst, &ex.tokens);
                let mut tape = Tape::new(&self.store);
                let outs = self.net.forward(&mut tape, &inst, &target)?;
                let mut correct = 0;
                for (o, gold) in outs.iter().zip(&target.words) {
                    let p = tape.value(o.p_final).data();
                    let best = argmax(p);
                    if self.net.token(&inst, best) == gold {
                        correct += 1;
                    }
                }
                Ok((correct, target.words.len()))
            })
            .collect::<Result<_>>()?;
        Ok(counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1)))
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

impl Network {
    pub fn prepare(&self, graph: &AmrGraph) -> Instance {
        let words = &self.vocabs.words;
        let char_ids = |tokens: &[String]| -> Vec<Vec<usize>> {
            match &self.chars {
                Some(c) => tokens.iter().map(|t| c.char_ids(&self.vocabs.chars, t)).collect(),
                None => Vec::new(),
            }
        };
        match self.config.encoder {
            EncoderKind::Graph => {
                let surfaces: Vec<String> = graph.nodes().iter().map(|n| n.surface()).collect();
                let input = GraphInput {
                    concepts: surfaces.iter().map(|s| words.id(s)).collect(),
                    chars: char_ids(&surfaces),
                    edge_labels: graph
                        .edges()
                        .iter()
                        .map(|e| self.vocabs.labels.id(&edge_label(&e.label)))
                        .collect(),
                    edge_sources: graph.edges().iter().map(|e| e.source).collect(),
                    neighborhoods: Neighborhoods::from_graph(graph, self.config.max_neighbors),
                };
                let copy = CopyMap::new(surfaces.into_iter().map(Some).collect(), words);
                Instance {
                    input: EncoderInput::Graph(input),
                    copy,
                }
            }
            EncoderKind::Seq => {
                let lin = linearize(graph);
                let input = SeqInput {
                    tokens: lin.tokens.iter().map(|t| words.id(t)).collect(),
                    chars: char_ids(&lin.tokens),
                };
                let surfaces = lin
                    .tokens
                    .iter()
                    .zip(&lin.node_of_token)
                    .map(|(t, n)| n.map(|_| t.clone()))
                    .collect();
                Instance {
                    input: EncoderInput::Seq(input),
                    copy: CopyMap::new(surfaces, words),
                }
            }
        }
    }

    pub fn target(&self, inst: &Instance, tokens: &[String]) -> Target {
        let words: Vec<String> = tokens.iter().cloned().chain(std::iter::once(END.to_string())).collect();
        let vocab = &self.vocabs.words;
        let ids: Vec<usize> = words
            .iter()
            .map(|w| inst.copy.target_id(w, vocab, self.config.copy))
            .collect();
        let unreachable = ids
            .iter()
            .zip(&words)
            .filter(|(&id, w)| id == Vocab::UNK_ID && w.as_str() != crate::vocab::UNK)
            .count();
        Target {
            ids,
            words,
            unreachable,
        }
    }

    pub fn token<'a>(&'a self, inst: &'a Instance, id: usize) -> &'a str {
        inst.copy.token(id, &self.vocabs.words)
    }

    pub fn words(&self, inst: &Instance, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&id| self.token(inst, id).to_string()).collect()
    }

    /// `[e_j (; h_j^c)]` rows and their projection `x_j` (with dropout).
    fn token_inputs(&self, tape: &mut Tape, ids: &[usize], chars: &[Vec<usize>]) -> Result<(Var, Var)> {
        let table = tape.param(self.embed);
        let e = tape.gather_rows(table, ids.to_vec())?;
        let hc = match &self.chars {
            Some(c) => Some(c.encode_all(tape, chars)?),
            None => None,
        };
        let features = match hc {
            Some(hc) => tape.concat_cols(&[e, hc])?,
            None => e,
        };
        let x = self.input.forward(tape, e, hc)?;
        Ok((features, tape.dropout(x)))
    }

    /// Attention memory for one instance.
    pub fn encode(&self, tape: &mut Tape, inst: &Instance) -> Result<Memory> {
        match (&inst.input, &self.graph, &self.seq) {
            (EncoderInput::Graph(gi), Some(enc), _) => {
                let (features, x) = self.token_inputs(tape, &gi.concepts, &gi.chars)?;
                let state = enc.encode(tape, gi, features, self.config.steps)?;
                let a = graph_attention_memory(tape, &state, x)?;
                self.decoder.memory(tape, a, state.h)
            }
            (EncoderInput::Seq(si), _, Some(enc)) => {
                let (_, x) = self.token_inputs(tape, &si.tokens, &si.chars)?;
                let e = enc.encode(tape, x)?;
                let a = seq_attention_memory(tape, &e)?;
                let states = e.states(tape)?;
                self.decoder.memory(tape, a, states)
            }
            _ => Err(Error::Mismatch("instance does not match the encoder type".into())),
        }
    }

    /// Teacher-forced decoder outputs.
    pub fn forward(&self, tape: &mut Tape, inst: &Instance, target: &Target) -> Result<Vec<StepOutput>> {
        let memory = self.encode(tape, inst)?;
        self.decoder.teacher_forced(tape, &memory, &inst.copy, &target.ids)
    }

    /// `−Σ_t log P_final(w_t*)`.
    pub fn loss(&self, tape: &mut Tape, inst: &Instance, target: &Target) -> Result<Var> {
        let outs = self.forward(tape, inst, target)?;
        let dists: Vec<Var> = outs.iter().map(|o| o.p_final).collect();
        crate::train::sequence_loss(tape, &dists, &target.ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;
    use crate::config::{EncoderKind, ModelConfig};

    fn corpus() -> Vec<Example> {
        vec![
            Example {
                id: None,
                graph: parse_penman(
                    r#"(d / describe-01 :ARG0 (p / person :name (n / name :op1 "Ryan")) :ARG1 p :ARG2 (g / genius))"#,
                )
                .unwrap(),
                tokens: crate::corpus::tokenize("Ryan is described as a genius"),
            },
            Example {
                id: None,
                graph: parse_penman("(g / genius)").unwrap(),
                tokens: crate::corpus::tokenize("a genius"),
            },
        ]
    }

    fn small(encoder: EncoderKind, copy: bool, char: bool) -> ModelConfig {
        ModelConfig {
            encoder,
            copy,
            char,
            char_dim: 3,
            char_hidden: 4,
            steps: 2,
            ..ModelConfig::with_hidden(6)
        }
    }

    #[test]
    fn vocabs_cover_sources_and_targets() {
        let v = Vocabs::build(&corpus(), 1).unwrap();
        for w in ["describe", ":arg0", "(", "ryan", "genius", "described"] {
            assert!(v.words.get(w).is_some(), "{w}");
        }
        assert!(v.labels.get("arg0").is_some());
        assert!(v.chars.get("y").is_some());
        assert!(Vocabs::build(&[], 1).is_err());
    }

    #[test]
    fn seq_copy_map_skips_relations() {
        let c = corpus();
        let v = Vocabs::build(&c, 1).unwrap();
        let m = Model::new(small(EncoderKind::Seq, true, false), v, None, 1).unwrap();
        let inst = m.net.prepare(&c[0].graph);
        let mapped: Vec<_> = inst.copy.surfaces.iter().flatten().cloned().collect();
        assert_eq!(mapped, ["describe", "person", "name", "ryan", "person", "genius"]);
    }

    #[test]
    fn every_variant_runs() {
        let c = corpus();
        for enc in [EncoderKind::Graph, EncoderKind::Seq] {
            for copy in [false, true] {
                for char in [false, true] {
                    let v = Vocabs::build(&c, 1).unwrap();
                    let m = Model::new(small(enc, copy, char), v, None, 3).unwrap();
                    let inst = m.net.prepare(&c[0].graph);
                    let target = m.net.target(&inst, &c[0].tokens);
                    let mut tape = Tape::new(&m.store);
                    let loss = m.net.loss(&mut tape, &inst, &target).unwrap();
                    let l = tape.value(loss).item().unwrap();
                    assert!(l.is_finite() && l > 0.0);
                    let out = m.generate(&c[0].graph, 2, 5).unwrap();
                    assert!(out.len() <= 5);
                }
            }
        }
    }

    #[test]
    fn unreachable_gold_words_are_counted() {
        let c = corpus();
        let mut v = Vocabs::build(&c, 1).unwrap();
        v.words = Vocab::from_tokens(["genius"]);
        let m = Model::new(small(EncoderKind::Graph, true, false), v, None, 1).unwrap();
        let inst = m.net.prepare(&c[0].graph);
        let t = m.net.target(&inst, &crate::corpus::tokenize("ryan is a genius"));
        assert_eq!(t.unreachable, 2);
        assert_eq!(m.net.token(&inst, t.ids[0]), "ryan");
    }
}
