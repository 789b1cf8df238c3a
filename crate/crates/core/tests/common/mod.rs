#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use amrgen::amr::{parse_penman, AmrGraph};
use amrgen::config::{GraphDirection, ModelConfig};
use amrgen::corpus::{read_corpus, Example};
use amrgen::embed::build_char_vocab;
use amrgen::graph_encoder::{GraphEncoder, GraphInput, Neighborhoods};
use amrgen::model::{Instance, Model, Target, Vocabs};
use amrgen::vocab::Vocab;
use amrgen_autodiff::{ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn toy_corpus() -> Vec<Example> {
    read_corpus(data_path("toy.amr")).expect("toy corpus parses")
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub const FIGURE1: &str = "(d / describe-01
   :ARG0 (p / person
            :name (n / name
                     :op1 \"Ryan\"))
   :ARG1 p
   :ARG2 (g / genius))";

/// Graph2seq with characters and copying at hidden 8, a 20-word vocabulary
/// and a 4-node graph whose last concept is only reachable by copying.
pub struct Tiny {
    pub model: Model,
    pub instance: Instance,
    pub target: Target,
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        char_dim: 4,
        char_hidden: 4,
        steps: 3,
        ..ModelConfig::with_hidden(8)
    }
}

pub fn tiny() -> Tiny {
    tiny_with(tiny_config())
}

pub fn tiny_with(cfg: ModelConfig) -> Tiny {
    tiny_seeded(cfg, 7)
}

pub fn tiny_seeded(cfg: ModelConfig, seed: u64) -> Tiny {
    let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b) :time (n / zorblax))").unwrap();
    let words = Vocab::from_tokens([
        "the", "boy", "wants", "to", "go", "want", "here", "a", "girl", "now", "and", "cat", "sat", "on", "mat", "dog",
    ]);
    assert_eq!(words.len(), 20);
    let labels = Vocab::from_tokens(["arg0", "arg1", "time"]);
    let chars = build_char_vocab(["wantboygozrlx"]);
    let model = Model::new(cfg, Vocabs { words, labels, chars }, None, seed).unwrap();
    let instance = model.net.prepare(&g);
    let target = model.net.target(&instance, &tokens("the boy wants to go zorblax"));
    Tiny {
        model,
        instance,
        target,
    }
}

/// `0 - 1 - … - (n-1)`, every edge pointing towards node 0.
pub fn path_towards_first(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|k| (k, k - 1)).collect()
}

/// `0 → 1 → … → (n-1)`.
pub fn chain(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|k| (k - 1, k)).collect()
}

/// Node 0 points at every other node.
pub fn star(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|k| (0, k)).collect()
}

/// A random rooted tree over `n` nodes plus `extra` re-entrant edges.
pub fn random_dag(n: usize, extra: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    while edges.len() < n - 1 + extra {
        let s = rng.gen_range(0..n - 1);
        let t = rng.gen_range(s + 1..n);
        if !edges.contains(&(s, t)) {
            edges.push((s, t));
        }
    }
    edges
}

/// PENMAN text for a graph given as concepts, labelled edges and a root of 0.
/// Edges must form a tree rooted at 0 with sources before targets.
pub fn tree_penman(concepts: &[String], edges: &[(usize, usize, &str)]) -> String {
    fn emit(v: usize, concepts: &[String], edges: &[(usize, usize, &str)], out: &mut String) {
        out.push_str(&format!("(n{v} / {}", concepts[v]));
        for &(s, t, l) in edges {
            if s == v {
                out.push_str(&format!(" :{l} "));
                emit(t, concepts, edges, out);
            }
        }
        out.push(')');
    }
    let mut out = String::new();
    emit(0, concepts, edges, &mut out);
    out
}

fn pseudo_word(rng: &mut impl Rng) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "z"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables = rng.gen_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

/// Distinct pseudo-words, none a real concept in the toy data.
pub fn word_pool(n: usize, seed: u64, exclude: &[String]) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let w = pseudo_word(&mut rng);
        if !out.contains(&w) && !exclude.contains(&w) {
            out.push(w);
        }
    }
    out
}

/// Graphs `(root :op1 a :op2 b …)` whose sentence is the concepts in order.
/// Each concept comes from `novel` with probability `novel_rate`, otherwise
/// from `known`; when `novel` is non-empty every example gets at least one.
pub fn copy_corpus(n: usize, known: &[String], novel: &[String], novel_rate: f64, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let size = rng.gen_range(2..=4);
            let mut concepts: Vec<String> = (0..size)
                .map(|_| {
                    let pool = if !novel.is_empty() && rng.gen_bool(novel_rate) {
                        novel
                    } else {
                        known
                    };
                    pool.choose(&mut rng).unwrap().clone()
                })
                .collect();
            if !novel.is_empty() && !concepts.iter().any(|c| novel.contains(c)) {
                let k = rng.gen_range(0..size);
                concepts[k] = novel.choose(&mut rng).unwrap().clone();
            }
            let labels = ["op1", "op2", "op3"];
            let edges: Vec<(usize, usize, &str)> = (1..size).map(|k| (0, k, labels[k - 1])).collect();
            Example {
                id: None,
                graph: parse_penman(&tree_penman(&concepts, &edges)).unwrap(),
                tokens: concepts,
            }
        })
        .collect()
}

pub fn graph_of(text: &str) -> AmrGraph {
    parse_penman(text).unwrap()
}

/// Graph encoder with random weights over `n` nodes and `edges`, all edges
/// sharing one label; returns the encoder, its store and the input.
pub fn encoder_fixture(
    n: usize,
    edges: &[(usize, usize)],
    hidden: usize,
    source_dim: usize,
    seed: u64,
    direction: GraphDirection,
) -> (ParamStore, GraphEncoder, GraphInput) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = GraphEncoder::new(&mut store, 6, hidden, source_dim, hidden, direction, &mut rng).unwrap();
    let input = GraphInput {
        concepts: vec![0; n],
        chars: Vec::new(),
        edge_labels: edges.iter().map(|_| 4).collect(),
        edge_sources: edges.iter().map(|e| e.0).collect(),
        neighborhoods: Neighborhoods::new(n, edges, 10),
    };
    (store, enc, input)
}

pub fn random_features(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Corpus BLEU computed the long way: clipped n-gram counts per sentence
/// pair, then the geometric mean and brevity penalty.
pub fn bleu_oracle(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let (mut matched, mut possible) = ([0usize; 4], [0usize; 4]);
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let count = |s: &[String]| {
                let mut m: HashMap<Vec<String>, usize> = HashMap::new();
                for w in s.windows(n) {
                    *m.entry(w.to_vec()).or_default() += 1;
                }
                m
            };
            let (hc, rc) = (count(h), count(r));
            matched[n - 1] += hc
                .iter()
                .map(|(g, c)| (*c).min(*rc.get(g).unwrap_or(&0)))
                .sum::<usize>();
            possible[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if matched.contains(&0) {
        return 0.0;
    }
    let log_mean: f64 = (0..4)
        .map(|i| (matched[i] as f64 / possible[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    100.0 * bp * log_mean.exp()
}
