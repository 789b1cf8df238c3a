use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use amrgen::amr::{diameter_histogram, linearize, parse_penman, AmrGraph};
use amrgen::bleu::corpus_bleu_lines;
use amrgen::checkpoint;
use amrgen::config::{EncoderKind, ModelConfig, TrainConfig};
use amrgen::corpus::{attach_sentences, read_corpus, read_lines, tokenize, Example};
use amrgen::embed::EmbeddingTable;
use amrgen::model::{Model, Vocabs};
use amrgen::train::train;
use amrgen_autodiff::{finite_diff_check_with, Selection, Stencil};
use anyhow::{bail, Context, Result};

use crate::{
    Command, CorpusArgs, EvalArgs, GenerateArgs, GradcheckArgs, ModelArgs, PreprocessArgs, Report, StatsArgs, TrainArgs,
};

/// Runs one subcommand; `Ok(false)` means it ran but its check failed.
pub fn run(command: Command) -> Result<bool> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn load_corpus(path: &Path, sentences: Option<&Path>) -> Result<Vec<Example>> {
    let mut corpus = read_corpus(path)?;
    if let Some(s) = sentences {
        attach_sentences(&mut corpus, &read_lines(s)?).with_context(|| format!("{}", s.display()))?;
    }
    Ok(corpus)
}

fn load(args: &CorpusArgs) -> Result<Vec<Example>> {
    load_corpus(&args.corpus, args.sentences.as_deref())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn preprocess(a: PreprocessArgs) -> Result<bool> {
    let corpus = load(&a.input)?;
    let vocabs = Vocabs::build(&corpus, a.min_count)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    write(&dir.join("words.vocab"), &vocabs.words.to_lines())?;
    write(&dir.join("labels.vocab"), &vocabs.labels.to_lines())?;
    write(&dir.join("chars.vocab"), &vocabs.chars.to_lines())?;
    let (mut source, mut target, mut graphs) = (String::new(), String::new(), String::new());
    for ex in &corpus {
        source.push_str(&linearize(&ex.graph).to_string());
        source.push('\n');
        target.push_str(&ex.tokens.join(" "));
        target.push('\n');
        graphs.push_str(&graph_line(&ex.graph));
        graphs.push('\n');
    }
    write(&dir.join("source.txt"), &source)?;
    write(&dir.join("target.txt"), &target)?;
    write(&dir.join("graphs.tsv"), &graphs)?;
    eprintln!(
        "{} pairs, {} words, {} labels, {} characters",
        corpus.len(),
        vocabs.words.len(),
        vocabs.labels.len(),
        vocabs.chars.len()
    );
    Ok(true)
}

/// `surface surface …<TAB>source,target,label …`
fn graph_line(g: &AmrGraph) -> String {
    let nodes: Vec<String> = g.nodes().iter().map(|n| n.surface()).collect();
    let edges: Vec<String> = g
        .edges()
        .iter()
        .map(|e| format!("{},{},{}", e.source, e.target, e.label.to_lowercase()))
        .collect();
    format!("{}\t{}", nodes.join(" "), edges.join(" "))
}

/// Smallest token gap between the two ends of each edge in the linearization.
fn edge_distances(g: &AmrGraph) -> Vec<usize> {
    let lin = linearize(g);
    let positions = |node: usize| -> Vec<usize> {
        lin.node_of_token
            .iter()
            .enumerate()
            .filter(|(_, n)| **n == Some(node))
            .map(|(i, _)| i)
            .collect()
    };
    g.edges()
        .iter()
        .filter_map(|e| {
            let (ps, pt) = (positions(e.source), positions(e.target));
            ps.iter().flat_map(|&i| pt.iter().map(move |&j| i.abs_diff(j))).min()
        })
        .collect()
}

fn stats(a: StatsArgs) -> Result<bool> {
    let graphs: Vec<AmrGraph> = read_corpus(&a.corpus)?.into_iter().map(|e| e.graph).collect();
    let rows: Vec<(usize, f64)> = match a.report {
        Report::Diameter => diameter_histogram(&graphs)?,
        Report::Distance => {
            let mut counts = BTreeMap::new();
            let mut total = 0usize;
            for d in graphs.iter().flat_map(edge_distances) {
                *counts.entry(d).or_insert(0usize) += 1;
                total += 1;
            }
            if total == 0 {
                bail!("no edges in {}", a.corpus.display());
            }
            let mut running = 0;
            counts
                .into_iter()
                .map(|(d, c)| {
                    running += c;
                    (d, running as f64 / total as f64)
                })
                .collect()
        }
    };
    let mut out = std::io::stdout().lock();
    for (d, f) in rows {
        writeln!(out, "{d}\t{f:.3}")?;
    }
    Ok(true)
}

/// Flags over built-in defaults.
fn model_config(a: &ModelArgs, word_dim_override: Option<usize>) -> ModelConfig {
    let mut cfg = match a.hidden {
        Some(h) => ModelConfig::with_hidden(h),
        None => ModelConfig::default(),
    };
    if let Some(d) = a.word_dim.or(word_dim_override) {
        cfg.word_dim = d;
        cfg.input_dim = d;
        cfg.edge_label_dim = d;
    }
    if let Some(e) = a.encoder {
        cfg.encoder = e.into();
    }
    if let Some(c) = a.copy {
        cfg.copy = c;
    }
    if let Some(c) = a.char {
        cfg.char = c;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(d) = a.graph_direction {
        cfg.graph_direction = d.into();
    }
    if let Some(d) = a.seq_direction {
        cfg.seq_direction = d.into();
    }
    cfg.freeze_embeddings = !a.train_embeddings;
    cfg
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        lr: a.lr.unwrap_or(d.lr),
        dropout: a.dropout.unwrap_or(d.dropout),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        seed: a.seed.unwrap_or(d.seed),
        clip_norm: a.clip_norm.unwrap_or(d.clip_norm),
        min_count: a.min_count.unwrap_or(d.min_count),
        beam: a.beam.unwrap_or(d.beam),
        max_len: a.max_len.unwrap_or(d.max_len),
    }
}

fn train_cmd(a: TrainArgs) -> Result<bool> {
    let tc = train_config(&a);
    tc.validate()?;
    let corpus = load(&a.input)?;
    let dev = match &a.dev {
        Some(p) => load_corpus(p, a.dev_sentences.as_deref())?,
        None => Vec::new(),
    };
    let silver = match &a.pretrain {
        Some(p) => Some(read_corpus(p)?),
        None => None,
    };
    let mut vocab_source = corpus.clone();
    vocab_source.extend(silver.iter().flatten().cloned());
    let vocabs = Vocabs::build(&vocab_source, tc.min_count)?;
    let table = match &a.embeddings {
        Some(p) => {
            let (t, matched) = EmbeddingTable::load_pretrained(p, &vocabs.words, tc.seed)?;
            eprintln!("{matched} of {} words found in {}", vocabs.words.len(), p.display());
            Some(t)
        }
        None => None,
    };
    let cfg = model_config(&a.model, table.as_ref().map(EmbeddingTable::dim));
    let model = Model::new(cfg, vocabs, table, tc.seed)?;
    let mut log_file = match &a.log {
        Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => None,
    };
    let mut best: Option<f64> = None;
    let out = train(model, &corpus, &dev, silver.as_deref(), &tc, |log, m| {
        println!("{log}");
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{log}").map_err(|e| amrgen::Error::Format(e.to_string()))?;
        }
        // Same rule as the final selection: strictly better dev BLEU, or
        // every epoch when there is no dev set.
        if best.is_none_or(|b| log.dev_bleu > b || dev.is_empty()) {
            best = Some(log.dev_bleu);
            checkpoint::save(&a.out, m, &tc)?;
        }
        Ok(())
    })?;
    checkpoint::save(&a.out, &out.best, &tc)?;
    eprintln!(
        "best epoch {} (dev BLEU {:.4}) saved to {}",
        out.best_epoch,
        out.best_bleu,
        a.out.display()
    );
    Ok(true)
}

fn generate(a: GenerateArgs) -> Result<bool> {
    let ck = checkpoint::load(&a.model)?;
    let graphs: Vec<AmrGraph> = read_corpus(&a.corpus)?.into_iter().map(|e| e.graph).collect();
    // Architecture always comes from the checkpoint; decoding settings
    // follow flag > checkpoint.
    let beam = if a.greedy { 1 } else { a.beam.unwrap_or(ck.train.beam) };
    let max_len = a.max_len.unwrap_or(ck.train.max_len);
    let refs: Vec<&AmrGraph> = graphs.iter().collect();
    let sentences = ck.model.generate_all(&refs, beam, max_len)?;
    let mut text = String::new();
    for s in sentences {
        text.push_str(&s.join(" "));
        text.push('\n');
    }
    match &a.output {
        Some(p) => write(p, &text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let hyps = read_lines(&a.hypotheses)?;
    let refs = read_lines(&a.references)?;
    let score = corpus_bleu_lines(&hyps, &refs)?;
    println!("BLEU\t{score:.4}");
    Ok(true)
}

const GRADCHECK_EXAMPLE: &str = "(d / describe-01
   :ARG0 (p / person
            :name (n / name
                     :op1 \"Ryan\"))
   :ARG1 p
   :ARG2 (g / genius))";

fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let example = match &a.corpus {
        Some(p) => read_corpus(p)?
            .into_iter()
            .find(|e| !e.tokens.is_empty())
            .with_context(|| format!("no graph with a sentence in {}", p.display()))?,
        None => Example {
            id: None,
            graph: parse_penman(GRADCHECK_EXAMPLE)?,
            tokens: tokenize("Ryan is described as a genius ."),
        },
    };
    let encoders = match a.encoder {
        Some(e) => vec![EncoderKind::from(e)],
        None => vec![EncoderKind::Seq, EncoderKind::Graph],
    };
    let mut worst: f64 = 0.0;
    let mut out = std::io::stdout().lock();
    for encoder in encoders {
        let cfg = ModelConfig {
            encoder,
            ..ModelConfig::with_hidden(a.hidden)
        };
        let mut model = Model::new(cfg, Vocabs::build(std::slice::from_ref(&example), 1)?, None, a.seed)?;
        let net = model.net.clone();
        let inst = net.prepare(&example.graph);
        let target = net.target(&inst, &example.tokens);
        let report = finite_diff_check_with(
            &mut model.store,
            |t| net.loss(t, &inst, &target),
            a.step,
            Selection::Largest(a.entries),
            Stencil::FivePoint,
        )?;
        let name = match encoder {
            EncoderKind::Seq => "seq",
            EncoderKind::Graph => "graph",
        };
        for g in &report.groups {
            writeln!(out, "{name}\t{}\t{}\t{:.3e}", g.name, g.checked, g.max_rel_error)?;
        }
        worst = worst.max(report.max_rel_error());
    }
    let ok = worst < a.tolerance;
    writeln!(out, "max\t{worst:.3e}\t{}", if ok { "ok" } else { "FAILED" })?;
    Ok(ok)
}
