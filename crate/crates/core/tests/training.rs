mod common;

use std::io::Write;

use amrgen::checkpoint;
use amrgen::config::{ModelConfig, TrainConfig};
use amrgen::corpus::{attach_sentences, Example};
use amrgen::embed::EmbeddingTable;
use amrgen::model::{Model, Vocabs};
use amrgen::train::{evaluate_loss, prepare, train};
use amrgen::Error;
use amrgen_autodiff::ParamStore;
use common::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        char_dim: 4,
        char_hidden: 4,
        steps: 2,
        ..ModelConfig::with_hidden(16)
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 8,
        beam: 1,
        max_len: 20,
        ..TrainConfig::default()
    }
}

fn toy_model(corpus: &[Example]) -> Model {
    Model::new(small_config(), Vocabs::build(corpus, 1).unwrap(), None, 3).unwrap()
}

fn values(store: &ParamStore, name: &str) -> Vec<f64> {
    store.get(store.id(name).unwrap()).value.data().to_vec()
}

#[test]
fn training_moves_weights_but_not_frozen_embeddings() {
    let corpus = toy_corpus();
    let model = toy_model(&corpus);
    let before = model.store.clone();
    let out = train(model, &corpus, &[], None, &quick_train(), |_, _| Ok(())).unwrap();
    let after = &out.best.store;
    assert_eq!(values(&before, "embed.words"), values(after, "embed.words"));
    for (id, p) in after.iter().filter(|(_, p)| !p.frozen) {
        assert_ne!(p.value.data(), before.get(id).value.data(), "{} did not move", p.name);
    }
}

#[test]
fn training_loss_goes_down() {
    let corpus = toy_corpus();
    let cfg = TrainConfig {
        epochs: 8,
        ..quick_train()
    };
    let out = train(toy_model(&corpus), &corpus, &[], None, &cfg, |_, _| Ok(())).unwrap();
    let first = out.logs.first().unwrap().train_loss;
    let last = out.logs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn without_dev_data_the_last_epoch_is_kept() {
    let corpus = toy_corpus();
    let mut last: Option<Model> = None;
    let out = train(toy_model(&corpus), &corpus, &[], None, &quick_train(), |_, m| {
        last = Some(m.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(out.best_epoch, 3);
    let last = last.unwrap();
    for (id, p) in out.best.store.iter() {
        assert_eq!(p.value.data(), last.store.get(id).value.data());
    }
}

#[test]
fn best_model_has_the_best_dev_score() {
    let corpus = toy_corpus();
    let (train_set, dev) = corpus.split_at(15);
    let cfg = TrainConfig {
        epochs: 5,
        ..quick_train()
    };
    let mut snapshots = Vec::new();
    let out = train(toy_model(&corpus), train_set, dev, None, &cfg, |log, m| {
        snapshots.push((log.epoch, m.clone()));
        Ok(())
    })
    .unwrap();
    let max = out.logs.iter().map(|l| l.dev_bleu).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_bleu, max);
    let first_best = out.logs.iter().find(|l| l.dev_bleu == max).unwrap().epoch;
    assert_eq!(out.best_epoch, first_best);
    let (_, snap) = snapshots.iter().find(|(e, _)| *e == first_best).unwrap();
    for (id, p) in out.best.store.iter() {
        assert_eq!(p.value.data(), snap.store.get(id).value.data());
    }
}

#[test]
fn evaluation_is_deterministic() {
    let corpus = toy_corpus();
    let model = toy_model(&corpus);
    let data = prepare(&model, &corpus);
    assert_eq!(
        evaluate_loss(&model, &data).unwrap(),
        evaluate_loss(&model, &data).unwrap()
    );
    let graphs: Vec<_> = corpus.iter().map(|e| &e.graph).collect();
    assert_eq!(
        model.generate_all(&graphs, 3, 10).unwrap(),
        model.generate_all(&graphs, 3, 10).unwrap()
    );
}

#[test]
fn vocabulary_ignores_corpus_order() {
    let corpus = toy_corpus();
    let mut shuffled = corpus.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let (a, b) = (Vocabs::build(&corpus, 1).unwrap(), Vocabs::build(&shuffled, 1).unwrap());
    assert_eq!(a.words, b.words);
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.chars, b.chars);
    let pruned = Vocabs::build(&corpus, 2).unwrap();
    assert!(pruned.words.len() < a.words.len());
    assert!(pruned.words.tokens().iter().all(|w| a.words.get(w).is_some()));
}

#[test]
fn checkpoint_file_round_trip() {
    let corpus = toy_corpus();
    let model = toy_model(&corpus);
    let cfg = quick_train();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &model, &cfg).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.train, cfg);
    assert_eq!(back.model.net.config, model.net.config);
    assert_eq!(
        checkpoint::to_bytes(&back.model, &back.train).unwrap(),
        std::fs::read(&path).unwrap()
    );
    let g = &corpus[0].graph;
    assert_eq!(
        back.model.generate(g, 2, 12).unwrap(),
        model.generate(g, 2, 12).unwrap()
    );
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let corpus = toy_corpus();
    let bytes = checkpoint::to_bytes(&toy_model(&corpus), &quick_train()).unwrap();
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x10;
    let mut magic = bytes.clone();
    magic[0] = b'X';
    for bad in [&flipped[..], &bytes[..bytes.len() - 1], &magic[..], &[][..]] {
        assert!(matches!(checkpoint::from_bytes(bad), Err(Error::Checkpoint(_))));
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        checkpoint::load(dir.path().join("absent")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn pretrained_vectors_fill_matching_rows() {
    let corpus = toy_corpus();
    let vocabs = Vocabs::build(&corpus, 1).unwrap();
    let dim = small_config().word_dim;
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let vector = |k: usize| -> Vec<f64> { (0..dim).map(|j| (k * dim + j) as f64 / 100.0).collect() };
    let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    writeln!(file, "boy {}", fmt(&vector(1))).unwrap();
    writeln!(file, "notinvocab {}", fmt(&vector(2))).unwrap();
    writeln!(file, "girl {}", fmt(&vector(3))).unwrap();
    writeln!(file, "boy {}", fmt(&vector(4))).unwrap();
    file.flush().unwrap();

    let (table, matched) = EmbeddingTable::load_pretrained(file.path(), &vocabs.words, 9).unwrap();
    assert_eq!(matched, 2);
    let random = EmbeddingTable::random(vocabs.words.len(), dim, 9);
    for (id, w) in vocabs.words.tokens().iter().enumerate() {
        let want = match w.as_str() {
            "boy" => vector(1),
            "girl" => vector(3),
            _ => random.matrix.row_slice(id).to_vec(),
        };
        assert_eq!(table.matrix.row_slice(id), &want[..], "{w}");
    }
    let model = Model::new(small_config(), vocabs, Some(table.clone()), 3).unwrap();
    assert_eq!(values(&model.store, "embed.words"), table.matrix.data());

    writeln!(file, "girl 1 2").unwrap();
    file.flush().unwrap();
    let words = Vocabs::build(&corpus, 1).unwrap().words;
    assert!(matches!(
        EmbeddingTable::load_pretrained(file.path(), &words, 9),
        Err(Error::Format(_))
    ));
}

#[test]
fn sentences_file_replaces_references() {
    let mut corpus = toy_corpus();
    corpus.truncate(2);
    let lines = vec!["The Boy  sleeps .".to_string(), "A cat".to_string()];
    attach_sentences(&mut corpus, &lines).unwrap();
    assert_eq!(corpus[0].tokens, tokens("the boy sleeps ."));
    assert_eq!(corpus[1].tokens, tokens("a cat"));
    assert!(attach_sentences(&mut corpus, &lines[..1]).is_err());
}
