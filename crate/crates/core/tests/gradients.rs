mod common;

use amrgen::config::{EncoderKind, GraphDirection, ModelConfig, SeqDirection};
use amrgen_autodiff::{finite_diff_check, finite_diff_check_with, GradCheckReport, Selection, Stencil, Tape, Tensor};
use common::*;

/// Five-point differences at h = 1e-2. The loss is around 20, so one ulp of it
/// divided by h must stay well below the smallest gradients (some are 1e-9).
fn full_network(cfg: ModelConfig) -> GradCheckReport {
    let Tiny {
        mut model,
        instance,
        target,
    } = tiny_with(cfg);
    let net = model.net.clone();
    finite_diff_check_with(
        &mut model.store,
        |t| net.loss(t, &instance, &target),
        1e-2,
        Selection::All,
        Stencil::FivePoint,
    )
    .unwrap()
}

#[test]
fn graph_lstm_cell_matches_central_differences() {
    let edges = random_dag(5, 2, 3);
    let (mut store, enc, input) = encoder_fixture(5, &edges, 4, 3, 4, GraphDirection::Both);
    let features = random_features(5, 3, 5);
    let weights = random_features(5, 4, 6);
    let report = finite_diff_check(
        &mut store,
        |t: &mut Tape| -> amrgen::Result<_> {
            let f = t.constant(features.clone());
            let w = t.constant(weights.clone());
            let state = enc.encode(t, &input, f, 3)?;
            let y = t.mul(state.h, w)?;
            Ok(t.sum_all(y))
        },
        1e-5,
        Selection::All,
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-4, "{report:#?}");
    assert!(report.groups.iter().any(|g| g.name == "graph.u_in"));
}

#[test]
fn every_group_is_checked() {
    let report = full_network(tiny_config());
    let Tiny { model, .. } = tiny();
    let trainable = model.store.iter().filter(|(_, p)| !p.frozen).count();
    assert_eq!(report.groups.len(), trainable);
    assert!(report.max_rel_error() < 1e-4, "{report:#?}");
}

#[test]
fn sequence_network_gradients() {
    for direction in [SeqDirection::Both, SeqDirection::ForwardOnly] {
        let cfg = ModelConfig {
            encoder: EncoderKind::Seq,
            seq_direction: direction,
            ..tiny_config()
        };
        let report = full_network(cfg);
        assert!(report.max_rel_error() < 1e-4, "{direction:?}: {report:#?}");
    }
}

#[test]
fn ablated_graph_network_gradients() {
    let cfg = ModelConfig {
        copy: false,
        char: false,
        graph_direction: GraphDirection::IncomingOnly,
        ..tiny_config()
    };
    let report = full_network(cfg);
    assert!(report.max_rel_error() < 1e-4, "{report:#?}");
}

#[test]
fn trainable_word_embeddings_get_gradients() {
    let cfg = ModelConfig {
        freeze_embeddings: false,
        ..tiny_config()
    };
    let report = full_network(cfg);
    assert!(report.groups.iter().any(|g| g.name == "embed.words"));
    assert!(report.max_rel_error() < 1e-4, "{report:#?}");
}

#[test]
fn wrong_gradient_is_caught() {
    // A sign flip in one group must show up, so the check is not vacuous.
    let Tiny {
        mut model,
        instance,
        target,
    } = tiny();
    let net = model.net.clone();
    let mut grads = amrgen_autodiff::Gradients::new(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let loss = net.loss(&mut tape, &instance, &target).unwrap();
        tape.backward(loss, &mut grads).unwrap();
    }
    let id = model.store.id("dec.out.b").unwrap();
    let flipped = grads.get(id).unwrap().data().iter().map(|g| -g).collect::<Vec<_>>();
    let mut bad = amrgen_autodiff::Gradients::new(&model.store);
    {
        let mut tape = Tape::new(&model.store);
        let p = tape.param(id);
        let c = tape.constant(Tensor::from_vec(1, flipped.len(), flipped).unwrap());
        let y = tape.mul(p, c).unwrap();
        let y = tape.sum_all(y);
        tape.backward(y, &mut bad).unwrap();
    }
    let report = amrgen_autodiff::gradcheck::check_against(
        &mut model.store,
        |t| net.loss(t, &instance, &target),
        &bad,
        1e-5,
        Selection::Largest(3),
    )
    .unwrap();
    let group = report.groups.iter().find(|g| g.name == "dec.out.b").unwrap();
    assert!(group.max_rel_error > 0.5);
}
