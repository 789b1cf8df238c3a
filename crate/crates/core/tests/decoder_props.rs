mod common;

use amrgen::config::{EncoderKind, ModelConfig};
use amrgen::model::Model;
use amrgen::vocab::Vocab;
use amrgen_autodiff::{Tape, Tensor};
use common::*;
use proptest::prelude::*;

fn add_to_param(model: &mut Model, name: &str, delta: f64) {
    let id = model.store.id(name).unwrap();
    for v in model.store.get_mut(id).value.data_mut() {
        *v += delta;
    }
}

/// Teacher-forced `(p_vocab, θ, p_final)` per step.
fn outputs(t: &Tiny) -> Vec<(Tensor, Option<f64>, Tensor)> {
    let mut tape = Tape::new(&t.model.store);
    let outs = t.model.net.forward(&mut tape, &t.instance, &t.target).unwrap();
    outs.iter()
        .map(|o| {
            let theta = o.theta.map(|th| tape.value(th).item().unwrap());
            (tape.value(o.p_vocab).clone(), theta, tape.value(o.p_final).clone())
        })
        .collect()
}

fn decode(t: &Tiny, beam: usize, max_len: usize) -> Vec<usize> {
    let net = &t.model.net;
    let mut tape = Tape::new(&t.model.store);
    let memory = net.encode(&mut tape, &t.instance).unwrap();
    if beam == 0 {
        net.decoder
            .greedy(&mut tape, &memory, &t.instance.copy, max_len)
            .unwrap()
    } else {
        net.decoder
            .beam_search(&mut tape, &memory, &t.instance.copy, beam, max_len)
            .unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_the_output_bias_changes_nothing(c in -5.0f64..5.0) {
        let mut t = tiny();
        let before = outputs(&t);
        add_to_param(&mut t.model, "dec.out.b", c);
        let after = outputs(&t);
        for ((pa, _, fa), (pb, _, fb)) in before.iter().zip(&after) {
            for (x, y) in pa.data().iter().zip(pb.data()).chain(fa.data().iter().zip(fb.data())) {
                prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn every_step_is_a_distribution(seed in 0u64..500, seq in any::<bool>(), copy in any::<bool>()) {
        let cfg = ModelConfig {
            encoder: if seq { EncoderKind::Seq } else { EncoderKind::Graph },
            copy,
            ..tiny_config()
        };
        let t = tiny_seeded(cfg, seed);
        let width = if copy { t.instance.copy.width() } else { t.model.net.vocabs.words.len() };
        for (pv, theta, pf) in outputs(&t) {
            prop_assert_eq!(pv.len(), t.model.net.vocabs.words.len());
            prop_assert_eq!(pf.len(), width);
            for p in [&pv, &pf] {
                prop_assert!(p.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
                prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(theta.is_some(), copy);
            if let Some(th) = theta {
                prop_assert!(th > 0.0 && th < 1.0);
            }
        }
    }

    #[test]
    fn decoded_output_is_bounded_and_clean(seed in 0u64..500, beam in 0usize..5, max_len in 0usize..9) {
        let t = tiny_seeded(tiny_config(), seed);
        let ids = decode(&t, beam, max_len);
        prop_assert!(ids.len() <= max_len);
        for id in ids {
            prop_assert!(![Vocab::PAD_ID, Vocab::START_ID, Vocab::END_ID].contains(&id));
            prop_assert!(id < t.instance.copy.width());
        }
    }

    #[test]
    fn beam_of_one_is_greedy(seed in 0u64..500, max_len in 1usize..12) {
        let t = tiny_seeded(tiny_config(), seed);
        prop_assert_eq!(decode(&t, 1, max_len), decode(&t, 0, max_len));
    }
}

#[test]
fn raising_the_switch_bias_moves_mass_off_copy_only_words() {
    let mut t = tiny();
    let extra = t.instance.copy.target_id("zorblax", &t.model.net.vocabs.words, true);
    assert!(extra >= t.model.net.vocabs.words.len());
    add_to_param(&mut t.model, "dec.switch.b", -6.0);
    let mut last: Option<Vec<(Option<f64>, f64)>> = None;
    for _ in 0..6 {
        let now: Vec<(Option<f64>, f64)> = outputs(&t).iter().map(|(_, th, pf)| (*th, pf.data()[extra])).collect();
        if let Some(prev) = &last {
            for ((th0, p0), (th1, p1)) in prev.iter().zip(&now) {
                assert!(th1.unwrap() > th0.unwrap());
                assert!(p1 < p0, "{p1} !< {p0}");
            }
        }
        last = Some(now);
        add_to_param(&mut t.model, "dec.switch.b", 2.0);
    }
}

#[test]
fn coverage_is_the_running_sum_of_attention() {
    let t = tiny();
    let net = &t.model.net;
    let mut tape = Tape::new(&t.model.store);
    let memory = net.encode(&mut tape, &t.instance).unwrap();
    let mut state = net.decoder.init(&mut tape, &memory).unwrap();
    let mut sum = vec![0.0; memory.len];
    let mut input = Vocab::START_ID;
    for (step, &gold) in t.target.ids.iter().enumerate() {
        let (next, out) = net
            .decoder
            .step(&mut tape, &memory, &t.instance.copy, &state, input)
            .unwrap();
        for (s, a) in sum.iter_mut().zip(tape.value(out.alpha).data()) {
            *s += a;
        }
        let gamma = tape.value(next.gamma).data();
        for (g, s) in gamma.iter().zip(&sum) {
            assert!((g - s).abs() < 1e-12);
        }
        assert!((gamma.iter().sum::<f64>() - (step + 1) as f64).abs() < 1e-12);
        assert_eq!(next.steps, step + 1);
        state = next;
        input = gold;
    }
}

#[test]
fn untrained_models_do_emit_tokens() {
    // Keeps the beam comparisons above from passing on empty outputs.
    let lengths: Vec<usize> = (0..20)
        .map(|s| decode(&tiny_seeded(tiny_config(), s), 0, 8).len())
        .collect();
    assert!(lengths.iter().filter(|&&n| n > 0).count() >= 10, "{lengths:?}");
}
