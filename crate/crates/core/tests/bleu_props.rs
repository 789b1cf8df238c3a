mod common;

use amrgen::bleu::{corpus_bleu, corpus_bleu_lines, corpus_stats};
use common::*;
use proptest::prelude::*;

const WORDS: [&str; 6] = ["the", "cat", "sat", "on", "a", "mat"];

fn sentence(min: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0..WORDS.len(), min..9).prop_map(|ws| ws.into_iter().map(|w| WORDS[w].to_string()).collect())
}

fn corpus() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    prop::collection::vec((sentence(0), sentence(1)), 1..6)
}

fn split(pairs: &[(Vec<String>, Vec<String>)]) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    pairs.iter().cloned().unzip()
}

proptest! {
    #[test]
    fn agrees_with_the_long_way_round(pairs in corpus()) {
        let (h, r) = split(&pairs);
        let score = corpus_bleu(&h, &r).unwrap();
        prop_assert!((0.0..=100.0).contains(&score));
        prop_assert!((score - bleu_oracle(&h, &r)).abs() < 1e-9, "{} vs {}", score, bleu_oracle(&h, &r));
    }

    #[test]
    fn sentence_order_does_not_matter(pairs in corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (h, r) = split(&pairs);
        let (hs, rs) = split(&shuffled);
        prop_assert_eq!(corpus_stats(&h, &r).unwrap(), corpus_stats(&hs, &rs).unwrap());
        prop_assert_eq!(corpus_bleu(&h, &r).unwrap(), corpus_bleu(&hs, &rs).unwrap());
    }

    #[test]
    fn a_corpus_matches_itself(refs in prop::collection::vec(sentence(4), 1..6)) {
        prop_assert!((corpus_bleu(&refs, &refs).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_shared_words_scores_zero(refs in prop::collection::vec(sentence(1), 1..6), len in 1usize..9) {
        let hyps: Vec<Vec<String>> = refs.iter().map(|_| vec!["zebra".to_string(); len]).collect();
        prop_assert_eq!(corpus_bleu(&hyps, &refs).unwrap(), 0.0);
    }

    #[test]
    fn lines_are_case_folded(pairs in corpus()) {
        let (h, r) = split(&pairs);
        let hl: Vec<String> = h.iter().map(|s| s.join(" ").to_uppercase()).collect();
        let rl: Vec<String> = r.iter().map(|s| s.join("  ")).collect();
        prop_assert_eq!(corpus_bleu_lines(&hl, &rl).unwrap(), corpus_bleu(&h, &r).unwrap());
    }
}

#[test]
fn a_missing_trigram_zeroes_the_score() {
    let h = [tokens("the the cat")];
    let r = [tokens("the cat sat")];
    let st = corpus_stats(&h, &r).unwrap();
    assert_eq!(st.matches[..3], [2, 1, 0]);
    assert_eq!(st.totals[..3], [3, 2, 1]);
    assert_eq!(corpus_bleu(&h, &r).unwrap(), 0.0);
}

#[test]
fn short_output_is_penalised() {
    let r = [tokens("the cat sat on the mat today")];
    let h = [tokens("the cat sat on the mat")];
    let expected = 100.0 * (1.0f64 - 7.0 / 6.0).exp();
    assert!((corpus_bleu(&h, &r).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn mismatched_corpora_are_rejected() {
    let h = [tokens("a b c d")];
    assert!(corpus_bleu(&h, &[]).is_err());
}
