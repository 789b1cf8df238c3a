//! Corpus-level BLEU with clipped 1–4-gram precisions and a brevity penalty,
//! no smoothing.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn precision(&self, order: usize) -> f64 {
        if self.totals[order] == 0 {
            0.0
        } else {
            self.matches[order] as f64 / self.totals[order] as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Score in `[0, 100]`; any zero precision gives zero.
    pub fn score(&self) -> f64 {
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            let p = self.precision(n);
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
        }
        100.0 * self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn corpus_stats<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::Mismatch(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut st = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        st.hyp_len += h.len();
        st.ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let rc = ngram_counts(r, n);
            let hc = ngram_counts(h, n);
            st.matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            st.totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    Ok(st)
}

/// BLEU over pre-tokenized sentences.
pub fn corpus_bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    Ok(corpus_stats(hypotheses, references)?.score())
}

/// BLEU over raw lines, lowercased and split on whitespace.
pub fn corpus_bleu_lines(hypotheses: &[String], references: &[String]) -> Result<f64> {
    let tok = |s: &String| -> Vec<String> { s.to_lowercase().split_whitespace().map(str::to_string).collect() };
    let h: Vec<Vec<String>> = hypotheses.iter().map(tok).collect();
    let r: Vec<Vec<String>> = references.iter().map(tok).collect();
    corpus_bleu(&h, &r)
}
