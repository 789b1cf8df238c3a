use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const START: &str = "<s>";
pub const END: &str = "</s>";

const SPECIALS: [&str; 4] = [PAD, UNK, START, END];

/// Dense token ↔ id map. Ids `0..4` are `<pad> <unk> <s> </s>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const START_ID: usize = 2;
    pub const END_ID: usize = 3;

    /// Counts tokens and keeps those seen at least `min_count` times,
    /// ordered by descending frequency then lexicographically.
    pub fn build<I, S>(tokens: I, min_count: usize) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for t in tokens {
            any = true;
            let t = t.as_ref();
            if !SPECIALS.contains(&t) {
                *counts.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Vocab::from_tokens(kept.into_iter().map(|(t, _)| t)))
    }

    /// Specials followed by `tokens` in the given order; duplicates and
    /// specials in the input are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.push(t);
            }
        }
        v
    }

    fn push(&mut self, t: String) {
        self.index.insert(t.clone(), self.tokens.len());
        self.tokens.push(t);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown-token id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-special tokens, one per line; line `k` is id `4 + k`.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens[SPECIALS.len()..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_lines(text: &str) -> Vocab {
        Vocab::from_tokens(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_lines()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocab> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Vocab::from_lines(&text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_count_filtering() {
        let v = Vocab::build(["a", "b", "a"], 1).unwrap();
        assert_eq!(&v.tokens()[4..], ["a", "b"]);
        let v = Vocab::build(["a", "b", "a"], 2).unwrap();
        assert_eq!(&v.tokens()[4..], ["a"]);
        assert_eq!(v.id("b"), Vocab::UNK_ID);
        assert_eq!(v.id("zzz"), Vocab::UNK_ID);
    }

    #[test]
    fn specials_once_and_first() {
        let v = Vocab::build(["<s>", "x", "</s>", "<unk>"], 1).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "<s>", "</s>", "x"]);
        assert_eq!(v.id(START), Vocab::START_ID);
        assert_eq!(v.id(END), Vocab::END_ID);
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocab::build(["b", "c", "a", "c", "b"], 1).unwrap();
        assert_eq!(&v.tokens()[4..], ["b", "c", "a"]);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(Vocab::build(Vec::<String>::new(), 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::build(["x", "y", "y", "z"], 1).unwrap();
        let text = v.to_lines();
        assert_eq!(text, "y\nx\nz\n");
        assert_eq!(Vocab::from_lines(&text), v);
    }
}
