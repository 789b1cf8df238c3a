//! AMR corpus files: blank-line separated PENMAN blocks with `# ::snt` and
//! `# ::id` comment lines.

use std::path::Path;

use crate::amr::{parse_penman, AmrGraph};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: Option<String>,
    pub graph: AmrGraph,
    /// Lowercased whitespace tokens of the sentence; empty when the block has
    /// no `# ::snt` line.
    pub tokens: Vec<String>,
}

/// Lowercase, then split on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.to_lowercase().split_whitespace().map(str::to_string).collect()
}

fn comment_field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.trim_start_matches('#').trim_start();
    let rest = rest.strip_prefix(key)?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut start_line = 1;
    let lines: Vec<&str> = text.lines().collect();
    for (n, line) in lines.iter().chain(std::iter::once(&"")).enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                if let Some(ex) =
                    parse_block(&block).map_err(|e| Error::Format(format!("block at line {start_line}: {e}")))?
                {
                    out.push(ex);
                }
                block.clear();
            }
            start_line = n + 2;
        } else {
            block.push(line);
        }
    }
    Ok(out)
}

fn parse_block(lines: &[&str]) -> Result<Option<Example>> {
    let mut id = None;
    let mut snt = None;
    let mut body = String::new();
    for line in lines {
        if line.trim_start().starts_with('#') {
            if let Some(v) = comment_field(line, "::snt") {
                snt = Some(v.to_string());
            } else if let Some(v) = comment_field(line, "::id") {
                id = v.split_whitespace().next().map(str::to_string);
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    if body.trim().is_empty() {
        return Ok(None);
    }
    let graph = parse_penman(&body)?;
    Ok(Some(Example {
        id,
        graph,
        tokens: snt.as_deref().map(tokenize).unwrap_or_default(),
    }))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_corpus(&text).map_err(|e| Error::Format(format!("{}: {}", path.as_ref().display(), e)))
}

/// One sentence per line.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Replaces the references of `examples` with the sentences of a parallel
/// one-per-line file.
pub fn attach_sentences(examples: &mut [Example], sentences: &[String]) -> Result<()> {
    if examples.len() != sentences.len() {
        return Err(Error::Mismatch(format!(
            "{} graphs but {} sentences",
            examples.len(),
            sentences.len()
        )));
    }
    for (ex, s) in examples.iter_mut().zip(sentences) {
        ex.tokens = tokenize(s);
    }
    Ok(())
}
