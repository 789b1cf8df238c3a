use std::collections::{HashMap, HashSet};

use super::{AmrError, AmrGraph, Edge, Node};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Quoted(String),
    Symbol(String),
}

fn err(position: usize, message: impl Into<String>) -> AmrError {
    AmrError::Parse {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, AmrError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let is_delim = |b: u8| b.is_ascii_whitespace() || matches!(b, b'(' | b')' | b'"' | b'/');
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            _ if b.is_ascii_whitespace() => i += 1,
            b'(' => {
                toks.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                toks.push((i, Tok::Close));
                i += 1;
            }
            b'/' => {
                toks.push((i, Tok::Slash));
                i += 1;
            }
            b'"' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(err(start, "unterminated string literal"));
                }
                i += 1;
                toks.push((start, Tok::Quoted(text[start..i].to_string())));
            }
            b':' => {
                let start = i;
                i += 1;
                while i < bytes.len() && !is_delim(bytes[i]) {
                    i += 1;
                }
                if i == start + 1 {
                    return Err(err(start, "empty role name"));
                }
                toks.push((start, Tok::Role(text[start + 1..i].to_string())));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !is_delim(bytes[i]) {
                    i += 1;
                }
                toks.push((start, Tok::Symbol(text[start..i].to_string())));
            }
        }
    }
    Ok(toks)
}

/// A bare symbol in value position that looks like a variable (`p`, `w2`)
/// rather than a constant (`-`, `imperative`, `3`).
fn looks_like_variable(s: &str) -> bool {
    let letters = s.bytes().take_while(|b| b.is_ascii_lowercase()).count();
    let digits = s.len() - letters;
    letters >= 1 && s.bytes().skip(letters).all(|b| b.is_ascii_digit()) && (letters == 1 || digits > 0)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    vars: HashMap<String, usize>,
    declared: HashSet<&'a str>,
    /// (edge slot, symbol, byte offset) for bare symbols resolved after parsing.
    pending: Vec<(usize, String, usize)>,
    constants: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a (usize, Tok)> {
        self.toks.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<&'a (usize, Tok)> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn constant(&mut self, literal: String) -> usize {
        let id = format!("#{}", self.constants);
        self.constants += 1;
        self.nodes.push(Node {
            id,
            concept: literal,
            constant: true,
        });
        self.nodes.len() - 1
    }

    fn node(&mut self) -> Result<usize, AmrError> {
        let open_at = self.offset();
        match self.next() {
            Some((_, Tok::Open)) => {}
            _ => return Err(err(open_at, "expected `(`")),
        }
        let var_at = self.offset();
        let var = match self.next() {
            Some((_, Tok::Symbol(s))) => s.clone(),
            other => return Err(err(other.map(|t| t.0).unwrap_or(self.end), "expected a variable")),
        };
        if self.vars.contains_key(&var) {
            return Err(err(var_at, format!("duplicate variable `{}`", var)));
        }
        match self.next() {
            Some((_, Tok::Slash)) => {}
            other => return Err(err(other.map(|t| t.0).unwrap_or(self.end), "expected `/`")),
        }
        let concept = match self.next() {
            Some((_, Tok::Symbol(s))) | Some((_, Tok::Quoted(s))) => s.clone(),
            other => return Err(err(other.map(|t| t.0).unwrap_or(self.end), "expected a concept")),
        };
        let index = self.nodes.len();
        self.vars.insert(var.clone(), index);
        self.nodes.push(Node {
            id: var,
            concept,
            constant: false,
        });

        loop {
            let at = self.offset();
            match self.next() {
                Some((_, Tok::Close)) => return Ok(index),
                Some((_, Tok::Role(label))) => {
                    let slot = self.edges.len();
                    self.edges.push(Edge {
                        source: index,
                        target: usize::MAX,
                        label: label.clone(),
                    });
                    let vat = self.offset();
                    let target = match self.peek() {
                        Some((_, Tok::Open)) => self.node()?,
                        Some((_, Tok::Quoted(s))) => {
                            self.pos += 1;
                            self.constant(s.clone())
                        }
                        Some((_, Tok::Symbol(s))) => {
                            self.pos += 1;
                            if self.declared.contains(s.as_str()) {
                                self.pending.push((slot, s.clone(), vat));
                                usize::MAX
                            } else if looks_like_variable(s) {
                                return Err(err(vat, format!("undeclared variable `{}`", s)));
                            } else {
                                self.constant(s.clone())
                            }
                        }
                        _ => return Err(err(vat, format!("missing value for :{}", label))),
                    };
                    self.edges[slot].target = target;
                }
                None => return Err(err(self.end, "unbalanced parentheses: missing `)`")),
                Some(_) => return Err(err(at, "expected a role or `)`")),
            }
        }
    }
}

/// Parses a single PENMAN expression.
///
/// Bare symbols in value position resolve to a declared variable when one
/// exists (the declaration may come later in the text). Otherwise a
/// variable-like symbol is an error and anything else becomes a constant node.
pub fn parse_penman(text: &str) -> Result<AmrGraph, AmrError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
        nodes: Vec::new(),
        edges: Vec::new(),
        vars: HashMap::new(),
        declared: toks
            .windows(3)
            .filter_map(|w| match (&w[0].1, &w[1].1, &w[2].1) {
                (Tok::Open, Tok::Symbol(v), Tok::Slash) => Some(v.as_str()),
                _ => None,
            })
            .collect(),
        pending: Vec::new(),
        constants: 0,
    };
    if toks.is_empty() {
        return Err(err(0, "empty input"));
    }
    let root = p.node()?;
    if let Some((at, tok)) = p.peek() {
        let msg = if *tok == Tok::Close {
            "unbalanced parentheses: unexpected `)`"
        } else {
            "trailing content after the expression"
        };
        return Err(err(*at, msg));
    }
    let pending = std::mem::take(&mut p.pending);
    for (slot, symbol, at) in pending {
        let target = p.vars[&symbol];
        if target == p.edges[slot].source {
            return Err(err(at, format!("self-loop on `{}`", symbol)));
        }
        p.edges[slot].target = target;
    }
    let graph = AmrGraph::new(p.nodes, p.edges, root)?;
    debug_assert!(graph.is_connected());
    Ok(graph)
}
