use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// BiLSTM over the depth-first linearization.
    Seq,
    /// Graph-state LSTM over the nodes.
    Graph,
}

/// Which neighbours feed a graph-state transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphDirection {
    Both,
    IncomingOnly,
    OutgoingOnly,
}

/// Which LSTM directions the sequence encoder runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeqDirection {
    Both,
    ForwardOnly,
    BackwardOnly,
}

/// Architecture. Stored in every checkpoint and fixed for its lifetime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub word_dim: usize,
    /// Width of `x_j` after the input projection.
    pub input_dim: usize,
    pub edge_label_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    /// Characters read per token by the character LSTM.
    pub max_chars: usize,
    pub steps: usize,
    /// Edges summed per direction in a graph-state transition.
    pub max_neighbors: usize,
    pub graph_direction: GraphDirection,
    pub seq_direction: SeqDirection,
    pub copy: bool,
    pub char: bool,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Graph,
            hidden: 300,
            word_dim: 300,
            input_dim: 300,
            edge_label_dim: 300,
            char_dim: 100,
            char_hidden: 100,
            max_chars: 20,
            steps: 9,
            max_neighbors: 10,
            graph_direction: GraphDirection::Both,
            seq_direction: SeqDirection::Both,
            copy: true,
            char: true,
            freeze_embeddings: true,
        }
    }
}

impl ModelConfig {
    /// All widths set to `hidden`, character sizes left at their defaults.
    pub fn with_hidden(hidden: usize) -> Self {
        ModelConfig {
            hidden,
            word_dim: hidden,
            input_dim: hidden,
            edge_label_dim: hidden,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("word_dim", self.word_dim),
            ("input_dim", self.input_dim),
            ("edge_label_dim", self.edge_label_dim),
            ("max_neighbors", self.max_neighbors),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.char && (self.char_dim == 0 || self.char_hidden == 0 || self.max_chars == 0) {
            return Err(Error::Config("character sizes must be positive".into()));
        }
        Ok(())
    }

    /// Width of the token/node representation fed to the input projection.
    pub fn token_feature_dim(&self) -> usize {
        self.word_dim + if self.char { self.char_hidden } else { 0 }
    }

    pub fn memory_dim(&self) -> usize {
        let enc = match (self.encoder, self.seq_direction) {
            (EncoderKind::Graph, _) => self.hidden,
            (EncoderKind::Seq, SeqDirection::Both) => 2 * self.hidden,
            (EncoderKind::Seq, _) => self.hidden,
        };
        enc + self.input_dim
    }
}

/// Optimisation and decoding settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub min_count: usize,
    pub beam: usize,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            dropout: 0.1,
            epochs: 30,
            batch_size: 16,
            seed: 1,
            clip_norm: 5.0,
            min_count: 1,
            beam: 5,
            max_len: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.beam == 0 || self.max_len == 0 {
            return Err(Error::Config("batch size, beam and max_len must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let m = ModelConfig::default();
        assert_eq!((m.hidden, m.word_dim, m.char_dim, m.char_hidden), (300, 300, 100, 100));
        assert_eq!((m.steps, m.max_neighbors, m.max_chars), (9, 10, 20));
        assert_eq!(m.token_feature_dim(), 400);
        let t = TrainConfig::default();
        assert_eq!(
            (t.lr, t.dropout, t.beam, t.max_len, t.clip_norm),
            (0.001, 0.1, 5, 100, 5.0)
        );
    }

    #[test]
    fn memory_widths() {
        let mut m = ModelConfig::default();
        assert_eq!(m.memory_dim(), 600);
        m.encoder = EncoderKind::Seq;
        assert_eq!(m.memory_dim(), 900);
        m.seq_direction = SeqDirection::ForwardOnly;
        assert_eq!(m.memory_dim(), 600);
    }

    #[test]
    fn json_round_trip() {
        let m = ModelConfig::with_hidden(8);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"graph\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), m);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig {
            hidden: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            dropout: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
