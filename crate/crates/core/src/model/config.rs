use std::collections::BTreeMap;

use super::ModelError;

/// Encoder architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub type_vocab_size: usize,
    /// One block reused by every layer.
    pub share_parameters: bool,
    pub dropout_rate: f64,
    /// Size of the token-classification label set; 0 means no NER head.
    pub num_labels: usize,
}

impl ModelConfig {
    /// Base column of the pretraining table: 12 layers, hidden 768, 12 heads.
    pub fn base() -> Self {
        Self {
            vocab_size: 30_000,
            embedding_size: 128,
            hidden_size: 768,
            num_layers: 12,
            num_heads: 12,
            intermediate_size: 3072,
            max_positions: 512,
            type_vocab_size: 2,
            share_parameters: true,
            dropout_rate: 0.0,
            num_labels: 0,
        }
    }

    /// Large column: 24 layers, hidden 1024, 16 heads.
    pub fn large() -> Self {
        Self {
            hidden_size: 1024,
            num_layers: 24,
            num_heads: 16,
            intermediate_size: 4096,
            ..Self::base()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size == 0 || self.embedding_size == 0 || self.hidden_size == 0 {
            return bad("vocab, embedding and hidden sizes must be positive".into());
        }
        if self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.embedding_size > self.hidden_size {
            return bad(format!(
                "embedding_size {} exceeds hidden_size {}",
                self.embedding_size, self.hidden_size
            ));
        }
        if self.intermediate_size == 0 || self.max_positions == 0 || self.type_vocab_size == 0 {
            return bad("intermediate size, positions and type vocab must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn to_header(&self) -> BTreeMap<String, String> {
        [
            ("vocab_size", self.vocab_size.to_string()),
            ("embedding_size", self.embedding_size.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("num_layers", self.num_layers.to_string()),
            ("num_heads", self.num_heads.to_string()),
            ("intermediate_size", self.intermediate_size.to_string()),
            ("max_positions", self.max_positions.to_string()),
            ("type_vocab_size", self.type_vocab_size.to_string()),
            ("share_parameters", self.share_parameters.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("num_labels", self.num_labels.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_header(h: &BTreeMap<String, String>) -> Result<Self, ModelError> {
        fn get<T: std::str::FromStr>(h: &BTreeMap<String, String>, key: &str) -> Result<T, ModelError> {
            let raw = h
                .get(key)
                .ok_or_else(|| ModelError::Corrupt(format!("header missing {key}")))?;
            raw.parse()
                .map_err(|_| ModelError::Corrupt(format!("header {key}={raw:?} unparsable")))
        }
        let cfg = Self {
            vocab_size: get(h, "vocab_size")?,
            embedding_size: get(h, "embedding_size")?,
            hidden_size: get(h, "hidden_size")?,
            num_layers: get(h, "num_layers")?,
            num_heads: get(h, "num_heads")?,
            intermediate_size: get(h, "intermediate_size")?,
            max_positions: get(h, "max_positions")?,
            type_vocab_size: get(h, "type_vocab_size")?,
            share_parameters: get(h, "share_parameters")?,
            dropout_rate: get(h, "dropout_rate")?,
            num_labels: get(h, "num_labels")?,
        };
        cfg.validate().map_err(|e| ModelError::Corrupt(e.to_string()))?;
        Ok(cfg)
    }
}

/// Which task heads to include alongside the encoder and pooler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSet {
    pub mlm: bool,
    pub sop: bool,
    pub ner: bool,
}

impl HeadSet {
    pub const NONE: Self = Self {
        mlm: false,
        sop: false,
        ner: false,
    };
    pub const PRETRAINING: Self = Self {
        mlm: true,
        sop: true,
        ner: false,
    };
    pub const NER: Self = Self {
        mlm: false,
        sop: false,
        ner: true,
    };
    pub const ALL: Self = Self {
        mlm: true,
        sop: true,
        ner: true,
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip() {
        let mut c = ModelConfig::base();
        c.num_labels = 3;
        assert_eq!(ModelConfig::from_header(&c.to_header()).unwrap(), c);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::base();
        c.num_heads = 7;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::base();
        c.embedding_size = 1000;
        assert!(c.validate().is_err());
        assert!(ModelConfig::large().validate().is_ok());
    }
}
