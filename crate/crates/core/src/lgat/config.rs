use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LgatError;
use crate::embed::EmbedderSpec;
use crate::graph::GraphOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small dimensions that train on one CPU core.
    Desk,
    /// Published hyperparameters; needs a large-memory machine.
    Paper,
}

/// Hyperparameters of the fusion summarizer.
///
/// `Default` is the desk profile. [`LgatConfig::paper`] carries the published
/// values (architecture dimension 4096, text encoder 1024, decoder feed-forward
/// 8192, target length 2284, 6 decoder layers with 8 heads, dropout 0.15,
/// learning rate 1e-5, 20 epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LgatConfig {
    pub profile: Profile,
    pub seed: u64,
    pub embedder: EmbedderSpec,
    pub graph: GraphOptions,

    /// Width shared by both encodings and the decoder.
    pub architecture_dim: usize,
    /// Input node feature width; must match the embedder.
    pub graph_dim: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_head_dim: usize,
    pub gat_negative_slope: f64,

    pub encoding_dim: usize,
    pub encoder_heads: usize,
    /// Rows in the hashed token table of the chunk encoder.
    pub text_buckets: usize,
    pub max_tokens: usize,
    pub pooler_heads: usize,

    pub fusion_heads: usize,

    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub decoder_ff_dim: usize,
    pub max_target_len: usize,
    pub vocab_min_freq: usize,

    pub attention_dropout: f64,
    pub fusion_dropout: f64,
    pub decoder_dropout: f64,

    pub lr: f64,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
}

impl Default for LgatConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl LgatConfig {
    pub fn desk() -> Self {
        LgatConfig {
            profile: Profile::Desk,
            seed: 0,
            embedder: EmbedderSpec::default(),
            graph: GraphOptions::default(),
            architecture_dim: 128,
            graph_dim: crate::embed::DEFAULT_DIM,
            gat_layers: 2,
            gat_heads: 4,
            gat_head_dim: 16,
            gat_negative_slope: 0.2,
            encoding_dim: 64,
            encoder_heads: 4,
            text_buckets: 4096,
            max_tokens: 64,
            pooler_heads: 8,
            fusion_heads: 8,
            decoder_layers: 2,
            decoder_heads: 8,
            decoder_ff_dim: 256,
            max_target_len: 64,
            vocab_min_freq: 1,
            attention_dropout: 0.15,
            fusion_dropout: 0.15,
            decoder_dropout: 0.15,
            lr: 1e-3,
            epochs: 20,
            max_steps: None,
        }
    }

    pub fn paper() -> Self {
        LgatConfig {
            profile: Profile::Paper,
            architecture_dim: 4096,
            gat_heads: 8,
            gat_head_dim: 64,
            encoding_dim: 1024,
            encoder_heads: 8,
            text_buckets: 50_000,
            max_tokens: 4096,
            decoder_layers: 6,
            decoder_ff_dim: 8192,
            max_target_len: 2284,
            vocab_min_freq: 2,
            lr: 1e-5,
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Tiny dimensions for gradient checks and smoke tests.
    pub fn tiny() -> Self {
        LgatConfig {
            embedder: EmbedderSpec::Hashing { dim: 16, seed: 0 },
            architecture_dim: 16,
            graph_dim: 16,
            gat_layers: 2,
            gat_heads: 2,
            gat_head_dim: 4,
            encoding_dim: 8,
            encoder_heads: 2,
            text_buckets: 64,
            max_tokens: 8,
            pooler_heads: 2,
            fusion_heads: 2,
            decoder_layers: 1,
            decoder_heads: 2,
            decoder_ff_dim: 16,
            max_target_len: 16,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), LgatError> {
        let positive = [
            ("architecture_dim", self.architecture_dim),
            ("graph_dim", self.graph_dim),
            ("gat_layers", self.gat_layers),
            ("gat_heads", self.gat_heads),
            ("gat_head_dim", self.gat_head_dim),
            ("encoding_dim", self.encoding_dim),
            ("encoder_heads", self.encoder_heads),
            ("text_buckets", self.text_buckets),
            ("max_tokens", self.max_tokens),
            ("pooler_heads", self.pooler_heads),
            ("fusion_heads", self.fusion_heads),
            ("decoder_layers", self.decoder_layers),
            ("decoder_heads", self.decoder_heads),
            ("decoder_ff_dim", self.decoder_ff_dim),
            ("max_target_len", self.max_target_len),
            ("vocab_min_freq", self.vocab_min_freq),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(LgatError::Config(format!("{name} must be positive")));
        }
        let divisible = [
            ("encoder_heads", self.encoding_dim, self.encoder_heads),
            ("pooler_heads", self.architecture_dim, self.pooler_heads),
            ("fusion_heads", self.architecture_dim, self.fusion_heads),
            ("decoder_heads", self.architecture_dim, self.decoder_heads),
        ];
        for (name, dim, heads) in divisible {
            if dim % heads != 0 {
                return Err(LgatError::Config(format!("{name}={heads} does not divide {dim}")));
            }
        }
        for (name, p) in [
            ("attention_dropout", self.attention_dropout),
            ("fusion_dropout", self.fusion_dropout),
            ("decoder_dropout", self.decoder_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(LgatError::Config(format!("{name}={p} outside [0, 1)")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(LgatError::Config(format!("learning rate {}", self.lr)));
        }
        if self.profile == Profile::Desk && self.architecture_dim > 512 {
            return Err(LgatError::Config("desk profile requires architecture_dim <= 512".into()));
        }
        if let EmbedderSpec::Hashing { dim, .. } = self.embedder {
            if dim != self.graph_dim {
                return Err(LgatError::ConfigMismatch(format!(
                    "embedder dimension {dim} differs from graph_dim {}",
                    self.graph_dim
                )));
            }
        }
        Ok(())
    }

    /// Replaces fields named in the JSON object `overrides`; unknown keys
    /// are rejected.
    pub fn with_overrides(self, overrides: &serde_json::Value) -> Result<Self, LgatError> {
        let serde_json::Value::Object(patch) = overrides else {
            return Err(LgatError::Config("configuration must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(&self).expect("config serializes");
        let fields = base.as_object_mut().expect("config is an object");
        for (key, value) in patch {
            if !fields.contains_key(key) {
                return Err(LgatError::Config(format!("unknown configuration key {key:?}")));
            }
            fields.insert(key.clone(), value.clone());
        }
        serde_json::from_value(base).map_err(|e| LgatError::Config(e.to_string()))
    }

    /// Same model with every dropout disabled.
    pub fn without_dropout(mut self) -> Self {
        self.attention_dropout = 0.0;
        self.fusion_dropout = 0.0;
        self.decoder_dropout = 0.0;
        self
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        LgatConfig::desk().validate().unwrap();
        LgatConfig::tiny().validate().unwrap();
        let paper = LgatConfig::paper();
        paper.validate().unwrap();
        assert_eq!(paper.architecture_dim, 4096);
        assert_eq!(paper.max_target_len, 2284);
        assert_eq!(paper.lr, 1e-5);
    }

    #[test]
    fn partial_json_fills_desk_defaults() {
        let c: LgatConfig = serde_json::from_str(r#"{"architecture_dim": 64, "seed": 3}"#).unwrap();
        assert_eq!(c.architecture_dim, 64);
        assert_eq!(c.decoder_ff_dim, 256);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn overrides_apply_on_top_of_profile() {
        let c = LgatConfig::paper().with_overrides(&serde_json::json!({"epochs": 3})).unwrap();
        assert_eq!((c.epochs, c.architecture_dim), (3, 4096));
        assert!(LgatConfig::desk().with_overrides(&serde_json::json!({"nope": 1})).is_err());
        assert!(LgatConfig::desk().with_overrides(&serde_json::json!([1])).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = LgatConfig::desk();
        c.architecture_dim = 1024;
        assert!(c.validate().is_err());
        let mut c = LgatConfig::desk();
        c.decoder_heads = 3;
        assert!(c.validate().is_err());
        let mut c = LgatConfig::desk();
        c.embedder = EmbedderSpec::Hashing { dim: 32, seed: 0 };
        assert!(matches!(c.validate(), Err(LgatError::ConfigMismatch(_))));
    }
}
