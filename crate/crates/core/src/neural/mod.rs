//! Self-contained neural sequence-model core: embedding, two stacked
//! bidirectional LSTM layers with zero-masking, dropout, a dense layer, and a
//! softmax output, trained by exact backpropagation through time with Adam.
//!
//! All arithmetic is 64-bit. Given a seed, initialization, dropout, shuffling,
//! and the gradient reduction order are fully deterministic, so training is
//! bit-reproducible regardless of thread count.

mod backward;
mod forward;
mod io;
mod lstm;
pub mod mat;
mod params;
mod train;

pub use backward::backward;
pub use forward::{forward, loss, softmax, ForwardTrace, Mode};
pub use io::{load_model, save_model};
pub use lstm::lstm_cell_step;
pub use params::{init_model, Gradients, LstmParams, ModelParameters};
pub use train::train;

use thiserror::Error;

/// Candidate/output activation of an LSTM layer (gates stay sigmoid).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at pre-activation `x`; for ReLU the subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// All hyperparameters of the model and its training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub window: usize,
    pub embed_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub layer1_activation: Activation,
    pub layer2_activation: Activation,
    pub vocab_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: 10,
            embed_dim: 100,
            lstm_units: 50,
            dense_units: 100,
            dropout_rate: 0.2,
            layer1_activation: Activation::Identity,
            layer2_activation: Activation::Relu,
            vocab_size: 0,
            seed: 42,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 5,
            grad_clip_norm: 5.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("window", self.window),
            ("embed_dim", self.embed_dim),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ModelError::InvalidConfig {
                    field: field.to_string(),
                    reason: "must be at least 1".to_string(),
                });
            }
        }
        if self.vocab_size < 2 {
            return Err(ModelError::InvalidConfig {
                field: "vocab_size".to_string(),
                reason: "must include the reserved PAD and UNK indices".to_string(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig {
                field: "dropout_rate".to_string(),
                reason: "must lie in [0, 1)".to_string(),
            });
        }
        if !(self.learning_rate >= 0.0) {
            return Err(ModelError::InvalidConfig {
                field: "learning_rate".to_string(),
                reason: "must be non-negative".to_string(),
            });
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(ModelError::InvalidConfig {
                field: "grad_clip_norm".to_string(),
                reason: "must be positive".to_string(),
            });
        }
        Ok(())
    }

    /// Apply one `key=value` pair from config text. Returns false when the
    /// key is not a model field (callers may route it elsewhere).
    pub fn apply_kv_pair(&mut self, key: &str, value: &str) -> Result<bool, crate::kv::KvError> {
        use crate::kv::bad_value;
        macro_rules! parse {
            ($ty:ty, $what:expr) => {
                value
                    .parse::<$ty>()
                    .map_err(|_| bad_value(key, value, $what))?
            };
        }
        match key {
            "window" => self.window = parse!(usize, "expected positive integer"),
            "embed_dim" => self.embed_dim = parse!(usize, "expected positive integer"),
            "lstm_units" => self.lstm_units = parse!(usize, "expected positive integer"),
            "dense_units" => self.dense_units = parse!(usize, "expected positive integer"),
            "dropout_rate" => self.dropout_rate = parse!(f64, "expected fraction in [0,1)"),
            "layer1_activation" => {
                self.layer1_activation = Activation::parse(value)
                    .ok_or_else(|| bad_value(key, value, "expected identity or relu"))?
            }
            "layer2_activation" => {
                self.layer2_activation = Activation::parse(value)
                    .ok_or_else(|| bad_value(key, value, "expected identity or relu"))?
            }
            "seed" => self.seed = parse!(u64, "expected unsigned integer"),
            "learning_rate" => self.learning_rate = parse!(f64, "expected non-negative real"),
            "batch_size" => self.batch_size = parse!(usize, "expected positive integer"),
            "epochs" => self.epochs = parse!(usize, "expected positive integer"),
            "grad_clip_norm" => self.grad_clip_norm = parse!(f64, "expected positive real"),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("token index {index} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { index: u32, vocab_size: usize },
    #[error("forward trace does not match: {reason}")]
    TraceMismatch { reason: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("model file field {field}: {reason}")]
    Format { field: String, reason: String },
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}
