//! Model parameters, gradients, and seeded initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mat::{add_assign_slice, Mat};
use super::{ModelConfig, ModelError};
use crate::tokenizer::{FeatureScheme, Vocabulary};

/// One LSTM direction: input weights (4·units × input_dim), recurrent weights
/// (4·units × units), and bias (4·units). Gate rows are ordered
/// [input, forget, candidate, output].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl LstmParams {
    fn zeros(units: usize, input_dim: usize) -> LstmParams {
        LstmParams {
            w: Mat::zeros(4 * units, input_dim),
            u: Mat::zeros(4 * units, units),
            b: vec![0.0; 4 * units],
        }
    }

    pub fn units(&self) -> usize {
        self.u.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    fn zeros(units: usize, input_dim: usize) -> BiLstmParams {
        BiLstmParams {
            fwd: LstmParams::zeros(units, input_dim),
            bwd: LstmParams::zeros(units, input_dim),
        }
    }
}

/// All weights of the embedding → bi-LSTM ×2 → dense → softmax stack, plus
/// the configuration, vocabulary, and feature scheme they were built for.
/// Embedding row 0 (PAD) is pinned to the zero vector.
#[derive(Debug, Clone)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub scheme: FeatureScheme,
    pub embedding: Mat,
    pub lstm1: BiLstmParams,
    pub lstm2: BiLstmParams,
    pub dense_w: Mat,
    pub dense_b: Vec<f64>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

/// Gradient (or any parameter-shaped accumulator) matching [`ModelParameters`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding: Mat,
    pub lstm1: BiLstmParams,
    pub lstm2: BiLstmParams,
    pub dense_w: Mat,
    pub dense_b: Vec<f64>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParameters) -> Gradients {
        let cfg = &params.config;
        Gradients {
            embedding: Mat::zeros(cfg.vocab_size, cfg.embed_dim),
            lstm1: BiLstmParams::zeros(cfg.lstm_units, cfg.embed_dim),
            lstm2: BiLstmParams::zeros(cfg.lstm_units, 2 * cfg.lstm_units),
            dense_w: Mat::zeros(cfg.dense_units, 2 * cfg.lstm_units),
            dense_b: vec![0.0; cfg.dense_units],
            out_w: Mat::zeros(cfg.vocab_size, cfg.dense_units),
            out_b: vec![0.0; cfg.vocab_size],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self
            .flat_tensors_mut()
            .into_iter()
            .zip(other.flat_tensors())
        {
            add_assign_slice(a, b);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.flat_tensors()
            .into_iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for tensor in self.flat_tensors_mut() {
            for g in tensor.iter_mut() {
                *g *= factor;
            }
        }
    }

    /// Tensor payloads in the fixed canonical order shared with
    /// [`ModelParameters::flat_tensors`].
    pub fn flat_tensors(&self) -> Vec<&[f64]> {
        vec![
            self.embedding.data(),
            self.lstm1.fwd.w.data(),
            self.lstm1.fwd.u.data(),
            &self.lstm1.fwd.b,
            self.lstm1.bwd.w.data(),
            self.lstm1.bwd.u.data(),
            &self.lstm1.bwd.b,
            self.lstm2.fwd.w.data(),
            self.lstm2.fwd.u.data(),
            &self.lstm2.fwd.b,
            self.lstm2.bwd.w.data(),
            self.lstm2.bwd.u.data(),
            &self.lstm2.bwd.b,
            self.dense_w.data(),
            &self.dense_b,
            self.out_w.data(),
            &self.out_b,
        ]
    }

    pub fn flat_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.embedding.data_mut(),
            self.lstm1.fwd.w.data_mut(),
            self.lstm1.fwd.u.data_mut(),
            &mut self.lstm1.fwd.b,
            self.lstm1.bwd.w.data_mut(),
            self.lstm1.bwd.u.data_mut(),
            &mut self.lstm1.bwd.b,
            self.lstm2.fwd.w.data_mut(),
            self.lstm2.fwd.u.data_mut(),
            &mut self.lstm2.fwd.b,
            self.lstm2.bwd.w.data_mut(),
            self.lstm2.bwd.u.data_mut(),
            &mut self.lstm2.bwd.b,
            self.dense_w.data_mut(),
            &mut self.dense_b,
            self.out_w.data_mut(),
            &mut self.out_b,
        ]
    }
}

/// Canonical tensor names, paired with shapes in the model file.
pub(crate) const TENSOR_NAMES: [&str; 17] = [
    "embedding",
    "lstm1.fwd.w",
    "lstm1.fwd.u",
    "lstm1.fwd.b",
    "lstm1.bwd.w",
    "lstm1.bwd.u",
    "lstm1.bwd.b",
    "lstm2.fwd.w",
    "lstm2.fwd.u",
    "lstm2.fwd.b",
    "lstm2.bwd.w",
    "lstm2.bwd.u",
    "lstm2.bwd.b",
    "dense_w",
    "dense_b",
    "out_w",
    "out_b",
];

impl ModelParameters {
    pub fn flat_tensors(&self) -> Vec<&[f64]> {
        vec![
            self.embedding.data(),
            self.lstm1.fwd.w.data(),
            self.lstm1.fwd.u.data(),
            &self.lstm1.fwd.b,
            self.lstm1.bwd.w.data(),
            self.lstm1.bwd.u.data(),
            &self.lstm1.bwd.b,
            self.lstm2.fwd.w.data(),
            self.lstm2.fwd.u.data(),
            &self.lstm2.fwd.b,
            self.lstm2.bwd.w.data(),
            self.lstm2.bwd.u.data(),
            &self.lstm2.bwd.b,
            self.dense_w.data(),
            &self.dense_b,
            self.out_w.data(),
            &self.out_b,
        ]
    }

    pub fn flat_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.embedding.data_mut(),
            self.lstm1.fwd.w.data_mut(),
            self.lstm1.fwd.u.data_mut(),
            &mut self.lstm1.fwd.b,
            self.lstm1.bwd.w.data_mut(),
            self.lstm1.bwd.u.data_mut(),
            &mut self.lstm1.bwd.b,
            self.lstm2.fwd.w.data_mut(),
            self.lstm2.fwd.u.data_mut(),
            &mut self.lstm2.fwd.b,
            self.lstm2.bwd.w.data_mut(),
            self.lstm2.bwd.u.data_mut(),
            &mut self.lstm2.bwd.b,
            self.dense_w.data_mut(),
            &mut self.dense_b,
            self.out_w.data_mut(),
            &mut self.out_b,
        ]
    }

    /// Tensor shapes in canonical order (rows, cols); vectors use cols = 1.
    pub(crate) fn tensor_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
        let v = config.vocab_size;
        let e = config.embed_dim;
        let h = config.lstm_units;
        let d = config.dense_units;
        let lstm = |input: usize| [(4 * h, input), (4 * h, h), (4 * h, 1)];
        let mut shapes = vec![(v, e)];
        shapes.extend(lstm(e));
        shapes.extend(lstm(e));
        shapes.extend(lstm(2 * h));
        shapes.extend(lstm(2 * h));
        shapes.push((d, 2 * h));
        shapes.push((d, 1));
        shapes.push((v, d));
        shapes.push((v, 1));
        shapes
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, mat: &mut Mat) {
    let limit = (6.0 / (mat.rows() + mat.cols()) as f64).sqrt();
    for w in mat.data_mut() {
        *w = (rng.gen::<f64>() * 2.0 - 1.0) * limit;
    }
}

/// Set the forget-gate slice of an LSTM bias to 1.0, everything else stays 0.
fn init_lstm_bias(b: &mut [f64], units: usize) {
    for x in &mut b[units..2 * units] {
        *x = 1.0;
    }
}

/// Build a model with weights drawn uniformly from
/// ±√(6/(fan_in+fan_out)) per matrix, deterministic in `config.seed`.
/// Biases are zero except the LSTM forget gates (1.0); embedding row 0 is
/// zeroed for PAD.
pub fn init_model(
    config: ModelConfig,
    vocab: Vocabulary,
    scheme: FeatureScheme,
) -> Result<ModelParameters, ModelError> {
    config.validate()?;
    if vocab.size() != config.vocab_size {
        return Err(ModelError::InvalidConfig {
            field: "vocab_size".to_string(),
            reason: format!(
                "config says {} but vocabulary has {}",
                config.vocab_size,
                vocab.size()
            ),
        });
    }

    let h = config.lstm_units;
    let mut params = ModelParameters {
        embedding: Mat::zeros(config.vocab_size, config.embed_dim),
        lstm1: BiLstmParams::zeros(h, config.embed_dim),
        lstm2: BiLstmParams::zeros(h, 2 * h),
        dense_w: Mat::zeros(config.dense_units, 2 * h),
        dense_b: vec![0.0; config.dense_units],
        out_w: Mat::zeros(config.vocab_size, config.dense_units),
        out_b: vec![0.0; config.vocab_size],
        config,
        vocab,
        scheme,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.config.seed);
    fill_uniform(&mut rng, &mut params.embedding);
    for layer in [&mut params.lstm1, &mut params.lstm2] {
        for dir in [&mut layer.fwd, &mut layer.bwd] {
            fill_uniform(&mut rng, &mut dir.w);
            fill_uniform(&mut rng, &mut dir.u);
            init_lstm_bias(&mut dir.b, h);
        }
    }
    fill_uniform(&mut rng, &mut params.dense_w);
    fill_uniform(&mut rng, &mut params.out_w);

    params.embedding.row_mut(0).fill(0.0);
    Ok(params)
}
