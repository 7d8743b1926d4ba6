//! Batch forward pass: embedding lookup with PAD masking, two bidirectional
//! LSTM layers, inverted dropout (train only), dense ReLU layer, softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{scan, DirTrace, Direction};
use super::params::ModelParameters;
use super::ModelError;
use crate::par;
use crate::tokenizer::PAD;

pub const LOSS_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the backward pass needs about one batch item. Masked steps
/// are encoded as the directional traces' `None` gate entries.
#[derive(Debug, Clone)]
pub(crate) struct ItemTrace {
    pub tokens: Vec<u32>,
    pub l1_fwd: DirTrace,
    pub l1_bwd: DirTrace,
    /// Scaled keep factors (0 or 1/(1-rate)); None when dropout is inactive.
    pub drop1: Option<Vec<Vec<f64>>>,
    /// Layer-2 input sequence (layer-1 output after dropout), n × 2H.
    pub l1_dropped: Vec<Vec<f64>>,
    pub l2_fwd: DirTrace,
    pub l2_bwd: DirTrace,
    pub drop2: Option<Vec<f64>>,
    /// Dense input (layer-2 final output after dropout), 2H.
    pub l2_dropped: Vec<f64>,
    /// Dense output after ReLU (its sign encodes the ReLU derivative), D.
    pub dense_out: Vec<f64>,
    pub drop3: Option<Vec<f64>>,
    /// Output-layer input (dense output after dropout), D.
    pub dense_dropped: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Recorded activations of a `Mode::Train` forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) items: Vec<ItemTrace>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Multiclass log loss −ln p[target], floored at [`LOSS_PROB_FLOOR`].
pub fn loss(probs: &[f64], target: u32) -> f64 {
    debug_assert!(target >= 1, "PAD is never a prediction target");
    -probs[target as usize].max(LOSS_PROB_FLOOR).ln()
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

fn apply_mask(values: &[f64], mask: &[f64]) -> Vec<f64> {
    values.iter().zip(mask).map(|(v, m)| v * m).collect()
}

/// Forward one item. `dropout_seed` is Some only for TRAIN with a nonzero
/// dropout rate; `record` retains the trace for backprop.
pub(crate) fn forward_item(
    params: &ModelParameters,
    tokens: &[u32],
    dropout_seed: Option<u64>,
    record: bool,
) -> (Vec<f64>, Option<ItemTrace>) {
    let cfg = &params.config;
    let n = tokens.len();
    let h = cfg.lstm_units;
    let rate = cfg.dropout_rate;
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);

    let mask: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
    let embedded: Vec<&[f64]> = tokens
        .iter()
        .map(|&t| params.embedding.row(t as usize))
        .collect();

    let phi1 = cfg.layer1_activation;
    let (out1f, _, tr1f) = scan(&params.lstm1.fwd, phi1, &embedded, &mask, Direction::Fwd, record);
    let (out1b, _, tr1b) = scan(&params.lstm1.bwd, phi1, &embedded, &mask, Direction::Bwd, record);

    // Per-position [fwd; bwd] concatenation, then dropout.
    let mut drop1 = None;
    let mut l1_dropped: Vec<Vec<f64>> = Vec::with_capacity(n);
    for pos in 0..n {
        let mut row = Vec::with_capacity(2 * h);
        row.extend_from_slice(&out1f[pos]);
        row.extend_from_slice(&out1b[pos]);
        if let Some(rng) = rng.as_mut() {
            let m = dropout_mask(rng, 2 * h, rate);
            row = apply_mask(&row, &m);
            drop1.get_or_insert_with(|| Vec::with_capacity(n)).push(m);
        }
        l1_dropped.push(row);
    }

    let inputs2: Vec<&[f64]> = l1_dropped.iter().map(Vec::as_slice).collect();
    let phi2 = cfg.layer2_activation;
    let (_, fin2f, tr2f) = scan(&params.lstm2.fwd, phi2, &inputs2, &mask, Direction::Fwd, record);
    let (_, fin2b, tr2b) = scan(&params.lstm2.bwd, phi2, &inputs2, &mask, Direction::Bwd, record);

    let mut l2_final = Vec::with_capacity(2 * h);
    l2_final.extend_from_slice(&fin2f);
    l2_final.extend_from_slice(&fin2b);

    let drop2 = rng.as_mut().map(|rng| dropout_mask(rng, 2 * h, rate));
    let l2_dropped = match &drop2 {
        Some(m) => apply_mask(&l2_final, m),
        None => l2_final,
    };

    let mut dense_out = params.dense_b.clone();
    params.dense_w.matvec_add(&l2_dropped, &mut dense_out);
    for x in &mut dense_out {
        *x = x.max(0.0);
    }

    let drop3 = rng.as_mut().map(|rng| dropout_mask(rng, cfg.dense_units, rate));
    let dense_dropped = match &drop3 {
        Some(m) => apply_mask(&dense_out, m),
        None => dense_out.clone(),
    };

    let mut logits = params.out_b.clone();
    params.out_w.matvec_add(&dense_dropped, &mut logits);
    let probs = softmax(&logits);

    let trace = record.then(|| ItemTrace {
        tokens: tokens.to_vec(),
        l1_fwd: tr1f.unwrap(),
        l1_bwd: tr1b.unwrap(),
        drop1,
        l1_dropped,
        l2_fwd: tr2f.unwrap(),
        l2_bwd: tr2b.unwrap(),
        drop2,
        l2_dropped,
        dense_out,
        drop3,
        dense_dropped,
        probs: probs.clone(),
    });
    (probs, trace)
}

/// Batch forward. EVAL is deterministic (dropout off, no trace); TRAIN applies
/// inverted dropout and returns the trace for [`super::backward`]. `rng` is
/// required for TRAIN whenever the dropout rate is nonzero; per-item dropout
/// streams are derived from it up front so batch items can run in parallel
/// without changing results.
pub fn forward(
    params: &ModelParameters,
    contexts: &[&[u32]],
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<Vec<f64>>, Option<ForwardTrace>), ModelError> {
    let v = params.config.vocab_size;
    for ctx in contexts {
        for &t in ctx.iter() {
            if t as usize >= v {
                return Err(ModelError::TokenOutOfRange {
                    index: t,
                    vocab_size: v,
                });
            }
        }
    }

    let train = mode == Mode::Train;
    let dropout_active = train && params.config.dropout_rate > 0.0;
    let item_seeds: Option<Vec<u64>> = if dropout_active {
        let rng = rng.as_deref_mut().ok_or_else(|| ModelError::InvalidConfig {
            field: "rng".to_string(),
            reason: "TRAIN forward with dropout needs a generator".to_string(),
        })?;
        Some((0..contexts.len()).map(|_| rng.gen()).collect())
    } else {
        None
    };

    let results = par::map_indexed(contexts, |idx, ctx| {
        let seed = item_seeds.as_ref().map(|s| s[idx]);
        forward_item(params, ctx, seed, train)
    });

    let mut probs = Vec::with_capacity(results.len());
    let mut items = Vec::with_capacity(results.len());
    for (p, t) in results {
        probs.push(p);
        if let Some(t) = t {
            items.push(t);
        }
    }
    let trace = train.then_some(ForwardTrace { items });
    Ok((probs, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_model, ModelConfig};
    use crate::tokenizer::{FeatureScheme, Vocabulary};

    fn small_model(seed: u64) -> ModelParameters {
        let vocab = Vocabulary::build(["a", "b", "c", "d"]);
        let cfg = ModelConfig {
            window: 6,
            embed_dim: 5,
            lstm_units: 4,
            dense_units: 5,
            vocab_size: vocab.size(),
            seed,
            ..ModelConfig::default()
        };
        init_model(cfg, vocab, FeatureScheme::proto_byte()).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let m = small_model(3);
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 2, 3, 4, 5], &[0, 0, 0, 0, 0, 0]];
        let (probs, trace) = forward(&m, &ctxs, Mode::Eval, None).unwrap();
        assert!(trace.is_none());
        for row in &probs {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let m = small_model(3);
        let ctxs: Vec<&[u32]> = vec![&[0, 2, 3, 2, 3, 2]];
        let (a, _) = forward(&m, &ctxs, Mode::Eval, None).unwrap();
        let (b, _) = forward(&m, &ctxs, Mode::Eval, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_pad_contexts_share_one_output() {
        let m = small_model(9);
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 0, 0, 0, 0], &[0, 0, 0], &[]];
        let (probs, _) = forward(&m, &ctxs, Mode::Eval, None).unwrap();
        for row in &probs[1..] {
            for (a, b) in row.iter().zip(&probs[0]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_pad_output_is_dense_path_of_zero_states() {
        let m = small_model(11);
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 0, 0, 0, 0]];
        let (probs, _) = forward(&m, &ctxs, Mode::Eval, None).unwrap();

        let h2 = vec![0.0; 2 * m.config.lstm_units];
        let mut dense = m.dense_b.clone();
        m.dense_w.matvec_add(&h2, &mut dense);
        for x in &mut dense {
            *x = x.max(0.0);
        }
        let mut logits = m.out_b.clone();
        m.out_w.matvec_add(&dense, &mut logits);
        let expected = softmax(&logits);
        for (a, b) in probs[0].iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masking_ignores_pad_prefix() {
        let m = small_model(5);
        let padded: &[u32] = &[0, 0, 0, 2, 4, 3];
        let bare: &[u32] = &[2, 4, 3];
        let (probs, _) = forward(&m, &[padded, bare], Mode::Eval, None).unwrap();
        for (a, b) in probs[0].iter().zip(&probs[1]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_token_is_an_error() {
        let m = small_model(5);
        let err = forward(&m, &[&[99u32][..]], Mode::Eval, None).unwrap_err();
        assert!(matches!(err, ModelError::TokenOutOfRange { index: 99, .. }));
    }

    #[test]
    fn loss_identities() {
        let v = 4;
        let uniform = vec![1.0 / v as f64; v];
        assert!((loss(&uniform, 2) - (v as f64).ln()).abs() < 1e-12);
        let mut onehot = vec![0.0; v];
        onehot[3] = 1.0;
        assert_eq!(loss(&onehot, 3), 0.0);
        let mut half = vec![0.25; 4];
        half[1] = 0.5;
        assert!((loss(&half, 1) - 2f64.ln()).abs() < 1e-12);
    }
}
