//! Exact gradients of the mean batch cross-entropy with respect to every
//! parameter, by backpropagation through time over the forward trace.

use super::forward::{ForwardTrace, ItemTrace};
use super::lstm::{scan_backward, Direction, LstmGradSink};
use super::mat::{add_assign_slice, axpy};
use super::params::{Gradients, ModelParameters};
use super::ModelError;
use crate::par;
use crate::tokenizer::PAD;

fn backward_item(
    params: &ModelParameters,
    item: &ItemTrace,
    target: u32,
    inv_batch: f64,
    grads: &mut Gradients,
) {
    let cfg = &params.config;
    let h = cfg.lstm_units;
    let n = item.tokens.len();

    // Softmax + cross-entropy: d_logits = (p - onehot) / batch.
    let mut d_logits = item.probs.clone();
    d_logits[target as usize] -= 1.0;
    for d in &mut d_logits {
        *d *= inv_batch;
    }

    // Output layer.
    add_assign_slice(&mut grads.out_b, &d_logits);
    grads.out_w.outer_add(&d_logits, &item.dense_dropped);
    let mut d_dense_dropped = vec![0.0; cfg.dense_units];
    params.out_w.matvec_t_add(&d_logits, &mut d_dense_dropped);

    // Dropout 3, then dense ReLU.
    if let Some(m) = &item.drop3 {
        for (d, f) in d_dense_dropped.iter_mut().zip(m) {
            *d *= f;
        }
    }
    let mut d_dense_pre = d_dense_dropped;
    for (d, &out) in d_dense_pre.iter_mut().zip(&item.dense_out) {
        if out <= 0.0 {
            *d = 0.0;
        }
    }
    add_assign_slice(&mut grads.dense_b, &d_dense_pre);
    grads.dense_w.outer_add(&d_dense_pre, &item.l2_dropped);
    let mut d_l2_final = vec![0.0; 2 * h];
    params.dense_w.matvec_t_add(&d_dense_pre, &mut d_l2_final);

    // Dropout 2.
    if let Some(m) = &item.drop2 {
        for (d, f) in d_l2_final.iter_mut().zip(m) {
            *d *= f;
        }
    }

    // Layer 2: only the final state of each direction is consumed.
    let inputs2: Vec<&[f64]> = item.l1_dropped.iter().map(Vec::as_slice).collect();
    let mut d_l1_dropped: Vec<Vec<f64>> = vec![vec![0.0; 2 * h]; n];
    if n > 0 {
        let phi2 = cfg.layer2_activation;
        let mut douts = vec![vec![0.0; h]; n];
        douts[Direction::Fwd.position(n - 1, n)].copy_from_slice(&d_l2_final[..h]);
        scan_backward(
            &params.lstm2.fwd,
            phi2,
            &inputs2,
            Direction::Fwd,
            &item.l2_fwd,
            &douts,
            &mut LstmGradSink {
                params: &mut grads.lstm2.fwd,
            },
            &mut d_l1_dropped,
        );
        for row in &mut douts {
            row.fill(0.0);
        }
        douts[Direction::Bwd.position(n - 1, n)].copy_from_slice(&d_l2_final[h..]);
        scan_backward(
            &params.lstm2.bwd,
            phi2,
            &inputs2,
            Direction::Bwd,
            &item.l2_bwd,
            &douts,
            &mut LstmGradSink {
                params: &mut grads.lstm2.bwd,
            },
            &mut d_l1_dropped,
        );
    }

    // Dropout 1, then split the per-position gradients by direction.
    if let Some(masks) = &item.drop1 {
        for (row, m) in d_l1_dropped.iter_mut().zip(masks) {
            for (d, f) in row.iter_mut().zip(m) {
                *d *= f;
            }
        }
    }
    let douts1f: Vec<Vec<f64>> = d_l1_dropped.iter().map(|r| r[..h].to_vec()).collect();
    let douts1b: Vec<Vec<f64>> = d_l1_dropped.iter().map(|r| r[h..].to_vec()).collect();

    // Layer 1 consumes the embedded tokens.
    let embedded: Vec<&[f64]> = item
        .tokens
        .iter()
        .map(|&t| params.embedding.row(t as usize))
        .collect();
    let mut d_embedded: Vec<Vec<f64>> = vec![vec![0.0; cfg.embed_dim]; n];
    let phi1 = cfg.layer1_activation;
    scan_backward(
        &params.lstm1.fwd,
        phi1,
        &embedded,
        Direction::Fwd,
        &item.l1_fwd,
        &douts1f,
        &mut LstmGradSink {
            params: &mut grads.lstm1.fwd,
        },
        &mut d_embedded,
    );
    scan_backward(
        &params.lstm1.bwd,
        phi1,
        &embedded,
        Direction::Bwd,
        &item.l1_bwd,
        &douts1b,
        &mut LstmGradSink {
            params: &mut grads.lstm1.bwd,
        },
        &mut d_embedded,
    );

    // Embedding rows; PAD (row 0) stays pinned to zero.
    for (pos, &tok) in item.tokens.iter().enumerate() {
        if tok != PAD {
            axpy(1.0, &d_embedded[pos], grads.embedding.row_mut(tok as usize));
        }
    }
}

/// Gradient of the mean batch cross-entropy for a TRAIN-mode trace. Batch
/// items accumulate in fixed chunk order, so the result does not depend on
/// thread count.
pub fn backward(
    params: &ModelParameters,
    trace: &ForwardTrace,
    targets: &[u32],
) -> Result<Gradients, ModelError> {
    if targets.len() != trace.items.len() {
        return Err(ModelError::TraceMismatch {
            reason: format!(
                "trace holds {} items but {} targets were given",
                trace.items.len(),
                targets.len()
            ),
        });
    }
    let v = params.config.vocab_size;
    for &t in targets {
        if t as usize >= v {
            return Err(ModelError::TokenOutOfRange {
                index: t,
                vocab_size: v,
            });
        }
        if t == PAD {
            return Err(ModelError::TraceMismatch {
                reason: "PAD cannot be a prediction target".to_string(),
            });
        }
    }
    for item in &trace.items {
        if item.probs.len() != v {
            return Err(ModelError::TraceMismatch {
                reason: "trace was produced by a model with a different vocabulary".to_string(),
            });
        }
    }

    let inv_batch = 1.0 / trace.items.len().max(1) as f64;
    let grads = par::chunked_fold(
        &trace.items,
        || Gradients::zeros_like(params),
        |acc, idx, item| backward_item(params, item, targets[idx], inv_batch, acc),
        |total, part| total.add_assign(&part),
    );
    Ok(grads.unwrap_or_else(|| Gradients::zeros_like(params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{forward, init_model, Mode, ModelConfig};
    use crate::tokenizer::{FeatureScheme, Vocabulary};

    fn model() -> ModelParameters {
        let vocab = Vocabulary::build(["a", "b", "c"]);
        let cfg = ModelConfig {
            window: 4,
            embed_dim: 3,
            lstm_units: 2,
            dense_units: 3,
            dropout_rate: 0.0,
            vocab_size: vocab.size(),
            seed: 17,
            ..ModelConfig::default()
        };
        init_model(cfg, vocab, FeatureScheme::proto_byte()).unwrap()
    }

    #[test]
    fn pad_embedding_gradient_is_zero() {
        let m = model();
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 2, 3]];
        let (_, trace) = forward(&m, &ctxs, Mode::Train, None).unwrap();
        let grads = backward(&m, &trace.unwrap(), &[4]).unwrap();
        assert!(grads.embedding.row(0).iter().all(|&g| g == 0.0));
        assert!(grads.embedding.row(2).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn one_hot_output_gives_zero_output_bias_gradient() {
        let mut m = model();
        // Drive the output bias so the softmax is (numerically) one-hot on 2.
        m.out_b[2] = 60.0;
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 2, 3]];
        let (probs, trace) = forward(&m, &ctxs, Mode::Train, None).unwrap();
        assert!(probs[0][2] > 1.0 - 1e-12);
        let grads = backward(&m, &trace.unwrap(), &[2]).unwrap();
        assert!(grads.out_b.iter().all(|&g| g.abs() < 1e-9));
    }

    #[test]
    fn target_count_mismatch_is_an_error() {
        let m = model();
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 2, 3]];
        let (_, trace) = forward(&m, &ctxs, Mode::Train, None).unwrap();
        let err = backward(&m, &trace.unwrap(), &[2, 3]).unwrap_err();
        assert!(matches!(err, ModelError::TraceMismatch { .. }));
    }

    #[test]
    fn pad_target_is_an_error() {
        let m = model();
        let ctxs: Vec<&[u32]> = vec![&[0, 0, 2, 3]];
        let (_, trace) = forward(&m, &ctxs, Mode::Train, None).unwrap();
        let err = backward(&m, &trace.unwrap(), &[0]).unwrap_err();
        assert!(matches!(err, ModelError::TraceMismatch { .. }));
    }
}
