//! Seeded training loop: per-epoch shuffle, minibatches, global-norm
//! gradient clipping, Adam updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::backward;
use super::forward::{forward, loss, Mode};
use super::params::{Gradients, ModelParameters};
use super::ModelError;
use crate::sequencer::Window;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    fn new(params: &ModelParameters) -> AdamState {
        AdamState {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParameters, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powf(self.t as f64);
        let bc2 = 1.0 - BETA2.powf(self.t as f64);
        let p_tensors = params.flat_tensors_mut();
        let g_tensors = grads.flat_tensors();
        let m_tensors = self.m.flat_tensors_mut();
        let v_tensors = self.v.flat_tensors_mut();
        for (((p, g), m), v) in p_tensors
            .into_iter()
            .zip(g_tensors)
            .zip(m_tensors)
            .zip(v_tensors)
        {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Train in place. Windows are reshuffled every epoch with the generator
/// seeded from `config.seed` (stream 1, distinct from the init stream), so a
/// fixed (seed, data, config) triple reproduces parameters bit-exactly.
/// Returns the per-epoch mean training loss.
pub fn train(params: &mut ModelParameters, windows: &[Window]) -> Result<Vec<f64>, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let cfg = params.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut adam = AdamState::new(params);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let contexts: Vec<&[u32]> = batch
                .iter()
                .map(|&i| windows[i].context.as_slice())
                .collect();
            let targets: Vec<u32> = batch.iter().map(|&i| windows[i].target).collect();

            let (probs, trace) = forward(params, &contexts, Mode::Train, Some(&mut rng))?;
            for (p, &t) in probs.iter().zip(&targets) {
                loss_sum += loss(p, t);
            }

            let mut grads = backward(params, &trace.expect("train forward records"), &targets)?;
            let norm = grads.global_norm();
            if norm > cfg.grad_clip_norm {
                grads.scale(cfg.grad_clip_norm / norm);
            }
            adam.step(params, &grads, cfg.learning_rate);
            debug_assert!(
                params.embedding.row(0).iter().all(|&x| x == 0.0),
                "PAD embedding row must stay zero"
            );
        }
        history.push(loss_sum / windows.len() as f64);
    }
    Ok(history)
}
