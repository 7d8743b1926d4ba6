//! LSTM cell step and masked directional scans with exact BPTT.
//!
//! Gate pre-activations stack as [input, forget, candidate, output] rows.
//! The candidate and cell-output activation is the layer's configurable φ;
//! gates are always logistic sigmoid. Masked timesteps pass (h, c) through
//! unchanged in the forward scan and route gradients straight through in the
//! backward scan, touching no parameters.

use super::mat::add_assign_slice;
use super::params::LstmParams;
use super::{Activation, ModelError};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GateTrace {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub phi_c: Vec<f64>,
}

/// States and gate traces of one directional scan, in scan order.
/// `h[s]`/`c[s]` are the states *before* scan step s; the extra final entry
/// is the state after the whole scan.
#[derive(Debug, Clone)]
pub(crate) struct DirTrace {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub gates: Vec<Option<GateTrace>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Fwd,
    Bwd,
}

impl Direction {
    /// Position in the sequence visited at scan step `s` of `n` steps.
    #[inline]
    pub fn position(self, s: usize, n: usize) -> usize {
        match self {
            Direction::Fwd => s,
            Direction::Bwd => n - 1 - s,
        }
    }
}

fn gate_preactivations(p: &LstmParams, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let mut a = p.b.clone();
    p.w.matvec_add(x, &mut a);
    p.u.matvec_add(h_prev, &mut a);
    a
}

fn step(
    p: &LstmParams,
    phi: Activation,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, GateTrace) {
    let units = p.units();
    let a = gate_preactivations(p, x, h_prev);
    let mut i = vec![0.0; units];
    let mut f = vec![0.0; units];
    let mut g = vec![0.0; units];
    let mut o = vec![0.0; units];
    for k in 0..units {
        i[k] = sigmoid(a[k]);
        f[k] = sigmoid(a[units + k]);
        g[k] = phi.apply(a[2 * units + k]);
        o[k] = sigmoid(a[3 * units + k]);
    }
    let mut c = vec![0.0; units];
    let mut phi_c = vec![0.0; units];
    let mut h = vec![0.0; units];
    for k in 0..units {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        phi_c[k] = phi.apply(c[k]);
        h[k] = o[k] * phi_c[k];
    }
    (
        h,
        c.clone(),
        GateTrace {
            i,
            f,
            g,
            o,
            c,
            phi_c,
        },
    )
}

/// One LSTM cell update: gates from `x` and `h_prev`, new cell state from the
/// forget/input mix, new hidden state from the output gate. `phi` is the
/// candidate/output activation.
pub fn lstm_cell_step(
    p: &LstmParams,
    phi: Activation,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let units = p.units();
    if x.len() != p.w.cols() || h_prev.len() != units || c_prev.len() != units {
        return Err(ModelError::ShapeMismatch {
            what: format!(
                "lstm_cell_step expected x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
                p.w.cols(),
                units,
                units,
                x.len(),
                h_prev.len(),
                c_prev.len()
            ),
        });
    }
    let (h, c, _) = step(p, phi, x, h_prev, c_prev);
    Ok((h, c))
}

/// Run one direction over the sequence. Returns per-position hidden states,
/// the final state of the scan, and (when `record`) the trace for BPTT.
pub(crate) fn scan(
    p: &LstmParams,
    phi: Activation,
    inputs: &[&[f64]],
    mask: &[bool],
    dir: Direction,
    record: bool,
) -> (Vec<Vec<f64>>, Vec<f64>, Option<DirTrace>) {
    let n = inputs.len();
    let units = p.units();
    let mut h = vec![0.0; units];
    let mut c = vec![0.0; units];
    let mut outputs = vec![Vec::new(); n];
    let mut trace = record.then(|| DirTrace {
        h: Vec::with_capacity(n + 1),
        c: Vec::with_capacity(n + 1),
        gates: Vec::with_capacity(n),
    });

    for s in 0..n {
        let pos = dir.position(s, n);
        if let Some(tr) = trace.as_mut() {
            tr.h.push(h.clone());
            tr.c.push(c.clone());
        }
        if mask[pos] {
            let (h_new, c_new, gates) = step(p, phi, inputs[pos], &h, &c);
            h = h_new;
            c = c_new;
            if let Some(tr) = trace.as_mut() {
                tr.gates.push(Some(gates));
            }
        } else if let Some(tr) = trace.as_mut() {
            tr.gates.push(None);
        }
        outputs[pos] = h.clone();
    }
    if let Some(tr) = trace.as_mut() {
        tr.h.push(h.clone());
        tr.c.push(c.clone());
    }
    (outputs, h, trace)
}

pub(crate) struct LstmGradSink<'a> {
    pub params: &'a mut LstmParams,
}

/// BPTT through one directional scan. `douts[pos]` is the gradient arriving
/// on the hidden state emitted at `pos`; gradients w.r.t. each position's
/// input are added into `dinputs`. Parameter gradients accumulate into
/// `sink`. Masked steps are the trace's `None` gate entries: they route
/// dh/dc straight through and touch neither parameters nor inputs.
#[allow(clippy::too_many_arguments)]
pub(crate) fn scan_backward(
    p: &LstmParams,
    phi: Activation,
    inputs: &[&[f64]],
    dir: Direction,
    trace: &DirTrace,
    douts: &[Vec<f64>],
    sink: &mut LstmGradSink<'_>,
    dinputs: &mut [Vec<f64>],
) {
    let n = inputs.len();
    let units = p.units();
    let mut dh = vec![0.0; units];
    let mut dc = vec![0.0; units];
    let mut da = vec![0.0; 4 * units];

    for s in (0..n).rev() {
        let pos = dir.position(s, n);
        add_assign_slice(&mut dh, &douts[pos]);
        let Some(gt) = &trace.gates[s] else {
            continue; // pass-through step: dh/dc flow to s-1 unchanged
        };
        let h_prev = &trace.h[s];
        let c_prev = &trace.c[s];

        // Gate pre-activation gradients, order [i, f, g, o].
        for k in 0..units {
            let d_total_c = dh[k] * gt.o[k] * phi.derivative(gt.c[k]) + dc[k];
            let di = d_total_c * gt.g[k];
            let df = d_total_c * c_prev[k];
            let dg = d_total_c * gt.i[k];
            let do_ = dh[k] * gt.phi_c[k];
            da[k] = di * gt.i[k] * (1.0 - gt.i[k]);
            da[units + k] = df * gt.f[k] * (1.0 - gt.f[k]);
            // φ'(a_g) recovered from g: identity → 1; relu → g > 0.
            da[2 * units + k] = dg * match phi {
                Activation::Identity => 1.0,
                Activation::Relu => {
                    if gt.g[k] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            da[3 * units + k] = do_ * gt.o[k] * (1.0 - gt.o[k]);
            dc[k] = d_total_c * gt.f[k];
        }

        sink.params.w.outer_add(&da, inputs[pos]);
        sink.params.u.outer_add(&da, h_prev);
        add_assign_slice(&mut sink.params.b, &da);
        p.w.matvec_t_add(&da, &mut dinputs[pos]);
        dh.fill(0.0);
        p.u.matvec_t_add(&da, &mut dh);
    }
}
