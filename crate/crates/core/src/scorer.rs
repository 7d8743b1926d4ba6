//! Per-window log losses under a frozen model, aggregated to per-dyad-hour
//! outlier scores.

use std::io::Write;

use thiserror::Error;

use crate::ingest::Label;
use crate::neural::{forward, loss, Mode, ModelError, ModelParameters};
use crate::par;
use crate::sequencer::{windows, DyadHour, DyadKey};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("dyad-hour {ip_lo},{ip_hi} hour {hour}: {source}")]
    Model {
        ip_lo: String,
        ip_hi: String,
        hour: i64,
        source: ModelError,
    },
    #[error("scores csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("write: {0}")]
    Io(#[from] std::io::Error),
}

/// How window losses aggregate to the dyad-hour score. `Max` is the default;
/// `Mean` is available for comparison but takes part in no acceptance path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Option<Aggregation> {
        match s {
            "max" => Some(Aggregation::Max),
            "mean" => Some(Aggregation::Mean),
            _ => None,
        }
    }
}

/// A dyad-hour with its outlier score (aggregated window log loss).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDyadHour {
    pub key: DyadKey,
    pub hour: i64,
    pub score: f64,
    pub label: Label,
    pub window_count: usize,
}

/// EVAL-mode log loss for every window of the dyad-hour, in sequence order.
pub fn score_windows(model: &ModelParameters, dh: &DyadHour) -> Result<Vec<f64>, ScoreError> {
    let v = model.config.vocab_size;
    for &t in &dh.token_indices {
        if t as usize >= v {
            return Err(ScoreError::Model {
                ip_lo: dh.key.ip_lo.clone(),
                ip_hi: dh.key.ip_hi.clone(),
                hour: dh.hour,
                source: ModelError::TokenOutOfRange {
                    index: t,
                    vocab_size: v,
                },
            });
        }
    }
    let ws = windows(dh, model.config.window);
    let contexts: Vec<&[u32]> = ws.iter().map(|w| w.context.as_slice()).collect();
    let (probs, _) = forward(model, &contexts, Mode::Eval, None).map_err(|source| {
        ScoreError::Model {
            ip_lo: dh.key.ip_lo.clone(),
            ip_hi: dh.key.ip_hi.clone(),
            hour: dh.hour,
            source,
        }
    })?;
    Ok(probs
        .iter()
        .zip(&ws)
        .map(|(p, w)| loss(p, w.target))
        .collect())
}

/// Score one dyad-hour by aggregating its window losses.
pub fn score_dyad_hour(
    model: &ModelParameters,
    dh: &DyadHour,
    agg: Aggregation,
) -> Result<ScoredDyadHour, ScoreError> {
    let losses = score_windows(model, dh)?;
    let score = match agg {
        Aggregation::Max => losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => losses.iter().sum::<f64>() / losses.len() as f64,
    };
    Ok(ScoredDyadHour {
        key: dh.key.clone(),
        hour: dh.hour,
        score,
        label: dh.label,
        window_count: losses.len(),
    })
}

/// Score every dyad-hour; embarrassingly parallel over an immutable model.
pub fn score_all(
    model: &ModelParameters,
    dyad_hours: &[DyadHour],
    agg: Aggregation,
) -> Result<Vec<ScoredDyadHour>, ScoreError> {
    let results = par::map_indexed(dyad_hours, |_, dh| score_dyad_hour(model, dh, agg));
    results.into_iter().collect()
}

/// Sort descending by score (dyad and hour break ties) — the order of the
/// scores CSV.
pub fn sort_scored(scored: &mut [ScoredDyadHour]) {
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.key.cmp(&b.key))
            .then_with(|| a.hour.cmp(&b.hour))
    });
}

/// `ip_lo,ip_hi,hour,score,label,window_count`, sorted descending by score.
pub fn write_scores_csv<W: Write>(
    scored: &[ScoredDyadHour],
    mut out: W,
) -> Result<(), ScoreError> {
    writeln!(out, "ip_lo,ip_hi,hour,score,label,window_count")?;
    for s in scored {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.key.ip_lo,
            s.key.ip_hi,
            s.hour,
            s.score,
            s.label.as_str(),
            s.window_count
        )?;
    }
    Ok(())
}

/// Parse a scores CSV produced by [`write_scores_csv`].
pub fn read_scores_csv<R: std::io::Read>(mut source: R) -> Result<Vec<ScoredDyadHour>, ScoreError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let parse_err = |line: usize, reason: &str| ScoreError::Parse {
        line,
        reason: reason.to_string(),
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "ip_lo,ip_hi,hour,score,label,window_count" => {}
        _ => return Err(parse_err(1, "missing scores header")),
    }

    let mut scored = Vec::new();
    for (idx, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(idx + 1, "expected 6 comma-separated fields"));
        }
        scored.push(ScoredDyadHour {
            key: DyadKey::new(fields[0], fields[1]),
            hour: fields[2]
                .parse()
                .map_err(|_| parse_err(idx + 1, "bad hour"))?,
            score: fields[3]
                .parse()
                .map_err(|_| parse_err(idx + 1, "bad score"))?,
            label: Label::parse(fields[4]).ok_or_else(|| parse_err(idx + 1, "bad label"))?,
            window_count: fields[5]
                .parse()
                .map_err(|_| parse_err(idx + 1, "bad window_count"))?,
        });
    }
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_model, ModelConfig};
    use crate::tokenizer::{FeatureScheme, Vocabulary};

    fn model() -> ModelParameters {
        let vocab = Vocabulary::build(["a", "b", "c"]);
        let cfg = ModelConfig {
            window: 4,
            embed_dim: 4,
            lstm_units: 3,
            dense_units: 4,
            vocab_size: vocab.size(),
            seed: 21,
            ..ModelConfig::default()
        };
        init_model(cfg, vocab, FeatureScheme::proto_byte()).unwrap()
    }

    fn dyad_hour(tokens: &[u32]) -> DyadHour {
        DyadHour {
            key: DyadKey::new("10.0.0.1", "10.0.0.2"),
            hour: 5,
            token_indices: tokens.to_vec(),
            label: Label::Normal,
        }
    }

    #[test]
    fn one_loss_per_window() {
        let m = model();
        let losses = score_windows(&m, &dyad_hour(&[2, 3, 4])).unwrap();
        assert_eq!(losses.len(), 3);
        assert!(losses.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn uniform_model_loss_is_ln_v() {
        let mut m = model();
        // Zero the output layer: logits are constant, softmax is uniform.
        m.out_w = crate::neural::mat::Mat::zeros(m.config.vocab_size, m.config.dense_units);
        m.out_b.fill(0.0);
        let losses = score_windows(&m, &dyad_hour(&[2, 3, 4, 2, 2])).unwrap();
        let ln_v = (m.config.vocab_size as f64).ln();
        for l in losses {
            assert!((l - ln_v).abs() < 1e-12);
        }
    }

    #[test]
    fn max_aggregation_picks_worst_window() {
        let m = model();
        let dh = dyad_hour(&[2, 3, 4, 2, 3]);
        let losses = score_windows(&m, &dh).unwrap();
        let best = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scored = score_dyad_hour(&m, &dh, Aggregation::Max).unwrap();
        assert_eq!(scored.score, best);
        assert_eq!(scored.window_count, 5);
        assert!(losses.iter().all(|&l| scored.score >= l));
    }

    #[test]
    fn single_window_score_is_its_loss() {
        let m = model();
        let dh = dyad_hour(&[3]);
        let losses = score_windows(&m, &dh).unwrap();
        let scored = score_dyad_hour(&m, &dh, Aggregation::Max).unwrap();
        assert_eq!(scored.score, losses[0]);
    }

    #[test]
    fn mean_aggregation_averages() {
        let m = model();
        let dh = dyad_hour(&[2, 3, 4]);
        let losses = score_windows(&m, &dh).unwrap();
        let scored = score_dyad_hour(&m, &dh, Aggregation::Mean).unwrap();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        assert!((scored.score - mean).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_mismatch_is_an_error() {
        let m = model();
        let err = score_windows(&m, &dyad_hour(&[2, 77])).unwrap_err();
        assert!(matches!(
            err,
            ScoreError::Model {
                source: ModelError::TokenOutOfRange { index: 77, .. },
                ..
            }
        ));
    }

    #[test]
    fn csv_is_sorted_descending() {
        let m = model();
        let dhs = vec![dyad_hour(&[2]), dyad_hour(&[3, 4]), dyad_hour(&[4, 4, 4])];
        let mut scored = score_all(&m, &dhs, Aggregation::Max).unwrap();
        sort_scored(&mut scored);
        let mut buf = Vec::new();
        write_scores_csv(&scored, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let scores: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn scores_csv_round_trips() {
        let m = model();
        let dhs = vec![dyad_hour(&[2, 3]), dyad_hour(&[4])];
        let mut scored = score_all(&m, &dhs, Aggregation::Max).unwrap();
        sort_scored(&mut scored);
        let mut buf = Vec::new();
        write_scores_csv(&scored, &mut buf).unwrap();
        let reparsed = read_scores_csv(buf.as_slice()).unwrap();
        assert_eq!(reparsed, scored);
    }
}
