//! ROC curves and AUC over scored dyad-hours.

use std::io::Write;

use thiserror::Error;

use crate::ingest::Label;
use crate::scorer::ScoredDyadHour;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC undefined: input has no {0} dyad-hours")]
    SingleClass(&'static str),
    #[error("write: {0}")]
    Io(#[from] std::io::Error),
}

/// ROC curve from (0,0) to (1,1) with its trapezoidal area. Equal scores are
/// grouped into single threshold steps, which makes the trapezoid rule exact
/// for the rank-based (Mann–Whitney) AUC definition.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Build the ROC curve by sweeping thresholds over distinct scores in
/// descending order. Requires at least one attack and one normal label.
pub fn roc(scored: &[ScoredDyadHour]) -> Result<RocCurve, EvalError> {
    roc_from_pairs(scored.iter().map(|s| (s.score, s.label == Label::Attack)))
}

/// Same as [`roc`] over bare (score, is_attack) pairs.
pub fn roc_from_pairs<I>(pairs: I) -> Result<RocCurve, EvalError>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    let mut items: Vec<(f64, bool)> = pairs.into_iter().collect();
    let positives = items.iter().filter(|(_, attack)| *attack).count();
    let negatives = items.len() - positives;
    if positives == 0 {
        return Err(EvalError::SingleClass("attack"));
    }
    if negatives == 0 {
        return Err(EvalError::SingleClass("normal"));
    }

    // Descending by score; ties collapse into one step below.
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut points = Vec::with_capacity(items.len() + 2);
    points.push((0.0, 0.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut idx = 0;
    while idx < items.len() {
        let threshold = items[idx].0;
        while idx < items.len() && items[idx].0 == threshold {
            if items[idx].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        auc += (x2 - x1) * (y1 + y2) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// `fpr,tpr` CSV rows plus a trailing `# auc=<value>` comment line.
pub fn export_roc<W: Write>(curve: &RocCurve, mut out: W) -> Result<(), EvalError> {
    writeln!(out, "fpr,tpr")?;
    for (fpr, tpr) in &curve.points {
        writeln!(out, "{fpr},{tpr}")?;
    }
    writeln!(out, "# auc={}", curve.auc)?;
    Ok(())
}

/// One-line summary for standard output: scenario, scheme, per-class
/// dyad-hour counts, AUC to 4 decimals.
pub fn summary_line(
    scenario: &str,
    scheme: &str,
    normal: usize,
    attack: usize,
    auc: f64,
) -> String {
    format!(
        "scenario={scenario} scheme={scheme} normal={normal} attack={attack} auc={auc:.4}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(scores: &[f64], attacks: &[bool]) -> Result<RocCurve, EvalError> {
        roc_from_pairs(scores.iter().cloned().zip(attacks.iter().cloned()))
    }

    #[test]
    fn perfect_separation_is_one() {
        let c = curve(&[3.0, 2.0, 1.0], &[true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.points, vec![(0.0, 0.0), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn all_ties_are_chance() {
        let c = curve(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn perfect_inversion_is_zero() {
        let c = curve(&[1.0, 5.0], &[true, false]).unwrap();
        assert_eq!(c.auc, 0.0);
    }

    #[test]
    fn endpoints_and_monotonicity_hold() {
        let c = curve(
            &[0.3, 0.9, 0.9, 0.1, 0.5, 0.5, 0.5],
            &[false, true, false, false, true, false, true],
        )
        .unwrap();
        assert_eq!(*c.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        for pair in c.points.windows(2) {
            assert!(pair[1].0 >= pair[0].0);
            assert!(pair[1].1 >= pair[0].1);
        }
        assert!((0.0..=1.0).contains(&c.auc));
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            curve(&[1.0, 2.0], &[true, true]),
            Err(EvalError::SingleClass("normal"))
        ));
        assert!(matches!(
            curve(&[1.0, 2.0], &[false, false]),
            Err(EvalError::SingleClass("attack"))
        ));
    }

    #[test]
    fn label_swap_complements_auc() {
        let scores = [0.1, 0.7, 0.4, 0.4, 0.9, 0.2];
        let attacks = [false, true, false, true, false, true];
        let swapped: Vec<bool> = attacks.iter().map(|a| !a).collect();
        let a = curve(&scores, &attacks).unwrap().auc;
        let b = curve(&scores, &swapped).unwrap().auc;
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn export_round_trips_points() {
        let c = curve(&[3.0, 2.0, 1.0], &[true, false, false]).unwrap();
        let mut buf = Vec::new();
        export_roc(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("fpr,tpr"));
        let mut points = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("# auc=") {
                assert_eq!(rest.parse::<f64>().unwrap(), c.auc);
            } else {
                let (x, y) = line.split_once(',').unwrap();
                points.push((x.parse::<f64>().unwrap(), y.parse::<f64>().unwrap()));
            }
        }
        assert_eq!(points, c.points);
    }
}
