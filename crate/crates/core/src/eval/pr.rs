use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cloud_io::PointLabel;

/// Precision-recall samples from a threshold sweep, highest threshold first.
/// The first point is the recall-0 anchor with an infinite threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)`
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucMethod {
    #[default]
    Trapezoid,
    /// Step interpolation: sum of `(r_k - r_{k-1}) * p_k`.
    AveragePrecision,
}

/// Sweep every distinct score as a threshold (`score >= t` is positive).
/// Equal scores enter together. Unlabelled entries are ignored.
pub fn pr_curve(scores: &[f64], labels: &[PointLabel]) -> Result<PrCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (&s, &l) in scores.iter().zip(labels) {
        if !l.is_labelled() {
            continue;
        }
        if s.is_nan() {
            return Err(EvalError::NanScore);
        }
        pairs.push((s, l.is_positive()));
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let p = positives as f64;
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / p, tp as f64 / (tp + fp) as f64));
        thresholds.push(t);
    }
    points.insert(0, (0.0, points[0].1));
    thresholds.insert(0, f64::INFINITY);
    Ok(PrCurve { points, thresholds })
}

pub fn auc(curve: &PrCurve) -> f64 {
    auc_with(curve, AucMethod::Trapezoid)
}

pub fn auc_with(curve: &PrCurve, method: AucMethod) -> f64 {
    let area: f64 = curve
        .points
        .windows(2)
        .map(|w| {
            let (r0, p0) = w[0];
            let (r1, p1) = w[1];
            match method {
                AucMethod::Trapezoid => (r1 - r0) * (p0 + p1) * 0.5,
                AucMethod::AveragePrecision => (r1 - r0) * p1,
            }
        })
        .sum();
    area.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[u8]) -> Vec<PointLabel> {
        v.iter()
            .map(|&l| if l == 1 { PointLabel::Peduncle } else { PointLabel::Pepper })
            .collect()
    }

    #[test]
    fn perfect_ranking() {
        let c = pr_curve(&[0.9, 0.8, 0.3], &labels(&[1, 1, 0])).unwrap();
        assert!(c.points.contains(&(0.5, 1.0)));
        assert!(c.points.contains(&(1.0, 1.0)));
        assert_eq!(auc(&c), 1.0);
    }

    #[test]
    fn inverted_top_score() {
        let c = pr_curve(&[0.9, 0.8, 0.3], &labels(&[0, 1, 1])).unwrap();
        assert_eq!(c.points.last().copied(), Some((1.0, 2.0 / 3.0)));
        assert!(c.points.contains(&(0.5, 0.5)));
        assert_eq!(c.points, vec![(0.0, 0.0), (0.0, 0.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        // 0.5 * (0 + 0.5) / 2 + 0.5 * (0.5 + 2/3) / 2
        let want = 0.125 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((auc(&c) - want).abs() < 1e-15);
        assert!((auc(&c) - 0.4166666666666667).abs() < 1e-12);
        // step version: 0.5 * 0.5 + 0.5 * 2/3
        assert!((auc_with(&c, AucMethod::AveragePrecision) - (0.25 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_precision_is_a_rectangle() {
        // every threshold group holds one positive and one negative
        let scores = [4.0, 4.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0];
        let c = pr_curve(&scores, &labels(&[1, 0, 0, 1, 1, 0, 0, 1])).unwrap();
        assert_eq!(c.points.first().unwrap().0, 0.0);
        assert_eq!(c.points.last().unwrap().0, 1.0);
        assert!(c.points.iter().all(|p| p.1 == 0.5));
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn tied_scores_form_one_group() {
        let c = pr_curve(&[0.5, 0.5, 0.5], &labels(&[1, 0, 1])).unwrap();
        assert_eq!(c.points, vec![(0.0, 2.0 / 3.0), (1.0, 2.0 / 3.0)]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pr_curve(&[0.1, 0.2], &labels(&[1, 1])),
            Err(EvalError::SingleClass { positives: 2, negatives: 0 })
        ));
        assert!(matches!(pr_curve(&[0.1], &labels(&[1, 0])), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(pr_curve(&[f64::NAN, 0.1], &labels(&[1, 0])), Err(EvalError::NanScore)));
    }

    proptest! {
        #[test]
        fn curve_is_well_formed(
            data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| (d.0 * 4.0).round() / 4.0).collect();
            let labs: Vec<PointLabel> = data
                .iter()
                .map(|d| if d.1 { PointLabel::Peduncle } else { PointLabel::Pepper })
                .collect();
            let Ok(c) = pr_curve(&scores, &labs) else { return Ok(()); };
            prop_assert_eq!(c.points.len(), c.thresholds.len());
            for w in c.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0);
            }
            for (r, p) in &c.points {
                prop_assert!((0.0..=1.0).contains(r) && (0.0..=1.0).contains(p));
            }
            let a = auc(&c);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
