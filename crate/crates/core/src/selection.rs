//! Automatic quality gate for generated images.
//!
//! A generated image `g` is accepted against a target-domain set `D` iff
//!
//! ```text
//! median{ dist(I_i, I_j) | i, j in D, i != j }  >  min{ dist(g, I_k) | k in D }
//! ```
//!
//! i.e. its nearest target image is closer than a typical pair of target
//! images is to each other. Equality rejects. All distances are computed by
//! brute force.

use serde::{Deserialize, Serialize};

use crate::iqa::{cosine_distance, euclidean_distance, FeatureSet, FeatureVector, IqaError};

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("target set needs at least {needed} images, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error(transparent)]
    Features(#[from] IqaError),
}

/// Distance used between embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl DistanceMetric {
    pub fn distance(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64, IqaError> {
        match self {
            DistanceMetric::Cosine => cosine_distance(a, b),
            DistanceMetric::Euclidean => euclidean_distance(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub image_id: String,
    pub accepted: bool,
    pub nearest_id: String,
    pub nearest_distance: f64,
    pub median_pairwise: f64,
}

/// Median of a non-empty list; even counts give the midpoint of the two
/// central values.
fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over all `n(n-1)/2` unordered pair distances of the set.
pub fn pairwise_median(set: &FeatureSet, metric: DistanceMetric) -> Result<f64, SelectionError> {
    if set.len() < 2 {
        return Err(SelectionError::TooFew {
            needed: 2,
            got: set.len(),
        });
    }
    let v = set.vectors();
    let mut dists = Vec::with_capacity(v.len() * (v.len() - 1) / 2);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            dists.push(metric.distance(&v[i], &v[j])?);
        }
    }
    Ok(median(dists))
}

/// Closest member by linear scan. Equal distances resolve to the
/// lexicographically smallest id, so the answer ignores set order.
pub fn nearest(set: &FeatureSet, g: &FeatureVector, metric: DistanceMetric) -> Result<(String, f64), SelectionError> {
    let mut best: Option<(&str, f64)> = None;
    for (id, v) in set.iter() {
        let d = metric.distance(g, v)?;
        best = match best {
            Some((bid, bd)) if bd < d || (bd == d && bid <= id) => Some((bid, bd)),
            _ => Some((id, d)),
        };
    }
    best.map(|(id, d)| (id.to_string(), d))
        .ok_or(SelectionError::TooFew { needed: 1, got: 0 })
}

fn decide(image_id: &str, nearest: (String, f64), median_pairwise: f64) -> GateDecision {
    GateDecision {
        image_id: image_id.to_string(),
        accepted: median_pairwise > nearest.1,
        nearest_id: nearest.0,
        nearest_distance: nearest.1,
        median_pairwise,
    }
}

pub fn quality_gate(
    set: &FeatureSet,
    image_id: &str,
    g: &FeatureVector,
    metric: DistanceMetric,
) -> Result<GateDecision, SelectionError> {
    let m = pairwise_median(set, metric)?;
    Ok(decide(image_id, nearest(set, g, metric)?, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchGate {
    pub median_pairwise: f64,
    pub decisions: Vec<GateDecision>,
    pub accepted: usize,
    pub rejected: usize,
}

impl BatchGate {
    pub fn accept_rate(&self) -> f64 {
        let n = self.accepted + self.rejected;
        if n == 0 {
            0.0
        } else {
            self.accepted as f64 / n as f64
        }
    }

    pub fn accepted_ids(&self) -> impl Iterator<Item = &str> {
        self.decisions
            .iter()
            .filter(|d| d.accepted)
            .map(|d| d.image_id.as_str())
    }
}

/// Gates every member of `candidates` against `target`. The median is
/// computed once.
pub fn gate_batch(
    target: &FeatureSet,
    candidates: &FeatureSet,
    metric: DistanceMetric,
) -> Result<BatchGate, SelectionError> {
    let m = pairwise_median(target, metric)?;
    let decisions = candidates
        .iter()
        .map(|(id, g)| Ok(decide(id, nearest(target, g, metric)?, m)))
        .collect::<Result<Vec<_>, SelectionError>>()?;
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    Ok(BatchGate {
        median_pairwise: m,
        rejected: decisions.len() - accepted,
        accepted,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> FeatureSet {
        FeatureSet::from_rows("raw", points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    #[test]
    fn median_cases() {
        assert_eq!(
            pairwise_median(&line(&[0.0, 0.4]), DistanceMetric::Euclidean).unwrap(),
            0.4
        );
        // pair distances 0.2, 0.4, 0.6
        let three = line(&[0.0, 0.2, 0.6]);
        assert!((pairwise_median(&three, DistanceMetric::Euclidean).unwrap() - 0.4).abs() < 1e-15);
        // pairs {1,2,3,1,2,1}
        let four = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(pairwise_median(&four, DistanceMetric::Euclidean).unwrap(), 1.5);
        assert!(matches!(
            pairwise_median(&line(&[1.0]), DistanceMetric::Euclidean),
            Err(SelectionError::TooFew { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn nearest_cases() {
        let s = line(&[0.0, 1.0, 5.0]);
        let m = DistanceMetric::Euclidean;
        assert_eq!(nearest(&s, &FeatureVector(vec![1.0]), m).unwrap(), ("1".into(), 0.0));
        let single = line(&[100.0]);
        assert_eq!(nearest(&single, &FeatureVector(vec![-3.0]), m).unwrap().0, "0");
        let two = FeatureSet::new(
            "raw",
            vec!["far".into(), "near".into()],
            vec![FeatureVector(vec![0.5]), FeatureVector(vec![0.3])],
        )
        .unwrap();
        assert_eq!(nearest(&two, &FeatureVector(vec![0.0]), m).unwrap().0, "near");
        // tie resolves to the smallest id regardless of order
        let tie = FeatureSet::new(
            "raw",
            vec!["b".into(), "a".into()],
            vec![FeatureVector(vec![1.0]), FeatureVector(vec![-1.0])],
        )
        .unwrap();
        assert_eq!(nearest(&tie, &FeatureVector(vec![0.0]), m).unwrap().0, "a");
        let empty = FeatureSet::from_rows("raw", vec![]).unwrap();
        assert!(nearest(&empty, &FeatureVector(vec![0.0]), m).is_err());
    }

    #[test]
    fn strict_inequality() {
        assert!(decide("g", ("x".into(), 0.3), 0.5).accepted);
        assert!(!decide("g", ("x".into(), 0.7), 0.5).accepted);
        assert!(!decide("g", ("x".into(), 0.5), 0.5).accepted);
    }

    #[test]
    fn members_accepted_outlier_rejected() {
        let target = line(&[0.0, 1.0, 2.0, 3.0]);
        let m = DistanceMetric::Euclidean;
        let batch = gate_batch(&target, &target, m).unwrap();
        assert_eq!(batch.accepted, 4);
        assert_eq!(batch.accept_rate(), 1.0);
        let outlier = line(&[50.0]);
        let batch = gate_batch(&target, &outlier, m).unwrap();
        assert_eq!((batch.accepted, batch.rejected), (0, 1));
        assert_eq!(batch.decisions[0].nearest_id, "3");
    }

    #[test]
    fn permutation_invariant() {
        let target = FeatureSet::from_rows(
            "raw",
            vec![
                vec![0.1, 0.9],
                vec![0.8, 0.2],
                vec![0.5, 0.5],
                vec![0.3, 0.7],
                vec![0.9, 0.9],
            ],
        )
        .unwrap();
        let cands = FeatureSet::from_rows("raw", vec![vec![0.4, 0.6], vec![0.0, 0.1], vec![2.0, 2.0]]).unwrap();
        let base = gate_batch(&target, &cands, DistanceMetric::Cosine).unwrap();
        let perm = target.select(&[4, 2, 0, 3, 1]);
        assert_eq!(gate_batch(&perm, &cands, DistanceMetric::Cosine).unwrap(), base);
    }
}
