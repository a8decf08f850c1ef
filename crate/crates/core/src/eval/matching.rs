use serde::{Deserialize, Serialize};

use super::EvalError;

/// Greedy assignment over a precomputed similarity matrix.
///
/// `order` lists detection rows best-first. Each detection claims the
/// unclaimed ground truth with the highest similarity at or above `thr`;
/// equal similarities go to the lower GT index. Returns TP flags aligned
/// with `order` and the number of GTs left unmatched.
pub fn greedy_match(order: &[usize], sims: &[Vec<f64>], n_gt: usize, thr: f64) -> (Vec<bool>, usize) {
    let mut claimed = vec![false; n_gt];
    let mut matched = 0;
    let tp = order
        .iter()
        .map(|&d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &s) in sims[d].iter().enumerate() {
                if claimed[g] || s < thr {
                    continue;
                }
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((g, s));
                }
            }
            match best {
                Some((g, _)) => {
                    claimed[g] = true;
                    matched += 1;
                    true
                }
                None => false,
            }
        })
        .collect();
    (tp, n_gt - matched)
}

/// Ranked precision/recall points and their 101-point interpolated AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(precision, recall)` after each ranked detection.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// 101-point interpolated average precision of a ranked TP/FP list.
///
/// At each recall level `r = 0.00, 0.01, ..., 1.00` the precision is the
/// maximum precision over all ranks reaching recall `>= r` (0 when none
/// do); AP is the mean of the 101 samples.
pub fn average_precision(tp: &[bool], n_gt: usize) -> Result<PrCurve, EvalError> {
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let mut points = Vec::with_capacity(tp.len());
    let mut hits = Vec::with_capacity(tp.len());
    let mut n_tp = 0usize;
    for (rank, &t) in tp.iter().enumerate() {
        n_tp += t as usize;
        hits.push(n_tp);
        points.push((n_tp as f64 / (rank + 1) as f64, n_tp as f64 / n_gt as f64));
    }
    let mut envelope: Vec<f64> = points.iter().map(|p| p.0).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for level in 0..=100usize {
        // recall_j >= level / 100, compared exactly in integers
        while j < hits.len() && hits[j] * 100 < level * n_gt {
            j += 1;
        }
        if j < hits.len() {
            sum += envelope[j];
        }
    }
    Ok(PrCurve {
        points,
        ap: sum / 101.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_cases() {
        let (tp, left) = greedy_match(&[0], &[vec![0.9]], 1, 0.5);
        assert_eq!((tp, left), (vec![true], 0));
        // two detections on one GT
        let (tp, left) = greedy_match(&[0, 1], &[vec![0.9], vec![0.8]], 1, 0.5);
        assert_eq!((tp, left), (vec![true, false], 0));
        // below threshold
        let (tp, left) = greedy_match(&[0], &[vec![0.4]], 1, 0.5);
        assert_eq!((tp, left), (vec![false], 1));
        // best similarity wins, ties to lower GT index
        let (tp, _) = greedy_match(&[0, 1], &[vec![0.6, 0.6], vec![0.7, 0.0]], 2, 0.5);
        assert_eq!(tp, vec![true, false]);
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[true, true], 2).unwrap().ap, 1.0);
        assert_eq!(average_precision(&[false, false], 2).unwrap().ap, 0.0);
        assert_eq!(average_precision(&[], 3).unwrap().ap, 0.0);
        let c = average_precision(&[true, false, true], 2).unwrap();
        assert_eq!(c.points, vec![(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0)]);
        assert!((c.ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
        assert_eq!(format!("{:.4}", c.ap), "0.8350");
        assert!(matches!(average_precision(&[true], 0), Err(EvalError::NoGroundTruth)));
    }

    #[test]
    fn partial_recall() {
        // one of four GTs found first: recall 0.25 reached at precision 1
        let c = average_precision(&[true], 4).unwrap();
        assert!((c.ap - 26.0 / 101.0).abs() < 1e-15);
    }
}
