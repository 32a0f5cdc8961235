//! Borda-count fusion of ranked predictions.
//!
//! With `m` classes, the class a voter ranks at position `p` (0 = best) earns
//! `m − 1 − p` points. Classes are ordered by total points, then by summed
//! voter score, then by ascending label.

use crate::error::{Error, Result};
use crate::neuralnet::RankedPrediction;

#[derive(Debug, Clone, PartialEq)]
pub struct BordaTally {
    pub points: Vec<u64>,
    pub score_sums: Vec<f64>,
}

impl BordaTally {
    pub fn total_points(&self) -> u64 {
        self.points.iter().sum()
    }

    pub fn ranking(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = (0..self.points.len()).collect();
        labels.sort_by(|&a, &b| {
            self.points[b]
                .cmp(&self.points[a])
                .then(self.score_sums[b].total_cmp(&self.score_sums[a]))
                .then(a.cmp(&b))
        });
        labels
    }
}

pub fn tally(predictions: &[RankedPrediction]) -> Result<BordaTally> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::contract("fusion needs at least one prediction"))?;
    let m = first.classes();
    let mut points = vec![0u64; m];
    let mut per_class: Vec<Vec<f64>> = vec![Vec::with_capacity(predictions.len()); m];
    for pred in predictions {
        pred.validate()?;
        if pred.classes() != m {
            return Err(Error::contract("predictions disagree on the number of classes"));
        }
        for (p, &label) in pred.labels.iter().enumerate() {
            points[label] += (m - 1 - p) as u64;
        }
        for (c, &s) in per_class.iter_mut().zip(&pred.scores) {
            c.push(s);
        }
    }
    // summing in sorted order makes the result independent of voter order
    let score_sums = per_class
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c.iter().sum()
        })
        .collect();
    Ok(BordaTally { points, score_sums })
}

/// Fused ranking; scores are each class's share of all points awarded.
pub fn borda_fuse(predictions: &[RankedPrediction]) -> Result<RankedPrediction> {
    let t = tally(predictions)?;
    let total = t.total_points();
    let scores = if total == 0 {
        vec![1.0; t.points.len()]
    } else {
        t.points.iter().map(|&p| p as f64 / total as f64).collect()
    };
    Ok(RankedPrediction {
        labels: t.ranking(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ranking(labels: Vec<usize>) -> RankedPrediction {
        let m = labels.len();
        let mut scores = vec![0.0; m];
        for (p, &l) in labels.iter().enumerate() {
            scores[l] = (m - p) as f64 / 100.0;
        }
        RankedPrediction { labels, scores }
    }

    #[test]
    fn single_voter_is_identity() {
        let r = ranking(vec![3, 9, 0, 1, 2, 4, 5, 6, 7, 8]);
        assert_eq!(borda_fuse(std::slice::from_ref(&r)).unwrap().labels, r.labels);
    }

    #[test]
    fn majority_top_wins() {
        let tail: Vec<usize> = (0..10).filter(|&c| c != 7 && c != 1).collect();
        let mk = |top: usize, second: usize| {
            let mut l = vec![top, second];
            l.extend(&tail);
            ranking(l)
        };
        let fused = borda_fuse(&[mk(7, 1), mk(1, 7), mk(7, 1)]).unwrap();
        assert_eq!(fused.top(), 7);
        assert!((fused.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_permutations() {
        let bad = RankedPrediction {
            labels: vec![0, 1, 1],
            scores: vec![0.0; 3],
        };
        assert!(borda_fuse(&[bad]).is_err());
        assert!(borda_fuse(&[]).is_err());
        assert!(borda_fuse(&[ranking(vec![0, 1]), ranking(vec![0, 1, 2])]).is_err());
    }

    #[test]
    fn conservation_unanimity_and_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let voters = rng.gen_range(1..6);
            let mut preds: Vec<RankedPrediction> = (0..voters)
                .map(|_| {
                    let mut l: Vec<usize> = (0..10).collect();
                    l.shuffle(&mut rng);
                    ranking(l)
                })
                .collect();
            let t = tally(&preds).unwrap();
            assert_eq!(t.total_points(), voters as u64 * 45);
            let fused = borda_fuse(&preds).unwrap();
            preds.shuffle(&mut rng);
            assert_eq!(borda_fuse(&preds).unwrap().labels, fused.labels);

            let same = vec![preds[0].clone(); voters];
            assert_eq!(borda_fuse(&same).unwrap().labels, preds[0].labels);
        }
    }
}
