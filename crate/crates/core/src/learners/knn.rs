use serde::{Deserialize, Serialize};

use super::{Features, TrainingSet};

/// Distance-weighted k-nearest neighbours (Euclidean, weights `1/d`).
///
/// Training points at distance zero take all the weight: the prediction is
/// then the fraction of label 1 among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Vec<Features>,
    pub y: Vec<u8>,
}

impl Knn {
    pub(crate) fn fit(set: &TrainingSet, k: usize) -> Self {
        Self {
            k: k.max(1),
            x: set.x.clone(),
            y: set.y.clone(),
        }
    }

    pub fn predict_proba(&self, q: &Features) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d2: f64 = x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        let k = self.k.min(dist.len());
        if k == 0 {
            return 0.5;
        }
        // ties in distance resolve by training index
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dist[..k];
        let exact: Vec<usize> = nearest
            .iter()
            .filter(|(d, _)| *d == 0.0)
            .map(|&(_, i)| i)
            .collect();
        if !exact.is_empty() {
            let ones = exact.iter().filter(|&&i| self.y[i] == 1).count();
            return ones as f64 / exact.len() as f64;
        }
        let (mut w1, mut w) = (0.0, 0.0);
        for &(d, i) in nearest {
            let wi = 1.0 / d;
            w += wi;
            if self.y[i] == 1 {
                w1 += wi;
            }
        }
        w1 / w
    }
}
