use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_classifier, FeatureSampling, Presorted, Tree};
use super::{Features, TrainingSet};

/// Bagged CART ensemble; the probability is the mean of the trees' leaf
/// class-1 fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap and feature subsets from its own
    /// ChaCha stream, so results do not depend on thread scheduling.
    pub(crate) fn fit(
        set: &TrainingSet,
        n_trees: usize,
        max_features: usize,
        balanced: bool,
        seed: u64,
    ) -> Self {
        let base = set.row_weights(balanced);
        let presorted = Presorted::new(&set.x);
        let n = set.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                let weights: Vec<f64> = counts
                    .iter()
                    .zip(&base)
                    .map(|(&c, &w)| f64::from(c) * w)
                    .collect();
                grow_classifier(
                    &set.y,
                    &weights,
                    &presorted,
                    FeatureSampling::Random {
                        max: max_features.max(1),
                        rng: &mut rng,
                    },
                )
            })
            .collect();
        Self { trees }
    }

    pub fn predict_proba(&self, x: &Features) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
