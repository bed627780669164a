use serde::{Deserialize, Serialize};

use super::tree::{grow_regressor, Presorted, Tree};
use super::{sigmoid, Features, TrainingSet};

/// Gradient-boosted regression trees on the binomial deviance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    /// Initial log-odds (class prior).
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GradientBoosting {
    pub(crate) fn fit(
        set: &TrainingSet,
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
    ) -> Self {
        let n = set.len();
        let pos = set.y.iter().filter(|&&l| l == 1).count() as f64;
        let prior = pos / n as f64;
        let init = (prior / (1.0 - prior)).ln();
        let presorted = Presorted::new(&set.x);
        let mut raw = vec![init; n];
        let mut trees = Vec::with_capacity(n_trees);
        let mut residual = vec![0.0; n];
        let mut hessian = vec![0.0; n];
        for _ in 0..n_trees {
            for i in 0..n {
                let p = sigmoid(raw[i]);
                residual[i] = f64::from(set.y[i]) - p;
                hessian[i] = p * (1.0 - p);
            }
            let tree = grow_regressor(&residual, &hessian, &presorted, max_depth);
            for (r, x) in raw.iter_mut().zip(&set.x) {
                *r += learning_rate * tree.predict(x);
            }
            trees.push(tree);
        }
        Self {
            init,
            learning_rate,
            trees,
        }
    }

    pub fn decision(&self, x: &Features) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Features) -> f64 {
        sigmoid(self.decision(x))
    }
}
