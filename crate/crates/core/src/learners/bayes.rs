use serde::{Deserialize, Serialize};

use super::{Features, TrainingSet, N_FEATURES};

/// Gaussian naive Bayes with class-frequency priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: [f64; 2],
    pub means: [Features; 2],
    pub variances: [Features; 2],
}

impl GaussianNb {
    /// Population variances, each raised to at least `var_floor`.
    pub(crate) fn fit(set: &TrainingSet, var_floor: f64) -> Self {
        let mut count = [0usize; 2];
        let mut means = [[0.0; N_FEATURES]; 2];
        for (x, &y) in set.x.iter().zip(&set.y) {
            let c = usize::from(y);
            count[c] += 1;
            for f in 0..N_FEATURES {
                means[c][f] += x[f];
            }
        }
        for c in 0..2 {
            means[c].iter_mut().for_each(|m| *m /= count[c] as f64);
        }
        let mut variances = [[0.0; N_FEATURES]; 2];
        for (x, &y) in set.x.iter().zip(&set.y) {
            let c = usize::from(y);
            for f in 0..N_FEATURES {
                variances[c][f] += (x[f] - means[c][f]).powi(2);
            }
        }
        for c in 0..2 {
            variances[c]
                .iter_mut()
                .for_each(|v| *v = (*v / count[c] as f64).max(var_floor));
        }
        let n = set.len() as f64;
        Self {
            log_prior: [(count[0] as f64 / n).ln(), (count[1] as f64 / n).ln()],
            means,
            variances,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn log_joint(&self, c: usize, x: &Features) -> f64 {
        let mut s = self.log_prior[c];
        for f in 0..N_FEATURES {
            let v = self.variances[c][f];
            s -= 0.5 * (std::f64::consts::TAU * v).ln()
                + (x[f] - self.means[c][f]).powi(2) / (2.0 * v);
        }
        s
    }

    pub fn predict_proba(&self, x: &Features) -> f64 {
        let (l0, l1) = (self.log_joint(0, x), self.log_joint(1, x));
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        e1 / (e0 + e1)
    }
}
