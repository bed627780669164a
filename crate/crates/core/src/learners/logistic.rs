use serde::{Deserialize, Serialize};

use super::{sigmoid, Features, TrainingSet, N_FEATURES};

const DIM: usize = N_FEATURES + 1;

/// L2-regularized logistic regression (unpenalized intercept).
///
/// Minimizes `C · Σ wᵢ · logloss(i) + ½‖β‖²` by full-batch gradient descent
/// with the fixed step `1/L`, `L` being a Lipschitz bound of the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub coefficients: Features,
    pub intercept: f64,
    pub iterations: usize,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn augmented(x: &Features) -> [f64; DIM] {
    let mut xt = [1.0; DIM];
    xt[..N_FEATURES].copy_from_slice(x);
    xt
}

fn dot(a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Largest eigenvalue of the weighted second-moment matrix `Σ wᵢ x̃ᵢ x̃ᵢᵀ`
/// (power iteration, padded by 5%).
fn curvature_bound(x: &[Features], w: &[f64]) -> f64 {
    let mut m = [[0.0; DIM]; DIM];
    for (row, &wi) in x.iter().zip(w) {
        let xt = augmented(row);
        for a in 0..DIM {
            for b in 0..DIM {
                m[a][b] += wi * xt[a] * xt[b];
            }
        }
    }
    let mut v = [1.0 / (DIM as f64).sqrt(); DIM];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mv: [f64; DIM] = std::array::from_fn(|a| dot(&m[a], &v));
        let norm = dot(&mv, &mv).sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = mv.map(|c| c / norm);
    }
    lambda * 1.05
}

struct Objective<'a> {
    set: &'a TrainingSet,
    w: Vec<f64>,
    c: f64,
}

impl Objective<'_> {
    fn loss_and_gradient(&self, theta: &[f64; DIM]) -> (f64, [f64; DIM]) {
        let mut loss = 0.0;
        let mut g = [0.0; DIM];
        for ((x, &y), &w) in self.set.x.iter().zip(&self.set.y).zip(&self.w) {
            let xt = augmented(x);
            let z = dot(theta, &xt);
            let y = f64::from(y);
            loss += w * (log1pexp(z) - y * z);
            let r = w * (sigmoid(z) - y);
            for a in 0..DIM {
                g[a] += r * xt[a];
            }
        }
        loss *= self.c;
        g.iter_mut().for_each(|v| *v *= self.c);
        for f in 0..N_FEATURES {
            loss += 0.5 * theta[f] * theta[f];
            g[f] += theta[f];
        }
        (loss, g)
    }
}

impl LogisticRegression {
    /// Stops when the loss changes by less than `tol` (relative) between
    /// epochs or after `max_iter` epochs.
    pub(crate) fn fit(
        set: &TrainingSet,
        max_iter: usize,
        tol: f64,
        c: f64,
        balanced: bool,
    ) -> Self {
        let obj = Objective {
            set,
            w: set.row_weights(balanced),
            c,
        };
        let lipschitz = 0.25 * c * curvature_bound(&set.x, &obj.w) + 1.0;
        let step = 1.0 / lipschitz;
        let mut theta = [0.0; DIM];
        let (mut loss, mut grad) = obj.loss_and_gradient(&theta);
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            for k in 0..DIM {
                theta[k] -= step * grad[k];
            }
            let (next_loss, next_grad) = obj.loss_and_gradient(&theta);
            let change = (loss - next_loss).abs();
            loss = next_loss;
            grad = next_grad;
            if change <= tol * loss.abs().max(1.0) {
                break;
            }
        }
        let mut coefficients = [0.0; N_FEATURES];
        coefficients.copy_from_slice(&theta[..N_FEATURES]);
        Self {
            coefficients,
            intercept: theta[N_FEATURES],
            iterations,
        }
    }

    pub fn decision(&self, x: &Features) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Features) -> f64 {
        sigmoid(self.decision(x))
    }
}
