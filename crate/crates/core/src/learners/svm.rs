//! C-SVC trained by SMO with second-order working-set selection, with
//! sigmoid (Platt) probability calibration on the training decisions.

use serde::{Deserialize, Serialize};

use super::{Features, TrainingSet, N_FEATURES};

const TAU: f64 = 1e-12;
const STOP_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    /// RBF with `γ = 1 / (n_features · var(X))`, the variance taken over every
    /// entry of the matrix.
    pub fn rbf_scaled(x: &[Features]) -> Self {
        let all: Vec<f64> = x.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let gamma = if var > 0.0 {
            1.0 / (N_FEATURES as f64 * var)
        } else {
            1.0
        };
        Kernel::Rbf { gamma }
    }

    pub fn eval(&self, a: &Features, b: &Features) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(p, q)| p * q).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub kernel: Kernel,
    pub support_vectors: Vec<Features>,
    /// `αᵢ · yᵢ` for each support vector (`y = +1` for label 1).
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub prob_a: f64,
    pub prob_b: f64,
}

struct Smo<'a> {
    k: &'a [f64],
    n: usize,
    y: Vec<f64>,
    c: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Smo<'_> {
    fn kij(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
    fn is_upper(&self, i: usize) -> bool {
        self.alpha[i] >= self.c[i]
    }
    fn is_lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    fn select(&self) -> Option<(usize, usize)> {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..self.n {
            let v = if self.y[t] > 0.0 {
                (!self.is_upper(t)).then(|| -self.grad[t])
            } else {
                (!self.is_lower(t)).then(|| self.grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i = Some(t);
                }
            }
        }
        let i = i?;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = f64::INFINITY;
        let mut j = None;
        for t in 0..self.n {
            let (eligible, diff, g2) = if self.y[t] > 0.0 {
                (!self.is_lower(t), gmax + self.grad[t], self.grad[t])
            } else {
                (!self.is_upper(t), gmax - self.grad[t], -self.grad[t])
            };
            if !eligible {
                continue;
            }
            gmax2 = gmax2.max(g2);
            if diff > 0.0 {
                let mut quad = self.kij(i, i) + self.kij(t, t) - 2.0 * self.kij(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= best {
                    best = obj;
                    j = Some(t);
                }
            }
        }
        if gmax + gmax2 < STOP_EPS {
            return None;
        }
        j.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let (ci, cj) = (self.c[i], self.c[j]);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let mut quad = self.kij(i, i) + self.kij(j, j) - 2.0 * self.kij(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let (yi, yj) = (self.y[i], self.y[j]);
        for t in 0..self.n {
            let yt = self.y[t];
            self.grad[t] += yt * (yi * self.kij(i, t) * di + yj * self.kij(j, t) * dj);
        }
    }

    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for i in 0..self.n {
            let yg = self.y[i] * self.grad[i];
            if self.is_upper(i) {
                if self.y[i] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.is_lower(i) {
                if self.y[i] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

fn platt_probability(dec: f64, a: f64, b: f64) -> f64 {
    let f = dec * a + b;
    if f >= 0.0 {
        (-f).exp() / (1.0 + (-f).exp())
    } else {
        1.0 / (1.0 + f.exp())
    }
}

/// Fits `P(y = 1 | f) = 1 / (1 + exp(A·f + B))` by regularized maximum
/// likelihood (Newton with backtracking).
fn sigmoid_train(dec: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = dec.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let target: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&target)
            .map(|(&d, &t)| {
                let f = d * a + b;
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&d, &t) in dec.iter().zip(&target) {
            let f = d * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = t - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

impl Svm {
    /// `c` is scaled per class by the balanced weight when `balanced`.
    pub(crate) fn fit(set: &TrainingSet, kernel: Kernel, c: f64, balanced: bool) -> Self {
        let n = set.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(&set.x[i], &set.x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let weights = set.row_weights(balanced);
        let mut smo = Smo {
            k: &k,
            n,
            y: set
                .y
                .iter()
                .map(|&l| if l == 1 { 1.0 } else { -1.0 })
                .collect(),
            c: weights.iter().map(|w| w * c).collect(),
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
        };
        let max_iter = 10_000_000usize.max(100 * n);
        for _ in 0..max_iter {
            let Some((i, j)) = smo.select() else { break };
            smo.update(i, j);
        }
        let rho = smo.rho();
        let decisions: Vec<f64> = (0..n)
            .map(|t| {
                (0..n)
                    .filter(|&s| smo.alpha[s] > 0.0)
                    .map(|s| smo.alpha[s] * smo.y[s] * k[s * n + t])
                    .sum::<f64>()
                    - rho
            })
            .collect();
        let positive: Vec<bool> = set.y.iter().map(|&l| l == 1).collect();
        let (prob_a, prob_b) = sigmoid_train(&decisions, &positive);
        let (support_vectors, dual_coef) = (0..n)
            .filter(|&s| smo.alpha[s] > 0.0)
            .map(|s| (set.x[s], smo.alpha[s] * smo.y[s]))
            .unzip();
        Self {
            kernel,
            support_vectors,
            dual_coef,
            rho,
            prob_a,
            prob_b,
        }
    }

    pub fn decision(&self, x: &Features) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, &a)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }

    pub fn predict_proba(&self, x: &Features) -> f64 {
        platt_probability(self.decision(x), self.prob_a, self.prob_b)
    }
}
