//! Eight shallow binary classifiers behind one fit / predict-probability
//! interface.
//!
//! Training rows are put in a canonical order (subject, timestamp, feature
//! bits) before any fitting, so a model depends only on the multiset of rows
//! and the seed, never on the order they were supplied in.

mod bayes;
mod boost;
mod forest;
mod knn;
mod logistic;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bayes::GaussianNb;
pub use boost::GradientBoosting;
pub use forest::RandomForest;
pub use knn::Knn;
pub use logistic::LogisticRegression;
pub use svm::{Kernel, Svm};
pub use tree::{Tree, TreeNode};

pub const N_FEATURES: usize = 7;
pub type Features = [f64; N_FEATURES];

/// Version tag written into saved model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "voxtriage-model";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("non-finite feature value")]
    NonFiniteInput,
    #[error("model document: {0}")]
    Format(String),
}

/// One labelled training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: Features,
    /// 1 for diabetic, 0 otherwise.
    pub label: u8,
    pub subject_id: String,
    /// Ordering key within a subject (milliseconds since the epoch).
    pub recorded_at: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(rows: Vec<Row>) -> Result<Self, LearnError> {
        if rows
            .iter()
            .any(|r| r.features.iter().any(|v| !v.is_finite()))
        {
            return Err(LearnError::NonFiniteInput);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `[count(label 0), count(label 1)]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.rows.iter().filter(|r| r.label == 1).count();
        [self.rows.len() - ones, ones]
    }

    fn canonical(&self) -> Vec<&Row> {
        let mut rows: Vec<&Row> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            a.subject_id
                .cmp(&b.subject_id)
                .then(a.recorded_at.cmp(&b.recorded_at))
                .then_with(|| {
                    let ka = a.features.map(f64::to_bits);
                    let kb = b.features.map(f64::to_bits);
                    ka.cmp(&kb)
                })
                .then(a.label.cmp(&b.label))
        });
        rows
    }
}

/// Rows in canonical order, split into parallel feature / label arrays.
#[derive(Debug, Clone)]
pub(crate) struct TrainingSet {
    pub x: Vec<Features>,
    pub y: Vec<u8>,
}

impl TrainingSet {
    fn from_dataset(data: &Dataset) -> Result<Self, LearnError> {
        if data.is_empty() {
            return Err(LearnError::EmptyData);
        }
        let counts = data.class_counts();
        if counts[0] == 0 || counts[1] == 0 {
            return Err(LearnError::SingleClassData);
        }
        let rows = data.canonical();
        Ok(Self {
            x: rows.iter().map(|r| r.features).collect(),
            y: rows.iter().map(|r| r.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// `n / (2 · count(c))` per class.
    pub fn balanced_weights(&self) -> [f64; 2] {
        let ones = self.y.iter().filter(|&&l| l == 1).count();
        let n = self.y.len() as f64;
        [
            n / (2.0 * (self.y.len() - ones) as f64),
            n / (2.0 * ones as f64),
        ]
    }

    /// Per-row weights: balanced class weights, or all ones.
    pub fn row_weights(&self, balanced: bool) -> Vec<f64> {
        if balanced {
            let cw = self.balanced_weights();
            self.y.iter().map(|&l| cw[usize::from(l)]).collect()
        } else {
            vec![1.0; self.y.len()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "LR")]
    LogisticRegression,
    #[serde(rename = "DT")]
    DecisionTree,
    #[serde(rename = "RF")]
    RandomForest,
    #[serde(rename = "GBT")]
    GradientBoosting,
    #[serde(rename = "KNN")]
    KNearestNeighbors,
    #[serde(rename = "GNB")]
    GaussianNaiveBayes,
    #[serde(rename = "SVM-RBF")]
    SvmRbf,
    #[serde(rename = "SVM-Linear")]
    SvmLinear,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 8] = [
        AlgorithmKind::LogisticRegression,
        AlgorithmKind::DecisionTree,
        AlgorithmKind::RandomForest,
        AlgorithmKind::GradientBoosting,
        AlgorithmKind::KNearestNeighbors,
        AlgorithmKind::GaussianNaiveBayes,
        AlgorithmKind::SvmRbf,
        AlgorithmKind::SvmLinear,
    ];

    /// Short display name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::LogisticRegression => "LR",
            AlgorithmKind::DecisionTree => "DT",
            AlgorithmKind::RandomForest => "RF",
            AlgorithmKind::GradientBoosting => "GBT",
            AlgorithmKind::KNearestNeighbors => "KNN",
            AlgorithmKind::GaussianNaiveBayes => "GNB",
            AlgorithmKind::SvmRbf => "SVM-RBF",
            AlgorithmKind::SvmLinear => "SVM-Linear",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown algorithm '{0}' (valid: LR, DT, RF, GBT, KNN, GNB, SVM-RBF, SVM-Linear)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for AlgorithmKind {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match key.as_str() {
            "LR" => AlgorithmKind::LogisticRegression,
            "DT" => AlgorithmKind::DecisionTree,
            "RF" => AlgorithmKind::RandomForest,
            "GBT" | "XGB" => AlgorithmKind::GradientBoosting,
            "KNN" => AlgorithmKind::KNearestNeighbors,
            "GNB" => AlgorithmKind::GaussianNaiveBayes,
            "SVMRBF" => AlgorithmKind::SvmRbf,
            "SVMLINEAR" => AlgorithmKind::SvmLinear,
            _ => return Err(UnknownAlgorithm(s.to_string())),
        })
    }
}

/// Per-kind hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Logistic {
        max_iter: usize,
        tol: f64,
        c: f64,
        balanced: bool,
    },
    Tree {
        balanced: bool,
    },
    Forest {
        n_trees: usize,
        max_features: usize,
        balanced: bool,
    },
    Boosting {
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
    },
    Knn {
        k: usize,
    },
    GaussianNb {
        var_floor: f64,
    },
    Svm {
        c: f64,
        balanced: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub params: Hyperparameters,
    pub seed: u64,
}

impl AlgorithmSpec {
    /// Defaults mirroring the reference configuration of each algorithm.
    pub fn new(kind: AlgorithmKind, seed: u64) -> Self {
        let params = match kind {
            AlgorithmKind::LogisticRegression => Hyperparameters::Logistic {
                max_iter: 500,
                tol: 1e-6,
                c: 1.0,
                balanced: true,
            },
            AlgorithmKind::DecisionTree => Hyperparameters::Tree { balanced: true },
            AlgorithmKind::RandomForest => Hyperparameters::Forest {
                n_trees: 500,
                max_features: 3,
                balanced: true,
            },
            AlgorithmKind::GradientBoosting => Hyperparameters::Boosting {
                n_trees: 300,
                max_depth: 3,
                learning_rate: 0.1,
            },
            AlgorithmKind::KNearestNeighbors => Hyperparameters::Knn { k: 5 },
            AlgorithmKind::GaussianNaiveBayes => Hyperparameters::GaussianNb { var_floor: 1e-9 },
            AlgorithmKind::SvmRbf | AlgorithmKind::SvmLinear => Hyperparameters::Svm {
                c: 1.0,
                balanced: true,
            },
        };
        Self { kind, params, seed }
    }

    /// Same spec with class balancing switched on or off (where applicable).
    pub fn with_balanced(mut self, on: bool) -> Self {
        match &mut self.params {
            Hyperparameters::Logistic { balanced, .. }
            | Hyperparameters::Tree { balanced }
            | Hyperparameters::Forest { balanced, .. }
            | Hyperparameters::Svm { balanced, .. } => *balanced = on,
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(LogisticRegression),
    Tree(Tree),
    Forest(RandomForest),
    Boosting(GradientBoosting),
    Knn(Knn),
    GaussianNb(GaussianNb),
    Svm(Svm),
}

/// A fitted classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: AlgorithmSpec,
    pub n_rows: usize,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: Model,
}

fn mismatch(spec: &AlgorithmSpec) -> ! {
    panic!(
        "hyperparameters {:?} do not match kind {}",
        spec.params, spec.kind
    )
}

/// Trains `spec` on `data`.
pub fn fit(spec: &AlgorithmSpec, data: &Dataset) -> Result<Model, LearnError> {
    let set = TrainingSet::from_dataset(data)?;
    let params = match (spec.kind, &spec.params) {
        (
            AlgorithmKind::LogisticRegression,
            &Hyperparameters::Logistic {
                max_iter,
                tol,
                c,
                balanced,
            },
        ) => ModelParams::Logistic(LogisticRegression::fit(&set, max_iter, tol, c, balanced)),
        (AlgorithmKind::DecisionTree, &Hyperparameters::Tree { balanced }) => {
            ModelParams::Tree(tree::fit_decision_tree(&set, balanced))
        }
        (
            AlgorithmKind::RandomForest,
            &Hyperparameters::Forest {
                n_trees,
                max_features,
                balanced,
            },
        ) => ModelParams::Forest(RandomForest::fit(
            &set,
            n_trees,
            max_features,
            balanced,
            spec.seed,
        )),
        (
            AlgorithmKind::GradientBoosting,
            &Hyperparameters::Boosting {
                n_trees,
                max_depth,
                learning_rate,
            },
        ) => ModelParams::Boosting(GradientBoosting::fit(
            &set,
            n_trees,
            max_depth,
            learning_rate,
        )),
        (AlgorithmKind::KNearestNeighbors, &Hyperparameters::Knn { k }) => {
            ModelParams::Knn(Knn::fit(&set, k))
        }
        (AlgorithmKind::GaussianNaiveBayes, &Hyperparameters::GaussianNb { var_floor }) => {
            ModelParams::GaussianNb(GaussianNb::fit(&set, var_floor))
        }
        (AlgorithmKind::SvmRbf, &Hyperparameters::Svm { c, balanced }) => {
            ModelParams::Svm(Svm::fit(&set, Kernel::rbf_scaled(&set.x), c, balanced))
        }
        (AlgorithmKind::SvmLinear, &Hyperparameters::Svm { c, balanced }) => {
            ModelParams::Svm(Svm::fit(&set, Kernel::Linear, c, balanced))
        }
        _ => mismatch(spec),
    };
    Ok(Model {
        spec: spec.clone(),
        n_rows: set.len(),
        params,
    })
}

impl Model {
    /// Probability of label 1, always in `[0, 1]`.
    pub fn predict_proba(&self, x: &Features) -> Result<f64, LearnError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFiniteInput);
        }
        let p = match &self.params {
            ModelParams::Logistic(m) => m.predict_proba(x),
            ModelParams::Tree(m) => m.predict(x),
            ModelParams::Forest(m) => m.predict_proba(x),
            ModelParams::Boosting(m) => m.predict_proba(x),
            ModelParams::Knn(m) => m.predict_proba(x),
            ModelParams::GaussianNb(m) => m.predict_proba(x),
            ModelParams::Svm(m) => m.predict_proba(x),
        };
        Ok(if p.is_nan() { 0.5 } else { p.clamp(0.0, 1.0) })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| LearnError::Format(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(LearnError::Format(format!(
                "unexpected format '{}'",
                doc.format
            )));
        }
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Format(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        Ok(doc.model)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
