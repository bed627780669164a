//! CART trees: weighted-Gini classification trees (decision tree, forest
//! members) and depth-limited regression trees for boosting.
//!
//! Rows are presorted once per feature; a node owns one contiguous range of
//! every sorted column and splits it stably in place, so nothing re-sorts.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Features, TrainingSet, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat binary tree; node 0 is the root. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &Features) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    row: u32,
}

/// Per-feature row orderings (ties broken by row index).
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    order: [Vec<Entry>; N_FEATURES],
}

impl Presorted {
    pub fn new(x: &[Features]) -> Self {
        let order = std::array::from_fn(|f| {
            let mut idx: Vec<Entry> = x
                .iter()
                .enumerate()
                .map(|(i, r)| Entry {
                    value: r[f],
                    row: i as u32,
                })
                .collect();
            idx.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.row.cmp(&b.row)));
            idx
        });
        Self { order }
    }

    fn columns(&self, keep: impl Fn(usize) -> bool) -> Columns {
        let cols: [Vec<Entry>; N_FEATURES] = std::array::from_fn(|f| {
            self.order[f]
                .iter()
                .copied()
                .filter(|e| keep(e.row as usize))
                .collect()
        });
        let len = cols[0].len();
        Columns {
            cols,
            scratch: Vec::with_capacity(len),
        }
    }
}

/// Sorted columns; every tree node owns the same contiguous range in each.
struct Columns {
    cols: [Vec<Entry>; N_FEATURES],
    scratch: Vec<Entry>,
}

impl Columns {
    fn len(&self) -> usize {
        self.cols[0].len()
    }

    /// Stable in-place split of `start..end` in every column; returns the
    /// first index of the right part.
    fn partition(&mut self, start: usize, end: usize, goes_left: &[bool]) -> usize {
        let mut mid = start;
        for col in &mut self.cols {
            self.scratch.clear();
            let mut w = start;
            for k in start..end {
                let e = col[k];
                if goes_left[e.row as usize] {
                    col[w] = e;
                    w += 1;
                } else {
                    self.scratch.push(e);
                }
            }
            col[w..end].copy_from_slice(&self.scratch);
            mid = w;
        }
        mid
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || !mid.is_finite() {
        lo
    } else {
        mid
    }
}

struct Split {
    feature: usize,
    /// Entries `start..=pos` of the feature's column go left.
    pos: usize,
    threshold: f64,
}

/// Feature visiting policy at each node.
pub(crate) enum FeatureSampling<'a> {
    All,
    /// Shuffle features and evaluate up to `max` non-constant ones.
    Random {
        max: usize,
        rng: &'a mut ChaCha8Rng,
    },
}

fn split_node(nodes: &mut Vec<TreeNode>, id: usize, split: &Split) -> (usize, usize) {
    let (left, right) = (nodes.len(), nodes.len() + 1);
    nodes.push(TreeNode::Leaf { value: 0.0 });
    nodes.push(TreeNode::Leaf { value: 0.0 });
    nodes[id] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    (left, right)
}

fn mark_left(goes_left: &mut [bool], col: &[Entry], start: usize, end: usize, pos: usize) {
    for (k, e) in col[start..end].iter().enumerate() {
        goes_left[e.row as usize] = start + k <= pos;
    }
}

/// Grows an unpruned weighted-Gini tree. Rows with zero weight are ignored.
/// Leaves store the weighted fraction of label 1.
pub(crate) fn grow_classifier(
    y: &[u8],
    weights: &[f64],
    presorted: &Presorted,
    mut sampling: FeatureSampling<'_>,
) -> Tree {
    // per-row class weights: (weight of class 0, weight of class 1)
    let split_w: Vec<[f64; 2]> = y
        .iter()
        .zip(weights)
        .map(|(&l, &w)| if l == 1 { [0.0, w] } else { [w, 0.0] })
        .collect();
    let mut cols = presorted.columns(|i| weights[i] > 0.0);
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut goes_left = vec![false; y.len()];
    let mut stack = vec![(0usize, 0usize, cols.len())];
    let mut feature_order: Vec<usize> = (0..N_FEATURES).collect();

    while let Some((id, start, end)) = stack.pop() {
        let mut totals = [0.0f64; 2];
        for e in &cols.cols[0][start..end] {
            let w = split_w[e.row as usize];
            totals[0] += w[0];
            totals[1] += w[1];
        }
        let total = totals[0] + totals[1];
        let leaf_value = if total > 0.0 { totals[1] / total } else { 0.5 };
        if end - start < 2 || totals[0] <= 0.0 || totals[1] <= 0.0 {
            nodes[id] = TreeNode::Leaf { value: leaf_value };
            continue;
        }

        let budget = match &mut sampling {
            FeatureSampling::All => N_FEATURES,
            FeatureSampling::Random { max, rng } => {
                feature_order.shuffle(*rng);
                *max
            }
        };
        let mut best: Option<(f64, Split)> = None;
        let mut visited = 0;
        for &f in &feature_order {
            if visited >= budget {
                break;
            }
            let col = &cols.cols[f][start..end];
            if col[0].value >= col[col.len() - 1].value {
                continue;
            }
            visited += 1;
            let mut left = [0.0f64; 2];
            for k in 0..col.len() - 1 {
                let w = split_w[col[k].row as usize];
                left[0] += w[0];
                left[1] += w[1];
                let (v, next) = (col[k].value, col[k + 1].value);
                if v >= next {
                    continue;
                }
                let wl = left[0] + left[1];
                let right = [totals[0] - left[0], totals[1] - left[1]];
                let wr = right[0] + right[1];
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                // maximizing this proxy minimizes weighted child Gini
                let score = (left[0] * left[0] + left[1] * left[1]) / wl
                    + (right[0] * right[0] + right[1] * right[1]) / wr;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((
                        score,
                        Split {
                            feature: f,
                            pos: start + k,
                            threshold: midpoint(v, next),
                        },
                    ));
                }
            }
        }

        let Some((_, split)) = best else {
            nodes[id] = TreeNode::Leaf { value: leaf_value };
            continue;
        };
        mark_left(
            &mut goes_left,
            &cols.cols[split.feature],
            start,
            end,
            split.pos,
        );
        let mid = cols.partition(start, end, &goes_left);
        let (l, r) = split_node(&mut nodes, id, &split);
        stack.push((r, mid, end));
        stack.push((l, start, mid));
    }
    Tree { nodes }
}

/// Single weighted CART classifier over all features.
pub(crate) fn fit_decision_tree(set: &TrainingSet, balanced: bool) -> Tree {
    let weights = set.row_weights(balanced);
    let presorted = Presorted::new(&set.x);
    grow_classifier(&set.y, &weights, &presorted, FeatureSampling::All)
}

/// Depth-limited least-squares tree on `targets`, with leaf values
/// `Σ targets / Σ denominators` over the rows reaching each leaf.
pub(crate) fn grow_regressor(
    targets: &[f64],
    denominators: &[f64],
    presorted: &Presorted,
    max_depth: usize,
) -> Tree {
    let mut cols = presorted.columns(|_| true);
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut goes_left = vec![false; targets.len()];
    let mut stack = vec![(0usize, 0usize, 0usize, cols.len())];

    while let Some((id, depth, start, end)) = stack.pop() {
        let rows = &cols.cols[0][start..end];
        let n = rows.len();
        let sum: f64 = rows.iter().map(|e| targets[e.row as usize]).sum();
        let mean = sum / n as f64;
        let spread: f64 = rows
            .iter()
            .map(|e| (targets[e.row as usize] - mean).powi(2))
            .sum();
        if depth >= max_depth || n < 2 || spread <= f64::EPSILON * n as f64 {
            let den: f64 = rows.iter().map(|e| denominators[e.row as usize]).sum();
            let value = if den.abs() < 1e-150 { 0.0 } else { sum / den };
            nodes[id] = TreeNode::Leaf { value };
            continue;
        }

        let mut best: Option<(f64, Split)> = None;
        for (f, col) in cols.cols.iter().enumerate() {
            let col = &col[start..end];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += targets[col[k].row as usize];
                let (v, next) = (col[k].value, col[k + 1].value);
                if v >= next {
                    continue;
                }
                let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
                let diff = left_sum / nl - (sum - left_sum) / nr;
                let score = nl * nr * diff * diff / n as f64;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((
                        score,
                        Split {
                            feature: f,
                            pos: start + k,
                            threshold: midpoint(v, next),
                        },
                    ));
                }
            }
        }
        let Some((_, split)) = best else {
            let den: f64 = rows.iter().map(|e| denominators[e.row as usize]).sum();
            let value = if den.abs() < 1e-150 { 0.0 } else { sum / den };
            nodes[id] = TreeNode::Leaf { value };
            continue;
        };
        mark_left(
            &mut goes_left,
            &cols.cols[split.feature],
            start,
            end,
            split.pos,
        );
        let mid = cols.partition(start, end, &goes_left);
        let (l, r) = split_node(&mut nodes, id, &split);
        stack.push((r, depth + 1, mid, end));
        stack.push((l, depth + 1, start, mid));
    }
    Tree { nodes }
}
