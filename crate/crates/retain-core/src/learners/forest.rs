//! Random forest of unpruned CART trees on bootstrap samples, with
//! per-feature importance as mean Gini decrease. Per-tree seeds derive
//! deterministically from the master seed, so results are identical for
//! any training schedule.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::Dataset;
use crate::learners::tree::{best_split, partition, Cart, Node};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub m_try: usize,
    pub min_leaf: usize,
    /// Disabled only for degenerate-case checks (single unconstrained
    /// tree must match plain CART).
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, m_try: usize, seed: u64) -> Self {
        ForestParams {
            n_trees,
            m_try,
            min_leaf: 1,
            bootstrap: true,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Cart>,
    pub params: ForestParams,
    /// Mean impurity decrease per raw feature column.
    pub importance: Vec<f64>,
    pub columns: Vec<String>,
}

impl Forest {
    /// Mean leaf probability across trees.
    pub fn score_row(&self, raw_row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.score_row(raw_row)).sum();
        sum / self.trees.len() as f64
    }

    /// Fraction of trees voting class 1 (vote stability checks).
    pub fn vote_fraction(&self, raw_row: &[f64]) -> f64 {
        let votes: usize = self
            .trees
            .iter()
            .map(|t| (t.score_row(raw_row) >= 0.5) as usize)
            .sum();
        votes as f64 / self.trees.len() as f64
    }

    /// Importances sorted descending, with column names.
    pub fn ranked_importance(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .columns
            .iter()
            .cloned()
            .zip(self.importance.iter().copied())
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }
}

// SplitMix64; decouples per-tree streams from the master seed.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn grow_tree(
    x: &[Vec<f64>],
    y: &[u8],
    idx: Vec<usize>,
    m_try: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) -> Cart {
    let p = x[0].len();
    let mut cart = Cart {
        nodes: vec![Cart::leaf_for(&idx, y)],
    };
    // Depth-first expansion; explicit stack of (node, rows).
    let mut stack = vec![(0usize, idx)];
    while let Some((node, rows)) = stack.pop() {
        let cols: Vec<usize> = if m_try >= p {
            (0..p).collect()
        } else {
            rand::seq::index::sample(rng, p, m_try).into_vec()
        };
        let Some(split) = best_split(x, y, &rows, &cols, min_leaf) else {
            continue;
        };
        importance[split.col] += split.decrease;
        let (left_idx, right_idx) = partition(x, &rows, split.col, split.threshold);
        let left = cart.nodes.len();
        cart.nodes.push(Cart::leaf_for(&left_idx, y));
        let right = cart.nodes.len();
        cart.nodes.push(Cart::leaf_for(&right_idx, y));
        cart.nodes[node] = Node::Internal {
            col: split.col,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_idx));
        stack.push((left, left_idx));
    }
    cart
}

/// Train on the dataset's raw feature space.
pub fn train_forest(data: &Dataset, params: ForestParams) -> Result<Forest> {
    let n = data.rows.len();
    let p = data.columns.len();
    if n == 0 {
        return Err(RetainError::InvalidArgument("empty dataset".to_string()));
    }
    if params.m_try < 1 || params.m_try > p {
        return Err(RetainError::InvalidArgument(format!(
            "m_try {} outside [1, {p}]",
            params.m_try
        )));
    }
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut importance = vec![0.0; p];
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
        let idx: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(grow_tree(
            &data.x_raw,
            &data.y,
            idx,
            params.m_try,
            params.min_leaf,
            &mut rng,
            &mut importance,
        ));
    }
    let scale = (params.n_trees * n.max(1)) as f64;
    for v in importance.iter_mut() {
        *v /= scale;
    }
    Ok(Forest {
        trees,
        params,
        importance,
        columns: data.columns.clone(),
    })
}
