//! Shared CART machinery: Gini impurity, exhaustive split search, and a
//! flat binary-tree representation used by both the heuristic rule tree
//! and the random forest.

use serde::{Deserialize, Serialize};

/// Binary Gini impurity for `pos` positives out of `n`.
pub fn gini(pos: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub col: usize,
    pub threshold: f64,
    /// Absolute weighted impurity decrease:
    /// n*g(parent) - nl*g(left) - nr*g(right).
    pub decrease: f64,
}

/// Best `(feature, threshold)` over `cols` for the rows in `idx`.
/// Thresholds are midpoints between consecutive distinct sorted values;
/// ties in decrease break to the lowest column index, then the lowest
/// threshold. Returns `None` when no split reduces impurity or respects
/// `min_leaf`.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[u8],
    idx: &[usize],
    cols: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total_pos: usize = idx.iter().map(|&i| y[i] as usize).sum();
    let parent = gini(total_pos as f64, n as f64);
    if parent == 0.0 {
        return None;
    }
    let parent_weighted = n as f64 * parent;

    let mut best: Option<Split> = None;
    let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &col in cols {
        sorted.clear();
        sorted.extend(idx.iter().map(|&i| (x[i][col], y[i])));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_n = 0usize;
        let mut left_pos = 0usize;
        for k in 0..n - 1 {
            left_n += 1;
            left_pos += sorted[k].1 as usize;
            if sorted[k].0 == sorted[k + 1].0 {
                continue;
            }
            if left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let right_n = n - left_n;
            let right_pos = total_pos - left_pos;
            let weighted = left_n as f64 * gini(left_pos as f64, left_n as f64)
                + right_n as f64 * gini(right_pos as f64, right_n as f64);
            let decrease = parent_weighted - weighted;
            if decrease <= 1e-12 {
                continue;
            }
            let threshold = 0.5 * (sorted[k].0 + sorted[k + 1].0);
            let better = match &best {
                None => true,
                Some(b) => {
                    decrease > b.decrease + 1e-12
                        || ((decrease - b.decrease).abs() <= 1e-12
                            && (col, threshold) < (b.col, b.threshold))
                }
            };
            if better {
                best = Some(Split { col, threshold, decrease });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: u8,
        /// Training fraction of retained rows at this leaf.
        prob: f64,
        n: usize,
    },
    Internal {
        col: usize,
        threshold: f64,
        /// Child index for rows with `x[col] <= threshold`.
        left: usize,
        right: usize,
    },
}

/// Flat binary classification tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cart {
    pub nodes: Vec<Node>,
}

impl Cart {
    pub fn leaf_for(idx: &[usize], y: &[u8]) -> Node {
        let n = idx.len();
        let pos: usize = idx.iter().map(|&i| y[i] as usize).sum();
        let prob = if n == 0 { 0.0 } else { pos as f64 / n as f64 };
        Node::Leaf {
            class: (prob >= 0.5) as u8,
            prob,
            n,
        }
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { prob, .. } => return *prob,
                Node::Internal { col, threshold, left, right } => {
                    at = if row[*col] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Internal { .. }))
            .count()
    }
}

pub fn partition(x: &[Vec<f64>], idx: &[usize], col: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in idx {
        if x[i][col] <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(0.0, 10.0), 0.0);
        assert_eq!(gini(10.0, 10.0), 0.0);
        assert_eq!(gini(5.0, 10.0), 0.5);
    }

    #[test]
    fn perfect_split_found() {
        let x = vec![vec![1.0], vec![2.0], vec![10.0], vec![11.0]];
        let y = vec![0, 0, 1, 1];
        let idx = vec![0, 1, 2, 3];
        let s = best_split(&x, &y, &idx, &[0], 1).unwrap();
        assert_eq!(s.col, 0);
        assert_eq!(s.threshold, 6.0);
        assert!((s.decrease - 4.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn pure_node_no_split() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1, 1];
        assert!(best_split(&x, &y, &[0, 1], &[0], 1).is_none());
    }

    #[test]
    fn min_leaf_respected() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let y = vec![1, 0, 0, 0];
        // min_leaf 2 forbids the pure 1|3 split at 1.5.
        let s = best_split(&x, &y, &[0, 1, 2, 3], &[0], 2);
        if let Some(s) = s {
            assert_eq!(s.threshold, 2.5);
        }
    }

    #[test]
    fn tie_breaks_to_lowest_column() {
        // Identical columns: both give the same decrease.
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]];
        let y = vec![0, 0, 1, 1];
        let s = best_split(&x, &y, &[0, 1, 2, 3], &[0, 1], 1).unwrap();
        assert_eq!(s.col, 0);
    }
}
