//! Depth-limited heuristic decision tree and its portable rule export.
//!
//! The tree is grown best-first: among all frontier leaves, the one
//! whose best split yields the largest weighted Gini decrease is split
//! next, until the internal-node budget (`max_rules`) is spent or no
//! split helps. The result is exportable as an ordered list of
//! human-readable, machine-parsable decision rules suitable for
//! client-side reimplementation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::Dataset;
use crate::learners::tree::{best_split, partition, Cart, Node, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTree {
    pub cart: Cart,
    pub max_rules: usize,
    /// Column names of the raw (unstandardized, one-hot) feature space
    /// the tree was trained in.
    pub columns: Vec<String>,
}

impl RuleTree {
    pub fn score_row(&self, raw_row: &[f64]) -> f64 {
        self.cart.score_row(raw_row)
    }

    pub fn n_rules(&self) -> usize {
        self.cart.n_internal()
    }
}

/// Grow a heuristic tree on the dataset's raw feature space.
pub fn train_rule_tree(data: &Dataset, max_rules: usize, min_leaf: usize) -> Result<RuleTree> {
    if data.rows.is_empty() {
        return Err(RetainError::InvalidArgument("empty dataset".to_string()));
    }
    if max_rules < 1 {
        return Err(RetainError::InvalidArgument("max_rules must be >= 1".to_string()));
    }
    let idx: Vec<usize> = (0..data.rows.len()).collect();
    let cart = grow_best_first(&data.x_raw, &data.y, idx, max_rules, min_leaf);
    Ok(RuleTree {
        cart,
        max_rules,
        columns: data.columns.clone(),
    })
}

/// Train a tree on an arbitrary row subset (used by the robustness
/// protocol, which fits one tree per data chunk).
pub fn train_rule_tree_on(
    data: &Dataset,
    idx: &[usize],
    max_rules: usize,
    min_leaf: usize,
) -> Result<RuleTree> {
    if idx.is_empty() {
        return Err(RetainError::InvalidArgument("empty training subset".to_string()));
    }
    let cart = grow_best_first(&data.x_raw, &data.y, idx.to_vec(), max_rules, min_leaf);
    Ok(RuleTree {
        cart,
        max_rules,
        columns: data.columns.clone(),
    })
}

struct Frontier {
    node: usize,
    idx: Vec<usize>,
    split: Split,
}

fn grow_best_first(
    x: &[Vec<f64>],
    y: &[u8],
    root_idx: Vec<usize>,
    max_rules: usize,
    min_leaf: usize,
) -> Cart {
    let all_cols: Vec<usize> = (0..x[0].len()).collect();
    let mut cart = Cart {
        nodes: vec![Cart::leaf_for(&root_idx, y)],
    };
    let mut frontier: Vec<Frontier> = Vec::new();
    if let Some(split) = best_split(x, y, &root_idx, &all_cols, min_leaf) {
        frontier.push(Frontier { node: 0, idx: root_idx, split });
    }

    let mut internal = 0;
    while internal < max_rules && !frontier.is_empty() {
        // Largest weighted decrease; ties break to the earliest-created
        // frontier entry (frontier is kept in creation order).
        let best_at = frontier
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| {
                a.split
                    .decrease
                    .partial_cmp(&b.split.decrease)
                    .unwrap()
                    .then(bi.cmp(ai))
            })
            .map(|(i, _)| i)
            .unwrap();
        let Frontier { node, idx, split } = frontier.remove(best_at);

        let (left_idx, right_idx) = partition(x, &idx, split.col, split.threshold);
        let left_node = cart.nodes.len();
        cart.nodes.push(Cart::leaf_for(&left_idx, y));
        let right_node = cart.nodes.len();
        cart.nodes.push(Cart::leaf_for(&right_idx, y));
        cart.nodes[node] = Node::Internal {
            col: split.col,
            threshold: split.threshold,
            left: left_node,
            right: right_node,
        };
        internal += 1;

        if let Some(s) = best_split(x, y, &left_idx, &all_cols, min_leaf) {
            frontier.push(Frontier { node: left_node, idx: left_idx, split: s });
        }
        if let Some(s) = best_split(x, y, &right_idx, &all_cols, min_leaf) {
            frontier.push(Frontier { node: right_node, idx: right_idx, split: s });
        }
    }
    cart
}

/// One predicate of an exported rule: `column <= threshold` or
/// `column > threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: String,
    pub threshold: f64,
}

/// One root-to-leaf clause: all conditions hold -> predict `class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Predicate>,
    pub class: u8,
    pub probability: f64,
    pub support: usize,
}

/// Ordered, portable rule document. Rules are mutually exclusive and
/// exhaustive; the first (and only) matching rule decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDocument {
    pub columns: Vec<String>,
    pub rules: Vec<Rule>,
}

/// Flatten a tree into its ordered rule document.
pub fn export_rules(tree: &RuleTree) -> RuleDocument {
    let mut rules = Vec::new();
    let mut stack: Vec<(usize, Vec<Predicate>)> = vec![(0, Vec::new())];
    while let Some((at, conds)) = stack.pop() {
        match &tree.cart.nodes[at] {
            Node::Leaf { class, prob, n } => rules.push(Rule {
                conditions: conds,
                class: *class,
                probability: *prob,
                support: *n,
            }),
            Node::Internal { col, threshold, left, right } => {
                let mut rc = conds.clone();
                rc.push(Predicate {
                    column: tree.columns[*col].clone(),
                    op: ">".to_string(),
                    threshold: *threshold,
                });
                stack.push((*right, rc));
                let mut lc = conds;
                lc.push(Predicate {
                    column: tree.columns[*col].clone(),
                    op: "<=".to_string(),
                    threshold: *threshold,
                });
                stack.push((*left, lc));
            }
        }
    }
    RuleDocument {
        columns: tree.columns.clone(),
        rules,
    }
}

impl RuleDocument {
    /// Classify a raw feature row by first-match evaluation.
    pub fn classify(&self, columns: &[String], raw_row: &[f64]) -> Result<(u8, f64)> {
        'rules: for rule in &self.rules {
            for cond in &rule.conditions {
                let col = columns.iter().position(|c| c == &cond.column).ok_or_else(|| {
                    RetainError::InvalidArgument(format!("unknown column {:?}", cond.column))
                })?;
                let v = raw_row[col];
                let ok = match cond.op.as_str() {
                    "<=" => v <= cond.threshold,
                    ">" => v > cond.threshold,
                    other => {
                        return Err(RetainError::Schema(format!("bad rule op {other:?}")))
                    }
                };
                if !ok {
                    continue 'rules;
                }
            }
            return Ok((rule.class, rule.probability));
        }
        Err(RetainError::Schema("no rule matched; document is not exhaustive".to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| RetainError::Schema(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{encode_all, EvalWindow, FeatureWindow, FeatureVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dataset_from(rows: Vec<FeatureVector>) -> Dataset {
        encode_all(FeatureWindow::FirstDay, EvalWindow::short_term(), &rows).unwrap()
    }

    fn row(id: &str, absence: f64, retained: u8) -> FeatureVector {
        let mut r = crate::testutil::dummy_row(id);
        r.current_absence_time = absence;
        r.retained_short = retained;
        r
    }

    #[test]
    fn absence_threshold_recovered() {
        // Perfect separation at 72000 s of absence.
        let mut rows = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..200 {
            let retained = i % 2;
            let absence = if retained == 1 {
                rng.gen_range(0.0..70_000.0)
            } else {
                rng.gen_range(74_000.0..86_400.0)
            };
            rows.push(row(&format!("p{i:04}"), absence, retained as u8));
        }
        let data = dataset_from(rows);
        let tree = train_rule_tree(&data, 1, 1).unwrap();
        assert_eq!(tree.n_rules(), 1);
        let doc = export_rules(&tree);
        let pred = &doc.rules[0].conditions[0];
        assert_eq!(pred.column, "current_absence_time");
        assert!(pred.threshold > 70_000.0 && pred.threshold < 74_000.0);
    }

    #[test]
    fn pure_data_single_leaf() {
        let rows: Vec<FeatureVector> = (0..10).map(|i| row(&format!("p{i}"), 100.0, 1)).collect();
        let data = dataset_from(rows);
        let tree = train_rule_tree(&data, 4, 1).unwrap();
        assert_eq!(tree.n_rules(), 0);
        let doc = export_rules(&tree);
        assert_eq!(doc.rules.len(), 1);
        assert!(doc.rules[0].conditions.is_empty());
        assert_eq!(doc.rules[0].class, 1);
        assert_eq!(doc.rules[0].probability, 1.0);
    }

    #[test]
    fn rule_budget_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<FeatureVector> = (0..400)
            .map(|i| {
                let mut r = row(&format!("p{i:04}"), rng.gen_range(0.0..86_400.0), 0);
                r.total_rounds = rng.gen_range(0.0..50.0);
                r.retained_short = rng.gen_bool(0.4) as u8;
                r
            })
            .collect();
        let data = dataset_from(rows);
        for max_rules in [1, 2, 3, 4] {
            let tree = train_rule_tree(&data, max_rules, 5).unwrap();
            assert!(tree.n_rules() <= max_rules);
        }
    }

    #[test]
    fn three_rule_tree_has_four_leaf_clauses() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<FeatureVector> = (0..600)
            .map(|i| {
                let absence: f64 = rng.gen_range(0.0..86_400.0);
                let rounds: f64 = rng.gen_range(0.0..60.0);
                let retained = (absence < 40_000.0) ^ (rounds > 30.0);
                let mut r = row(&format!("p{i:04}"), absence, retained as u8);
                r.total_rounds = rounds;
                r
            })
            .collect();
        let data = dataset_from(rows);
        let tree = train_rule_tree(&data, 3, 5).unwrap();
        assert_eq!(tree.n_rules(), 3);
        let doc = export_rules(&tree);
        assert_eq!(doc.rules.len(), 4);
        for rule in &doc.rules {
            assert!(rule.conditions.len() <= 3);
        }
    }

    #[test]
    fn export_round_trip_matches_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<FeatureVector> = (0..500)
            .map(|i| {
                let mut r = row(&format!("p{i:04}"), rng.gen_range(0.0..86_400.0), 0);
                r.total_rounds = rng.gen_range(0.0..60.0);
                r.max_level = rng.gen_range(1.0..30.0);
                r.retained_short = (r.current_absence_time < 30_000.0 && r.total_rounds > 10.0) as u8;
                r
            })
            .collect();
        let data = dataset_from(rows);
        let tree = train_rule_tree(&data, 4, 5).unwrap();
        let doc = RuleDocument::from_json(&export_rules(&tree).to_json()).unwrap();
        for _ in 0..1000 {
            let mut raw = vec![0.0; data.columns.len()];
            for v in raw.iter_mut() {
                *v = rng.gen_range(-10.0..100_000.0);
            }
            let (class, prob) = doc.classify(&data.columns, &raw).unwrap();
            let score = tree.score_row(&raw);
            assert_eq!(class, (score >= 0.5) as u8);
            assert_eq!(prob, score);
        }
    }
}
