//! Model families with a uniform train/score/classify contract: the
//! heuristic rule tree, logistic regression, SVM, random forest, and the
//! majority-vote ensemble of the latter three.

pub mod forest;
pub mod logistic;
pub mod rule_tree;
pub mod svm;
pub mod tree;
pub mod tune;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::{Dataset, EncodingMap, Standardization};

pub use forest::{train_forest, Forest, ForestParams};
pub use logistic::{fit_full, train_logistic, LinearModel, Term};
pub use rule_tree::{export_rules, train_rule_tree, RuleDocument, RuleTree};
pub use svm::{train_svm, Kernel, KernelMachine};
pub use tune::{tune_forest, tune_svm, ForestGrid, SvmGrid};

pub const CLASSIFY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    RuleTree(RuleTree),
    Linear(LinearModel),
    Kernel(KernelMachine),
    Forest(Forest),
    Ensemble(Ensemble),
}

/// Majority vote of exactly {LR, SVM, RF}; score is the mean member
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub linear: LinearModel,
    pub kernel: KernelMachine,
    pub forest: Forest,
}

impl Ensemble {
    fn member_scores(&self, x_std: &[f64], x_raw: &[f64]) -> [f64; 3] {
        [
            self.linear.score_row(x_std),
            self.kernel.score_row(x_std),
            self.forest.score_row(x_raw),
        ]
    }
}

impl TrainedModel {
    pub fn family(&self) -> &'static str {
        match self {
            TrainedModel::RuleTree(_) => "heuristic",
            TrainedModel::Linear(_) => "lr",
            TrainedModel::Kernel(_) => "svm",
            TrainedModel::Forest(_) => "rf",
            TrainedModel::Ensemble(_) => "ensemble",
        }
    }

    fn expected_cols(&self) -> Option<usize> {
        match self {
            TrainedModel::RuleTree(t) => Some(t.columns.len()),
            TrainedModel::Forest(f) => Some(f.columns.len()),
            _ => None,
        }
    }

    /// Score one row given both representations of the encoded feature
    /// space (standardized for LR/SVM, raw for trees).
    pub fn score_row(&self, x_std: &[f64], x_raw: &[f64]) -> f64 {
        match self {
            TrainedModel::RuleTree(t) => t.score_row(x_raw),
            TrainedModel::Linear(m) => m.score_row(x_std),
            TrainedModel::Kernel(m) => m.score_row(x_std),
            TrainedModel::Forest(f) => f.score_row(x_raw),
            TrainedModel::Ensemble(e) => {
                let s = e.member_scores(x_std, x_raw);
                (s[0] + s[1] + s[2]) / 3.0
            }
        }
    }

    pub fn classify_row(&self, x_std: &[f64], x_raw: &[f64]) -> u8 {
        match self {
            TrainedModel::Ensemble(e) => {
                let s = e.member_scores(x_std, x_raw);
                let votes: u8 = s.iter().map(|&p| (p >= CLASSIFY_THRESHOLD) as u8).sum();
                (votes >= 2) as u8
            }
            _ => (self.score_row(x_std, x_raw) >= CLASSIFY_THRESHOLD) as u8,
        }
    }
}

/// Classes and probability scores for a batch of rows.
pub fn predict(
    model: &TrainedModel,
    x_std: &[Vec<f64>],
    x_raw: &[Vec<f64>],
) -> Result<(Vec<u8>, Vec<f64>)> {
    if x_std.len() != x_raw.len() {
        return Err(RetainError::InvalidArgument(
            "standardized and raw row counts differ".to_string(),
        ));
    }
    if let (Some(expected), Some(row)) = (model.expected_cols(), x_raw.first()) {
        if row.len() != expected {
            return Err(RetainError::InvalidArgument(format!(
                "column mismatch: model expects {expected}, rows have {}",
                row.len()
            )));
        }
    }
    let mut classes = Vec::with_capacity(x_std.len());
    let mut scores = Vec::with_capacity(x_std.len());
    for (s, r) in x_std.iter().zip(x_raw) {
        classes.push(model.classify_row(s, r));
        scores.push(model.score_row(s, r));
    }
    Ok((classes, scores))
}

pub fn predict_dataset(model: &TrainedModel, data: &Dataset) -> Result<(Vec<u8>, Vec<f64>)> {
    predict(model, &data.x, &data.x_raw)
}

/// JSON export envelope: family, encoding map, standardization stats and
/// parameters; rule trees additionally carry their ordered rule list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub model: TrainedModel,
    pub encoding: EncodingMap,
    pub stats: Standardization,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<RuleDocument>,
}

impl ModelEnvelope {
    pub fn new(model: TrainedModel, data: &Dataset) -> Self {
        let rules = match &model {
            TrainedModel::RuleTree(t) => Some(export_rules(t)),
            _ => None,
        };
        ModelEnvelope {
            model,
            encoding: data.encoding.clone(),
            stats: data.stats.clone(),
            columns: data.columns.clone(),
            rules,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model envelope serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| RetainError::Schema(e.to_string()))
    }
}

/// Hyperparameter specification of one model family, as trained per
/// fold by the evaluation harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Heuristic {
        max_rules: usize,
        min_leaf: usize,
    },
    Lr {
        /// When true, run the stepwise AIC search (slow on large data);
        /// otherwise fit all main effects.
        stepwise: bool,
        max_steps: usize,
    },
    Svm {
        kernel: Kernel,
        c: f64,
    },
    Rf {
        n_trees: usize,
        /// 0 selects floor(sqrt(p)) at train time.
        m_try: usize,
        min_leaf: usize,
    },
    Ensemble {
        lr: Box<ModelSpec>,
        svm: Box<ModelSpec>,
        rf: Box<ModelSpec>,
    },
}

impl ModelSpec {
    pub fn default_heuristic() -> Self {
        ModelSpec::Heuristic { max_rules: 4, min_leaf: 50 }
    }

    pub fn default_lr() -> Self {
        ModelSpec::Lr { stepwise: false, max_steps: 30 }
    }

    pub fn default_svm() -> Self {
        ModelSpec::Svm { kernel: Kernel::Linear, c: 1.0 }
    }

    pub fn default_rf() -> Self {
        ModelSpec::Rf { n_trees: 64, m_try: 0, min_leaf: 10 }
    }

    pub fn default_ensemble() -> Self {
        ModelSpec::Ensemble {
            lr: Box::new(Self::default_lr()),
            svm: Box::new(Self::default_svm()),
            rf: Box::new(Self::default_rf()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Heuristic { .. } => "heuristic",
            ModelSpec::Lr { .. } => "lr",
            ModelSpec::Svm { .. } => "svm",
            ModelSpec::Rf { .. } => "rf",
            ModelSpec::Ensemble { .. } => "ensemble",
        }
    }

    /// Train this spec on the dataset (training rows = all rows of
    /// `data`); `seed` feeds the forest.
    pub fn train(&self, data: &Dataset, seed: u64) -> Result<TrainedModel> {
        match self {
            ModelSpec::Heuristic { max_rules, min_leaf } => {
                Ok(TrainedModel::RuleTree(train_rule_tree(data, *max_rules, *min_leaf)?))
            }
            ModelSpec::Lr { stepwise, max_steps } => {
                let model = if *stepwise {
                    let pool = logistic::default_interaction_pool(data, 8)?;
                    train_logistic(data, &pool, *max_steps)?
                } else {
                    fit_full(data)?
                };
                Ok(TrainedModel::Linear(model))
            }
            ModelSpec::Svm { kernel, c } => {
                Ok(TrainedModel::Kernel(train_svm(&data.x, &data.y, *kernel, *c)?))
            }
            ModelSpec::Rf { n_trees, m_try, min_leaf } => {
                let p = data.columns.len();
                let m = if *m_try == 0 {
                    (p as f64).sqrt().floor().max(1.0) as usize
                } else {
                    *m_try
                };
                let params = ForestParams {
                    n_trees: *n_trees,
                    m_try: m,
                    min_leaf: *min_leaf,
                    bootstrap: true,
                    seed,
                };
                Ok(TrainedModel::Forest(train_forest(data, params)?))
            }
            ModelSpec::Ensemble { lr, svm, rf } => {
                let TrainedModel::Linear(linear) = lr.train(data, seed)? else {
                    return Err(RetainError::InvalidArgument("ensemble lr member must be Lr".into()));
                };
                let TrainedModel::Kernel(kernel) = svm.train(data, seed)? else {
                    return Err(RetainError::InvalidArgument("ensemble svm member must be Svm".into()));
                };
                let TrainedModel::Forest(forest) = rf.train(data, seed)? else {
                    return Err(RetainError::InvalidArgument("ensemble rf member must be Rf".into()));
                };
                Ok(TrainedModel::Ensemble(Ensemble { linear, kernel, forest }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::{Cart, Node};

    fn leaf_tree(prob: f64) -> RuleTree {
        RuleTree {
            cart: Cart {
                nodes: vec![Node::Leaf { class: (prob >= 0.5) as u8, prob, n: 10 }],
            },
            max_rules: 4,
            columns: vec!["f0".to_string()],
        }
    }

    #[test]
    fn leaf_probability_becomes_score() {
        let model = TrainedModel::RuleTree(leaf_tree(0.7));
        let (classes, scores) = predict(&model, &[vec![0.0]], &[vec![0.0]]).unwrap();
        assert_eq!(classes, vec![1]);
        assert_eq!(scores, vec![0.7]);
    }

    #[test]
    fn ensemble_majority_and_mean() {
        // Hand-built members returning fixed scores is awkward; check the
        // arithmetic on the score/vote rules directly.
        let scores = [0.9, 0.6, 0.2];
        let mean = scores.iter().sum::<f64>() / 3.0;
        assert!((mean - 0.5666666666666667).abs() < 1e-15);
        let votes: u8 = scores.iter().map(|&p| (p >= 0.5) as u8).sum();
        assert_eq!((votes >= 2) as u8, 1);
    }

    #[test]
    fn column_mismatch_rejected() {
        let model = TrainedModel::RuleTree(leaf_tree(0.3));
        let err = predict(&model, &[vec![0.0, 1.0]], &[vec![0.0, 1.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn envelope_round_trip() {
        let rows: Vec<_> = (0..20)
            .map(|i| {
                let mut r = crate::testutil::dummy_row(&format!("p{i:02}"));
                r.total_rounds = i as f64;
                r.retained_short = (i >= 10) as u8;
                r
            })
            .collect();
        let data = crate::featurize::encode_all(
            crate::featurize::FeatureWindow::FirstDay,
            crate::featurize::EvalWindow::short_term(),
            &rows,
        )
        .unwrap();
        let model = ModelSpec::default_heuristic().train(&data, 0).unwrap();
        let env = ModelEnvelope::new(model.clone(), &data);
        let back = ModelEnvelope::from_json(&env.to_json()).unwrap();
        assert_eq!(env, back);
        assert!(back.rules.is_some());
    }
}
