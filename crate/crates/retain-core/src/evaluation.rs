//! Cross-validation harness, confusion/AUC metrics, the nearest-neighbor
//! perturbation robustness protocol, and long-term retention analysis.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::{encode, label, Dataset, EvalWindow, FeatureVector, FeatureWindow};
use crate::learners::logistic::LinearModel;
use crate::learners::rule_tree::train_rule_tree_on;
use crate::learners::{Forest, ModelSpec, TrainedModel};
use crate::telemetry::{EventLog, SECONDS_PER_DAY};

/// Shared fold assignment: every model under comparison reuses the same
/// partition. Uniform random, unstratified, fold sizes differing by at
/// most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, player_id: &str) -> Option<usize> {
        self.assignment.get(player_id).copied()
    }
}

pub fn make_folds(players: &[String], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(RetainError::InvalidArgument("n_folds must be >= 2".to_string()));
    }
    if players.len() < n_folds {
        return Err(RetainError::InvalidArgument(format!(
            "{} players cannot fill {n_folds} folds",
            players.len()
        )));
    }
    let mut sorted: Vec<&String> = players.iter().collect();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let assignment = sorted
        .into_iter()
        .enumerate()
        .map(|(pos, p)| (p.clone(), pos % n_folds))
        .collect();
    Ok(FoldPlan { n_folds, seed, assignment })
}

/// Confusion-matrix metrics plus AUC. `auc` is absent when only one
/// class is present in the labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

impl MetricSet {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// AUC as the tie-corrected Mann-Whitney statistic
/// P(score+ > score-) + 0.5 P(tie), via average ranks.
pub fn auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Average rank (1-based) over the tie group [i, j].
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

pub fn compute_metrics(labels: &[u8], classes: &[u8], scores: &[f64]) -> Result<MetricSet> {
    if labels.len() != classes.len() || labels.len() != scores.len() {
        return Err(RetainError::InvalidArgument("length mismatch".to_string()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&l, &c) in labels.iter().zip(classes) {
        match (l, c) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fn_ += 1,
            _ => {
                return Err(RetainError::InvalidArgument("labels must be 0/1".to_string()));
            }
        }
    }
    let n = labels.len() as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricSet {
        tp,
        fp,
        tn,
        fn_,
        accuracy: if n == 0.0 { 0.0 } else { (tp + tn) as f64 / n },
        precision,
        recall,
        f1,
        auc: auc(labels, scores),
    })
}

/// One model family's cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub spec: ModelSpec,
    pub pooled: MetricSet,
    pub per_fold: Vec<MetricSet>,
    /// Held-out predictions: (player_id, label, class, score), sorted by
    /// player_id.
    pub predictions: Vec<(String, u8, u8, f64)>,
}

/// Evaluate the given model specs with the shared fold plan. Encoding
/// and standardization are refit on each fold's training rows; ensemble
/// members reuse base models trained in the same fold when their specs
/// match.
pub fn cross_validate(
    rows: &[FeatureVector],
    window: FeatureWindow,
    eval: EvalWindow,
    specs: &[ModelSpec],
    plan: &FoldPlan,
    seed: u64,
) -> Result<Vec<CvOutcome>> {
    let n = rows.len();
    for row in rows {
        if plan.fold_of(&row.player_id).is_none() {
            return Err(RetainError::InvalidArgument(format!(
                "fold plan does not cover player {}",
                row.player_id
            )));
        }
    }
    let fold_of: Vec<usize> = rows
        .iter()
        .map(|r| plan.fold_of(&r.player_id).unwrap())
        .collect();

    let mut predictions: Vec<Vec<(String, u8, u8, f64)>> = vec![Vec::new(); specs.len()];
    let mut per_fold: Vec<Vec<MetricSet>> = vec![Vec::new(); specs.len()];

    for fold in 0..plan.n_folds {
        let fit_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if test_idx.is_empty() {
            continue;
        }
        let data = encode(window, eval, rows, &fit_idx)?;
        let train = data.subset(&fit_idx);

        let mut cache: Vec<(ModelSpec, TrainedModel)> = Vec::new();
        let train_cached = |spec: &ModelSpec, cache: &mut Vec<(ModelSpec, TrainedModel)>| -> Result<TrainedModel> {
            if let Some((_, m)) = cache.iter().find(|(s, _)| s == spec) {
                return Ok(m.clone());
            }
            let m = spec.train(&train, seed).map_err(|e| RetainError::Fold {
                fold,
                source: Box::new(e),
            })?;
            cache.push((spec.clone(), m.clone()));
            Ok(m)
        };

        for (si, spec) in specs.iter().enumerate() {
            let model = match spec {
                ModelSpec::Ensemble { lr, svm, rf } => {
                    let TrainedModel::Linear(linear) = train_cached(lr, &mut cache)? else {
                        unreachable!()
                    };
                    let TrainedModel::Kernel(kernel) = train_cached(svm, &mut cache)? else {
                        unreachable!()
                    };
                    let TrainedModel::Forest(forest) = train_cached(rf, &mut cache)? else {
                        unreachable!()
                    };
                    TrainedModel::Ensemble(crate::learners::Ensemble { linear, kernel, forest })
                }
                other => train_cached(other, &mut cache)?,
            };

            let mut labels = Vec::with_capacity(test_idx.len());
            let mut classes = Vec::with_capacity(test_idx.len());
            let mut scores = Vec::with_capacity(test_idx.len());
            for &i in &test_idx {
                let c = model.classify_row(&data.x[i], &data.x_raw[i]);
                let s = model.score_row(&data.x[i], &data.x_raw[i]);
                labels.push(rows[i].retained_short);
                classes.push(c);
                scores.push(s);
                predictions[si].push((rows[i].player_id.clone(), rows[i].retained_short, c, s));
            }
            per_fold[si].push(compute_metrics(&labels, &classes, &scores)?);
        }
    }

    let mut outcomes = Vec::with_capacity(specs.len());
    for (si, spec) in specs.iter().enumerate() {
        predictions[si].sort_by(|a, b| a.0.cmp(&b.0));
        let labels: Vec<u8> = predictions[si].iter().map(|p| p.1).collect();
        let classes: Vec<u8> = predictions[si].iter().map(|p| p.2).collect();
        let scores: Vec<f64> = predictions[si].iter().map(|p| p.3).collect();
        outcomes.push(CvOutcome {
            spec: spec.clone(),
            pooled: compute_metrics(&labels, &classes, &scores)?,
            per_fold: per_fold[si].clone(),
            predictions: predictions[si].clone(),
        });
    }
    Ok(outcomes)
}

/// Misclassification statistics of the chunk-trained trees at each
/// perturbation level; level 0 is the raw hold-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub rates: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub levels: Vec<LevelStats>,
    pub n_chunks: usize,
    pub seed: u64,
}

fn level_stats(level: usize, rates: Vec<f64>) -> LevelStats {
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    LevelStats {
        level,
        min: rates.iter().cloned().fold(f64::INFINITY, f64::min),
        max: rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
        rates,
    }
}

/// Brute-force i-th nearest same-class neighbors in the standardized
/// feature space. Returns, per queried row, the candidate row indices
/// ordered by (distance, player_id). Exposed so tests can verify any
/// accelerated search against it.
pub fn nearest_neighbors(
    data: &Dataset,
    query_idx: &[usize],
    candidate_idx: &[usize],
    max_level: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(query_idx.len());
    for &q in query_idx {
        let mut dists: Vec<(f64, &str, usize)> = Vec::new();
        for &c in candidate_idx {
            if data.y[c] != data.y[q] {
                continue;
            }
            let d2: f64 = data.x[q]
                .iter()
                .zip(&data.x[c])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push((d2, data.rows[c].player_id.as_str(), c));
        }
        if dists.len() < max_level {
            return Err(RetainError::InvalidArgument(format!(
                "only {} same-class candidates for class {} (need {max_level})",
                dists.len(),
                data.y[q]
            )));
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
        out.push(dists.into_iter().take(max_level).map(|(_, _, i)| i).collect());
    }
    Ok(out)
}

/// The chunked-training perturbation study: split the data into
/// `n_chunks`, hold chunk 0 out, train one heuristic tree per remaining
/// chunk, then score every tree on the hold-out at perturbation levels
/// 0..=max_level (level i replaces each hold-out row with its i-th
/// nearest same-class neighbor outside the hold-out).
pub fn robustness_study(
    data: &Dataset,
    max_rules: usize,
    min_leaf: usize,
    n_chunks: usize,
    max_level: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    if n_chunks < 3 {
        return Err(RetainError::InvalidArgument("n_chunks must be >= 3".to_string()));
    }
    let n = data.rows.len();
    if n < n_chunks {
        return Err(RetainError::InvalidArgument("too few rows".to_string()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut chunk_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        chunk_of[i] = pos % n_chunks;
    }
    let holdout: Vec<usize> = (0..n).filter(|&i| chunk_of[i] == 0).collect();
    let rest: Vec<usize> = (0..n).filter(|&i| chunk_of[i] != 0).collect();
    for class in [0u8, 1u8] {
        let count = rest.iter().filter(|&&i| data.y[i] == class).count();
        if count < 10 {
            return Err(RetainError::InvalidArgument(format!(
                "fewer than 10 rows of class {class} outside the hold-out"
            )));
        }
    }

    let mut trees = Vec::with_capacity(n_chunks - 1);
    for chunk in 1..n_chunks {
        let idx: Vec<usize> = (0..n).filter(|&i| chunk_of[i] == chunk).collect();
        trees.push(train_rule_tree_on(data, &idx, max_rules, min_leaf)?);
    }

    let neighbors = nearest_neighbors(data, &holdout, &rest, max_level)?;

    let mut levels = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let mut rates = Vec::with_capacity(trees.len());
        for tree in &trees {
            let mut wrong = 0usize;
            for (hi, &row_idx) in holdout.iter().enumerate() {
                let eval_idx = if level == 0 {
                    row_idx
                } else {
                    neighbors[hi][level - 1]
                };
                let class = (tree.score_row(&data.x_raw[eval_idx]) >= 0.5) as u8;
                if class != data.y[row_idx] {
                    wrong += 1;
                }
            }
            rates.push(wrong as f64 / holdout.len() as f64);
        }
        levels.push(level_stats(level, rates));
    }
    Ok(RobustnessReport { levels, n_chunks, seed })
}

/// Long-term retention cross-tabulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermReport {
    pub n_players: usize,
    /// Base rate of long-term retention over all filtered players.
    pub base_rate_long: f64,
    /// P(long-term retained | predicted short-term retained).
    pub p_long_given_predicted: f64,
    /// P(long-term retained | actually short-term retained).
    pub p_long_given_actual: f64,
}

/// Cross-tab of long-term retention against short-term predictions.
/// `predicted` maps player_id -> predicted short-term class and must
/// cover every filtered player.
pub fn longterm_analysis(
    log: &EventLog,
    predicted: &BTreeMap<String, u8>,
    eval_short: EvalWindow,
    eval_long: EvalWindow,
) -> Result<LongTermReport> {
    let span = log
        .installs
        .iter()
        .map(|i| {
            let last_session = log.sessions_of(&i.player_id).iter().map(|s| s.end_ts).max();
            last_session.unwrap_or(i.install_ts) - i.install_ts
        })
        .max()
        .unwrap_or(0);
    if span < i64::from(eval_long.end_day) * SECONDS_PER_DAY {
        return Err(RetainError::InvalidArgument(format!(
            "log spans {span} s, need at least {} days for the long-term window",
            eval_long.end_day
        )));
    }
    let short = label(log, eval_short);
    let long = label(log, eval_long);
    let n = log.installs.len();
    let mut n_long = 0usize;
    let (mut pred_pos, mut pred_pos_long) = (0usize, 0usize);
    let (mut act_pos, mut act_pos_long) = (0usize, 0usize);
    for install in &log.installs {
        let pid = &install.player_id;
        let p = *predicted.get(pid).ok_or_else(|| {
            RetainError::InvalidArgument(format!("predictions missing player {pid}"))
        })?;
        let l = long[pid];
        let s = short[pid];
        n_long += l as usize;
        if p == 1 {
            pred_pos += 1;
            pred_pos_long += l as usize;
        }
        if s == 1 {
            act_pos += 1;
            act_pos_long += l as usize;
        }
    }
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(LongTermReport {
        n_players: n,
        base_rate_long: frac(n_long, n),
        p_long_given_predicted: frac(pred_pos_long, pred_pos),
        p_long_given_actual: frac(act_pos_long, act_pos),
    })
}

/// Feature-strength summary for one window: predictor-label correlation,
/// LR coefficients with standard errors, and forest importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    /// (column, Pearson correlation with the label, constant flag).
    pub correlations: Vec<(String, f64, bool)>,
    /// (term description, coefficient, standard error); intercept first.
    pub lr_coefficients: Vec<(String, f64, f64)>,
    /// (column, importance), sorted descending.
    pub rf_importance: Vec<(String, f64)>,
}

pub fn feature_report(data: &Dataset, lr: &LinearModel, rf: &Forest) -> FeatureReport {
    let n = data.rows.len() as f64;
    let mut correlations = Vec::new();
    for (j, col) in data.columns.iter().enumerate() {
        let xs: Vec<f64> = data.x_raw.iter().map(|r| r[j]).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = data.y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (x, &yv) in xs.iter().zip(&data.y) {
            let dx = x - mx;
            let dy = f64::from(yv) - my;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        if sxx == 0.0 || syy == 0.0 {
            correlations.push((col.clone(), 0.0, true));
        } else {
            correlations.push((col.clone(), sxy / (sxx * syy).sqrt(), false));
        }
    }
    let mut lr_coefficients = vec![(
        "(intercept)".to_string(),
        lr.weights[0],
        lr.std_errors[0],
    )];
    for (k, term) in lr.terms.iter().enumerate() {
        lr_coefficients.push((
            term.describe(&data.columns),
            lr.weights[k + 1],
            lr.std_errors[k + 1],
        ));
    }
    FeatureReport {
        correlations,
        lr_coefficients,
        rf_importance: rf.ranked_importance(),
    }
}
