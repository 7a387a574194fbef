//! Grid-search hyperparameter tuning on a random subsample, scored by
//! 10-fold cross-validation accuracy. Ties break to the earlier grid
//! point, so selection is fully deterministic in the seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::{encode, EvalWindow, FeatureVector, FeatureWindow};
use crate::learners::{Kernel, ModelSpec};

pub const TUNE_SUBSAMPLE: usize = 10_000;
const TUNE_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmGrid {
    /// (kernel, C) points in evaluation order.
    pub points: Vec<(Kernel, f64)>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        let cs = [0.1, 1.0, 10.0, 100.0];
        let gammas = [0.001, 0.01, 0.1, 1.0];
        let mut points = Vec::new();
        for &c in &cs {
            points.push((Kernel::Linear, c));
        }
        for &c in &cs {
            for &g in &gammas {
                points.push((Kernel::Rbf { gamma: g }, c));
            }
        }
        SvmGrid { points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestGrid {
    /// (n_trees, m_try) points; m_try 0 means floor(sqrt(p)).
    pub points: Vec<(usize, usize)>,
}

impl ForestGrid {
    /// Default grid for `p` features: m_try in {sqrt(p), p/3, p/2},
    /// n_trees in {128, 256, 512}.
    pub fn default_for(p: usize) -> Self {
        let mut mtrys = vec![
            (p as f64).sqrt().floor().max(1.0) as usize,
            (p / 3).max(1),
            (p / 2).max(1),
        ];
        mtrys.dedup();
        let mut points = Vec::new();
        for &n_trees in &[128usize, 256, 512] {
            for &m in &mtrys {
                points.push((n_trees, m));
            }
        }
        ForestGrid { points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome<P> {
    pub best: P,
    pub cv_accuracy: f64,
    /// Accuracy per grid point, in grid order.
    pub trace: Vec<(P, f64)>,
    pub subsample_size: usize,
    pub seed: u64,
}

fn subsample_indices(n: usize, subsample: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(subsample.min(n));
    idx.sort_unstable();
    idx
}

/// 10-fold CV accuracy of one spec on the given rows.
fn cv_accuracy(
    rows: &[FeatureVector],
    window: FeatureWindow,
    eval: EvalWindow,
    spec: &ModelSpec,
    seed: u64,
) -> Result<f64> {
    let n = rows.len();
    if n < TUNE_FOLDS {
        return Err(RetainError::InvalidArgument(format!(
            "need at least {TUNE_FOLDS} rows to tune, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF01D);
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % TUNE_FOLDS;
        }
        f
    };

    let mut correct = 0usize;
    for fold in 0..TUNE_FOLDS {
        let fit_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let data = encode(window, eval, rows, &fit_idx)?;
        let train = data.subset(&fit_idx);
        let model = spec.train(&train, seed)?;
        for i in (0..n).filter(|&i| fold_of[i] == fold) {
            let c = model.classify_row(&data.x[i], &data.x_raw[i]);
            if c == rows[i].retained_short {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Grid-search SVM hyperparameters.
pub fn tune_svm(
    rows: &[FeatureVector],
    window: FeatureWindow,
    eval: EvalWindow,
    grid: &SvmGrid,
    subsample: usize,
    seed: u64,
) -> Result<TuneOutcome<(Kernel, f64)>> {
    if grid.points.is_empty() {
        return Err(RetainError::InvalidArgument("empty grid".to_string()));
    }
    let idx = subsample_indices(rows.len(), subsample, seed);
    let sub: Vec<FeatureVector> = idx.iter().map(|&i| rows[i].clone()).collect();
    let mut trace = Vec::new();
    for &(kernel, c) in &grid.points {
        let spec = ModelSpec::Svm { kernel, c };
        // A grid point whose solver stalls is disqualified, not fatal.
        let acc = match cv_accuracy(&sub, window, eval, &spec, seed) {
            Ok(a) => a,
            Err(RetainError::NoConvergence { .. })
            | Err(RetainError::Fold { .. })
            | Err(RetainError::Training(_)) => 0.0,
            Err(e) => return Err(e),
        };
        trace.push(((kernel, c), acc));
    }
    let best = trace
        .iter()
        .cloned()
        .reduce(|a, b| if b.1 > a.1 + 1e-12 { b } else { a })
        .unwrap();
    Ok(TuneOutcome {
        best: best.0,
        cv_accuracy: best.1,
        trace,
        subsample_size: sub.len(),
        seed,
    })
}

/// Grid-search forest hyperparameters.
pub fn tune_forest(
    rows: &[FeatureVector],
    window: FeatureWindow,
    eval: EvalWindow,
    grid: &ForestGrid,
    subsample: usize,
    seed: u64,
) -> Result<TuneOutcome<(usize, usize)>> {
    if grid.points.is_empty() {
        return Err(RetainError::InvalidArgument("empty grid".to_string()));
    }
    let idx = subsample_indices(rows.len(), subsample, seed);
    let sub: Vec<FeatureVector> = idx.iter().map(|&i| rows[i].clone()).collect();
    let mut trace = Vec::new();
    for &(n_trees, m_try) in &grid.points {
        let spec = ModelSpec::Rf { n_trees, m_try, min_leaf: 10 };
        let acc = cv_accuracy(&sub, window, eval, &spec, seed)?;
        trace.push(((n_trees, m_try), acc));
    }
    let best = trace
        .iter()
        .cloned()
        .reduce(|a, b| if b.1 > a.1 + 1e-12 { b } else { a })
        .unwrap();
    Ok(TuneOutcome {
        best: best.0,
        cv_accuracy: best.1,
        trace,
        subsample_size: sub.len(),
        seed,
    })
}
