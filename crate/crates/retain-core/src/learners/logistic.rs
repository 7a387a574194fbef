//! Logistic regression fit by Newton-Raphson on the Bernoulli
//! log-likelihood, with forward-backward stepwise term selection by AIC
//! over main effects and two-way interactions.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::featurize::Dataset;

/// A model term over standardized design columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Main(usize),
    Interaction(usize, usize),
}

impl Term {
    pub fn value(&self, row: &[f64]) -> f64 {
        match self {
            Term::Main(j) => row[*j],
            Term::Interaction(a, b) => row[*a] * row[*b],
        }
    }

    pub fn describe(&self, columns: &[String]) -> String {
        match self {
            Term::Main(j) => columns[*j].clone(),
            Term::Interaction(a, b) => format!("{}*{}", columns[*a], columns[*b]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub terms: Vec<Term>,
    /// Intercept first, then one weight per term.
    pub weights: Vec<f64>,
    pub aic: f64,
    pub log_likelihood: f64,
    /// Standard errors from the inverse observed information, aligned
    /// with `weights`.
    pub std_errors: Vec<f64>,
    /// Set when perfect separation forced an L2 ridge.
    pub ridged: bool,
}

impl LinearModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut z = self.weights[0];
        for (t, w) in self.terms.iter().zip(&self.weights[1..]) {
            z += w * t.value(row);
        }
        sigmoid(z)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood and its gradient for a design matrix with
/// implicit leading intercept column. Exposed for finite-difference
/// verification.
pub fn nll_and_grad(design: &[Vec<f64>], y: &[u8], w: &[f64], ridge: f64) -> (f64, Vec<f64>) {
    let p = w.len();
    let mut nll = 0.0;
    let mut grad = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        let mut z = w[0];
        for j in 1..p {
            z += w[j] * row[j - 1];
        }
        // log(1 + exp(z)) - y z, computed stably
        nll += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        nll -= f64::from(yi) * z;
        let r = sigmoid(z) - f64::from(yi);
        grad[0] += r;
        for j in 1..p {
            grad[j] += r * row[j - 1];
        }
    }
    for j in 0..p {
        nll += 0.5 * ridge * w[j] * w[j];
        grad[j] += ridge * w[j];
    }
    (nll, grad)
}

/// Solve `a x = b` for symmetric positive-definite `a` by Cholesky.
fn solve_spd(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    // Cholesky factor in-place (lower triangle).
    for j in 0..n {
        for k in 0..j {
            let l = a[j][k];
            for i in j..n {
                a[i][j] -= a[i][k] * l;
            }
        }
        if a[j][j] <= 0.0 || !a[j][j].is_finite() {
            return None;
        }
        let d = a[j][j].sqrt();
        for i in j..n {
            a[i][j] /= d;
        }
    }
    // Forward then back substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[i][k] * x[k];
        }
        x[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= a[k][i] * x[k];
        }
        x[i] /= a[i][i];
    }
    Some(x)
}

/// Inverse of an SPD matrix via Cholesky solves against unit vectors.
fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_spd(a.to_vec(), &e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

struct Fit {
    weights: Vec<f64>,
    nll: f64,
    std_errors: Vec<f64>,
    converged: bool,
    /// NLL after each accepted Newton step, starting at the zero vector.
    nll_trace: Vec<f64>,
}

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;

fn newton_fit(design: &[Vec<f64>], y: &[u8], ridge: f64) -> Option<Fit> {
    let n = design.len();
    let p = design.first().map_or(0, |r| r.len()) + 1;
    let mut w = vec![0.0; p];
    let (mut nll, mut grad) = nll_and_grad(design, y, &w, ridge);
    let mut nll_trace = vec![nll];
    let mut converged = false;

    for _ in 0..NEWTON_MAX_ITER {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < NEWTON_TOL {
            converged = true;
            break;
        }
        // Observed information: X' diag(p(1-p)) X + ridge I.
        let mut h = vec![vec![0.0; p]; p];
        for row in design.iter().take(n) {
            let mut z = w[0];
            for j in 1..p {
                z += w[j] * row[j - 1];
            }
            let mu = sigmoid(z);
            let wt = (mu * (1.0 - mu)).max(1e-12);
            for a in 0..p {
                let xa = if a == 0 { 1.0 } else { row[a - 1] };
                for b in a..p {
                    let xb = if b == 0 { 1.0 } else { row[b - 1] };
                    h[a][b] += wt * xa * xb;
                }
            }
        }
        for a in 0..p {
            h[a][a] += ridge + 1e-12;
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        let step = solve_spd(h, &grad)?;

        // Backtracking keeps the NLL non-increasing.
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi - scale * si).collect();
            let (trial_nll, trial_grad) = nll_and_grad(design, y, &trial, ridge);
            if trial_nll.is_finite() && trial_nll <= nll + 1e-12 {
                w = trial;
                nll = trial_nll;
                grad = trial_grad;
                nll_trace.push(nll);
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Some(Fit {
                    weights: w,
                    nll,
                    std_errors: vec![f64::NAN; p],
                    converged: false,
                    nll_trace,
                });
            }
        }
        if !w.iter().all(|v| v.is_finite()) {
            return None;
        }
    }

    // Standard errors from the inverse information at the optimum.
    let mut h = vec![vec![0.0; p]; p];
    for row in design {
        let mut z = w[0];
        for j in 1..p {
            z += w[j] * row[j - 1];
        }
        let mu = sigmoid(z);
        let wt = (mu * (1.0 - mu)).max(1e-12);
        for a in 0..p {
            let xa = if a == 0 { 1.0 } else { row[a - 1] };
            for b in a..p {
                let xb = if b == 0 { 1.0 } else { row[b - 1] };
                h[a][b] += wt * xa * xb;
            }
        }
    }
    for a in 0..p {
        h[a][a] += ridge + 1e-12;
        for b in 0..a {
            h[a][b] = h[b][a];
        }
    }
    let std_errors = invert_spd(&h)
        .map(|inv| (0..p).map(|j| inv[j][j].max(0.0).sqrt()).collect())
        .unwrap_or_else(|| vec![f64::NAN; p]);

    Some(Fit { weights: w, nll, std_errors, converged, nll_trace })
}

/// Per-iteration NLL of a ridgeless Newton fit of `terms`. Exposed so
/// tests can verify the line search keeps the objective non-increasing.
pub fn fit_nll_trace(x: &[Vec<f64>], y: &[u8], terms: &[Term]) -> Result<Vec<f64>> {
    let design = design_for(x, terms);
    newton_fit(&design, y, 0.0)
        .map(|f| f.nll_trace)
        .ok_or_else(|| RetainError::Training("logistic fit failed".to_string()))
}

fn design_for(x: &[Vec<f64>], terms: &[Term]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| terms.iter().map(|t| t.value(row)).collect())
        .collect()
}

const SEPARATION_RIDGE: f64 = 1e-6;

/// Fit the given terms; on perfect separation (Newton divergence) refit
/// with a small L2 ridge.
pub fn fit_terms(x: &[Vec<f64>], y: &[u8], terms: &[Term]) -> Result<LinearModel> {
    let design = design_for(x, terms);
    let k = terms.len() + 1;
    let attempt = newton_fit(&design, y, 0.0);
    // Weights beyond ~50 on standardized columns mean the likelihood is
    // running off to infinity (separation), even if the gradient already
    // looks converged.
    let (fit, ridged) = match attempt {
        Some(f) if f.converged && f.weights.iter().all(|w| w.abs() < 50.0) => (f, false),
        _ => {
            let f = newton_fit(&design, y, SEPARATION_RIDGE)
                .ok_or_else(|| RetainError::Training("logistic fit failed".to_string()))?;
            (f, true)
        }
    };
    let log_likelihood = -fit.nll;
    Ok(LinearModel {
        terms: terms.to_vec(),
        weights: fit.weights,
        aic: 2.0 * k as f64 - 2.0 * log_likelihood,
        log_likelihood,
        std_errors: fit.std_errors,
        ridged,
    })
}

/// Fit all main effects (no selection).
pub fn fit_full(data: &Dataset) -> Result<LinearModel> {
    let terms: Vec<Term> = (0..data.columns.len()).map(Term::Main).collect();
    fit_terms(&data.x, &data.y, &terms)
}

/// Candidate two-way interactions: all pairs among the `top_k` columns
/// ranked by single-term AIC.
pub fn default_interaction_pool(data: &Dataset, top_k: usize) -> Result<Vec<Term>> {
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for j in 0..data.columns.len() {
        let m = fit_terms(&data.x, &data.y, &[Term::Main(j)])?;
        ranked.push((m.aic, j));
    }
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let top: Vec<usize> = ranked.iter().take(top_k).map(|&(_, j)| j).collect();
    let mut pool = Vec::new();
    for i in 0..top.len() {
        for j in i + 1..top.len() {
            let (a, b) = (top[i].min(top[j]), top[i].max(top[j]));
            pool.push(Term::Interaction(a, b));
        }
    }
    Ok(pool)
}

/// Forward-backward stepwise AIC search over main effects plus the
/// interaction pool, starting from the intercept-only model.
pub fn train_logistic(
    data: &Dataset,
    interaction_pool: &[Term],
    max_steps: usize,
) -> Result<LinearModel> {
    let mut candidates: Vec<Term> = (0..data.columns.len()).map(Term::Main).collect();
    candidates.extend_from_slice(interaction_pool);

    let mut current: Vec<Term> = Vec::new();
    let mut best = fit_terms(&data.x, &data.y, &current)?;

    for _ in 0..max_steps {
        let mut best_move: Option<(Vec<Term>, LinearModel)> = None;

        // Forward: try adding each unused candidate.
        for cand in &candidates {
            if current.contains(cand) {
                continue;
            }
            let mut trial = current.clone();
            trial.push(*cand);
            let m = fit_terms(&data.x, &data.y, &trial)?;
            if m.aic < best.aic - 1e-9
                && best_move.as_ref().map_or(true, |(_, b)| m.aic < b.aic - 1e-9)
            {
                best_move = Some((trial, m));
            }
        }
        // Backward: try dropping each included term.
        for drop_at in 0..current.len() {
            let mut trial = current.clone();
            trial.remove(drop_at);
            let m = fit_terms(&data.x, &data.y, &trial)?;
            if m.aic < best.aic - 1e-9
                && best_move.as_ref().map_or(true, |(_, b)| m.aic < b.aic - 1e-9)
            {
                best_move = Some((trial, m));
            }
        }

        match best_move {
            Some((terms, model)) => {
                current = terms;
                best = model;
            }
            None => break,
        }
    }
    Ok(best)
}
