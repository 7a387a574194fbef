//! Soft-margin SVM trained by SMO-style pairwise dual optimization,
//! with sigmoid probability calibration fitted on out-of-sample scores.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::learners::logistic::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMachine {
    pub kernel: Kernel,
    pub c: f64,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Sigmoid calibration: P(y=1|f) = 1 / (1 + exp(A f + B)).
    pub platt_a: f64,
    pub platt_b: f64,
}

impl KernelMachine {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut f = self.bias;
        for (sv, &c) in self.support.iter().zip(&self.coef) {
            f += c * self.kernel.eval(sv, row);
        }
        f
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        let f = self.decision(row);
        sigmoid(-(self.platt_a * f + self.platt_b))
    }
}

const KKT_TOL: f64 = 1e-3;
const ALPHA_EPS: f64 = 1e-8;
const MAX_PASSES: usize = 50_000;

/// Raw SMO solution before calibration.
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective at the solution.
    pub objective: f64,
}

struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>, // +-1
    kernel: Kernel,
    c: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
}

impl<'a> Smo<'a> {
    fn new(x: &'a [Vec<f64>], labels: &[u8], kernel: Kernel, c: f64) -> Self {
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let errors = y.iter().map(|&yi| -yi).collect();
        Smo {
            x,
            y,
            kernel,
            c,
            alpha: vec![0.0; labels.len()],
            errors,
            bias: 0.0,
        }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(&self.x[i], &self.x[j])
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        };
        if hi - lo < ALPHA_EPS {
            return false;
        }
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 1e-12 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Degenerate curvature: pick the better endpoint.
            let f1 = y1 * (e1 + self.bias) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 + self.bias) - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            let obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if obj_lo < obj_hi - 1e-12 {
                lo
            } else if obj_hi < obj_lo - 1e-12 {
                hi
            } else {
                a2
            }
        };
        if a2_new < ALPHA_EPS {
            a2_new = 0.0;
        } else if a2_new > self.c - ALPHA_EPS {
            a2_new = self.c;
        }
        if (a2_new - a2).abs() < ALPHA_EPS * (a2_new + a2 + ALPHA_EPS) {
            return false;
        }
        let a1_new = a1 + s * (a2 - a2_new);

        // Bias update keeps a KKT-consistent threshold.
        let b1 = e1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12 + self.bias;
        let b2 = e2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22 + self.bias;
        let b_new = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.bias;
        self.bias = b_new;

        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        for k in 0..self.x.len() {
            self.errors[k] += d1 * self.k(i1, k) + d2 * self.k(i2, k) - db;
        }
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        if !((r2 < -KKT_TOL && a2 < self.c) || (r2 > KKT_TOL && a2 > 0.0)) {
            return false;
        }
        // Second choice: maximize |E1 - E2| over non-bound points.
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.x.len() {
            if self.alpha[i] > 0.0 && self.alpha[i] < self.c {
                let gap = (self.errors[i] - e2).abs();
                if best.map_or(true, |(g, _)| gap > g) {
                    best = Some((gap, i));
                }
            }
        }
        if let Some((_, i1)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // Fall back to deterministic scans.
        for i1 in 0..self.x.len() {
            if self.alpha[i1] > 0.0 && self.alpha[i1] < self.c && self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.x.len() {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    fn solve(mut self) -> Result<DualSolution> {
        let n = self.x.len();
        let mut examine_all = true;
        for _pass in 0..MAX_PASSES {
            let mut changed = 0;
            if examine_all {
                for i in 0..n {
                    if self.examine(i) {
                        changed += 1;
                    }
                }
            } else {
                for i in 0..n {
                    if self.alpha[i] > 0.0 && self.alpha[i] < self.c && self.examine(i) {
                        changed += 1;
                    }
                }
            }
            if examine_all {
                if changed == 0 {
                    let objective = self.objective();
                    return Ok(DualSolution {
                        alpha: self.alpha,
                        bias: self.bias,
                        objective,
                    });
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
        Err(RetainError::NoConvergence { iterations: MAX_PASSES })
    }

    fn objective(&self) -> f64 {
        let mut obj: f64 = self.alpha.iter().sum();
        let sv: Vec<usize> = (0..self.x.len()).filter(|&i| self.alpha[i] > 0.0).collect();
        for &i in &sv {
            for &j in &sv {
                obj -= 0.5 * self.alpha[i] * self.alpha[j] * self.y[i] * self.y[j] * self.k(i, j);
            }
        }
        obj
    }
}

/// Dual objective of an arbitrary feasible point (used by optimality
/// checks).
pub fn dual_objective(x: &[Vec<f64>], labels: &[u8], kernel: Kernel, alpha: &[f64]) -> f64 {
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut obj: f64 = alpha.iter().sum();
    for i in 0..x.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..x.len() {
            if alpha[j] == 0.0 {
                continue;
            }
            obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval(&x[i], &x[j]);
        }
    }
    obj
}

/// Solve the dual only (no calibration).
pub fn solve_dual(x: &[Vec<f64>], labels: &[u8], kernel: Kernel, c: f64) -> Result<DualSolution> {
    if c <= 0.0 {
        return Err(RetainError::InvalidArgument("C must be > 0".to_string()));
    }
    Smo::new(x, labels, kernel, c).solve()
}

/// Above this row count the linear kernel switches from SMO to dual
/// coordinate descent; SMO's per-step error refresh is O(n) and does
/// not scale to cohort-sized training sets.
const LINEAR_CD_THRESHOLD: usize = 2_000;
/// Constant value of the augmented bias feature. The bias is penalized
/// by 0.5 (b / BIAS_SCALE)^2, so a larger scale approximates the
/// unpenalized threshold more closely at the cost of slower epochs.
const BIAS_SCALE: f64 = 16.0;
const CD_TOL: f64 = 1e-2;
const CD_MAX_EPOCHS: usize = 20_000;

/// Dual coordinate descent for the linear kernel, with the bias folded
/// in as an augmented constant feature. One epoch costs O(n d); the
/// permutation RNG is fixed, so the result is deterministic.
pub fn solve_dual_linear_cd(x: &[Vec<f64>], labels: &[u8], c: f64) -> Result<DualSolution> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let n = x.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + BIAS_SCALE * BIAS_SCALE)
        .collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; x[0].len()];
    // Weight on the constant bias feature; effective bias is v * BIAS_SCALE.
    let mut v = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5CD0);
    for _epoch in 0..CD_MAX_EPOCHS {
        order.shuffle(&mut rng);
        let mut max_pg = 0.0f64;
        for &i in &order {
            let f: f64 = w.iter().zip(&x[i]).map(|(a, b)| a * b).sum::<f64>() + v * BIAS_SCALE;
            let g = y[i] * f - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg.abs());
            if pg.abs() > 1e-12 {
                let a_new = (a - g / qii[i]).clamp(0.0, c);
                let delta = (a_new - a) * y[i];
                if delta != 0.0 {
                    alpha[i] = a_new;
                    for (wj, &xj) in w.iter_mut().zip(&x[i]) {
                        *wj += delta * xj;
                    }
                    v += delta * BIAS_SCALE;
                }
            }
        }
        if max_pg < CD_TOL {
            let norm2 = w.iter().map(|a| a * a).sum::<f64>() + v * v;
            let objective = alpha.iter().sum::<f64>() - 0.5 * norm2;
            // Stored with the SMO threshold convention (f = sum - bias).
            return Ok(DualSolution { alpha, bias: -(v * BIAS_SCALE), objective });
        }
    }
    Err(RetainError::NoConvergence { iterations: CD_MAX_EPOCHS })
}

fn solve_dual_auto(x: &[Vec<f64>], labels: &[u8], kernel: Kernel, c: f64) -> Result<DualSolution> {
    match kernel {
        Kernel::Linear if x.len() >= LINEAR_CD_THRESHOLD => {
            if c <= 0.0 {
                return Err(RetainError::InvalidArgument("C must be > 0".to_string()));
            }
            solve_dual_linear_cd(x, labels, c)
        }
        _ => solve_dual(x, labels, kernel, c),
    }
}

fn machine_from(
    x: &[Vec<f64>],
    labels: &[u8],
    kernel: Kernel,
    c: f64,
    sol: &DualSolution,
) -> KernelMachine {
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > ALPHA_EPS {
            support.push(x[i].clone());
            coef.push(a * if labels[i] == 1 { 1.0 } else { -1.0 });
        }
    }
    KernelMachine {
        kernel,
        c,
        support,
        coef,
        // SMO tracks the threshold as f = sum - b; store as additive bias.
        bias: -sol.bias,
        platt_a: -1.0,
        platt_b: 0.0,
    }
}

/// Platt's sigmoid fit on (decision value, label) pairs.
pub fn fit_sigmoid(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = n as f64 - n_pos;
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { t_pos } else { t_neg })
        .collect();

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let obj = |a: f64, b: f64| -> f64 {
        let mut o = 0.0;
        for (&f, &t) in scores.iter().zip(&targets) {
            let z = a * f + b;
            // -[t log p + (1-t) log(1-p)], p = 1/(1+exp(z))
            o += if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (1.0 - t) * (-z) + z.exp().ln_1p()
            };
        }
        o
    };
    let mut fval = obj(a, b);
    for _ in 0..100 {
        let (mut g_a, mut g_b) = (0.0, 0.0);
        let (mut h_aa, mut h_ab, mut h_bb) = (1e-12, 0.0, 1e-12);
        for (&f, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(-(a * f + b));
            let d = t - p; // d obj / dz with p = sigma(-z)
            g_a += d * f;
            g_b += d;
            let w = (p * (1.0 - p)).max(1e-12);
            h_aa += w * f * f;
            h_ab += w * f;
            h_bb += w;
        }
        if g_a.abs() < 1e-10 && g_b.abs() < 1e-10 {
            break;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        let da = -(h_bb * g_a - h_ab * g_b) / det;
        let db = -(-h_ab * g_a + h_aa * g_b) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = obj(na, nb);
            if nf <= fval + 1e-12 {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return (a, b);
            }
        }
    }
    (a, b)
}

/// Train a soft-margin SVM and calibrate probabilities on out-of-sample
/// scores from a deterministic 3-fold internal split.
pub fn train_svm(x: &[Vec<f64>], labels: &[u8], kernel: Kernel, c: f64) -> Result<KernelMachine> {
    if let Kernel::Rbf { gamma } = kernel {
        if gamma <= 0.0 {
            return Err(RetainError::InvalidArgument("gamma must be > 0".to_string()));
        }
    }
    let n = x.len();
    if n < 2 {
        return Err(RetainError::InvalidArgument("need at least 2 rows".to_string()));
    }
    let sol = solve_dual_auto(x, labels, kernel, c)?;
    let mut machine = machine_from(x, labels, kernel, c, &sol);

    // Out-of-sample scores for calibration: fold k = i mod 3.
    let mut cal_scores = Vec::with_capacity(n);
    let mut cal_labels = Vec::with_capacity(n);
    let mut oos_ok = n >= 12;
    if oos_ok {
        'folds: for fold in 0..3 {
            let train_idx: Vec<usize> = (0..n).filter(|i| i % 3 != fold).collect();
            let test_idx: Vec<usize> = (0..n).filter(|i| i % 3 == fold).collect();
            let tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
            if ty.iter().all(|&l| l == 1) || ty.iter().all(|&l| l == 0) {
                oos_ok = false;
                break 'folds;
            }
            match solve_dual_auto(&tx, &ty, kernel, c) {
                Ok(fs) => {
                    let fm = machine_from(&tx, &ty, kernel, c, &fs);
                    for &i in &test_idx {
                        cal_scores.push(fm.decision(&x[i]));
                        cal_labels.push(labels[i]);
                    }
                }
                Err(_) => {
                    oos_ok = false;
                    break 'folds;
                }
            }
        }
    }
    let (a, b) = if oos_ok {
        fit_sigmoid(&cal_scores, &cal_labels)
    } else {
        // Tiny or degenerate data: calibrate on in-sample scores.
        let scores: Vec<f64> = x.iter().map(|r| machine.decision(r)).collect();
        fit_sigmoid(&scores, labels)
    };
    machine.platt_a = a;
    machine.platt_b = b;
    Ok(machine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_toy_margin_points_are_support_vectors() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![3.0, 0.0],
            vec![3.0, 1.0],
        ];
        let y = vec![0, 0, 1, 1];
        let sol = solve_dual(&x, &y, Kernel::Linear, 1e4).unwrap();
        let m = machine_from(&x, &y, Kernel::Linear, 1e4, &sol);
        // Every support vector sits on a margin plane, and all four
        // points reach |f| = 1: the maximum-margin separator is x0 = 1.5
        // with margin planes x0 = 0 and x0 = 3.
        assert!(m.support.len() >= 2);
        for (row, &label) in x.iter().zip(&y) {
            let f = m.decision(row);
            let target = if label == 1 { 1.0 } else { -1.0 };
            assert!((f - target).abs() < 1e-2, "decision {f} for {row:?}");
        }
    }

    #[test]
    fn xor_rbf_fits_perfectly() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = vec![0, 0, 1, 1];
        let sol = solve_dual(&x, &y, Kernel::Rbf { gamma: 1.0 }, 100.0).unwrap();
        let m = machine_from(&x, &y, Kernel::Rbf { gamma: 1.0 }, 100.0, &sol);
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!((m.decision(row) > 0.0) as u8, label);
        }
    }

    #[test]
    fn dual_objective_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..5 {
            let n = 40;
            let x: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let off = if i % 2 == 0 { -1.0 } else { 1.0 };
                    vec![off + rng.gen_range(-0.8..0.8), rng.gen_range(-1.0..1.0)]
                })
                .collect();
            let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let c = 1.0;
            let sol = solve_dual(&x, &y, Kernel::Linear, c).unwrap();
            for _ in 0..2000 {
                let alpha = random_feasible(&y, c, &mut rng);
                let w = dual_objective(&x, &y, Kernel::Linear, &alpha);
                assert!(
                    sol.objective >= w - 1e-6,
                    "trial {trial}: solver {} < random {w}",
                    sol.objective
                );
            }
        }
    }

    pub(crate) fn random_feasible(y: &[u8], c: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut alpha: Vec<f64> = y.iter().map(|_| rng.gen_range(0.0..c)).collect();
        let pos: f64 = alpha.iter().zip(y).filter(|(_, &l)| l == 1).map(|(a, _)| a).sum();
        let neg: f64 = alpha.iter().zip(y).filter(|(_, &l)| l == 0).map(|(a, _)| a).sum();
        // Scale the heavier side down so sum alpha_i y_i = 0.
        if pos > neg && pos > 0.0 {
            let s = neg / pos;
            for (a, &l) in alpha.iter_mut().zip(y) {
                if l == 1 {
                    *a *= s;
                }
            }
        } else if neg > 0.0 {
            let s = if neg > 0.0 { pos / neg } else { 0.0 };
            for (a, &l) in alpha.iter_mut().zip(y) {
                if l == 0 {
                    *a *= s;
                }
            }
        }
        alpha
    }

    #[test]
    fn coordinate_descent_agrees_with_smo() {
        // Same soft-margin problem solved by both paths: the weight
        // vectors and dual objectives must agree up to the small bias
        // penalty the descent formulation adds.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 240;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let y: Vec<u8> = x
            .iter()
            .map(|r| (r[0] - 0.5 * r[1] + rng.gen_range(-0.4..0.4) > 0.2) as u8)
            .collect();
        let c = 1.0;
        let smo = solve_dual(&x, &y, Kernel::Linear, c).unwrap();
        let cd = solve_dual_linear_cd(&x, &y, c).unwrap();
        let weights = |sol: &DualSolution| -> Vec<f64> {
            let mut w = vec![0.0; 2];
            for i in 0..n {
                let yy = if y[i] == 1 { 1.0 } else { -1.0 };
                w[0] += sol.alpha[i] * yy * x[i][0];
                w[1] += sol.alpha[i] * yy * x[i][1];
            }
            w
        };
        let (ws, wc) = (weights(&smo), weights(&cd));
        let dist = ((ws[0] - wc[0]).powi(2) + (ws[1] - wc[1]).powi(2)).sqrt();
        let norm = (ws[0].powi(2) + ws[1].powi(2)).sqrt();
        assert!(dist < 0.05 * norm, "weights {ws:?} vs {wc:?}");
        assert!((smo.bias - cd.bias).abs() < 0.1, "{} vs {}", smo.bias, cd.bias);
        for &a in &cd.alpha {
            assert!((-1e-9..=c + 1e-9).contains(&a));
        }
        // Identical classifications on the training set.
        let ms = machine_from(&x, &y, Kernel::Linear, c, &smo);
        let mc = machine_from(&x, &y, Kernel::Linear, c, &cd);
        let agree = x
            .iter()
            .filter(|r| (ms.decision(r) > 0.0) == (mc.decision(r) > 0.0))
            .count();
        assert!(agree as f64 / n as f64 > 0.99, "agreement {agree}/{n}");
    }

    #[test]
    fn alphas_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let y: Vec<u8> = x.iter().map(|r| (r[0] + 0.3 * r[1] > 0.1) as u8).collect();
        let c = 2.5;
        let sol = solve_dual(&x, &y, Kernel::Linear, c).unwrap();
        for &a in &sol.alpha {
            assert!((-1e-9..=c + 1e-9).contains(&a));
        }
        let yy: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let balance: f64 = sol.alpha.iter().zip(&yy).map(|(a, v)| a * v).sum();
        assert!(balance.abs() < 1e-6);
    }

    #[test]
    fn calibrated_probabilities_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 90;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let y: Vec<u8> = x.iter().map(|r| (r[0] > 0.0) as u8).collect();
        let m = train_svm(&x, &y, Kernel::Linear, 1.0).unwrap();
        let mut correct = 0;
        for (row, &label) in x.iter().zip(&y) {
            let p = m.score_row(row);
            assert!(p > 0.0 && p < 1.0);
            if (p >= 0.5) as u8 == label {
                correct += 1;
            }
        }
        assert!(correct as f64 / n as f64 > 0.9);
    }

    #[test]
    fn bad_hyperparameters_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        assert!(solve_dual(&x, &y, Kernel::Linear, 0.0).is_err());
        assert!(train_svm(&x, &y, Kernel::Rbf { gamma: -1.0 }, 1.0).is_err());
    }
}
