//! End-to-end acceptance checks. One line is printed per criterion so a
//! reviewer can read the pass/fail state of the whole suite at a glance;
//! the test fails if any criterion fails.
//!
//! Run with: cargo test --test acceptance -- --nocapture

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use retain_core::evaluation::{
    auc, compute_metrics, cross_validate, make_folds, nearest_neighbors, robustness_study,
    CvOutcome,
};
use retain_core::featurize::{build_rows, encode_all, Dataset, EvalWindow, FeatureWindow};
use retain_core::learners::logistic::{fit_nll_trace, nll_and_grad, Term};
use retain_core::learners::rule_tree::{export_rules, train_rule_tree};
use retain_core::learners::svm::{dual_objective, solve_dual, train_svm, Kernel};
use retain_core::learners::tree::{best_split, gini, Split};
use retain_core::learners::ModelSpec;
use retain_core::synthcohort::{calibrate, generate, GeneratorConfig, TruthRecord};
use retain_core::telemetry::{
    apply_cohort_filter, parse_events_jsonl, EventLog, ParseOptions, RoundRecord, SessionRecord,
    SECONDS_PER_DAY,
};

type Check = Result<String, String>;

fn fail(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

// ---------------------------------------------------------------- 1

/// Confusion metrics against a closed-form oracle and AUC against the
/// quadratic pairwise definition.
fn metric_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    for case in 0..100 {
        let n = rng.gen_range(20..200);
        let p_label = rng.gen_range(0.1..0.9);
        let p_agree = rng.gen_range(0.3..0.95);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(p_label) as u8).collect();
        let classes: Vec<u8> = labels
            .iter()
            .map(|&l| if rng.gen_bool(p_agree) { l } else { 1 - l })
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();

        let m = compute_metrics(&labels, &classes, &scores).map_err(|e| e.to_string())?;
        let tp = labels.iter().zip(&classes).filter(|&(&l, &c)| l == 1 && c == 1).count();
        let fp = labels.iter().zip(&classes).filter(|&(&l, &c)| l == 0 && c == 1).count();
        let tn = labels.iter().zip(&classes).filter(|&(&l, &c)| l == 0 && c == 0).count();
        let fn_ = labels.iter().zip(&classes).filter(|&(&l, &c)| l == 1 && c == 0).count();
        if (m.tp, m.fp, m.tn, m.fn_) != (tp, fp, tn, fn_) {
            return fail(format!("case {case}: confusion counts differ"));
        }
        let acc = (tp + tn) as f64 / n as f64;
        let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let rec = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
        for (name, got, want) in [
            ("accuracy", m.accuracy, acc),
            ("precision", m.precision, prec),
            ("recall", m.recall, rec),
            ("f1", m.f1, f1),
        ] {
            if (got - want).abs() > 1e-12 {
                return fail(format!("case {case}: {name} {got} vs oracle {want}"));
            }
        }
    }

    // AUC vs the O(n^2) pairwise oracle, with heavy score ties.
    let n = 1000;
    let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.4) as u8).collect();
    let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..20)) / 10.0).collect();
    let got = auc(&labels, &scores).ok_or("auc returned None")?;
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..n {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    let want = num / pairs;
    if (got - want).abs() > 1e-9 {
        return fail(format!("auc {got} vs pairwise oracle {want}"));
    }
    let secs = started.elapsed().as_secs_f64();
    if secs > 5.0 {
        return fail(format!("took {secs:.1}s, budget 5s"));
    }
    Ok(format!(
        "100 confusion cases exact, auc vs pairwise oracle to 1e-9, {secs:.2}s"
    ))
}

// ---------------------------------------------------------------- 2

/// Exhaustive split enumeration over every (column, midpoint) pair.
fn oracle_split(x: &[Vec<f64>], y: &[u8], min_leaf: usize) -> Option<Split> {
    let n = x.len();
    let p = x[0].len();
    let idx: Vec<usize> = (0..n).collect();
    let pos: usize = y.iter().map(|&v| v as usize).sum();
    let parent = n as f64 * gini(pos as f64, n as f64);
    let mut best: Option<Split> = None;
    for col in 0..p {
        let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][col]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = idx.iter().cloned().filter(|&i| x[i][col] <= threshold).collect();
            let right: Vec<usize> = idx.iter().cloned().filter(|&i| x[i][col] > threshold).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let lp: usize = left.iter().map(|&i| y[i] as usize).sum();
            let rp: usize = right.iter().map(|&i| y[i] as usize).sum();
            let decrease = parent
                - left.len() as f64 * gini(lp as f64, left.len() as f64)
                - right.len() as f64 * gini(rp as f64, right.len() as f64);
            if decrease <= 1e-12 {
                continue;
            }
            let better = match best {
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

fn split_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut nontrivial = 0;
    for case in 0..200 {
        let n = rng.gen_range(2..=8usize);
        let p = rng.gen_range(1..=3usize);
        // Values from a small grid so duplicates and ties are common.
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| f64::from(rng.gen_range(0..4)) / 2.0).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.5) as u8).collect();
        let idx: Vec<usize> = (0..n).collect();
        let cols: Vec<usize> = (0..p).collect();
        let got = best_split(&x, &y, &idx, &cols, 1);
        let want = oracle_split(&x, &y, 1);
        let same = match (got, want) {
            (None, None) => true,
            (Some(g), Some(w)) => {
                g.col == w.col && g.threshold == w.threshold && (g.decrease - w.decrease).abs() < 1e-9
            }
            _ => false,
        };
        if !same {
            return fail(format!("case {case}: {got:?} vs exhaustive oracle {want:?}"));
        }
        if want.is_some() {
            nontrivial += 1;
        }
    }
    Ok(format!("200 micro-datasets, {nontrivial} with a split, zero mismatches"))
}

// ---------------------------------------------------------------- 3

fn logistic_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 150;
    let p = 4;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    let true_w = [0.3, -1.2, 0.8, 0.0, 1.5, -0.7];
    let mut terms: Vec<Term> = (0..p).map(Term::Main).collect();
    terms.push(Term::Interaction(0, 1));
    let y: Vec<u8> = x
        .iter()
        .map(|row| {
            let z: f64 = true_w[0]
                + terms.iter().zip(&true_w[1..]).map(|(t, w)| w * t.value(row)).sum::<f64>();
            rng.gen_bool(1.0 / (1.0 + (-z).exp())) as u8
        })
        .collect();
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|row| terms.iter().map(|t| t.value(row)).collect())
        .collect();

    let k = terms.len() + 1;
    for point in 0..50 {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, grad) = nll_and_grad(&design, &y, &w, 0.0);
        for j in 0..k {
            let h = 1e-5 * (1.0 + w[j].abs());
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let fd = (nll_and_grad(&design, &y, &wp, 0.0).0
                - nll_and_grad(&design, &y, &wm, 0.0).0)
                / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(1.0);
            if rel > 1e-4 {
                return fail(format!(
                    "point {point} coord {j}: analytic {} vs central diff {fd} (rel {rel:.2e})",
                    grad[j]
                ));
            }
        }
    }

    let trace = fit_nll_trace(&x, &y, &terms).map_err(|e| e.to_string())?;
    if trace.len() < 2 {
        return fail("fit finished without taking a step".to_string());
    }
    for w in trace.windows(2) {
        if w[1] > w[0] + 1e-9 {
            return fail(format!("nll rose from {} to {}", w[0], w[1]));
        }
    }
    Ok(format!(
        "gradient matches central differences at 50 points, nll non-increasing over {} steps",
        trace.len() - 1
    ))
}

// ---------------------------------------------------------------- 4

/// Random point in the dual feasible set: the [0, C] box intersected
/// with the hyperplane sum(alpha_i y_i) = 0.
fn random_feasible(rng: &mut ChaCha8Rng, c: f64, y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=c)).collect();
    for _ in 0..200 {
        let s: f64 = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        if s.abs() < 1e-10 {
            return Some(a);
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let d = -s * y[i];
                (d > 0.0 && a[i] < c) || (d < 0.0 && a[i] > 0.0)
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let share = s / free.len() as f64;
        for &i in &free {
            a[i] = (a[i] - share * y[i]).clamp(0.0, c);
        }
    }
    None
}

fn svm_dual_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let c = 1.0;
    let mut checked = 0usize;
    for problem in 0..20 {
        let n = 30;
        let kernel = if problem % 2 == 0 { Kernel::Linear } else { Kernel::Rbf { gamma: 0.5 } };
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<u8> = x
            .iter()
            .map(|r| (r[0] + 0.5 * r[1] + rng.gen_range(-0.8..0.8) > 0.0) as u8)
            .collect();
        if labels.iter().all(|&l| l == 1) || labels.iter().all(|&l| l == 0) {
            continue;
        }
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let sol = solve_dual(&x, &labels, kernel, c).map_err(|e| e.to_string())?;
        let obj_star = dual_objective(&x, &labels, kernel, &sol.alpha);
        let mut sampled = 0;
        while sampled < 500 {
            let Some(a) = random_feasible(&mut rng, c, &y) else { continue };
            sampled += 1;
            checked += 1;
            let obj = dual_objective(&x, &labels, kernel, &a);
            if obj > obj_star + 1e-6 {
                return fail(format!(
                    "problem {problem}: random feasible point scores {obj} > solution {obj_star}"
                ));
            }
        }
    }

    // An rbf machine must fit the xor pattern exactly on its own
    // training data; no linear model can.
    let mut xor_x = Vec::new();
    let mut xor_y = Vec::new();
    for rep in 0..10 {
        for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let jitter = 0.01 * rep as f64;
            xor_x.push(vec![a + jitter, b - jitter]);
            xor_y.push(((a > 0.5) != (b > 0.5)) as u8);
        }
    }
    let machine =
        train_svm(&xor_x, &xor_y, Kernel::Rbf { gamma: 4.0 }, 10.0).map_err(|e| e.to_string())?;
    let correct = xor_x
        .iter()
        .zip(&xor_y)
        .filter(|&(r, &l)| ((machine.decision(r) > 0.0) as u8) == l)
        .count();
    if correct != xor_x.len() {
        return fail(format!("xor training accuracy {}/{}", correct, xor_x.len()));
    }
    Ok(format!(
        "{checked} random feasible dual points all scored below the solver's objective; rbf fits xor exactly"
    ))
}

// ---------------------------------------------------------------- 5

fn no_feature_leakage() -> Check {
    let cfg = GeneratorConfig { n_players: 500, ..GeneratorConfig::default() };
    let out = generate(&cfg, 21).map_err(|e| e.to_string())?;
    let log = parse_events_jsonl(BufReader::new(out.events.as_bytes()), ParseOptions::default())
        .map_err(|e| e.to_string())?;
    let cohort = apply_cohort_filter(&log);

    // Append one late session with a round for every player, well past
    // every observation cutoff and both evaluation windows.
    let mut altered = cohort.clone();
    for inst in &cohort.installs {
        let ts = inst.install_ts + 80 * SECONDS_PER_DAY;
        let sid = format!("{}_late", inst.player_id);
        altered.sessions.push(SessionRecord {
            player_id: inst.player_id.clone(),
            session_id: sid.clone(),
            start_ts: ts,
            end_ts: ts + 600,
        });
        altered.rounds.push(RoundRecord {
            player_id: inst.player_id.clone(),
            session_id: sid,
            start_ts: ts + 10,
            duration: 90,
            moves: 25,
            stars: 2,
            level: 4,
            friends_connected: 1,
            interactions: 0,
        });
    }
    altered.sessions.sort_by(|a, b| {
        (a.player_id.as_str(), a.start_ts).cmp(&(b.player_id.as_str(), b.start_ts))
    });
    altered.rounds.sort_by(|a, b| {
        (a.player_id.as_str(), a.start_ts).cmp(&(b.player_id.as_str(), b.start_ts))
    });

    let short = EvalWindow::short_term();
    let long = EvalWindow::long_term();
    let mut n_rows = 0;
    for window in [FeatureWindow::FirstSession, FeatureWindow::FirstDay, FeatureWindow::Days(7)] {
        let before = build_rows(&cohort, window, short, long);
        let after = build_rows(&altered, window, short, long);
        if before != after {
            let diff = before
                .iter()
                .zip(&after)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.player_id.clone())
                .unwrap_or_default();
            return fail(format!(
                "window {}: features changed after appending post-cutoff events (player {diff})",
                window.label()
            ));
        }
        n_rows = before.len();
    }
    Ok(format!(
        "post-cutoff events left all 3 windows byte-identical ({n_rows} players)"
    ))
}

// ---------------------------------------------------------------- shared cohort

struct BigCohort {
    cohort: EventLog,
    truth: Vec<TruthRecord>,
}

fn build_big_cohort() -> Result<BigCohort, String> {
    let cfg = calibrate(&GeneratorConfig { n_players: 20_000, ..GeneratorConfig::default() })
        .map_err(|e| e.to_string())?;
    let out = generate(&cfg, 11).map_err(|e| e.to_string())?;
    let log = parse_events_jsonl(BufReader::new(out.events.as_bytes()), ParseOptions::default())
        .map_err(|e| e.to_string())?;
    let truth: Vec<TruthRecord> = out
        .truth
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok(BigCohort { cohort: apply_cohort_filter(&log), truth })
}

fn run_big_cv(big: &BigCohort) -> Result<Vec<(FeatureWindow, Vec<CvOutcome>)>, String> {
    let short = EvalWindow::short_term();
    let long = EvalWindow::long_term();
    let specs = vec![
        ModelSpec::default_heuristic(),
        ModelSpec::default_lr(),
        ModelSpec::default_svm(),
        ModelSpec::default_rf(),
        ModelSpec::default_ensemble(),
    ];
    let windows = [FeatureWindow::FirstSession, FeatureWindow::FirstDay, FeatureWindow::Days(7)];
    let players: Vec<String> =
        big.cohort.installs.iter().map(|i| i.player_id.clone()).collect();
    let plan = make_folds(&players, 5, 0).map_err(|e| e.to_string())?;

    let mut slots: Vec<Result<Vec<CvOutcome>, String>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = windows
            .iter()
            .map(|&w| {
                let specs = &specs;
                let plan = &plan;
                let cohort = &big.cohort;
                scope.spawn(move || {
                    let rows = build_rows(cohort, w, short, long);
                    cross_validate(&rows, w, short, specs, plan, 0).map_err(|e| e.to_string())
                })
            })
            .collect();
        for h in handles {
            slots.push(h.join().expect("cv worker panicked"));
        }
    });
    windows
        .iter()
        .zip(slots)
        .map(|(&w, r)| r.map(|o| (w, o)))
        .collect()
}

fn accuracy_of(outcomes: &[CvOutcome], family: &str) -> f64 {
    outcomes
        .iter()
        .find(|o| o.spec.name() == family)
        .map(|o| o.pooled.accuracy)
        .unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- 6

fn window_accuracy_ordering(cv: &[(FeatureWindow, Vec<CvOutcome>)], secs: f64) -> Check {
    if secs > 600.0 {
        return fail(format!("cross-validation took {secs:.0}s, budget 600s"));
    }
    let mut summary = Vec::new();
    for family in ["lr", "svm", "rf", "ensemble"] {
        let accs: Vec<f64> = cv.iter().map(|(_, o)| accuracy_of(o, family)).collect();
        let (s, d, w) = (accs[0], accs[1], accs[2]);
        if !(s < d && d < w) {
            return fail(format!("{family}: accuracies not increasing ({s:.4}, {d:.4}, {w:.4})"));
        }
        if w - s < 0.05 {
            return fail(format!("{family}: week-over-session gain only {:.4}", w - s));
        }
        if accs.iter().any(|&a| a <= 0.595) {
            return fail(format!("{family}: accuracy at or below the 0.595 base rate: {accs:?}"));
        }
        summary.push(format!("{family} {s:.3}<{d:.3}<{w:.3}"));
    }
    Ok(format!("{} ({secs:.0}s)", summary.join(", ")))
}

// ---------------------------------------------------------------- 7

fn heuristic_near_best(cv: &[(FeatureWindow, Vec<CvOutcome>)]) -> Check {
    let mut summary = Vec::new();
    for (w, outcomes) in cv {
        let tree = accuracy_of(outcomes, "heuristic");
        let best = ["lr", "svm", "rf", "ensemble"]
            .iter()
            .map(|f| accuracy_of(outcomes, f))
            .fold(f64::NEG_INFINITY, f64::max);
        if best - tree > 0.03 {
            return fail(format!(
                "window {}: heuristic {tree:.4} trails best model {best:.4} by more than 0.03",
                w.label()
            ));
        }
        summary.push(format!("{} gap {:.4}", w.label(), best - tree));
    }
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------- 8

fn robustness_stability(data: &Dataset) -> Check {
    let report = robustness_study(data, 4, 50, 11, 9, 3).map_err(|e| e.to_string())?;
    let base = report.levels[0].mean;
    for l in &report.levels {
        if l.std >= 0.02 {
            return fail(format!("level {}: std {:.4} >= 0.02", l.level, l.std));
        }
        if (l.mean - base).abs() > 0.02 {
            return fail(format!(
                "level {}: mean {:.4} drifts more than 0.02 from level 0 ({base:.4})",
                l.level, l.mean
            ));
        }
    }

    // Independent brute-force check of the neighbor search on a subsample.
    let n = data.rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    order.shuffle(&mut rng);
    let queries: Vec<usize> = order[..200].to_vec();
    let candidates: Vec<usize> = order[200..].to_vec();
    let got = nearest_neighbors(data, &queries, &candidates, 9).map_err(|e| e.to_string())?;
    for (qi, &q) in queries.iter().enumerate() {
        let mut ranked: Vec<(f64, String, usize)> = candidates
            .iter()
            .filter(|&&c| data.y[c] == data.y[q])
            .map(|&c| {
                let mut d2 = 0.0;
                for (a, b) in data.x[q].iter().zip(&data.x[c]) {
                    d2 += (a - b).powi(2);
                }
                (d2, data.rows[c].player_id.clone(), c)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = ranked.into_iter().take(9).map(|(_, _, c)| c).collect();
        if got[qi] != want {
            return fail(format!("query row {q}: neighbor order differs from brute force"));
        }
    }
    let max_std = report.levels.iter().map(|l| l.std).fold(0.0, f64::max);
    let max_drift =
        report.levels.iter().map(|l| (l.mean - base).abs()).fold(0.0, f64::max);
    Ok(format!(
        "max std {max_std:.4}, max mean drift {max_drift:.4}, 200-row neighbor check exact"
    ))
}

// ---------------------------------------------------------------- 9

fn generator_calibration(big: &BigCohort) -> Check {
    let filtered: Vec<&TruthRecord> = big.truth.iter().filter(|t| t.passes_filter).collect();
    if filtered.is_empty() {
        return fail("no players pass the cohort filter".to_string());
    }
    let n = filtered.len() as f64;
    let short = filtered.iter().map(|t| f64::from(t.retained_short)).sum::<f64>() / n;
    let long = filtered.iter().map(|t| f64::from(t.retained_long)).sum::<f64>() / n;
    if (short - 0.405).abs() > 0.015 {
        return fail(format!("short-term rate {short:.4}, target 0.405 +- 0.015"));
    }
    if (long - 0.152).abs() > 0.02 {
        return fail(format!("long-term rate {long:.4}, target 0.152 +- 0.02"));
    }
    Ok(format!(
        "short {short:.4} (target 0.405), long {long:.4} (target 0.152), {} filtered players",
        filtered.len()
    ))
}

// ---------------------------------------------------------------- 10

fn rule_export_fidelity(data: &Dataset) -> Check {
    let tree = train_rule_tree(data, 4, 50).map_err(|e| e.to_string())?;
    let doc = export_rules(&tree);
    let p = data.columns.len();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for row in &data.x_raw {
        for j in 0..p {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for case in 0..10_000 {
        let row: Vec<f64> = (0..p)
            .map(|j| if lo[j] < hi[j] { rng.gen_range(lo[j]..hi[j]) } else { lo[j] })
            .collect();
        let from_tree = (tree.score_row(&row) >= 0.5) as u8;
        let (from_doc, _) = doc.classify(&data.columns, &row).map_err(|e| e.to_string())?;
        if from_tree != from_doc {
            return fail(format!("case {case}: tree says {from_tree}, exported rules say {from_doc}"));
        }
    }
    Ok(format!(
        "{} exported rules reclassify 10000 random vectors identically to the tree",
        doc.rules.len()
    ))
}

// ---------------------------------------------------------------- 11

fn collect_files(root: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    files
}

fn strip_timestamps(json: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    serde_json::to_string(&v).unwrap()
}

fn cli_reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let steps: &[&[&str]] = &[
            &["synth", "--players", "300", "--seed", "5", "--out", "ev.jsonl"],
            &["ingest", "--input", "ev.jsonl", "--cohort-filter", "--out", "clean.jsonl"],
            &[
                "evaluate", "--input", "clean.jsonl", "--feature-window", "session",
                "--models", "heuristic,lr", "--cv", "3", "--seed", "5", "--out-dir", "eval",
            ],
        ];
        for args in steps {
            let out = Command::new(env!("CARGO_BIN_EXE_retain"))
                .args(*args)
                .current_dir(&dir)
                .env_remove("RETAIN_SEED")
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return fail(format!(
                    "retain {args:?} failed: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
    }
    let fa = collect_files(&tmp.path().join("a"));
    let fb = collect_files(&tmp.path().join("b"));
    if fa.len() != fb.len() {
        return fail(format!("file counts differ: {} vs {}", fa.len(), fb.len()));
    }
    for (pa, pb) in fa.iter().zip(&fb) {
        let ba = std::fs::read(pa).map_err(|e| e.to_string())?;
        let bb = std::fs::read(pb).map_err(|e| e.to_string())?;
        let same = if pa.file_name().unwrap().to_string_lossy().ends_with("manifest.json") {
            strip_timestamps(std::str::from_utf8(&ba).unwrap())
                == strip_timestamps(std::str::from_utf8(&bb).unwrap())
        } else {
            ba == bb
        };
        if !same {
            return fail(format!("artifact {} differs between reruns", pa.display()));
        }
    }
    Ok(format!("{} artifacts byte-identical across reruns", fa.len()))
}

// ----------------------------------------------------------------

#[test]
fn acceptance() {
    let mut results: Vec<(&str, Check)> = vec![
        ("metric-oracle", metric_oracle()),
        ("split-oracle", split_oracle()),
        ("logistic-gradient", logistic_gradient()),
        ("svm-dual-optimality", svm_dual_optimality()),
        ("no-feature-leakage", no_feature_leakage()),
    ];

    let big = build_big_cohort();
    let cv = match &big {
        Ok(b) => {
            let started = Instant::now();
            run_big_cv(b).map(|cv| (cv, started.elapsed().as_secs_f64()))
        }
        Err(e) => Err(e.clone()),
    };
    results.push((
        "window-accuracy-ordering",
        cv.as_ref()
            .map_err(|e| e.clone())
            .and_then(|(cv, secs)| window_accuracy_ordering(cv, *secs)),
    ));
    results.push((
        "heuristic-near-best",
        cv.as_ref().map_err(|e| e.clone()).and_then(|(cv, _)| heuristic_near_best(cv)),
    ));

    // A 5,000-player subsample, encoded once, shared by the robustness
    // and rule-export checks.
    let day_data: Result<Dataset, String> = big.as_ref().map_err(|e| e.clone()).and_then(|b| {
        let rows = build_rows(
            &b.cohort,
            FeatureWindow::FirstDay,
            EvalWindow::short_term(),
            EvalWindow::long_term(),
        );
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        order.shuffle(&mut rng);
        order.truncate(5_000);
        order.sort_unstable();
        let sub: Vec<_> = order.iter().map(|&i| rows[i].clone()).collect();
        encode_all(FeatureWindow::FirstDay, EvalWindow::short_term(), &sub)
            .map_err(|e| e.to_string())
    });
    results.push((
        "robustness-stability",
        day_data.as_ref().map_err(|e| e.clone()).and_then(robustness_stability),
    ));
    results.push((
        "generator-calibration",
        big.as_ref().map_err(|e| e.clone()).and_then(generator_calibration),
    ));
    results.push((
        "rule-export-fidelity",
        day_data.as_ref().map_err(|e| e.clone()).and_then(rule_export_fidelity),
    ));
    results.push(("cli-reproducibility", cli_reproducibility()));

    let mut failures = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    assert_eq!(failures, 0, "{failures} acceptance criteria failed");
}
