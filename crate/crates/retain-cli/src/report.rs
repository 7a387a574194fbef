//! Report emission: machine-readable CSV per table, Markdown summaries,
//! ROC and daily-activity series, and optional static SVG charts.

use std::fmt::Write as _;

use retain_core::evaluation::{CvOutcome, MetricSet, RobustnessReport};

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => String::new(),
    }
}

/// One row per (window, model): the model-comparison table.
pub fn metrics_csv(rows: &[(String, String, MetricSet)]) -> String {
    let mut out = String::from("window,model,n,tp,fp,tn,fn,accuracy,precision,recall,f1,auc\n");
    for (window, model, m) in rows {
        let _ = writeln!(
            out,
            "{window},{model},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            m.n(),
            m.tp,
            m.fp,
            m.tn,
            m.fn_,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            fmt_opt(m.auc)
        );
    }
    out
}

/// Accuracy matrix with models as rows and windows as columns.
pub fn accuracy_by_window_csv(
    windows: &[String],
    models: &[String],
    rows: &[(String, String, MetricSet)],
) -> String {
    let mut out = String::from("model");
    for w in windows {
        let _ = write!(out, ",{w}");
    }
    out.push('\n');
    for model in models {
        let _ = write!(out, "{model}");
        for window in windows {
            let cell = rows
                .iter()
                .find(|(w, m, _)| w == window && m == model)
                .map(|(_, _, m)| format!("{:.6}", m.accuracy))
                .unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

/// Per-fold metrics for one (window, model) pair.
pub fn per_fold_csv(rows: &[(String, String, usize, MetricSet)]) -> String {
    let mut out = String::from("window,model,fold,n,accuracy,precision,recall,f1,auc\n");
    for (window, model, fold, m) in rows {
        let _ = writeln!(
            out,
            "{window},{model},{fold},{},{:.6},{:.6},{:.6},{:.6},{}",
            m.n(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            fmt_opt(m.auc)
        );
    }
    out
}

/// Held-out predictions of one cross-validated model.
pub fn predictions_csv(outcome: &CvOutcome) -> String {
    let mut out = String::from("player_id,label,class,score\n");
    for (pid, label, class, score) in &outcome.predictions {
        let _ = writeln!(out, "{pid},{label},{class},{score:.6}");
    }
    out
}

/// ROC curve points from (label, score) pairs: one point per distinct
/// score threshold, sorted by descending score.
pub fn roc_points(pairs: &[(u8, f64)]) -> Vec<(f64, f64)> {
    let n_pos = pairs.iter().filter(|(l, _)| *l == 1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut sorted: Vec<(u8, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].1 == sorted[i].1 {
            j += 1;
        }
        for &(l, _) in &sorted[i..=j] {
            if l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j + 1;
    }
    points
}

pub fn roc_csv(pairs: &[(u8, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in roc_points(pairs) {
        let _ = writeln!(out, "{fpr:.6},{tpr:.6}");
    }
    out
}

/// Perturbation-level summary table plus one rate column per tree.
pub fn robustness_csv(report: &RobustnessReport) -> String {
    let n_trees = report.levels.first().map_or(0, |l| l.rates.len());
    let mut out = String::from("level,mean,std,min,max");
    for t in 0..n_trees {
        let _ = write!(out, ",tree_{t}");
    }
    out.push('\n');
    for lvl in &report.levels {
        let _ = write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            lvl.level, lvl.mean, lvl.std, lvl.min, lvl.max
        );
        for r in &lvl.rates {
            let _ = write!(out, ",{r:.6}");
        }
        out.push('\n');
    }
    out
}

/// A labeled numeric series indexed by relative day.
pub fn day_series_csv(column: &str, values: &[f64]) -> String {
    let mut out = format!("day,{column}\n");
    for (day, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{day},{v:.6}");
    }
    out
}

/// Render a Markdown table.
pub fn md_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", headers.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(headers.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn scale(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = 0.0f64;
    let mut ymax = f64::NEG_INFINITY;
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    (xmin, xmax, ymin, ymax)
}

const SERIES_COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Static SVG line chart; one polyline per named series.
pub fn svg_line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (xmin, xmax, ymin, ymax) = scale(&all);
    let px = |x: f64| MARGIN + (x - xmin) / (xmax - xmin) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y - ymin) / (ymax - ymin) * (SVG_H - 2.0 * MARGIN);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
        SVG_W / 2.0
    );
    let _ = writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN,
        t = MARGIN
    );
    let _ = writeln!(
        out,
        "<text x=\"{m}\" y=\"{y}\">{xmin:.0}</text>\
         <text x=\"{r}\" y=\"{y}\" text-anchor=\"end\">{xmax:.0}</text>\
         <text x=\"{lx}\" y=\"{b}\" text-anchor=\"end\">{ymin:.2}</text>\
         <text x=\"{lx}\" y=\"{t}\" text-anchor=\"end\">{ymax:.2}</text>",
        m = MARGIN,
        r = SVG_W - MARGIN,
        y = SVG_H - MARGIN + 16.0,
        lx = MARGIN - 6.0,
        b = SVG_H - MARGIN,
        t = MARGIN + 4.0
    );
    for (si, (name, points)) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            SVG_W - MARGIN - 120.0,
            MARGIN + 16.0 * (si as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Static SVG bar chart over labeled values.
pub fn svg_bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let ymax = bars.iter().map(|&(_, v)| v).fold(0.0f64, f64::max).max(1e-12);
    let n = bars.len().max(1) as f64;
    let band = (SVG_W - 2.0 * MARGIN) / n;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
        SVG_W / 2.0
    );
    let _ = writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / ymax * (SVG_H - 2.0 * MARGIN);
        let x = MARGIN + i as f64 * band + band * 0.1;
        let y = SVG_H - MARGIN - h;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#1f77b4\"/>",
            w = band * 0.8
        );
        // Label every bar only when few; otherwise every fifth.
        if bars.len() <= 20 || i % 5 == 0 {
            let _ = writeln!(
                out,
                "<text x=\"{cx:.2}\" y=\"{ly}\" text-anchor=\"middle\">{label}</text>",
                cx = x + band * 0.4,
                ly = SVG_H - MARGIN + 16.0
            );
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{lx}\" y=\"{t}\" text-anchor=\"end\">{ymax:.2}</text>",
        lx = MARGIN - 6.0,
        t = MARGIN + 4.0
    );
    out.push_str("</svg>\n");
    out
}
