//! Per-player feature vectors over feature windows, retention labels,
//! and one-hot / z-score encoding.
//!
//! A feature window runs from install to a cutoff (end of first session,
//! end of first day, or end of day `n`); every gameplay measure is
//! computed strictly from events at or before the cutoff. An evaluation
//! window `[a, b)` in days defines the retention label: 1 iff the player
//! starts at least one round inside it.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::telemetry::{DeviceType, EventLog, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureWindow {
    /// Install through the end of the player's first session.
    FirstSession,
    /// Install through install + 1 day.
    FirstDay,
    /// Install through install + `n` days.
    Days(u32),
}

impl FeatureWindow {
    /// Cutoff timestamp for one player.
    pub fn cutoff(&self, install_ts: i64, first_session_end: i64) -> i64 {
        match self {
            FeatureWindow::FirstSession => first_session_end,
            FeatureWindow::FirstDay => install_ts + SECONDS_PER_DAY,
            FeatureWindow::Days(n) => install_ts + i64::from(*n) * SECONDS_PER_DAY,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FeatureWindow::FirstSession => "session".to_string(),
            FeatureWindow::FirstDay => "day".to_string(),
            FeatureWindow::Days(n) => format!("{n}d"),
        }
    }
}

impl FromStr for FeatureWindow {
    type Err = RetainError;

    /// CLI syntax: `session`, `day`, or `<n>d` (e.g. `7d`).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "session" => Ok(FeatureWindow::FirstSession),
            "day" => Ok(FeatureWindow::FirstDay),
            other => {
                let n = other
                    .strip_suffix('d')
                    .and_then(|d| d.parse::<u32>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| {
                        RetainError::InvalidArgument(format!(
                            "bad feature window {other:?}: expected session, day, or <n>d"
                        ))
                    })?;
                Ok(FeatureWindow::Days(n))
            }
        }
    }
}

/// Evaluation window `[start_day, end_day)` in relative days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub start_day: u32,
    pub end_day: u32,
}

impl EvalWindow {
    pub fn new(start_day: u32, end_day: u32) -> Result<Self> {
        if start_day >= end_day {
            return Err(RetainError::InvalidArgument(format!(
                "eval window start {start_day} must be < end {end_day}"
            )));
        }
        Ok(EvalWindow { start_day, end_day })
    }

    /// Default short-term window (second week of exposure).
    pub fn short_term() -> Self {
        EvalWindow { start_day: 8, end_day: 14 }
    }

    /// Long-term retention window.
    pub fn long_term() -> Self {
        EvalWindow { start_day: 60, end_day: 67 }
    }
}

impl FromStr for EvalWindow {
    type Err = RetainError;

    /// CLI syntax: `start:end` in days, e.g. `8:14`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| {
            RetainError::InvalidArgument(format!("bad eval window {s:?}: expected start:end"))
        })?;
        let a = a.parse::<u32>().map_err(|_| {
            RetainError::InvalidArgument(format!("bad eval window start {a:?}"))
        })?;
        let b = b.parse::<u32>().map_err(|_| {
            RetainError::InvalidArgument(format!("bad eval window end {b:?}"))
        })?;
        EvalWindow::new(a, b)
    }
}

pub const GAMEPLAY_FEATURES: [&str; 13] = [
    "total_days",
    "total_sessions",
    "total_rounds",
    "avg_session_duration",
    "avg_round_duration",
    "total_playtime",
    "current_absence_time",
    "avg_time_between_sessions",
    "connected_friends",
    "player_interaction",
    "avg_moves",
    "avg_stars",
    "max_level",
];

/// Engineered features for one player over one feature window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub player_id: String,
    pub device_type: DeviceType,
    pub country: String,
    pub acquired: bool,
    pub total_days: f64,
    pub total_sessions: f64,
    pub total_rounds: f64,
    pub avg_session_duration: f64,
    pub avg_round_duration: f64,
    pub total_playtime: f64,
    pub current_absence_time: f64,
    pub avg_time_between_sessions: f64,
    pub connected_friends: f64,
    pub player_interaction: f64,
    pub avg_moves: f64,
    pub avg_stars: f64,
    pub max_level: f64,
    pub retained_short: u8,
    pub retained_long: u8,
}

impl FeatureVector {
    pub fn gameplay_values(&self) -> [f64; 13] {
        [
            self.total_days,
            self.total_sessions,
            self.total_rounds,
            self.avg_session_duration,
            self.avg_round_duration,
            self.total_playtime,
            self.current_absence_time,
            self.avg_time_between_sessions,
            self.connected_friends,
            self.player_interaction,
            self.avg_moves,
            self.avg_stars,
            self.max_level,
        ]
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Compute one unlabeled feature row per player. The log must already
/// have passed the cohort filter. Output is sorted by `player_id`.
pub fn compute_features(log: &EventLog, window: FeatureWindow) -> Vec<FeatureVector> {
    let mut out = Vec::with_capacity(log.installs.len());
    for install in &log.installs {
        let sessions = log.sessions_of(&install.player_id);
        let rounds = log.rounds_of(&install.player_id);
        let first_end = sessions.first().map_or(install.install_ts, |s| s.end_ts);
        let cutoff = window.cutoff(install.install_ts, first_end);

        // Sessions/rounds starting at or before the cutoff are in-window;
        // straddling sessions contribute their clipped duration.
        let in_sessions: Vec<_> = sessions.iter().filter(|s| s.start_ts <= cutoff).collect();
        let in_rounds: Vec<_> = rounds.iter().filter(|r| r.start_ts <= cutoff).collect();

        let mut days: BTreeSet<i64> = BTreeSet::new();
        let mut playtime = 0.0;
        let mut latest = install.install_ts;
        for s in &in_sessions {
            days.insert((s.start_ts - install.install_ts).div_euclid(SECONDS_PER_DAY));
            let clipped_end = s.end_ts.min(cutoff);
            playtime += (clipped_end - s.start_ts) as f64;
            latest = latest.max(s.start_ts).max(clipped_end);
        }
        for r in &in_rounds {
            latest = latest.max(r.start_ts);
        }

        let gaps: Vec<f64> = in_sessions
            .windows(2)
            .map(|w| (w[1].start_ts - w[0].start_ts) as f64)
            .collect();
        let window_len = (cutoff - install.install_ts) as f64;
        let avg_between = if gaps.is_empty() {
            // Fewer than two sessions: sentinel = full window length.
            window_len
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        };

        let round_duration: f64 = in_rounds.iter().map(|r| r.duration as f64).sum();
        let moves: f64 = in_rounds.iter().map(|r| r.moves as f64).sum();
        let stars: f64 = in_rounds.iter().map(|r| r.stars as f64).sum();

        out.push(FeatureVector {
            player_id: install.player_id.clone(),
            device_type: install.device_type,
            country: install.country.clone(),
            acquired: install.acquired,
            total_days: days.len() as f64,
            total_sessions: in_sessions.len() as f64,
            total_rounds: in_rounds.len() as f64,
            avg_session_duration: mean(playtime, in_sessions.len()),
            avg_round_duration: mean(round_duration, in_rounds.len()),
            total_playtime: playtime,
            current_absence_time: (cutoff - latest) as f64,
            avg_time_between_sessions: avg_between,
            connected_friends: in_rounds
                .iter()
                .map(|r| r.friends_connected as f64)
                .fold(0.0, f64::max),
            player_interaction: in_rounds.iter().map(|r| r.interactions as f64).sum(),
            avg_moves: mean(moves, in_rounds.len()),
            avg_stars: mean(stars, in_rounds.len()),
            max_level: in_rounds.iter().map(|r| r.level as f64).fold(0.0, f64::max),
            retained_short: 0,
            retained_long: 0,
        });
    }
    out.sort_by(|a, b| a.player_id.cmp(&b.player_id));
    out
}

/// Retention label per player: 1 iff the player starts at least one
/// round inside the evaluation window.
pub fn label(log: &EventLog, eval: EvalWindow) -> HashMap<String, u8> {
    let mut labels: HashMap<String, u8> = log
        .installs
        .iter()
        .map(|i| (i.player_id.clone(), 0u8))
        .collect();
    for install in &log.installs {
        let lo = install.install_ts + i64::from(eval.start_day) * SECONDS_PER_DAY;
        let hi = install.install_ts + i64::from(eval.end_day) * SECONDS_PER_DAY;
        let retained = log
            .rounds_of(&install.player_id)
            .iter()
            .any(|r| r.start_ts >= lo && r.start_ts < hi);
        if retained {
            labels.insert(install.player_id.clone(), 1);
        }
    }
    labels
}

/// Compute features and attach short/long retention labels.
pub fn build_rows(
    log: &EventLog,
    window: FeatureWindow,
    eval_short: EvalWindow,
    eval_long: EvalWindow,
) -> Vec<FeatureVector> {
    let mut rows = compute_features(log, window);
    let short = label(log, eval_short);
    let long = label(log, eval_long);
    for row in &mut rows {
        row.retained_short = short.get(&row.player_id).copied().unwrap_or(0);
        row.retained_long = long.get(&row.player_id).copied().unwrap_or(0);
    }
    rows
}

/// Categorical -> one-hot column mapping, fitted on training rows.
/// Device levels are fixed by the schema; country levels come from the
/// fit rows (an unseen country at transform time maps to all zeros).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub countries: Vec<String>,
}

impl EncodingMap {
    pub fn fit(rows: &[FeatureVector]) -> Self {
        let mut countries: Vec<String> = rows
            .iter()
            .map(|r| r.country.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        countries.sort();
        EncodingMap { countries }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec![
            "device_type=phone".to_string(),
            "device_type=tablet".to_string(),
            "device_type=other".to_string(),
        ];
        for c in &self.countries {
            cols.push(format!("country={c}"));
        }
        cols.push("acquired".to_string());
        cols.extend(GAMEPLAY_FEATURES.iter().map(|s| s.to_string()));
        cols
    }

    /// Number of leading one-hot/binary columns (not z-standardized).
    pub fn n_binary(&self) -> usize {
        3 + self.countries.len() + 1
    }

    pub fn transform(&self, row: &FeatureVector) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_binary() + GAMEPLAY_FEATURES.len());
        v.push((row.device_type == DeviceType::Phone) as u8 as f64);
        v.push((row.device_type == DeviceType::Tablet) as u8 as f64);
        v.push((row.device_type == DeviceType::Other) as u8 as f64);
        for c in &self.countries {
            v.push((row.country == *c) as u8 as f64);
        }
        v.push(row.acquired as u8 as f64);
        v.extend(row.gameplay_values());
        v
    }
}

/// Per-column mean/sd fitted on training rows; binary columns pass
/// through untouched (mean 0, sd 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn fit(raw: &[Vec<f64>], n_binary: usize) -> Result<Self> {
        if raw.is_empty() {
            return Err(RetainError::InvalidArgument(
                "cannot fit standardization on empty rows".to_string(),
            ));
        }
        let p = raw[0].len();
        let n = raw.len() as f64;
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        for j in n_binary..p {
            let m = raw.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = raw.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            // Constant column: leave sd at 1 so the z-score is 0. The
            // threshold is relative so rounding noise in the variance of
            // a constant column does not produce a near-zero sd.
            sd[j] = if var > 1e-12 * (1.0 + m * m) { var.sqrt() } else { 1.0 };
        }
        Ok(Standardization { mean, sd })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

/// Encoded dataset: fixed column order, one-hot categoricals, and
/// z-standardized gameplay columns (stats fitted on `fit_rows` only).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub window: FeatureWindow,
    pub eval: EvalWindow,
    pub rows: Vec<FeatureVector>,
    pub columns: Vec<String>,
    /// One-hot applied, gameplay columns unstandardized.
    pub x_raw: Vec<Vec<f64>>,
    /// Fully standardized design matrix.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub y_long: Vec<u8>,
    pub encoding: EncodingMap,
    pub stats: Standardization,
}

impl Dataset {
    /// Restrict to the given row indices, keeping the fitted encoding
    /// and standardization.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            window: self.window,
            eval: self.eval,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            x_raw: idx.iter().map(|&i| self.x_raw[i].clone()).collect(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            y_long: idx.iter().map(|&i| self.y_long[i]).collect(),
            encoding: self.encoding.clone(),
            stats: self.stats.clone(),
        }
    }
}

/// Encode `rows` using categories and statistics fitted on the subset
/// `fit_idx` (the training partition).
pub fn encode(
    window: FeatureWindow,
    eval: EvalWindow,
    rows: &[FeatureVector],
    fit_idx: &[usize],
) -> Result<Dataset> {
    if fit_idx.is_empty() {
        return Err(RetainError::InvalidArgument(
            "encode requires non-empty fit rows".to_string(),
        ));
    }
    let fit_rows: Vec<FeatureVector> = fit_idx.iter().map(|&i| rows[i].clone()).collect();
    let encoding = EncodingMap::fit(&fit_rows);
    let x_raw: Vec<Vec<f64>> = rows.iter().map(|r| encoding.transform(r)).collect();
    let fit_raw: Vec<Vec<f64>> = fit_idx.iter().map(|&i| x_raw[i].clone()).collect();
    let stats = Standardization::fit(&fit_raw, encoding.n_binary())?;
    let x: Vec<Vec<f64>> = x_raw.iter().map(|r| stats.apply(r)).collect();
    Ok(Dataset {
        window,
        eval,
        rows: rows.to_vec(),
        columns: encoding.columns(),
        x_raw,
        x,
        y: rows.iter().map(|r| r.retained_short).collect(),
        y_long: rows.iter().map(|r| r.retained_long).collect(),
        encoding,
        stats,
    })
}

/// Encode with every row in the fit partition.
pub fn encode_all(
    window: FeatureWindow,
    eval: EvalWindow,
    rows: &[FeatureVector],
) -> Result<Dataset> {
    let all: Vec<usize> = (0..rows.len()).collect();
    encode(window, eval, rows, &all)
}

const CSV_HEADER: [&str; 19] = [
    "player_id",
    "device_type",
    "country",
    "acquired",
    "total_days",
    "total_sessions",
    "total_rounds",
    "avg_session_duration",
    "avg_round_duration",
    "total_playtime",
    "current_absence_time",
    "avg_time_between_sessions",
    "connected_friends",
    "player_interaction",
    "avg_moves",
    "avg_stars",
    "max_level",
    "retained_short",
    "retained_long",
];

pub fn write_features_csv<W: Write>(rows: &[FeatureVector], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)
        .map_err(|e| RetainError::Schema(e.to_string()))?;
    for r in rows {
        let g = r.gameplay_values();
        let mut rec = vec![
            r.player_id.clone(),
            r.device_type.as_str().to_string(),
            r.country.clone(),
            r.acquired.to_string(),
        ];
        rec.extend(g.iter().map(|v| format_num(*v)));
        rec.push(r.retained_short.to_string());
        rec.push(r.retained_long.to_string());
        wtr.write_record(&rec)
            .map_err(|e| RetainError::Schema(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn format_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn read_features_csv<R: BufRead>(r: R) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::Reader::from_reader(r);
    {
        let headers = rdr.headers().map_err(|e| RetainError::Schema(e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(RetainError::Schema(format!(
                "bad features header: {got:?}"
            )));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RetainError::Schema(e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| RetainError::Schema(format!("bad number {:?}", &rec[i])))
        };
        let device = match &rec[1] {
            "phone" => DeviceType::Phone,
            "tablet" => DeviceType::Tablet,
            _ => DeviceType::Other,
        };
        rows.push(FeatureVector {
            player_id: rec[0].to_string(),
            device_type: device,
            country: rec[2].to_string(),
            acquired: &rec[3] == "true",
            total_days: f(4)?,
            total_sessions: f(5)?,
            total_rounds: f(6)?,
            avg_session_duration: f(7)?,
            avg_round_duration: f(8)?,
            total_playtime: f(9)?,
            current_absence_time: f(10)?,
            avg_time_between_sessions: f(11)?,
            connected_friends: f(12)?,
            player_interaction: f(13)?,
            avg_moves: f(14)?,
            avg_stars: f(15)?,
            max_level: f(16)?,
            retained_short: f(17)? as u8,
            retained_long: f(18)? as u8,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{InstallRecord, RoundRecord, SessionRecord};
    use crate::testutil::dummy_row;

    fn install(id: &str, ts: i64) -> InstallRecord {
        InstallRecord {
            player_id: id.to_string(),
            install_ts: ts,
            device_type: DeviceType::Phone,
            country: "US".to_string(),
            acquired: false,
        }
    }

    fn session(id: &str, sid: &str, start: i64, end: i64) -> SessionRecord {
        SessionRecord {
            player_id: id.to_string(),
            session_id: sid.to_string(),
            start_ts: start,
            end_ts: end,
        }
    }

    fn round(id: &str, sid: &str, start: i64) -> RoundRecord {
        RoundRecord {
            player_id: id.to_string(),
            session_id: sid.to_string(),
            start_ts: start,
            duration: 30,
            moves: 20,
            stars: 2,
            level: 1,
            friends_connected: 0,
            interactions: 0,
        }
    }

    fn mklog(
        installs: Vec<InstallRecord>,
        mut sessions: Vec<SessionRecord>,
        mut rounds: Vec<RoundRecord>,
    ) -> EventLog {
        sessions.sort_by(|a, b| (a.player_id.clone(), a.start_ts).cmp(&(b.player_id.clone(), b.start_ts)));
        rounds.sort_by(|a, b| (a.player_id.clone(), a.start_ts).cmp(&(b.player_id.clone(), b.start_ts)));
        EventLog {
            installs,
            sessions,
            rounds,
            rejected: vec![],
        }
    }

    #[test]
    fn single_session_first_session_window() {
        let t = 1_000_000;
        let log = mklog(
            vec![install("p1", t)],
            vec![session("p1", "s1", t, t + 600)],
            vec![
                round("p1", "s1", t + 10),
                round("p1", "s1", t + 100),
                round("p1", "s1", t + 200),
            ],
        );
        let rows = compute_features(&log, FeatureWindow::FirstSession);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.total_sessions, 1.0);
        assert_eq!(r.total_rounds, 3.0);
        assert_eq!(r.current_absence_time, 0.0);
        // Sentinel: window length (cutoff - install).
        assert_eq!(r.avg_time_between_sessions, 600.0);
        assert_eq!(r.total_playtime, 600.0);
    }

    #[test]
    fn two_sessions_first_day_window() {
        let t = 1_000_000;
        let log = mklog(
            vec![install("p1", t)],
            vec![
                session("p1", "s1", t, t + 300),
                session("p1", "s2", t + 36_000, t + 36_300),
            ],
            vec![round("p1", "s1", t + 10), round("p1", "s2", t + 36_010)],
        );
        let rows = compute_features(&log, FeatureWindow::FirstDay);
        let r = &rows[0];
        assert_eq!(r.avg_time_between_sessions, 36_000.0);
        assert_eq!(r.current_absence_time, (86_400 - 36_300) as f64);
        assert_eq!(r.total_sessions, 2.0);
        assert_eq!(r.total_days, 1.0);
    }

    #[test]
    fn straddling_session_clipped() {
        let t = 0;
        // Session starts 1h before the day boundary, ends 1h after.
        let log = mklog(
            vec![install("p1", t)],
            vec![session("p1", "s1", 82_800, 90_000)],
            vec![round("p1", "s1", 82_900), round("p1", "s1", 87_000)],
        );
        let rows = compute_features(&log, FeatureWindow::FirstDay);
        let r = &rows[0];
        assert_eq!(r.total_playtime, 3_600.0); // clipped at 86400
        assert_eq!(r.total_rounds, 1.0); // 87000 is past cutoff
        assert_eq!(r.current_absence_time, 0.0); // clipped end == cutoff
    }

    #[test]
    fn label_boundary_half_open() {
        let t = 0;
        let log = mklog(
            vec![install("p1", t), install("p2", t)],
            vec![
                session("p1", "s1", 8 * 86_400, 8 * 86_400 + 600),
                session("p2", "s1", 0, 600),
            ],
            vec![round("p1", "s1", 8 * 86_400), round("p2", "s1", 100)],
        );
        let labels = label(&log, EvalWindow::short_term());
        assert_eq!(labels["p1"], 1); // exactly at start of window -> in
        assert_eq!(labels["p2"], 0); // only day-0 activity
    }

    #[test]
    fn label_window_disjunction() {
        // label([a,b)) OR label([b,c)) == label([a,c))
        let t = 0;
        let log = mklog(
            vec![install("p1", t)],
            vec![session("p1", "s1", 10 * 86_400, 10 * 86_400 + 600)],
            vec![round("p1", "s1", 10 * 86_400 + 10)],
        );
        let ab = label(&log, EvalWindow::new(8, 10).unwrap());
        let bc = label(&log, EvalWindow::new(10, 14).unwrap());
        let ac = label(&log, EvalWindow::new(8, 14).unwrap());
        assert_eq!(ab["p1"] | bc["p1"], ac["p1"]);
    }

    #[test]
    fn unseen_country_all_zeros() {
        let mut rows = vec![];
        for (i, c) in ["US", "DE"].iter().enumerate() {
            let mut r = dummy_row(&format!("p{i}"));
            r.country = c.to_string();
            rows.push(r);
        }
        let map = EncodingMap::fit(&rows);
        let mut fr = dummy_row("px");
        fr.country = "FR".to_string();
        let v = map.transform(&fr);
        // Columns 3 and 4 are country=DE and country=US.
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn zscore_example() {
        let s = Standardization {
            mean: vec![10.0],
            sd: vec![2.0],
        };
        assert_eq!(s.apply(&[14.0]), vec![2.0]);
    }

    #[test]
    fn standardized_fit_rows_have_zero_mean_unit_variance() {
        let mut rows = vec![];
        for i in 0..50 {
            let mut r = dummy_row(&format!("p{i:03}"));
            r.total_rounds = (i % 7) as f64;
            r.total_playtime = (i * 13 % 29) as f64;
            rows.push(r);
        }
        let ds = encode_all(FeatureWindow::FirstDay, EvalWindow::short_term(), &rows).unwrap();
        let n = ds.x.len() as f64;
        for j in ds.encoding.n_binary()..ds.columns.len() {
            let m: f64 = ds.x.iter().map(|r| r[j]).sum::<f64>() / n;
            let v: f64 = ds.x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 1e-9, "column {} mean {}", ds.columns[j], m);
            // Constant columns keep variance 0; others must be 1.
            assert!(v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9, "column {} var {}", ds.columns[j], v);
        }
    }

    #[test]
    fn empty_fit_rows_is_error() {
        let rows = vec![dummy_row("p1")];
        assert!(encode(FeatureWindow::FirstDay, EvalWindow::short_term(), &rows, &[]).is_err());
    }

    #[test]
    fn window_parsing() {
        assert_eq!("session".parse::<FeatureWindow>().unwrap(), FeatureWindow::FirstSession);
        assert_eq!("day".parse::<FeatureWindow>().unwrap(), FeatureWindow::FirstDay);
        assert_eq!("7d".parse::<FeatureWindow>().unwrap(), FeatureWindow::Days(7));
        assert!("0d".parse::<FeatureWindow>().is_err());
        assert_eq!("8:14".parse::<EvalWindow>().unwrap(), EvalWindow::short_term());
        assert!("14:8".parse::<EvalWindow>().is_err());
    }

    #[test]
    fn features_csv_round_trip() {
        let rows = vec![dummy_row("p1"), dummy_row("p2")];
        let mut buf = Vec::new();
        write_features_csv(&rows, &mut buf).unwrap();
        let back = read_features_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(rows, back);
    }

}
