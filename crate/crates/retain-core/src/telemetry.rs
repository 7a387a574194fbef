//! Raw event data model, log parsing/validation, and cohort restrictions.
//!
//! An event log holds three record kinds: installs, sessions (one app-open,
//! may contain zero rounds) and rounds (actual gameplay, always inside a
//! session). Parsing validates referential integrity and timestamp sanity;
//! records that fail validation land in [`EventLog::rejected`] with a
//! machine-readable reason, never silently dropped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Cohort restriction: the first session must start within this many
/// seconds of install.
pub const FIRST_SESSION_GRACE: i64 = 7 * SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceType {
    Phone,
    Tablet,
    Other,
}

impl DeviceType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceType::Phone => "phone",
            DeviceType::Tablet => "tablet",
            DeviceType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstallRecord {
    pub player_id: String,
    pub install_ts: i64,
    pub device_type: DeviceType,
    pub country: String,
    pub acquired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub player_id: String,
    pub session_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub player_id: String,
    pub session_id: String,
    pub start_ts: i64,
    pub duration: i64,
    pub moves: i64,
    pub stars: i64,
    pub level: i64,
    pub friends_connected: i64,
    pub interactions: i64,
}

/// Why a record was rejected during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadLine,
    DuplicatePlayer,
    InstallOutOfPeriod,
    UnknownPlayer,
    UnknownSession,
    SessionEndBeforeStart,
    SessionBeforeInstall,
    DuplicateSession,
    RoundOutsideSession,
    StarsOutOfRange,
    NegativeValue,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::BadLine => "BAD_LINE",
            RejectReason::DuplicatePlayer => "DUPLICATE_PLAYER",
            RejectReason::InstallOutOfPeriod => "INSTALL_OUT_OF_PERIOD",
            RejectReason::UnknownPlayer => "UNKNOWN_PLAYER",
            RejectReason::UnknownSession => "UNKNOWN_SESSION",
            RejectReason::SessionEndBeforeStart => "SESSION_END_BEFORE_START",
            RejectReason::SessionBeforeInstall => "SESSION_BEFORE_INSTALL",
            RejectReason::DuplicateSession => "DUPLICATE_SESSION",
            RejectReason::RoundOutsideSession => "ROUND_OUTSIDE_SESSION",
            RejectReason::StarsOutOfRange => "STARS_OUT_OF_RANGE",
            RejectReason::NegativeValue => "NEGATIVE_VALUE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub line_no: usize,
    pub reason: String,
    pub raw: String,
}

/// Validated, time-ordered event log for a player cohort.
///
/// After construction all referential-integrity invariants hold and
/// `sessions`/`rounds` are sorted by `(player_id, start_ts)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub installs: Vec<InstallRecord>,
    pub sessions: Vec<SessionRecord>,
    pub rounds: Vec<RoundRecord>,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// When set, installs outside `[start, end)` are rejected.
    pub study_period: Option<(i64, i64)>,
}

/// One line of the JSONL wire format, discriminated by `type`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RawEvent {
    Install(InstallRecord),
    Session(SessionRecord),
    Round(RoundRecord),
}

impl EventLog {
    pub fn player_ids(&self) -> Vec<&str> {
        self.installs.iter().map(|i| i.player_id.as_str()).collect()
    }

    pub fn install(&self, player_id: &str) -> Option<&InstallRecord> {
        self.installs.iter().find(|i| i.player_id == player_id)
    }

    /// Sessions of one player in chronological order.
    pub fn sessions_of(&self, player_id: &str) -> &[SessionRecord] {
        let lo = self.sessions.partition_point(|s| s.player_id.as_str() < player_id);
        let hi = self.sessions.partition_point(|s| s.player_id.as_str() <= player_id);
        &self.sessions[lo..hi]
    }

    pub fn rounds_of(&self, player_id: &str) -> &[RoundRecord] {
        let lo = self.rounds.partition_point(|r| r.player_id.as_str() < player_id);
        let hi = self.rounds.partition_point(|r| r.player_id.as_str() <= player_id);
        &self.rounds[lo..hi]
    }
}

/// Parse a JSONL event stream into a validated [`EventLog`].
pub fn parse_events_jsonl<R: BufRead>(reader: R, opts: ParseOptions) -> Result<EventLog> {
    let mut raw = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        raw.push((idx + 1, line));
    }
    let mut events = Vec::with_capacity(raw.len());
    let mut rejected = Vec::new();
    for (line_no, line) in raw {
        match serde_json::from_str::<RawEvent>(&line) {
            Ok(ev) => events.push((line_no, ev, line)),
            Err(_) => rejected.push(RejectedRecord {
                line_no,
                reason: RejectReason::BadLine.code().to_string(),
                raw: line,
            }),
        }
    }
    Ok(validate(events, rejected, opts))
}

/// Parse the three-file CSV alternative (installs, sessions, rounds).
pub fn parse_events_csv<R: std::io::Read>(
    installs: R,
    sessions: R,
    rounds: R,
    opts: ParseOptions,
) -> Result<EventLog> {
    let mut events: Vec<(usize, RawEvent, String)> = Vec::new();
    let mut rejected = Vec::new();
    let mut line_no = 0usize;

    let mut read_file = |r: R, kind: u8, events: &mut Vec<(usize, RawEvent, String)>, rejected: &mut Vec<RejectedRecord>| -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(r);
        {
            let headers = rdr.headers().map_err(|e| RetainError::Schema(e.to_string()))?;
            let expected: &[&str] = match kind {
                0 => &["player_id", "install_ts", "device_type", "country", "acquired"],
                1 => &["player_id", "session_id", "start_ts", "end_ts"],
                _ => &[
                    "player_id",
                    "session_id",
                    "start_ts",
                    "duration",
                    "moves",
                    "stars",
                    "level",
                    "friends_connected",
                    "interactions",
                ],
            };
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(RetainError::Schema(format!(
                    "bad csv header: expected {expected:?}, got {got:?}"
                )));
            }
        }
        for rec in rdr.records() {
            line_no += 1;
            let rec = rec.map_err(|e| RetainError::Schema(e.to_string()))?;
            let raw = rec.iter().collect::<Vec<_>>().join(",");
            let parsed = match kind {
                0 => rec.deserialize::<InstallRecord>(None).map(RawEvent::Install),
                1 => rec.deserialize::<SessionRecord>(None).map(RawEvent::Session),
                _ => rec.deserialize::<RoundRecord>(None).map(RawEvent::Round),
            };
            match parsed {
                Ok(ev) => events.push((line_no, ev, raw)),
                Err(_) => rejected.push(RejectedRecord {
                    line_no,
                    reason: RejectReason::BadLine.code().to_string(),
                    raw,
                }),
            }
        }
        Ok(())
    };

    read_file(installs, 0, &mut events, &mut rejected)?;
    read_file(sessions, 1, &mut events, &mut rejected)?;
    read_file(rounds, 2, &mut events, &mut rejected)?;
    Ok(validate(events, rejected, opts))
}

fn validate(
    events: Vec<(usize, RawEvent, String)>,
    mut rejected: Vec<RejectedRecord>,
    opts: ParseOptions,
) -> EventLog {
    let mut installs: Vec<InstallRecord> = Vec::new();
    let mut sessions: Vec<SessionRecord> = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();

    let reject = |line_no: usize, reason: RejectReason, raw: &str, out: &mut Vec<RejectedRecord>| {
        out.push(RejectedRecord {
            line_no,
            reason: reason.code().to_string(),
            raw: raw.to_string(),
        });
    };

    // Installs first: everything else references them.
    let mut install_ts: HashMap<String, i64> = HashMap::new();
    for (line_no, ev, raw) in &events {
        if let RawEvent::Install(rec) = ev {
            if install_ts.contains_key(&rec.player_id) {
                reject(*line_no, RejectReason::DuplicatePlayer, raw, &mut rejected);
                continue;
            }
            if let Some((lo, hi)) = opts.study_period {
                if rec.install_ts < lo || rec.install_ts >= hi {
                    reject(*line_no, RejectReason::InstallOutOfPeriod, raw, &mut rejected);
                    continue;
                }
            }
            install_ts.insert(rec.player_id.clone(), rec.install_ts);
            installs.push(rec.clone());
        }
    }

    // Sessions second.
    let mut session_span: HashMap<(String, String), (i64, i64)> = HashMap::new();
    for (line_no, ev, raw) in &events {
        if let RawEvent::Session(rec) = ev {
            let Some(&ts) = install_ts.get(&rec.player_id) else {
                reject(*line_no, RejectReason::UnknownPlayer, raw, &mut rejected);
                continue;
            };
            if rec.end_ts < rec.start_ts {
                reject(*line_no, RejectReason::SessionEndBeforeStart, raw, &mut rejected);
                continue;
            }
            if rec.start_ts < ts {
                reject(*line_no, RejectReason::SessionBeforeInstall, raw, &mut rejected);
                continue;
            }
            let key = (rec.player_id.clone(), rec.session_id.clone());
            if session_span.contains_key(&key) {
                // First occurrence wins; later records are rejected.
                reject(*line_no, RejectReason::DuplicateSession, raw, &mut rejected);
                continue;
            }
            session_span.insert(key, (rec.start_ts, rec.end_ts));
            sessions.push(rec.clone());
        }
    }

    // Rounds last.
    for (line_no, ev, raw) in &events {
        if let RawEvent::Round(rec) = ev {
            if !install_ts.contains_key(&rec.player_id) {
                reject(*line_no, RejectReason::UnknownPlayer, raw, &mut rejected);
                continue;
            }
            let key = (rec.player_id.clone(), rec.session_id.clone());
            let Some(&(s, e)) = session_span.get(&key) else {
                reject(*line_no, RejectReason::UnknownSession, raw, &mut rejected);
                continue;
            };
            if rec.start_ts < s || rec.start_ts > e {
                reject(*line_no, RejectReason::RoundOutsideSession, raw, &mut rejected);
                continue;
            }
            if !(0..=3).contains(&rec.stars) {
                reject(*line_no, RejectReason::StarsOutOfRange, raw, &mut rejected);
                continue;
            }
            if rec.duration < 0
                || rec.moves < 0
                || rec.level < 1
                || rec.friends_connected < 0
                || rec.interactions < 0
            {
                reject(*line_no, RejectReason::NegativeValue, raw, &mut rejected);
                continue;
            }
            rounds.push(rec.clone());
        }
    }

    installs.sort_by(|a, b| a.player_id.cmp(&b.player_id));
    sessions.sort_by(|a, b| {
        (a.player_id.as_str(), a.start_ts, a.session_id.as_str())
            .cmp(&(b.player_id.as_str(), b.start_ts, b.session_id.as_str()))
    });
    rounds.sort_by(|a, b| {
        (a.player_id.as_str(), a.start_ts, a.session_id.as_str())
            .cmp(&(b.player_id.as_str(), b.start_ts, b.session_id.as_str()))
    });
    rejected.sort_by_key(|r| r.line_no);

    EventLog {
        installs,
        sessions,
        rounds,
        rejected,
    }
}

/// Serialize a log back to the JSONL wire format (installs, then
/// sessions, then rounds; `rejected` is not part of the log proper).
pub fn write_events_jsonl<W: Write>(log: &EventLog, mut w: W) -> Result<()> {
    for rec in &log.installs {
        serde_json::to_writer(&mut w, &RawEvent::Install(rec.clone()))
            .map_err(|e| RetainError::Schema(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    for rec in &log.sessions {
        serde_json::to_writer(&mut w, &RawEvent::Session(rec.clone()))
            .map_err(|e| RetainError::Schema(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    for rec in &log.rounds {
        serde_json::to_writer(&mut w, &RawEvent::Round(rec.clone()))
            .map_err(|e| RetainError::Schema(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Write the rejected-record sidecar (`{line_no, reason, raw}` per line).
pub fn write_rejected_sidecar<W: Write>(log: &EventLog, mut w: W) -> Result<()> {
    for rec in &log.rejected {
        serde_json::to_writer(&mut w, rec).map_err(|e| RetainError::Schema(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Restrict the log to players who (a) register a session within seven
/// days of install and (b) play at least one round in their first
/// session. Idempotent; input is untouched.
pub fn apply_cohort_filter(log: &EventLog) -> EventLog {
    let mut keep: HashSet<&str> = HashSet::new();
    for install in &log.installs {
        let sessions = log.sessions_of(&install.player_id);
        let Some(first) = sessions.first() else { continue };
        if first.start_ts - install.install_ts > FIRST_SESSION_GRACE {
            continue;
        }
        let has_round = log
            .rounds_of(&install.player_id)
            .iter()
            .any(|r| r.session_id == first.session_id);
        if has_round {
            keep.insert(install.player_id.as_str());
        }
    }
    EventLog {
        installs: log
            .installs
            .iter()
            .filter(|i| keep.contains(i.player_id.as_str()))
            .cloned()
            .collect(),
        sessions: log
            .sessions
            .iter()
            .filter(|s| keep.contains(s.player_id.as_str()))
            .cloned()
            .collect(),
        rounds: log
            .rounds
            .iter()
            .filter(|r| keep.contains(r.player_id.as_str()))
            .cloned()
            .collect(),
        rejected: log.rejected.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    /// Funnel: installed / opened (>=1 session) / played (>=1 round) /
    /// passed the cohort filter.
    pub installed: usize,
    pub opened: usize,
    pub played: usize,
    pub passed_filter: usize,
    /// Players with >=1 session start on each relative day since install.
    pub active_by_day: Vec<usize>,
    /// Mean rounds per active player on each relative day.
    pub rounds_per_active_by_day: Vec<f64>,
}

/// Funnel counts plus the two daily series (active players and mean
/// rounds per active player, by player-relative day).
pub fn cohort_summary(log: &EventLog) -> CohortSummary {
    let installed = log.installs.len();
    let with_session: HashSet<&str> = log.sessions.iter().map(|s| s.player_id.as_str()).collect();
    let with_round: HashSet<&str> = log.rounds.iter().map(|r| r.player_id.as_str()).collect();
    let passed = apply_cohort_filter(log).installs.len();

    let install_ts: HashMap<&str, i64> = log
        .installs
        .iter()
        .map(|i| (i.player_id.as_str(), i.install_ts))
        .collect();

    // (day -> set of active players), (day -> round count)
    let mut active: BTreeMap<i64, HashSet<&str>> = BTreeMap::new();
    let mut day_rounds: BTreeMap<i64, usize> = BTreeMap::new();
    for s in &log.sessions {
        if let Some(&ts) = install_ts.get(s.player_id.as_str()) {
            let day = (s.start_ts - ts).div_euclid(SECONDS_PER_DAY);
            active.entry(day).or_default().insert(s.player_id.as_str());
        }
    }
    for r in &log.rounds {
        if let Some(&ts) = install_ts.get(r.player_id.as_str()) {
            let day = (r.start_ts - ts).div_euclid(SECONDS_PER_DAY);
            *day_rounds.entry(day).or_default() += 1;
        }
    }

    let max_day = active
        .keys()
        .chain(day_rounds.keys())
        .max()
        .copied()
        .unwrap_or(-1);
    let mut active_by_day = Vec::new();
    let mut rounds_per_active = Vec::new();
    for day in 0..=max_day {
        let n_active = active.get(&day).map_or(0, |s| s.len());
        let n_rounds = day_rounds.get(&day).copied().unwrap_or(0);
        active_by_day.push(n_active);
        rounds_per_active.push(if n_active == 0 {
            0.0
        } else {
            n_rounds as f64 / n_active as f64
        });
    }

    CohortSummary {
        installed,
        opened: with_session.len(),
        played: with_round.len(),
        passed_filter: passed,
        active_by_day,
        rounds_per_active_by_day: rounds_per_active,
    }
}
