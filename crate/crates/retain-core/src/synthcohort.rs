//! Synthetic telemetry generator: a mixture of player archetypes with
//! geometric daily churn, calibrated so the filtered cohort hits target
//! short- and long-term retention rates. Output is the JSONL event wire
//! format plus a ground-truth sidecar, byte-identical for a given seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RetainError};
use crate::telemetry::{
    DeviceType, InstallRecord, RawEvent, RoundRecord, SessionRecord, SECONDS_PER_DAY,
};

const HOUR: i64 = 3_600;

/// One behavioral archetype: daily churn hazard, probability of playing
/// on a surviving day, and session/round intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: &'static str,
    pub weight: f64,
    pub hazard: f64,
    pub p_play: f64,
    pub max_sessions: usize,
    pub min_rounds: usize,
    pub max_rounds: usize,
    /// Probability of a second session late on install day. Drives the
    /// install-day absence signal: players without one end the day with
    /// more than 20 hours of absence.
    pub p_evening_session: f64,
    pub p_friend: f64,
}

/// Hazards are set so that at `hazard_scale` 1.0 the filtered cohort
/// lands near the default retention targets; `calibrate` trims the
/// scale to hit the short-term target exactly.
pub const ARCHETYPES: [Archetype; 3] = [
    Archetype {
        name: "bouncer",
        weight: 0.45,
        hazard: 0.45,
        p_play: 0.40,
        max_sessions: 1,
        min_rounds: 1,
        max_rounds: 4,
        p_evening_session: 0.0,
        p_friend: 0.0,
    },
    Archetype {
        name: "casual",
        weight: 0.35,
        hazard: 0.063,
        p_play: 0.50,
        max_sessions: 2,
        min_rounds: 1,
        max_rounds: 6,
        p_evening_session: 0.75,
        p_friend: 0.05,
    },
    Archetype {
        name: "engaged",
        weight: 0.20,
        hazard: 0.0046,
        p_play: 0.80,
        max_sessions: 3,
        min_rounds: 3,
        max_rounds: 10,
        p_evening_session: 1.0,
        p_friend: 0.3,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_players: usize,
    /// Epoch timestamp of the start of the install period.
    pub start_ts: i64,
    pub install_period_days: u32,
    /// Days of activity simulated per player.
    pub horizon_days: u32,
    pub target_short: f64,
    pub target_long: f64,
    /// Invalid lines appended per valid line.
    pub corruption_rate: f64,
    /// Multiplier on every archetype hazard; `calibrate` tunes it.
    pub hazard_scale: f64,
    /// Funnel realism: players who install but never open, and players
    /// whose first session has no rounds. Both fail the cohort filter.
    pub install_only_frac: f64,
    pub no_round_frac: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_players: 10_000,
            start_ts: 1_600_000_000,
            install_period_days: 7,
            horizon_days: 70,
            target_short: 0.405,
            target_long: 0.152,
            corruption_rate: 0.0,
            hazard_scale: 1.0,
            install_only_frac: 0.10,
            no_round_frac: 0.05,
        }
    }
}

/// Ground truth for one generated player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub player_id: String,
    pub archetype: String,
    /// First day with no further activity ever, if within the horizon.
    pub churn_day: Option<u32>,
    pub passes_filter: bool,
    pub retained_short: u8,
    pub retained_long: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// JSONL event lines, one record per line.
    pub events: String,
    /// JSONL ground-truth sidecar, one [`TruthRecord`] per line.
    pub truth: String,
    pub n_valid_lines: usize,
    pub n_corrupt_lines: usize,
}

// SplitMix64; per-player streams independent of cohort size.
fn mix(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick_archetype(rng: &mut ChaCha8Rng) -> &'static Archetype {
    let mut u: f64 = rng.gen();
    for a in &ARCHETYPES {
        if u < a.weight {
            return a;
        }
        u -= a.weight;
    }
    &ARCHETYPES[2]
}

/// Play-day plan for one player; shared between the label-only
/// calibration path and full event materialization.
struct PlayerPlan {
    archetype: &'static Archetype,
    play_days: Vec<u32>,
    churn_day: Option<u32>,
}

fn plan_player(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> PlayerPlan {
    let archetype = pick_archetype(rng);
    let hazard = (archetype.hazard * cfg.hazard_scale).clamp(0.0, 0.999);
    let mut play_days = vec![0u32];
    let mut churn_day = None;
    for d in 1..cfg.horizon_days {
        if rng.gen_bool(hazard) {
            churn_day = Some(d);
            break;
        }
        if rng.gen_bool(archetype.p_play) {
            play_days.push(d);
        }
    }
    PlayerPlan { archetype, play_days, churn_day }
}

fn plan_labels(plan: &PlayerPlan) -> (u8, u8) {
    let short = plan.play_days.iter().any(|&d| (8..14).contains(&d)) as u8;
    let long = plan.play_days.iter().any(|&d| (60..67).contains(&d)) as u8;
    (short, long)
}

/// Expected fraction of the cohort active on each relative day,
/// 0..=last_day, from the archetype mixture. Strictly decreasing.
pub fn expected_active(cfg: &GeneratorConfig, last_day: u32) -> Vec<f64> {
    (0..=last_day)
        .map(|d| {
            if d == 0 {
                return 1.0;
            }
            ARCHETYPES
                .iter()
                .map(|a| {
                    let h = (a.hazard * cfg.hazard_scale).clamp(0.0, 0.999);
                    a.weight * (1.0 - h).powi(d as i32) * a.p_play
                })
                .sum()
        })
        .collect()
}

fn push_event(buf: &mut String, ev: &RawEvent) {
    let line = serde_json::to_string(ev).expect("event serializes");
    buf.push_str(&line);
    buf.push('\n');
}

const COUNTRIES: [&str; 6] = ["US", "DE", "GB", "BR", "JP", "IN"];

/// Generate a synthetic cohort. Identical (config, seed) pairs produce
/// byte-identical output.
pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<SynthOutput> {
    if cfg.n_players == 0 {
        return Err(RetainError::InvalidArgument("n_players must be > 0".to_string()));
    }
    if !(0.0..=1.0).contains(&cfg.corruption_rate) {
        return Err(RetainError::InvalidArgument(
            "corruption_rate must be in [0, 1]".to_string(),
        ));
    }
    if cfg.horizon_days < 14 {
        return Err(RetainError::InvalidArgument(
            "horizon_days must cover the short-term window".to_string(),
        ));
    }

    let mut events = String::new();
    let mut truth = String::new();
    let mut n_valid_lines = 0usize;
    // Registry of emitted sessions for the corruption pass.
    let mut session_registry: Vec<SessionRecord> = Vec::new();

    for pi in 0..cfg.n_players {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, pi as u64));
        let player_id = format!("p{pi:06}");
        let install_ts = cfg.start_ts
            + rng.gen_range(0..i64::from(cfg.install_period_days) * SECONDS_PER_DAY);
        let device = match rng.gen_range(0..10) {
            0..=6 => DeviceType::Phone,
            7..=8 => DeviceType::Tablet,
            _ => DeviceType::Other,
        };
        let country = COUNTRIES[rng.gen_range(0..COUNTRIES.len())].to_string();
        let acquired = rng.gen_bool(0.25);
        push_event(
            &mut events,
            &RawEvent::Install(InstallRecord {
                player_id: player_id.clone(),
                install_ts,
                device_type: device,
                country,
                acquired,
            }),
        );
        n_valid_lines += 1;

        let funnel: f64 = rng.gen();
        let install_only = funnel < cfg.install_only_frac;
        let no_round = !install_only && funnel < cfg.install_only_frac + cfg.no_round_frac;

        let plan = plan_player(&mut rng, cfg);
        let (short, long) = plan_labels(&plan);

        if install_only {
            truth.push_str(
                &serde_json::to_string(&TruthRecord {
                    player_id,
                    archetype: plan.archetype.name.to_string(),
                    churn_day: Some(0),
                    passes_filter: false,
                    retained_short: 0,
                    retained_long: 0,
                })
                .unwrap(),
            );
            truth.push('\n');
            continue;
        }

        let mut level = 1i64;
        let mut session_no = 0usize;
        let mut sessions: Vec<SessionRecord> = Vec::new();
        let mut rounds: Vec<RoundRecord> = Vec::new();

        let emit_session =
            |rng: &mut ChaCha8Rng, start: i64, n_rounds: usize, sessions: &mut Vec<SessionRecord>, rounds: &mut Vec<RoundRecord>, level: &mut i64, session_no: &mut usize, a: &Archetype| {
                let session_id = format!("{}-s{}", player_id, session_no);
                *session_no += 1;
                let mut t = start;
                for _ in 0..n_rounds {
                    let duration = rng.gen_range(20..120);
                    rounds.push(RoundRecord {
                        player_id: player_id.clone(),
                        session_id: session_id.clone(),
                        start_ts: t,
                        duration,
                        moves: rng.gen_range(8..60),
                        stars: rng.gen_range(0..=3),
                        level: *level,
                        friends_connected: if rng.gen_bool(a.p_friend) {
                            rng.gen_range(1..6)
                        } else {
                            0
                        },
                        interactions: if rng.gen_bool(a.p_friend) {
                            rng.gen_range(1..4)
                        } else {
                            0
                        },
                    });
                    if rng.gen_bool(0.6) {
                        *level += 1;
                    }
                    t += duration + rng.gen_range(5..30);
                }
                let end = t + rng.gen_range(5..60);
                sessions.push(SessionRecord {
                    player_id: player_id.clone(),
                    session_id,
                    start_ts: start,
                    end_ts: end,
                });
            };

        for &day in &plan.play_days {
            let a = plan.archetype;
            let day_base = install_ts + i64::from(day) * SECONDS_PER_DAY;
            if day == 0 {
                // First session right after install; round-free for the
                // no_round funnel slice.
                let start = install_ts + rng.gen_range(0..30 * 60);
                let n_rounds = if no_round {
                    0
                } else {
                    rng.gen_range(a.min_rounds..=a.max_rounds)
                };
                emit_session(&mut rng, start, n_rounds, &mut sessions, &mut rounds, &mut level, &mut session_no, a);
                if !no_round && rng.gen_bool(a.p_evening_session) {
                    // Late-day return keeps install-day absence under 20 h.
                    let start = install_ts + rng.gen_range(6 * HOUR..19 * HOUR);
                    let n = rng.gen_range(a.min_rounds..=a.max_rounds);
                    emit_session(&mut rng, start, n, &mut sessions, &mut rounds, &mut level, &mut session_no, a);
                }
            } else if !no_round {
                let n_sessions = rng.gen_range(1..=a.max_sessions);
                // Offsets keep every round inside the same relative day.
                let mut start = day_base + rng.gen_range(6 * HOUR..14 * HOUR);
                for _ in 0..n_sessions {
                    let n = rng.gen_range(a.min_rounds..=a.max_rounds);
                    emit_session(&mut rng, start, n, &mut sessions, &mut rounds, &mut level, &mut session_no, a);
                    start = sessions.last().unwrap().end_ts + rng.gen_range(HOUR..2 * HOUR);
                }
            }
        }

        for s in &sessions {
            push_event(&mut events, &RawEvent::Session(s.clone()));
            n_valid_lines += 1;
        }
        for r in &rounds {
            push_event(&mut events, &RawEvent::Round(r.clone()));
            n_valid_lines += 1;
        }
        if let Some(first) = sessions.first() {
            session_registry.push(first.clone());
        }

        let passes_filter = !no_round;
        truth.push_str(
            &serde_json::to_string(&TruthRecord {
                player_id,
                archetype: plan.archetype.name.to_string(),
                churn_day: plan.churn_day,
                passes_filter,
                retained_short: if passes_filter { short } else { 0 },
                retained_long: if passes_filter { long } else { 0 },
            })
            .unwrap(),
        );
        truth.push('\n');
    }

    // Corruption pass: standalone invalid lines appended at the end.
    // Each is rejected independently by validation without disturbing
    // any valid record.
    let n_corrupt = (cfg.corruption_rate * n_valid_lines as f64).round() as usize;
    let mut crng = ChaCha8Rng::seed_from_u64(mix(seed, u64::MAX));
    for i in 0..n_corrupt {
        match i % 4 {
            0 => {
                // Round for a player that never installed.
                push_event(
                    &mut events,
                    &RawEvent::Round(RoundRecord {
                        player_id: format!("ghost{i}"),
                        session_id: "sx".to_string(),
                        start_ts: cfg.start_ts,
                        duration: 30,
                        moves: 10,
                        stars: 1,
                        level: 1,
                        friends_connected: 0,
                        interactions: 0,
                    }),
                );
            }
            1 => {
                let s = &session_registry[crng.gen_range(0..session_registry.len())];
                push_event(
                    &mut events,
                    &RawEvent::Session(SessionRecord {
                        player_id: s.player_id.clone(),
                        session_id: format!("{}-bad{i}", s.player_id),
                        start_ts: s.end_ts,
                        end_ts: s.start_ts - 1,
                    }),
                );
            }
            2 => {
                // Stars outside 0..=3 in an otherwise valid round.
                let s = &session_registry[crng.gen_range(0..session_registry.len())];
                push_event(
                    &mut events,
                    &RawEvent::Round(RoundRecord {
                        player_id: s.player_id.clone(),
                        session_id: s.session_id.clone(),
                        start_ts: s.start_ts,
                        duration: 30,
                        moves: 10,
                        stars: 7,
                        level: 1,
                        friends_connected: 0,
                        interactions: 0,
                    }),
                );
            }
            _ => {
                // Replayed session id; the first occurrence wins.
                let s = &session_registry[crng.gen_range(0..session_registry.len())];
                push_event(
                    &mut events,
                    &RawEvent::Session(SessionRecord {
                        player_id: s.player_id.clone(),
                        session_id: s.session_id.clone(),
                        start_ts: s.start_ts + 1,
                        end_ts: s.end_ts + 1,
                    }),
                );
            }
        }
    }

    Ok(SynthOutput {
        events,
        truth,
        n_valid_lines,
        n_corrupt_lines: n_corrupt,
    })
}

/// Short/long retention of the filtered cohort under `cfg`, by planning
/// play days only (no event materialization). Mirrors `generate`'s
/// per-player RNG stream up to the funnel and plan draws.
pub fn planned_rates(cfg: &GeneratorConfig, seed: u64) -> (f64, f64) {
    let mut n = 0usize;
    let mut n_short = 0usize;
    let mut n_long = 0usize;
    for pi in 0..cfg.n_players {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, pi as u64));
        // Skip install draws: timestamp, device, country, acquired.
        let _: i64 = rng.gen_range(0..i64::from(cfg.install_period_days) * SECONDS_PER_DAY);
        let _: i32 = rng.gen_range(0..10);
        let _: usize = rng.gen_range(0..COUNTRIES.len());
        let _ = rng.gen_bool(0.25);
        let funnel: f64 = rng.gen();
        if funnel < cfg.install_only_frac + cfg.no_round_frac {
            continue;
        }
        let plan = plan_player(&mut rng, cfg);
        let (short, long) = plan_labels(&plan);
        n += 1;
        n_short += short as usize;
        n_long += long as usize;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (n_short as f64 / n as f64, n_long as f64 / n as f64)
}

const CALIBRATION_PLAYERS: usize = 40_000;
const CALIBRATION_SEED: u64 = 0xCA1B;
const SHORT_TOL: f64 = 0.004;
const LONG_TOL: f64 = 0.03;
const MAX_BISECT: usize = 100;

/// Tune `hazard_scale` by bisection until the planned short-term
/// retention matches `target_short`, then check the long-term rate
/// lands within tolerance of `target_long`. Uses a fixed internal seed
/// and sample size, so the result depends only on the config.
pub fn calibrate(cfg: &GeneratorConfig) -> Result<GeneratorConfig> {
    let mut probe = cfg.clone();
    probe.n_players = CALIBRATION_PLAYERS;

    let rate_at = |scale: f64, probe: &mut GeneratorConfig| {
        probe.hazard_scale = scale;
        planned_rates(probe, CALIBRATION_SEED)
    };

    // Short-term retention decreases monotonically in the scale.
    let (mut lo, mut hi) = (0.05_f64, 4.0_f64);
    let (r_lo, _) = rate_at(lo, &mut probe);
    let (r_hi, _) = rate_at(hi, &mut probe);
    if r_lo < cfg.target_short || r_hi > cfg.target_short {
        return Err(RetainError::Infeasible(format!(
            "short-term target {} outside attainable range [{r_hi:.3}, {r_lo:.3}]",
            cfg.target_short
        )));
    }

    let mut scale = 1.0;
    let mut short = 0.0;
    let mut long = 0.0;
    for _ in 0..MAX_BISECT {
        scale = 0.5 * (lo + hi);
        let (s, l) = rate_at(scale, &mut probe);
        short = s;
        long = l;
        if (s - cfg.target_short).abs() < SHORT_TOL {
            break;
        }
        if s > cfg.target_short {
            lo = scale;
        } else {
            hi = scale;
        }
    }
    if (short - cfg.target_short).abs() >= SHORT_TOL {
        return Err(RetainError::Infeasible(format!(
            "bisection stalled at short rate {short:.4} for target {}",
            cfg.target_short
        )));
    }
    if (long - cfg.target_long).abs() > LONG_TOL {
        return Err(RetainError::Infeasible(format!(
            "long-term rate {long:.4} misses target {} by more than {LONG_TOL}",
            cfg.target_long
        )));
    }
    let mut out = cfg.clone();
    out.hazard_scale = scale;
    Ok(out)
}
