//! Shared helpers for unit tests.

use crate::featurize::FeatureVector;
use crate::telemetry::DeviceType;

pub(crate) fn dummy_row(id: &str) -> FeatureVector {
    FeatureVector {
        player_id: id.to_string(),
        device_type: DeviceType::Phone,
        country: "US".to_string(),
        acquired: false,
        total_days: 1.0,
        total_sessions: 2.0,
        total_rounds: 5.0,
        avg_session_duration: 300.0,
        avg_round_duration: 45.0,
        total_playtime: 600.0,
        current_absence_time: 1_000.0,
        avg_time_between_sessions: 3_600.0,
        connected_friends: 0.0,
        player_interaction: 0.0,
        avg_moves: 21.0,
        avg_stars: 1.8,
        max_level: 4.0,
        retained_short: 0,
        retained_long: 0,
    }
}
