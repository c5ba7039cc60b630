//! Integer simulation clock shared by every rate group.
//!
//! One unit is 1/3000 s, the least common multiple grid of the plant (1 kHz),
//! station and channels (30 Hz), NMPC (50 Hz) and metrics (100 Hz). All event
//! times are derived from unit counts, so coincident events compare exactly.

pub const UNITS_PER_SECOND: u64 = 3000;
pub const PLANT_UNITS: u64 = 3;
pub const STATION_UNITS: u64 = 100;
pub const NMPC_UNITS: u64 = 60;
pub const METRIC_UNITS: u64 = 30;

/// Plant integration step, s.
pub const PLANT_DT: f64 = PLANT_UNITS as f64 / UNITS_PER_SECOND as f64;

pub fn unit_time(u: u64) -> f64 {
    u as f64 / UNITS_PER_SECOND as f64
}

/// Time of plant step `j`.
pub fn plant_time(j: u64) -> f64 {
    unit_time(j * PLANT_UNITS)
}

/// Index of the last plant step at or before time `t`.
pub fn plant_index_at_or_before(t: f64) -> u64 {
    let j = (t / PLANT_DT + 1e-9).floor();
    if j <= 0.0 {
        0
    } else {
        j as u64
    }
}

/// Index of the plant step nearest to `t`.
pub fn nearest_plant_index(t: f64) -> u64 {
    (t / PLANT_DT).round().max(0.0) as u64
}
