//! Steering laws of the two driver models.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Pose2D;
use crate::track::TrackModel;
use crate::vehicle::{VehicleState, SLIP_SPEED_FLOOR};

/// Half-width of the windowed centerline search used by the drivers.
const SEARCH_WINDOW: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Lookahead,
    Stanley,
}

impl DriverKind {
    pub fn name(self) -> &'static str {
        match self {
            DriverKind::Lookahead => "lookahead",
            DriverKind::Stanley => "stanley",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "lookahead" => Some(DriverKind::Lookahead),
            "stanley" => Some(DriverKind::Stanley),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookaheadGains {
    /// rad/m
    pub k1: f64,
    /// Look-ahead time, s.
    pub k2: f64,
}

impl LookaheadGains {
    pub const K2: f64 = 0.90;

    pub fn new(k1: f64) -> Self {
        Self { k1, k2: Self::K2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanleyGain {
    /// 1/s
    pub k: f64,
}

/// Steering angle from a driver model with its tuned gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Driver {
    Lookahead(LookaheadGains),
    Stanley(StanleyGain),
}

impl Driver {
    pub fn new(kind: DriverKind, gain: f64) -> Self {
        match kind {
            DriverKind::Lookahead => Driver::Lookahead(LookaheadGains::new(gain)),
            DriverKind::Stanley => Driver::Stanley(StanleyGain { k: gain }),
        }
    }

    pub fn kind(&self) -> DriverKind {
        match self {
            Driver::Lookahead(_) => DriverKind::Lookahead,
            Driver::Stanley(_) => DriverKind::Stanley,
        }
    }

    /// Steering command for the estimated state; `s_hint` seeds the
    /// centerline search near the vehicle.
    pub fn steer(&self, est: &VehicleState, track: &TrackModel, delta_max: f64, l_f: f64, s_hint: f64) -> Result<f64> {
        match self {
            Driver::Lookahead(g) => lookahead_steer(est, track, g, delta_max, s_hint),
            Driver::Stanley(g) => stanley_steer(est, track, g, delta_max, l_f, s_hint),
        }
    }
}

/// δ = −k1·Δy_L at the point k2·vx ahead of the CG along the heading.
pub fn lookahead_steer(
    est: &VehicleState,
    track: &TrackModel,
    gains: &LookaheadGains,
    delta_max: f64,
    s_hint: f64,
) -> Result<f64> {
    let d = lookahead_distance(est.vx, gains);
    let (x, y) = est.pose.ahead(d);
    let p = Pose2D::new(x, y, est.pose.heading);
    let proj = track.closest_point_near(&p, s_hint + d, SEARCH_WINDOW)?;
    Ok(lookahead_law(proj.cross_track, gains.k1, delta_max))
}

pub fn lookahead_distance(vx: f64, gains: &LookaheadGains) -> f64 {
    gains.k2 * vx
}

pub fn lookahead_law(dy_l: f64, k1: f64, delta_max: f64) -> f64 {
    (-k1 * dy_l).clamp(-delta_max, delta_max)
}

/// Three-branch saturated Stanley law.
///
/// `dpsi` is the path heading minus the vehicle heading and `dy_f` the
/// front-axle offset measured positive to the right of the path.
pub fn stanley_law(dpsi: f64, dy_f: f64, k: f64, vx: f64, delta_max: f64) -> f64 {
    let raw = dpsi + (k * dy_f / vx.max(SLIP_SPEED_FLOOR)).atan();
    if raw > delta_max {
        delta_max
    } else if raw < -delta_max {
        -delta_max
    } else {
        raw
    }
}

pub fn stanley_steer(
    est: &VehicleState,
    track: &TrackModel,
    gain: &StanleyGain,
    delta_max: f64,
    l_f: f64,
    s_hint: f64,
) -> Result<f64> {
    let (x, y) = est.pose.ahead(l_f);
    let front = Pose2D::new(x, y, est.pose.heading);
    let proj = track.closest_point_near(&front, s_hint + l_f, SEARCH_WINDOW)?;
    Ok(stanley_law(
        -proj.heading_err,
        -proj.cross_track,
        gain.k,
        est.vx,
        delta_max,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{build_test_track, TrackConfig};
    use proptest::prelude::*;

    #[test]
    fn lookahead_examples() {
        assert_eq!(lookahead_law(0.0, 0.1, 0.61), 0.0);
        assert!((lookahead_law(0.5, 0.10, 0.61) + 0.05).abs() < 1e-15);
        assert!((lookahead_distance(5.0, &LookaheadGains::new(0.1)) - 4.5).abs() < 1e-15);
    }

    #[test]
    fn stanley_examples() {
        assert_eq!(stanley_law(0.0, 0.0, 2.5, 5.0, 0.61), 0.0);
        let d = stanley_law(0.1, 0.5, 2.5, 5.0, 0.61);
        assert!((d - 0.344_978_7).abs() < 1e-6, "{d}");
        assert_eq!(stanley_law(0.5, 5.0, 2.5, 2.0, 0.61), 0.61);
        assert_eq!(stanley_law(-0.5, -5.0, 2.5, 2.0, 0.61), -0.61);
    }

    #[test]
    fn on_path_vehicle_steers_straight() {
        let track = build_test_track(&TrackConfig::default()).unwrap();
        let est = VehicleState {
            pose: track.point_at(2.0),
            vx: 4.0,
            ..VehicleState::default()
        };
        let g = LookaheadGains::new(0.2);
        assert!(lookahead_steer(&est, &track, &g, 0.61, 2.0).unwrap().abs() < 1e-12);
        let s = stanley_steer(&est, &track, &StanleyGain { k: 2.0 }, 0.61, 1.3, 2.0).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn vehicle_right_of_path_steers_left() {
        let track = build_test_track(&TrackConfig::default()).unwrap();
        let c = track.point_at(3.0);
        let (lx, ly) = c.left();
        let est = VehicleState {
            pose: Pose2D::new(c.x - 0.5 * lx, c.y - 0.5 * ly, c.heading),
            vx: 4.0,
            ..VehicleState::default()
        };
        assert!(lookahead_steer(&est, &track, &LookaheadGains::new(0.2), 0.61, 3.0).unwrap() > 0.0);
        assert!(stanley_steer(&est, &track, &StanleyGain { k: 2.0 }, 0.61, 1.3, 3.0).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn laws_are_odd(dy in -3.0..3.0f64, dpsi in -0.5..0.5f64, k in 0.1..5.0f64, vx in 0.5..10.0f64) {
            let big = 100.0;
            prop_assert_eq!(lookahead_law(dy, k, big), -lookahead_law(-dy, k, big));
            prop_assert_eq!(stanley_law(dpsi, dy, k, vx, big), -stanley_law(-dpsi, -dy, k, vx, big));
        }

        #[test]
        fn stanley_within_limits(dy in -50.0..50.0f64, dpsi in -3.2..3.2f64, k in 0.1..5.0f64, vx in 0.0..10.0f64) {
            let d = stanley_law(dpsi, dy, k, vx, 0.61);
            prop_assert!(d.abs() <= 0.61);
        }
    }
}
