//! Reference-pose decider for successive reference pose tracking.

use crate::error::Result;
use crate::geometry::Pose2D;
use crate::network::Stamped;
use crate::track::TrackModel;
use crate::vehicle::VehicleState;

/// Global-frame target pose streamed to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoseMsg {
    pub x_ref: Pose2D,
    pub v_ref: f64,
    pub t_sent: f64,
}

/// Look-ahead arc length L = vx·τ + max(vx·Δt_horizon, l_f).
pub fn l_ind(vx: f64, tau: f64, dt_horizon: f64, l_f: f64) -> f64 {
    vx * tau + (vx * dt_horizon).max(l_f)
}

/// Picks the centerline pose `l_ind` ahead of the delayed vehicle position.
#[allow(clippy::too_many_arguments)]
pub fn srpt_decide(
    delayed: &Stamped<VehicleState>,
    track: &TrackModel,
    tau: f64,
    dt_horizon: f64,
    l_f: f64,
    v_ref: f64,
    t_now: f64,
    s_hint: Option<f64>,
) -> Result<(RefPoseMsg, f64)> {
    let state = &delayed.payload;
    let proj = match s_hint {
        Some(s) => track.closest_point_near(&state.pose, s, 8.0)?,
        None => track.closest_point(&state.pose)?,
    };
    let ahead = l_ind(state.vx.max(0.0), tau, dt_horizon, l_f);
    let msg = RefPoseMsg {
        x_ref: track.point_at(proj.s + ahead),
        v_ref: v_ref.max(0.0),
        t_sent: t_now,
    };
    Ok((msg, proj.s))
}
