//! On-vehicle nonlinear model predictive tracker for received reference poses.

pub mod model;
pub mod qp;
mod solver;

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Pose2D;
use crate::station::RefPoseMsg;
use crate::vehicle::{ActuatorCommand, VehicleParams, VehicleState};

pub use model::{BicycleModel, Input, State};
pub use solver::Nmpc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcWeights {
    /// Terminal position weight across the reference heading.
    pub w_pos: f64,
    /// Terminal position weight along the reference heading.
    pub w_pos_along: f64,
    pub w_head: f64,
    pub w_speed: f64,
    pub w_dsteer: f64,
    pub w_accel: f64,
    /// Stage distance to the tangent line of the nearest buffered reference.
    pub w_path: f64,
    /// Stage lateral acceleration v²·sinβ/l_r.
    pub w_lat: f64,
    /// Soft penalty on |δ| > δmax and v < 0.
    pub w_bound: f64,
}

impl Default for NmpcWeights {
    fn default() -> Self {
        Self {
            w_pos: 10.0,
            w_pos_along: 1.0,
            w_head: 5.0,
            w_speed: 0.5,
            w_dsteer: 0.1,
            w_accel: 0.1,
            w_path: 200.0,
            w_lat: 0.5,
            w_bound: 1.0e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcConfig {
    pub horizon: f64,
    pub intervals: usize,
    pub steer_rate_bound: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub delta_max: f64,
    pub weights: NmpcWeights,
    pub sqp_iters: usize,
    /// Shooting defect tolerance at convergence.
    pub tol: f64,
    /// Input step size (∞-norm) below which an iterate counts as converged.
    pub step_tol: f64,
    /// ℓ1 penalty on shooting defects in the line-search merit function.
    pub merit_penalty: f64,
    /// Received references older than this (relative to the newest) are dropped.
    pub ref_buffer_time: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            intervals: 50,
            steer_rate_bound: 2.0 * PI,
            accel_min: -4.0,
            accel_max: 2.0,
            delta_max: 0.61,
            weights: NmpcWeights::default(),
            sqp_iters: 12,
            tol: 1e-6,
            step_tol: 1e-3,
            merit_penalty: 1.0e3,
            ref_buffer_time: 2.0,
        }
    }
}

impl NmpcConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(format!("nmpc: {m}")));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.intervals == 0 {
            return bad("horizon and intervals must be positive");
        }
        if !(self.steer_rate_bound > 0.0 && self.steer_rate_bound.is_finite()) {
            return bad("steer_rate_bound must be positive and finite");
        }
        if !(self.accel_min < 0.0 && self.accel_max > 0.0 && self.accel_min.is_finite() && self.accel_max.is_finite()) {
            return bad("accel bounds must satisfy accel_min < 0 < accel_max");
        }
        if !(self.delta_max > 0.0) {
            return bad("delta_max must be positive");
        }
        let w = &self.weights;
        for (name, v) in [
            ("w_pos", w.w_pos),
            ("w_pos_along", w.w_pos_along),
            ("w_head", w.w_head),
            ("w_speed", w.w_speed),
            ("w_dsteer", w.w_dsteer),
            ("w_accel", w.w_accel),
            ("w_path", w.w_path),
            ("w_lat", w.w_lat),
            ("w_bound", w.w_bound),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("nmpc.weights.{name} must be non-negative")));
            }
        }
        if w.w_dsteer <= 0.0 || w.w_accel <= 0.0 {
            return bad("w_dsteer and w_accel must be positive");
        }
        if self.sqp_iters == 0 || !(self.tol > 0.0) || !(self.step_tol > 0.0) || !(self.merit_penalty > 0.0) {
            return bad("sqp_iters, tol, step_tol and merit_penalty must be positive");
        }
        if !(self.ref_buffer_time >= 0.0) {
            return bad("ref_buffer_time must be non-negative");
        }
        Ok(())
    }

    /// Checks the controller limits against the vehicle's own actuators.
    pub fn check_against(&self, p: &VehicleParams) -> Result<()> {
        if self.steer_rate_bound > p.steer_rate_max + 1e-12
            || self.accel_max > p.ax_max + 1e-12
            || self.accel_min < p.ax_min - 1e-12
            || self.delta_max > p.delta_max + 1e-12
        {
            return Err(SimError::Config(
                "nmpc limits exceed the vehicle's actuator limits".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcSolution {
    /// (steer rate, acceleration) per interval.
    pub u_seq: Vec<[f64; 2]>,
    /// Shooting nodes (x, y, ψ, v, δ), intervals + 1 of them.
    pub x_seq: Vec<[f64; 5]>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_defect: f64,
    pub v_opt: f64,
}

/// Warm-started tracker holding the freshest reference.
#[derive(Debug, Clone)]
pub struct NmpcController {
    nmpc: Nmpc,
    refs: VecDeque<RefPoseMsg>,
    warm: Option<NmpcSolution>,
    pub ticks: u64,
    pub nonconverged: u64,
    pub iterations: u64,
}

impl NmpcController {
    pub fn new(cfg: NmpcConfig, params: &VehicleParams) -> Self {
        Self {
            nmpc: Nmpc::new(cfg, params),
            refs: VecDeque::new(),
            warm: None,
            ticks: 0,
            nonconverged: 0,
            iterations: 0,
        }
    }

    pub fn nmpc(&self) -> &Nmpc {
        &self.nmpc
    }

    pub fn latest_ref(&self) -> Option<&RefPoseMsg> {
        self.refs.back()
    }

    pub fn last_solution(&self) -> Option<&NmpcSolution> {
        self.warm.as_ref()
    }

    /// Stores a received reference; stale messages are ignored.
    pub fn receive(&mut self, msg: RefPoseMsg) {
        if self.refs.back().is_some_and(|r| msg.t_sent <= r.t_sent) {
            return;
        }
        let horizon = msg.t_sent - self.nmpc.config().ref_buffer_time;
        self.refs.push_back(msg);
        while self.refs.front().is_some_and(|r| r.t_sent < horizon) {
            self.refs.pop_front();
        }
    }

    /// Drops references and warm start, e.g. after the vehicle was relocated.
    pub fn reset(&mut self) {
        self.refs.clear();
        self.warm = None;
    }

    /// One 50 Hz control step.
    pub fn tick(&mut self, state: &VehicleState) -> Result<ActuatorCommand> {
        let Some(latest) = self.refs.back().copied() else {
            return Ok(ActuatorCommand::new(state.delta, state.vx));
        };
        let z0 = State::new(state.pose.x, state.pose.y, state.pose.heading, state.vx, state.delta);
        let path: Vec<Pose2D> = self.refs.iter().map(|r| r.x_ref).collect();
        let sol = self.nmpc.solve(&z0, &latest, &path, self.warm.as_ref())?;
        self.ticks += 1;
        self.iterations += sol.iterations as u64;
        if !sol.converged {
            self.nonconverged += 1;
        }
        let dt = self.nmpc.config().dt();
        let cmd = ActuatorCommand::new(state.delta + sol.u_seq[0][0] * dt, sol.v_opt);
        self.warm = Some(sol);
        Ok(cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controller() -> NmpcController {
        NmpcController::new(NmpcConfig::default(), &VehicleParams::default())
    }

    #[test]
    fn holds_before_first_reference() {
        let mut c = controller();
        let s = VehicleState {
            vx: 4.0,
            delta: 0.1,
            ..VehicleState::default()
        };
        let cmd = c.tick(&s).unwrap();
        assert_eq!(cmd, ActuatorCommand::new(0.1, 4.0));
        assert_eq!(c.ticks, 0);
    }

    #[test]
    fn straight_reference_keeps_rate_bound() {
        let mut c = controller();
        c.receive(RefPoseMsg {
            x_ref: Pose2D::new(7.0, 0.0, 0.0),
            v_ref: 7.0,
            t_sent: 0.0,
        });
        let s = VehicleState {
            vx: 7.0,
            ..VehicleState::default()
        };
        let cmd = c.tick(&s).unwrap();
        assert!((cmd.delta_cmd - s.delta).abs() <= 2.0 * PI * 0.02 + 1e-12);
        assert!(cmd.delta_cmd.abs() < 1e-6);
    }

    #[test]
    fn stale_reference_ignored() {
        let mut c = controller();
        let m = |t: f64| RefPoseMsg {
            x_ref: Pose2D::new(t, 0.0, 0.0),
            v_ref: 1.0,
            t_sent: t,
        };
        c.receive(m(1.0));
        c.receive(m(0.5));
        assert_eq!(c.latest_ref().unwrap().t_sent, 1.0);
        c.receive(m(4.0));
        assert_eq!(c.refs.len(), 1);
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = NmpcConfig::default();
        cfg.validate().unwrap();
        cfg.check_against(&VehicleParams::default()).unwrap();
        assert!((cfg.dt() - 0.02).abs() < 1e-15);
    }
}
