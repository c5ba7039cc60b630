//! Planar single-track vehicle plant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Pose2D;

const GRAVITY: f64 = 9.81;

/// Slip angles are computed with vx floored here to avoid the v → 0 singularity.
pub const SLIP_SPEED_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub m: f64,
    pub iz: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub m_f: f64,
    pub m_r: f64,
    pub wheelbase: f64,
    pub delta_max: f64,
    pub steer_rate_max: f64,
    pub ax_max: f64,
    pub ax_min: f64,
    pub cornering_stiffness_front: f64,
    pub cornering_stiffness_rear: f64,
    pub side_area: f64,
    pub side_force_coeff: f64,
    pub air_density: f64,
    /// Distance of the wind force application point ahead of the CG.
    pub wind_arm: f64,
    /// Proportional gain of the on-board speed controller, 1/s.
    pub speed_gain: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1681.0,
            iz: 2600.0,
            l_f: 1.3,
            l_r: 1.4,
            m_f: 871.6,
            m_r: 809.4,
            wheelbase: 2.7,
            delta_max: 0.61,
            steer_rate_max: 2.0 * PI,
            ax_max: 2.0,
            ax_min: -4.0,
            cornering_stiffness_front: 80_000.0,
            cornering_stiffness_rear: 90_000.0,
            side_area: 4.0,
            side_force_coeff: 1.2,
            air_density: 1.225,
            wind_arm: 0.0,
            speed_gain: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("m_f", self.m_f),
            ("m_r", self.m_r),
            ("wheelbase", self.wheelbase),
            ("delta_max", self.delta_max),
            ("steer_rate_max", self.steer_rate_max),
            ("ax_max", self.ax_max),
            ("cornering_stiffness_front", self.cornering_stiffness_front),
            ("cornering_stiffness_rear", self.cornering_stiffness_rear),
            ("speed_gain", self.speed_gain),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("vehicle.{name} must be positive, got {v}")));
            }
        }
        if !(self.ax_min.is_finite() && self.ax_min < 0.0) {
            return Err(SimError::Config("vehicle.ax_min must be negative".into()));
        }
        for (name, v) in [
            ("side_area", self.side_area),
            ("side_force_coeff", self.side_force_coeff),
            ("air_density", self.air_density),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("vehicle.{name} must be non-negative")));
            }
        }
        if !self.wind_arm.is_finite() {
            return Err(SimError::Config("vehicle.wind_arm must be finite".into()));
        }
        if (self.m_f + self.m_r - self.m).abs() > 0.1 {
            return Err(SimError::Config(format!(
                "vehicle axle masses {} + {} do not sum to m = {}",
                self.m_f, self.m_r, self.m
            )));
        }
        if (self.l_f + self.l_r - self.wheelbase).abs() > 1e-9 {
            return Err(SimError::Config("vehicle.wheelbase must equal l_f + l_r".into()));
        }
        Ok(())
    }

    /// Body-lateral wind force for a wind of `speed` blowing towards global
    /// direction `direction`, acting on a vehicle with heading `heading`.
    pub fn wind_lateral_force(&self, speed: f64, direction: f64, heading: f64) -> f64 {
        0.5 * self.air_density * self.side_force_coeff * self.side_area * speed * speed * (direction - heading).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub delta: f64,
    pub t: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite()
            && self.vx.is_finite()
            && self.vy.is_finite()
            && self.yaw_rate.is_finite()
            && self.delta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvInputs {
    pub mu: f64,
    pub wind_lateral_force: f64,
}

impl EnvInputs {
    /// Dry road, still air.
    pub const NOMINAL: EnvInputs = EnvInputs {
        mu: 1.0,
        wind_lateral_force: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub delta_cmd: f64,
    pub v_cmd: f64,
}

impl ActuatorCommand {
    pub fn new(delta_cmd: f64, v_cmd: f64) -> Self {
        Self { delta_cmd, v_cmd }
    }
}

/// Smoothly saturating lateral tire force, F = −μFz·tanh(Cα/(μFz)).
pub fn tire_lateral_force(slip_angle: f64, normal_load: f64, stiffness: f64, mu: f64) -> f64 {
    let cap = mu * normal_load;
    -cap * (stiffness * slip_angle / cap).tanh()
}

/// Steer actuator: rate-limited move toward the clamped command.
pub fn steer_actuator(delta: f64, delta_cmd: f64, params: &VehicleParams, dt: f64) -> f64 {
    let target = delta_cmd.clamp(-params.delta_max, params.delta_max);
    let max_step = params.steer_rate_max * dt;
    let next = delta + (target - delta).clamp(-max_step, max_step);
    next.clamp(-params.delta_max, params.delta_max)
}

/// Longitudinal acceleration from the on-board speed controller.
pub fn speed_controller(vx: f64, v_cmd: f64, params: &VehicleParams, dt: f64) -> f64 {
    let ax = (params.speed_gain * (v_cmd - vx)).clamp(params.ax_min, params.ax_max);
    // never drive vx below zero within a step
    if vx + ax * dt < 0.0 {
        (-vx / dt).max(params.ax_min)
    } else {
        ax
    }
}

/// One integration step of a vehicle model.
pub trait StepModel {
    fn step(&self, state: &VehicleState, cmd: &ActuatorCommand, env: &EnvInputs, dt: f64) -> Result<VehicleState>;
}

type Deriv = [f64; 6];

fn rk4(y: &Deriv, dt: f64, f: impl Fn(&Deriv) -> Deriv) -> Deriv {
    let add = |a: &Deriv, k: &Deriv, h: f64| -> Deriv {
        let mut out = *a;
        for i in 0..6 {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, 0.5 * dt));
    let k3 = f(&add(y, &k2, 0.5 * dt));
    let k4 = f(&add(y, &k3, dt));
    let mut out = *y;
    for i in 0..6 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn finish(state: &VehicleState, y: Deriv, delta: f64, dt: f64) -> Result<VehicleState> {
    let next = VehicleState {
        pose: Pose2D::new(y[0], y[1], y[2]),
        vx: y[3].max(0.0),
        vy: y[4],
        yaw_rate: y[5],
        delta,
        t: state.t + dt,
    };
    if !next.is_finite() {
        return Err(SimError::IntegrationFault { t: state.t });
    }
    Ok(next)
}

/// Dynamic single-track model with saturating tires and lateral wind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicModel {
    pub params: VehicleParams,
}

impl StepModel for DynamicModel {
    fn step(&self, state: &VehicleState, cmd: &ActuatorCommand, env: &EnvInputs, dt: f64) -> Result<VehicleState> {
        plant_step(state, cmd, env, &self.params, dt)
    }
}

/// Advances the plant by `dt`: actuators first, then RK4 on the rigid-body states.
pub fn plant_step(
    state: &VehicleState,
    cmd: &ActuatorCommand,
    env: &EnvInputs,
    p: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !cmd.delta_cmd.is_finite() || !cmd.v_cmd.is_finite() || !state.is_finite() {
        return Err(SimError::IntegrationFault { t: state.t });
    }
    let delta = steer_actuator(state.delta, cmd.delta_cmd, p, dt);
    let ax = speed_controller(state.vx, cmd.v_cmd, p, dt);
    let fz_f = p.m_f * GRAVITY;
    let fz_r = p.m_r * GRAVITY;
    let cos_d = delta.cos();
    let fw = env.wind_lateral_force;
    let y0 = [
        state.pose.x,
        state.pose.y,
        state.pose.heading,
        state.vx,
        state.vy,
        state.yaw_rate,
    ];
    let y = rk4(&y0, dt, |s| {
        let [_, _, psi, vx, vy, r] = *s;
        let u = vx.max(SLIP_SPEED_FLOOR);
        let alpha_f = ((vy + p.l_f * r) / u).atan() - delta;
        let alpha_r = ((vy - p.l_r * r) / u).atan();
        let fyf = tire_lateral_force(alpha_f, fz_f, p.cornering_stiffness_front, env.mu);
        let fyr = tire_lateral_force(alpha_r, fz_r, p.cornering_stiffness_rear, env.mu);
        let (sp, cp) = psi.sin_cos();
        [
            vx * cp - vy * sp,
            vx * sp + vy * cp,
            r,
            ax,
            (fyf * cos_d + fyr + fw) / p.m - vx * r,
            (p.l_f * fyf * cos_d - p.l_r * fyr + p.wind_arm * fw) / p.iz,
        ]
    });
    finish(state, y, delta, dt)
}

/// Kinematic bicycle referenced at the CG, sharing the plant's actuators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicModel {
    pub params: VehicleParams,
}

impl StepModel for KinematicModel {
    fn step(&self, state: &VehicleState, cmd: &ActuatorCommand, _env: &EnvInputs, dt: f64) -> Result<VehicleState> {
        let p = &self.params;
        if !cmd.delta_cmd.is_finite() || !cmd.v_cmd.is_finite() || !state.is_finite() {
            return Err(SimError::IntegrationFault { t: state.t });
        }
        let delta = steer_actuator(state.delta, cmd.delta_cmd, p, dt);
        let ax = speed_controller(state.vx, cmd.v_cmd, p, dt);
        let beta = (p.l_r * delta.tan() / p.wheelbase).atan();
        let y0 = [state.pose.x, state.pose.y, state.pose.heading, state.vx, 0.0, 0.0];
        let y = rk4(&y0, dt, |s| {
            let [_, _, psi, v, _, _] = *s;
            [
                v * (psi + beta).cos(),
                v * (psi + beta).sin(),
                v * beta.sin() / p.l_r,
                ax,
                0.0,
                0.0,
            ]
        });
        let mut next = finish(state, y, delta, dt)?;
        next.vy = next.vx * beta.tan();
        next.yaw_rate = next.vx * beta.sin() / p.l_r;
        Ok(next)
    }
}
