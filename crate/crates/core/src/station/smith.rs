//! Smith predictor: replays buffered commands on an internal model to bring
//! a delayed vehicle state forward to the time a new command takes effect.

use std::collections::VecDeque;

use crate::clock::{nearest_plant_index, plant_index_at_or_before, plant_time, PLANT_DT};
use crate::error::Result;
use crate::geometry::Pose2D;
use crate::network::Stamped;
use crate::vehicle::{ActuatorCommand, EnvInputs, StepModel, VehicleState};

#[derive(Debug, Clone)]
pub struct SmithPredictor<M> {
    model: M,
    env: EnvInputs,
    uplink_delay: f64,
    initial: ActuatorCommand,
    history: VecDeque<(f64, ActuatorCommand)>,
    retain: f64,
    pruned: bool,
    pub fallbacks: u64,
}

impl<M: StepModel> SmithPredictor<M> {
    /// `initial` is the command the vehicle applies before any uplink
    /// message arrives; `retain` is the history span kept, s.
    pub fn new(model: M, env: EnvInputs, uplink_delay: f64, initial: ActuatorCommand, retain: f64) -> Self {
        Self {
            model,
            env,
            uplink_delay,
            initial,
            history: VecDeque::new(),
            retain: retain.max(1.0),
            pruned: false,
            fallbacks: 0,
        }
    }

    /// Forgets all commands, e.g. after the vehicle was relocated.
    pub fn reset(&mut self, initial: ActuatorCommand) {
        self.initial = initial;
        self.history.clear();
        self.pruned = false;
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Records a command sent at `t_sent`.
    pub fn record(&mut self, t_sent: f64, cmd: ActuatorCommand) {
        self.history.push_back((t_sent, cmd));
        let horizon = t_sent - self.retain;
        while self.history.len() >= 2 && self.history[1].0 + self.uplink_delay <= horizon {
            self.history.pop_front();
            self.pruned = true;
        }
    }

    /// Command the vehicle applies during plant step `j`, or `None` if the
    /// history no longer reaches back that far.
    fn command_at(&self, j: u64) -> Option<ActuatorCommand> {
        let t = plant_time(j);
        // same expression as the uplink's delivery time
        let active = self.history.iter().rev().find(|(ts, _)| ts + self.uplink_delay <= t);
        match active {
            Some((_, c)) => Some(*c),
            None if !self.pruned => Some(self.initial),
            None => None,
        }
    }

    /// Predicts the state at the last plant step not after `t_now + τ1`.
    pub fn predict(&mut self, delayed: &Stamped<VehicleState>, t_now: f64) -> Result<VehicleState> {
        let start = nearest_plant_index(delayed.t_sent);
        let target = plant_index_at_or_before(t_now + self.uplink_delay);
        let mut state = delayed.payload;
        if target <= start {
            return Ok(state);
        }
        let cmds: Option<Vec<ActuatorCommand>> = (start..target).map(|j| self.command_at(j)).collect();
        let Some(cmds) = cmds else {
            self.fallbacks += 1;
            return Ok(constant_velocity(
                &state,
                (target - start) as f64 * PLANT_DT,
                plant_time(target),
            ));
        };
        for (j, cmd) in (start..target).zip(cmds) {
            state = self.model.step(&state, &cmd, &self.env, PLANT_DT)?;
            state.t = plant_time(j + 1);
        }
        Ok(state)
    }
}

fn constant_velocity(s: &VehicleState, dt: f64, t: f64) -> VehicleState {
    let (c, sn) = (s.pose.heading.cos(), s.pose.heading.sin());
    let dx = (s.vx * c - s.vy * sn) * dt;
    let dy = (s.vx * sn + s.vy * c) * dt;
    VehicleState {
        pose: Pose2D::new(s.pose.x + dx, s.pose.y + dy, s.pose.heading + s.yaw_rate * dt),
        t,
        ..*s
    }
}
