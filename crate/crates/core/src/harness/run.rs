use crate::clock::{plant_time, unit_time, METRIC_UNITS, NMPC_UNITS, PLANT_DT, PLANT_UNITS, STATION_UNITS};
use crate::error::{Result, SimError};
use crate::geometry::kmh_to_ms;
use crate::network::{DelayChannel, DelayPolicy, Stamped};
use crate::nmpc::NmpcController;
use crate::station::{srpt_decide, Driver, GainTable, RefPoseMsg, SmithPredictor};
use crate::track::{Projection, RegionId, TrackModel};
use crate::vehicle::{plant_step, ActuatorCommand, DynamicModel, EnvInputs, VehicleState};

use super::metrics::{ModeReport, RegionAcc, TraceRow};
use super::{Mode, RunConfig, Scenario};

/// Half-width of the progress search around the last known arc length, m.
const PROGRESS_WINDOW: f64 = 5.0;
/// Mid-region excursions beyond this multiple of the reset threshold count as off-track.
const OFF_TRACK_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Keep the 100 Hz state trace and the downlink delay trace.
    pub record_trace: bool,
    /// End the run once the vehicle passes this arc length.
    pub stop_at_s: Option<f64>,
    /// Run a delayed mode with both channels at zero delay.
    pub force_zero_delay: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ModeReport,
    pub trace: Vec<TraceRow>,
    /// (t_sent, t_deliver) of every downlink frame.
    pub downlink_delays: Vec<(f64, f64)>,
}

/// Runs one mode with the driver gain taken from `gains`.
pub fn run_mode(sc: &Scenario, cfg: RunConfig, gains: &GainTable, opts: RunOptions) -> Result<RunOutcome> {
    let gain = match cfg.mode.driver() {
        Some(d) => Some(gains.lookup(d, cfg.v_ref_kmh)?),
        None => None,
    };
    run_with_gain(sc, cfg, gain, opts)
}

/// Runs one mode with an explicit driver gain (ignored for SRPT modes).
///
/// Precondition failures are returned as errors; faults during the run end it
/// early and are recorded in the report.
pub fn run_with_gain(sc: &Scenario, cfg: RunConfig, gain: Option<f64>, opts: RunOptions) -> Result<RunOutcome> {
    if !(14..=26).contains(&cfg.v_ref_kmh) {
        return Err(SimError::Config(format!(
            "speed {} km/h is outside 14..=26",
            cfg.v_ref_kmh
        )));
    }
    let station = match (cfg.mode.driver(), gain) {
        (Some(kind), Some(g)) => {
            if !(g.is_finite() && g > 0.0) {
                return Err(SimError::Config(format!("driver gain must be positive, got {g}")));
            }
            StationSide::Driver {
                driver: Driver::new(kind, g),
                smith: None,
                up: DelayChannel::new(DelayPolicy::ZERO, cfg.seed, 2),
            }
        }
        (Some(kind), None) => {
            return Err(SimError::MissingGain {
                driver: kind.name().into(),
                speed_kmh: cfg.v_ref_kmh,
            })
        }
        (None, _) => StationSide::Srpt {
            up: DelayChannel::new(DelayPolicy::ZERO, cfg.seed, 2),
            nmpc: NmpcController::new(sc.nmpc, &sc.vehicle),
        },
    };
    let mut sim = Sim::new(sc, cfg, station, opts);
    sim.run();
    Ok(sim.into_outcome())
}

/// Relocates the vehicle onto the centerline at the start of `region`,
/// keeping its speed and zeroing the lateral states and the steering angle.
pub fn reset_state(state: &VehicleState, track: &TrackModel, region: RegionId) -> VehicleState {
    VehicleState {
        pose: track.point_at(track.region(region).s_start),
        vx: state.vx,
        vy: 0.0,
        yaw_rate: 0.0,
        delta: 0.0,
        t: state.t,
    }
}

/// Reset decision at the boundary into `next`: `Some(new state)` when the
/// cross-track error exceeds the threshold.
pub fn apply_reset_rule(
    state: &VehicleState,
    cross_track: f64,
    track: &TrackModel,
    next: RegionId,
    threshold: f64,
) -> Option<VehicleState> {
    (cross_track.abs() > threshold).then(|| reset_state(state, track, next))
}

enum StationSide {
    Driver {
        driver: Driver,
        smith: Option<SmithPredictor<DynamicModel>>,
        up: DelayChannel<ActuatorCommand>,
    },
    Srpt {
        up: DelayChannel<RefPoseMsg>,
        nmpc: NmpcController,
    },
}

struct Sim<'a> {
    sc: &'a Scenario,
    cfg: RunConfig,
    v_ref: f64,
    uplink_delay: f64,
    state: VehicleState,
    prev_state: VehicleState,
    active: ActuatorCommand,
    down: DelayChannel<VehicleState>,
    side: StationSide,
    frame: Option<Stamped<VehicleState>>,
    station_s: f64,
    proj: Projection,
    region: usize,
    acc: [RegionAcc; 8],
    trace: Option<Vec<TraceRow>>,
    min_ax: f64,
    max_ax: f64,
    max_iter: u64,
    stop_s: f64,
    timeout: f64,
    done: bool,
    t_end: f64,
    failure: Option<String>,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, cfg: RunConfig, mut side: StationSide, opts: RunOptions) -> Self {
        let v_ref = kmh_to_ms(cfg.v_ref_kmh as f64);
        let zero = opts.force_zero_delay || !cfg.mode.is_delayed();
        let (up_policy, down_policy) = if zero {
            (DelayPolicy::ZERO, DelayPolicy::ZERO)
        } else {
            (
                DelayPolicy::Constant {
                    delay: sc.network.uplink_delay,
                },
                sc.network.downlink,
            )
        };
        let uplink_delay = match up_policy {
            DelayPolicy::Constant { delay } => delay,
            DelayPolicy::Gev(_) => unreachable!("uplink is constant"),
        };
        let initial = ActuatorCommand::new(0.0, v_ref);
        match &mut side {
            StationSide::Driver { smith, up, .. } => {
                *up = DelayChannel::new(up_policy, cfg.seed, 2);
                if cfg.mode.uses_smith() {
                    *smith = Some(SmithPredictor::new(
                        DynamicModel { params: sc.vehicle },
                        EnvInputs::NOMINAL,
                        uplink_delay,
                        initial,
                        sc.harness.smith_history,
                    ));
                }
            }
            StationSide::Srpt { up, .. } => *up = DelayChannel::new(up_policy, cfg.seed, 2),
        }
        let mut down = DelayChannel::new(down_policy, cfg.seed, 1);
        let trace = opts.record_trace.then(|| {
            down.record_trace();
            Vec::new()
        });
        let track = &sc.track;
        let state = VehicleState {
            vx: v_ref,
            ..VehicleState::at_rest(track.point_at(0.0))
        };
        let mut acc = [RegionAcc::default(); 8];
        acc[0].t_enter = Some(0.0);
        let end_h = track.region(RegionId::H).s_end;
        Self {
            sc,
            cfg,
            v_ref,
            uplink_delay,
            state,
            prev_state: state,
            active: initial,
            down,
            side,
            frame: None,
            station_s: 0.0,
            proj: Projection {
                s: 0.0,
                cross_track: 0.0,
                heading_err: 0.0,
            },
            region: 0,
            acc,
            trace,
            min_ax: 0.0,
            max_ax: 0.0,
            max_iter: 0,
            stop_s: opts.stop_at_s.map_or(end_h, |s| s.min(end_h)),
            timeout: sc.harness.timeout_factor * track.total_length() / v_ref + 30.0,
            done: false,
            t_end: 0.0,
            failure: None,
        }
    }

    fn run(&mut self) {
        let mut u: u64 = 0;
        while !self.done {
            if let Err(e) = self.unit(u) {
                self.failure = Some(e.to_string());
                break;
            }
            u += 1;
        }
        self.t_end = self.state.t;
    }

    fn unit(&mut self, u: u64) -> Result<()> {
        let t = unit_time(u);
        if u.is_multiple_of(METRIC_UNITS) {
            self.sample();
            if t > self.timeout {
                return Err(SimError::Config(format!("run timed out after {t:.1} s")));
            }
        }
        if u.is_multiple_of(STATION_UNITS) {
            // the newest state not ahead of the station clock
            let frame = if u.is_multiple_of(PLANT_UNITS) {
                self.state
            } else {
                self.prev_state
            };
            self.down.send(frame, frame.t);
            if let Some(f) = self.down.poll(t) {
                self.frame = Some(f);
            }
            self.station(t)?;
        }
        if u.is_multiple_of(PLANT_UNITS) {
            match &mut self.side {
                StationSide::Driver { up, .. } => {
                    if let Some(m) = up.poll(t) {
                        self.active = m.payload;
                    }
                }
                StationSide::Srpt { up, nmpc } => {
                    if let Some(m) = up.poll(t) {
                        nmpc.receive(m.payload);
                    }
                    if u.is_multiple_of(NMPC_UNITS) {
                        let before = (nmpc.nonconverged, nmpc.iterations);
                        self.active = nmpc.tick(&self.state)?;
                        self.acc[self.region].nonconverged += nmpc.nonconverged - before.0;
                        self.max_iter = self.max_iter.max(nmpc.iterations - before.1);
                    }
                }
            }
            self.plant(u / PLANT_UNITS)?;
        }
        Ok(())
    }

    fn sample(&mut self) {
        let a = &mut self.acc[self.region];
        a.sum_sq += self.proj.cross_track * self.proj.cross_track;
        a.samples += 1;
        if let Some(tr) = self.trace.as_mut() {
            let s = &self.state;
            tr.push(TraceRow {
                t: s.t,
                x: s.pose.x,
                y: s.pose.y,
                psi: s.pose.heading,
                vx: s.vx,
                vy: s.vy,
                r: s.yaw_rate,
                delta: s.delta,
                s: self.proj.s,
                cross_track: self.proj.cross_track,
                region: RegionId::ALL[self.region],
            });
        }
    }

    fn station(&mut self, t: f64) -> Result<()> {
        let Some(frame) = self.frame else {
            return Ok(());
        };
        let sc = self.sc;
        let track = &sc.track;
        let p = &sc.vehicle;
        match &mut self.side {
            StationSide::Driver { driver, smith, up } => {
                let est = match smith.as_mut() {
                    Some(sp) => sp.predict(&frame, t)?,
                    None => frame.payload,
                };
                self.station_s = track.closest_point_near(&est.pose, self.station_s, 8.0)?.s;
                let delta = driver.steer(&est, track, p.delta_max, p.l_f, self.station_s)?;
                let cmd = ActuatorCommand::new(delta, self.v_ref);
                if let Some(sp) = smith.as_mut() {
                    sp.record(t, cmd);
                }
                up.send(cmd, t);
            }
            StationSide::Srpt { up, .. } => {
                let tau = (t - frame.t_sent) + self.uplink_delay;
                let (msg, s) = srpt_decide(
                    &frame,
                    track,
                    tau,
                    sc.harness.dt_horizon,
                    p.l_f,
                    self.v_ref,
                    t,
                    Some(self.station_s),
                )?;
                self.station_s = s;
                up.send(msg, t);
            }
        }
        Ok(())
    }

    fn plant(&mut self, j: u64) -> Result<()> {
        let sc = self.sc;
        let track = &sc.track;
        let s = self.proj.s;
        let wind = track.wind().map_or(0.0, |w| {
            sc.vehicle
                .wind_lateral_force(w.speed_at(s), w.direction, self.state.pose.heading)
        });
        let env = EnvInputs {
            mu: track.mu_at(s),
            wind_lateral_force: wind,
        };
        let mut next = plant_step(&self.state, &self.active, &env, &sc.vehicle, PLANT_DT)?;
        next.t = plant_time(j + 1);
        let rate = (next.delta - self.state.delta).abs() / PLANT_DT;
        let a = &mut self.acc[self.region];
        a.peak_steer_rate = a.peak_steer_rate.max(rate);
        let ax = (next.vx - self.state.vx) / PLANT_DT;
        self.min_ax = self.min_ax.min(ax);
        self.max_ax = self.max_ax.max(ax);
        self.prev_state = self.state;
        self.state = next;
        self.progress()
    }

    fn progress(&mut self) -> Result<()> {
        let track = &self.sc.track;
        let threshold = self.sc.harness.reset_threshold;
        let t = self.state.t;
        let proj = match track.closest_point_near(&self.state.pose, self.proj.s, PROGRESS_WINDOW) {
            Ok(p) if p.cross_track.abs() <= OFF_TRACK_FACTOR * threshold => p,
            Ok(_) | Err(SimError::OffTrack { .. }) => {
                self.leave_region(t, true);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        self.proj = proj;
        if proj.s >= self.stop_s {
            self.complete(t);
            self.done = true;
            return Ok(());
        }
        let next = track.region_at(proj.s).index();
        if next > self.region {
            let reset =
                apply_reset_rule(&self.state, proj.cross_track, track, RegionId::ALL[next], threshold).is_some();
            self.complete(t);
            if reset {
                self.acc[self.region].resets += 1;
                self.relocate(RegionId::ALL[next]);
            }
            self.region = next;
            self.acc[next].t_enter = Some(t);
        }
        Ok(())
    }

    fn complete(&mut self, t: f64) {
        let a = &mut self.acc[self.region];
        if let Some(t0) = a.t_enter {
            a.completion_time = Some(t - t0);
        }
    }

    /// Abandons the current region after an off-track excursion.
    fn leave_region(&mut self, t: f64, count_reset: bool) {
        self.complete(t);
        if count_reset {
            self.acc[self.region].resets += 1;
        }
        if self.region + 1 >= RegionId::ALL.len() {
            self.done = true;
            return;
        }
        self.region += 1;
        self.acc[self.region].t_enter = Some(t);
        let next = RegionId::ALL[self.region];
        self.relocate(next);
        if self.proj.s >= self.stop_s {
            self.done = true;
        }
    }

    fn relocate(&mut self, region: RegionId) {
        let track = &self.sc.track;
        self.state = reset_state(&self.state, track, region);
        self.prev_state = self.state;
        let s0 = track.region(region).s_start;
        self.proj = Projection {
            s: s0,
            cross_track: 0.0,
            heading_err: 0.0,
        };
        self.station_s = s0;
        self.frame = None;
        self.down.flush();
        let initial = ActuatorCommand::new(0.0, self.v_ref);
        match &mut self.side {
            StationSide::Driver { smith, up, .. } => {
                up.flush();
                if let Some(sp) = smith.as_mut() {
                    sp.reset(initial);
                }
                self.active = initial;
            }
            StationSide::Srpt { up, nmpc } => {
                up.flush();
                nmpc.reset();
                self.active = ActuatorCommand::new(0.0, self.state.vx);
            }
        }
    }

    fn into_outcome(self) -> RunOutcome {
        let regions: Vec<_> = RegionId::ALL
            .iter()
            .map(|&id| self.acc[id.index()].finish(id))
            .collect();
        let (sum_sq, n) = self
            .acc
            .iter()
            .fold((0.0, 0u64), |(s, n), a| (s + a.sum_sq, n + a.samples));
        let (ticks, nonconverged, fallbacks) = match &self.side {
            StationSide::Srpt { nmpc, .. } => (nmpc.ticks, nmpc.nonconverged, 0),
            StationSide::Driver { smith, .. } => (0, 0, smith.as_ref().map_or(0, |s| s.fallbacks)),
        };
        let report = ModeReport {
            mode: self.cfg.mode,
            speed_kmh: self.cfg.v_ref_kmh,
            seed: self.cfg.seed,
            rms_cross_track: if n == 0 { f64::NAN } else { (sum_sq / n as f64).sqrt() },
            total_time: self.t_end,
            peak_steer_rate: regions.iter().map(|r| r.peak_steer_rate).fold(0.0, f64::max),
            reset_count: regions.iter().map(|r| r.reset_count).sum(),
            nmpc_ticks: ticks,
            nmpc_nonconverged: nonconverged,
            nmpc_max_iterations: self.max_iter,
            min_ax: self.min_ax,
            max_ax: self.max_ax,
            smith_fallbacks: fallbacks,
            failure: self.failure,
            regions,
        };
        RunOutcome {
            report,
            trace: self.trace.unwrap_or_default(),
            downlink_delays: self.down.trace().to_vec(),
        }
    }
}

/// Mode name check used by callers that accept a string.
pub fn parse_mode(s: &str) -> Result<Mode> {
    Mode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
        SimError::Config(format!("unknown mode `{s}`; expected one of: {}", names.join(", ")))
    })
}
