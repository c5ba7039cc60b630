//! Multi-rate scheduler, teleoperation modes and experiment matrix.

mod matrix;
mod metrics;
mod run;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{DelayPolicy, GevParams};
use crate::nmpc::NmpcConfig;
use crate::station::DriverKind;
use crate::track::{build_test_track, TrackConfig, TrackModel};
use crate::vehicle::VehicleParams;

pub use matrix::{
    read_summary_csv, run_matrix, summary_rows, write_summary_csv, MatrixOutcome, RunKey, SummaryRow, SUMMARY_HEADER,
};
pub use metrics::{read_trace_csv, write_trace_csv, ModeReport, RegionMetrics, TraceRow, TRACE_HEADER};
pub use run::{apply_reset_rule, parse_mode, reset_state, run_mode, run_with_gain, RunOptions, RunOutcome};

/// The eight teleoperation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    NoDelayLookahead,
    DelayLookahead,
    DelayLookaheadSmith,
    NoDelayStanley,
    DelayStanley,
    DelayStanleySmith,
    NoDelaySrpt,
    DelaySrpt,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::NoDelayLookahead,
        Mode::DelayLookahead,
        Mode::DelayLookaheadSmith,
        Mode::NoDelayStanley,
        Mode::DelayStanley,
        Mode::DelayStanleySmith,
        Mode::NoDelaySrpt,
        Mode::DelaySrpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::NoDelayLookahead => "nodelay-lookahead",
            Mode::DelayLookahead => "delay-lookahead",
            Mode::DelayLookaheadSmith => "delay-lookahead-smith",
            Mode::NoDelayStanley => "nodelay-stanley",
            Mode::DelayStanley => "delay-stanley",
            Mode::DelayStanleySmith => "delay-stanley-smith",
            Mode::NoDelaySrpt => "nodelay-srpt",
            Mode::DelaySrpt => "delay-srpt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_delayed(self) -> bool {
        !matches!(self, Mode::NoDelayLookahead | Mode::NoDelayStanley | Mode::NoDelaySrpt)
    }

    pub fn uses_smith(self) -> bool {
        matches!(self, Mode::DelayLookaheadSmith | Mode::DelayStanleySmith)
    }

    pub fn is_srpt(self) -> bool {
        matches!(self, Mode::NoDelaySrpt | Mode::DelaySrpt)
    }

    pub fn driver(self) -> Option<DriverKind> {
        match self {
            Mode::NoDelayLookahead | Mode::DelayLookahead | Mode::DelayLookaheadSmith => Some(DriverKind::Lookahead),
            Mode::NoDelayStanley | Mode::DelayStanley | Mode::DelayStanleySmith => Some(DriverKind::Stanley),
            Mode::NoDelaySrpt | Mode::DelaySrpt => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Constant station-to-vehicle delay, s.
    pub uplink_delay: f64,
    pub downlink: DelayPolicy,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            uplink_delay: 0.060,
            downlink: DelayPolicy::Gev(GevParams::default()),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.uplink_delay >= 0.0 && self.uplink_delay.is_finite()) {
            return Err(SimError::Config("network.uplink_delay must be non-negative".into()));
        }
        self.downlink.validate()
    }
}

pub const DEFAULT_SPEEDS_KMH: [u32; 7] = [14, 16, 18, 20, 22, 24, 26];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    /// |cross-track| at a region boundary above which the vehicle is reset, m.
    pub reset_threshold: f64,
    /// SRPT horizon used in the look-ahead distance, s.
    pub dt_horizon: f64,
    pub speeds_kmh: Vec<u32>,
    /// First seed; delayed modes use `seed .. seed + seeds_delayed`.
    pub seed: u64,
    pub seeds_delayed: u32,
    pub seeds_nodelay: u32,
    /// Runs are aborted after `timeout_factor · total_length / V + 30` s.
    pub timeout_factor: f64,
    /// Command history kept by the Smith predictor, s.
    pub smith_history: f64,
    pub output_dir: String,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            reset_threshold: 4.0,
            dt_horizon: 1.0,
            speeds_kmh: DEFAULT_SPEEDS_KMH.to_vec(),
            seed: 1,
            seeds_delayed: 5,
            seeds_nodelay: 1,
            timeout_factor: 3.0,
            smith_history: 1.5,
            output_dir: "out".into(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reset_threshold > 0.0) {
            return Err(SimError::Config("harness.reset_threshold must be positive".into()));
        }
        if !(self.dt_horizon > 0.0) {
            return Err(SimError::Config("harness.dt_horizon must be positive".into()));
        }
        if self.speeds_kmh.is_empty() {
            return Err(SimError::Config("harness.speeds_kmh must not be empty".into()));
        }
        if let Some(v) = self.speeds_kmh.iter().find(|v| !(14..=26).contains(*v)) {
            return Err(SimError::Config(format!(
                "harness.speeds_kmh: {v} km/h is outside 14..=26"
            )));
        }
        if self.seeds_delayed == 0 || self.seeds_nodelay == 0 {
            return Err(SimError::Config("harness seed counts must be at least 1".into()));
        }
        if !(self.timeout_factor >= 1.0) {
            return Err(SimError::Config("harness.timeout_factor must be at least 1".into()));
        }
        if !(self.smith_history >= 1.0) {
            return Err(SimError::Config("harness.smith_history must be at least 1 s".into()));
        }
        Ok(())
    }

    /// Seeds run for a mode.
    pub fn seeds_for(&self, mode: Mode) -> Vec<u64> {
        let n = if mode.is_delayed() {
            self.seeds_delayed
        } else {
            self.seeds_nodelay
        };
        (0..n as u64).map(|i| self.seed + i).collect()
    }
}

/// Everything a run needs besides its (mode, speed, seed) key.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub track: TrackModel,
    pub vehicle: VehicleParams,
    pub network: NetworkConfig,
    pub nmpc: NmpcConfig,
    pub harness: HarnessConfig,
}

impl Scenario {
    pub fn new(
        track: &TrackConfig,
        vehicle: VehicleParams,
        network: NetworkConfig,
        nmpc: NmpcConfig,
        harness: HarnessConfig,
    ) -> Result<Self> {
        vehicle.validate()?;
        network.validate()?;
        nmpc.validate()?;
        nmpc.check_against(&vehicle)?;
        harness.validate()?;
        Ok(Self {
            track: build_test_track(track)?,
            vehicle,
            network,
            nmpc,
            harness,
        })
    }

    pub fn with_defaults() -> Result<Self> {
        Self::new(
            &TrackConfig::default(),
            VehicleParams::default(),
            NetworkConfig::default(),
            NmpcConfig::default(),
            HarnessConfig::default(),
        )
    }
}

/// Key of a single simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunConfig {
    pub mode: Mode,
    pub v_ref_kmh: u32,
    pub seed: u64,
}
