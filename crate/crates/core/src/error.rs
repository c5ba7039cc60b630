use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point ({x:.3}, {y:.3}) is {distance:.3} m from the centerline, outside the {corridor} m corridor")]
    OffTrack {
        x: f64,
        y: f64,
        distance: f64,
        corridor: f64,
    },

    #[error("integration fault at t = {t:.3} s: non-finite state")]
    IntegrationFault { t: f64 },

    #[error("nmpc: infeasible initial state ({0})")]
    InfeasibleStart(String),

    #[error("gain tuning failed for {driver} at {speed_kmh} km/h: every sweep run diverged")]
    TuningFailed { driver: String, speed_kmh: u32 },

    #[error("no tuned gain for {driver} at {speed_kmh} km/h; run `teleop-sim tune` first")]
    MissingGain { driver: String, speed_kmh: u32 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
