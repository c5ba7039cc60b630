//! Remote station: driver models, Smith predictor, reference-pose decider and gain tuning.

pub mod driver;
pub mod smith;
pub mod srpt;
pub mod tuning;

pub use driver::{Driver, DriverKind, LookaheadGains, StanleyGain};
pub use smith::SmithPredictor;
pub use srpt::{l_ind, srpt_decide, RefPoseMsg};
pub use tuning::{gain_grid, tune_all, tune_gain, GainEntry, GainTable};
