//! Per-speed gain tuning of the driver models on the first corner.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::harness::{run_with_gain, Mode, RunConfig, RunOptions, Scenario};
use crate::track::RegionId;

use super::DriverKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEntry {
    pub driver: DriverKind,
    pub speed_kmh: u32,
    pub gain: f64,
    /// Region A RMS cross-track error achieved with `gain`, m.
    pub rms_error_m: f64,
}

/// Tuned gains keyed by (driver, speed).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainTable {
    entries: Vec<GainEntry>,
}

pub const TUNING_HEADER: [&str; 4] = ["driver", "speed_kmh", "gain", "rms_error_m"];

impl GainTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for its (driver, speed).
    pub fn insert(&mut self, e: GainEntry) {
        self.entries
            .retain(|x| !(x.driver == e.driver && x.speed_kmh == e.speed_kmh));
        self.entries.push(e);
        self.entries.sort_by_key(|x| (x.driver, x.speed_kmh));
    }

    pub fn entries(&self) -> &[GainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, driver: DriverKind, speed_kmh: u32) -> Result<f64> {
        self.entries
            .iter()
            .find(|e| e.driver == driver && e.speed_kmh == speed_kmh)
            .map(|e| e.gain)
            .ok_or_else(|| SimError::MissingGain {
                driver: driver.name().into(),
                speed_kmh,
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TUNING_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.driver.name().to_string(),
                e.speed_kmh.to_string(),
                e.gain.to_string(),
                e.rms_error_m.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers()?.clone();
        let mut idx = [0usize; 4];
        for (k, name) in TUNING_HEADER.iter().enumerate() {
            idx[k] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| SimError::Schema(format!("tuning CSV is missing column `{name}`")))?;
        }
        let mut table = Self::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |col: &str| SimError::Schema(format!("tuning CSV row {}: bad `{col}` value", line + 2));
            let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
            let driver = DriverKind::parse(field(0)).ok_or_else(|| bad("driver"))?;
            let speed_kmh = field(1).parse().map_err(|_| bad("speed_kmh"))?;
            let gain: f64 = field(2).parse().map_err(|_| bad("gain"))?;
            if !(gain.is_finite() && gain > 0.0) {
                return Err(bad("gain"));
            }
            let rms_error_m = field(3).parse().map_err(|_| bad("rms_error_m"))?;
            table.insert(GainEntry {
                driver,
                speed_kmh,
                gain,
                rms_error_m,
            });
        }
        Ok(table)
    }
}

/// Candidate gains: k1 in 0.02..=0.40 rad/m, Stanley k in 0.5..=5.0 1/s.
pub fn gain_grid(kind: DriverKind) -> Vec<f64> {
    match kind {
        DriverKind::Lookahead => (1..=20).map(|i| i as f64 / 50.0).collect(),
        DriverKind::Stanley => (2..=20).map(|i| i as f64 / 4.0).collect(),
    }
}

/// Sweeps the gain grid on region A without delay and keeps the gain with
/// the lowest RMS cross-track error. Ties go to the smaller gain.
pub fn tune_gain(sc: &Scenario, kind: DriverKind, speed_kmh: u32) -> Result<GainEntry> {
    let mode = match kind {
        DriverKind::Lookahead => Mode::NoDelayLookahead,
        DriverKind::Stanley => Mode::NoDelayStanley,
    };
    let opts = RunOptions {
        stop_at_s: Some(sc.track.region(RegionId::A).s_end),
        ..RunOptions::default()
    };
    let cfg = RunConfig {
        mode,
        v_ref_kmh: speed_kmh,
        seed: sc.harness.seed,
    };
    let mut best: Option<GainEntry> = None;
    for gain in gain_grid(kind) {
        let out = run_with_gain(sc, cfg, Some(gain), opts)?;
        let rep = &out.report;
        let rms = rep.region(RegionId::A).rms_cross_track;
        if rep.failed() || rep.reset_count > 0 || !rms.is_finite() {
            continue;
        }
        if best.is_none_or(|b| rms < b.rms_error_m) {
            best = Some(GainEntry {
                driver: kind,
                speed_kmh,
                gain,
                rms_error_m: rms,
            });
        }
    }
    best.ok_or_else(|| SimError::TuningFailed {
        driver: kind.name().into(),
        speed_kmh,
    })
}

/// Tunes both drivers at every speed; failures are returned alongside the
/// entries that succeeded.
pub fn tune_all(sc: &Scenario, speeds: &[u32]) -> (GainTable, Vec<SimError>) {
    let jobs: Vec<(DriverKind, u32)> = [DriverKind::Lookahead, DriverKind::Stanley]
        .into_iter()
        .flat_map(|k| speeds.iter().map(move |&v| (k, v)))
        .collect();
    let results: Vec<Result<GainEntry>> = jobs.par_iter().map(|&(k, v)| tune_gain(sc, k, v)).collect();
    let mut table = GainTable::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(e) => table.insert(e),
            Err(e) => errors.push(e),
        }
    }
    (table, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_cover_documented_ranges() {
        let g = gain_grid(DriverKind::Lookahead);
        assert_eq!((g.len(), g[0], g[19]), (20, 0.02, 0.4));
        let s = gain_grid(DriverKind::Stanley);
        assert_eq!((s.len(), s[0], s[18]), (19, 0.5, 5.0));
    }

    #[test]
    fn csv_round_trip_and_missing_lookup() {
        let mut t = GainTable::new();
        t.insert(GainEntry {
            driver: DriverKind::Stanley,
            speed_kmh: 26,
            gain: 1.75,
            rms_error_m: 0.1234567890123,
        });
        t.insert(GainEntry {
            driver: DriverKind::Lookahead,
            speed_kmh: 14,
            gain: 0.12,
            rms_error_m: 0.05,
        });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = GainTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.lookup(DriverKind::Stanley, 26).unwrap(), 1.75);
        let err = back.lookup(DriverKind::Stanley, 14).unwrap_err();
        assert!(matches!(err, SimError::MissingGain { speed_kmh: 14, .. }));
    }

    #[test]
    fn schema_error_names_column() {
        let err = GainTable::read_csv("driver,speed_kmh,rms_error_m\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`gain`"));
    }
}
