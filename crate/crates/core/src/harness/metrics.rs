use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::track::RegionId;

use super::Mode;

/// Per-region performance of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub region: RegionId,
    /// RMS cross-track error at the CG over the 100 Hz samples, m.
    pub rms_cross_track: f64,
    /// Time between the region's entry and exit crossings, s. NaN if never left.
    pub completion_time: f64,
    pub peak_steer_rate: f64,
    pub reset_count: u32,
    pub nmpc_nonconverged: u64,
    pub samples: u64,
}

impl RegionMetrics {
    pub fn traversed(&self) -> bool {
        self.completion_time.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub speed_kmh: u32,
    pub seed: u64,
    /// A..H in order.
    pub regions: Vec<RegionMetrics>,
    pub rms_cross_track: f64,
    pub total_time: f64,
    pub peak_steer_rate: f64,
    pub reset_count: u32,
    pub nmpc_ticks: u64,
    pub nmpc_nonconverged: u64,
    /// Largest SQP iteration count seen in a single tick.
    pub nmpc_max_iterations: u64,
    pub min_ax: f64,
    pub max_ax: f64,
    pub smith_fallbacks: u64,
    /// Reason the run was aborted, if it was.
    pub failure: Option<String>,
}

impl ModeReport {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn region(&self, id: RegionId) -> &RegionMetrics {
        &self.regions[id.index()]
    }
}

/// Running sums for one region.
#[derive(Debug, Clone, Copy, Default)]
pub(super) struct RegionAcc {
    pub sum_sq: f64,
    pub samples: u64,
    pub t_enter: Option<f64>,
    pub completion_time: Option<f64>,
    pub peak_steer_rate: f64,
    pub resets: u32,
    pub nonconverged: u64,
}

impl RegionAcc {
    pub fn finish(&self, id: RegionId) -> RegionMetrics {
        RegionMetrics {
            region: id,
            rms_cross_track: if self.samples == 0 {
                f64::NAN
            } else {
                (self.sum_sq / self.samples as f64).sqrt()
            },
            completion_time: self.completion_time.unwrap_or(f64::NAN),
            peak_steer_rate: self.peak_steer_rate,
            reset_count: self.resets,
            nmpc_nonconverged: self.nonconverged,
            samples: self.samples,
        }
    }
}

/// One 100 Hz sample of the vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub delta: f64,
    pub s: f64,
    pub cross_track: f64,
    pub region: RegionId,
}

pub const TRACE_HEADER: [&str; 11] = [
    "t",
    "x",
    "y",
    "psi",
    "vx",
    "vy",
    "r",
    "delta",
    "s",
    "cross_track",
    "region",
];

/// Writes a trace with shortest round-trip float formatting.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.psi.to_string(),
            r.vx.to_string(),
            r.vy.to_string(),
            r.r.to_string(),
            r.delta.to_string(),
            r.s.to_string(),
            r.cross_track.to_string(),
            r.region.letter().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let mut idx = [0usize; 11];
    for (k, name) in TRACE_HEADER.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| SimError::Schema(format!("trace CSV is missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(idx[k])
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| SimError::Schema(format!("row {}: bad `{}` value", line + 2, TRACE_HEADER[k])))
        };
        let region = rec
            .get(idx[10])
            .and_then(RegionId::parse)
            .ok_or_else(|| SimError::Schema(format!("row {}: bad `region` value", line + 2)))?;
        rows.push(TraceRow {
            t: num(0)?,
            x: num(1)?,
            y: num(2)?,
            psi: num(3)?,
            vx: num(4)?,
            vy: num(5)?,
            r: num(6)?,
            delta: num(7)?,
            s: num(8)?,
            cross_track: num(9)?,
            region,
        });
    }
    if rows.is_empty() {
        return Err(SimError::Schema("trace CSV has no rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip_is_exact() {
        let rows = vec![TraceRow {
            t: 0.01,
            x: 1.0 / 3.0,
            y: -2.5e-17,
            psi: std::f64::consts::PI,
            vx: 7.2222,
            vy: 0.0,
            r: 1e-300,
            delta: -0.61,
            s: 12.345678901234567,
            cross_track: -0.123456789,
            region: RegionId::G,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_trace_csv("t,x\n0,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
    }

    #[test]
    fn empty_region_has_nan_rms() {
        let m = RegionAcc::default().finish(RegionId::A);
        assert!(m.rms_cross_track.is_nan());
        assert!(!m.traversed());
    }
}
