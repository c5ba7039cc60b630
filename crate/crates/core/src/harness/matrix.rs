use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::station::GainTable;
use crate::track::RegionId;

use super::metrics::ModeReport;
use super::run::{run_mode, RunOptions};
use super::{Mode, RunConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub mode: Mode,
    pub speed_kmh: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutcome {
    /// Sorted by (mode, speed, seed).
    pub reports: Vec<ModeReport>,
    /// Runs that could not start, e.g. for lack of a tuned gain.
    pub errors: Vec<(RunKey, String)>,
}

impl MatrixOutcome {
    pub fn get(&self, mode: Mode, speed_kmh: u32) -> impl Iterator<Item = &ModeReport> {
        self.reports
            .iter()
            .filter(move |r| r.mode == mode && r.speed_kmh == speed_kmh)
    }
}

/// Runs every (mode, speed, seed) combination. `jobs` bounds the worker
/// count; results do not depend on it.
pub fn run_matrix(
    sc: &Scenario,
    gains: &GainTable,
    modes: &[Mode],
    speeds: &[u32],
    jobs: Option<usize>,
) -> Result<MatrixOutcome> {
    let keys: Vec<RunKey> = modes
        .iter()
        .flat_map(|&mode| {
            let seeds = sc.harness.seeds_for(mode);
            speeds.iter().flat_map(move |&speed_kmh| {
                seeds
                    .clone()
                    .into_iter()
                    .map(move |seed| RunKey { mode, speed_kmh, seed })
            })
        })
        .collect();
    let work = || -> Vec<(RunKey, Result<ModeReport>)> {
        keys.par_iter()
            .map(|&k| {
                let cfg = RunConfig {
                    mode: k.mode,
                    v_ref_kmh: k.speed_kmh,
                    seed: k.seed,
                };
                (k, run_mode(sc, cfg, gains, RunOptions::default()).map(|o| o.report))
            })
            .collect()
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut out = MatrixOutcome::default();
    for (k, r) in results {
        match r {
            Ok(rep) => out.reports.push(rep),
            Err(e) => out.errors.push((k, e.to_string())),
        }
    }
    out.reports.sort_by_key(|r| (r.mode, r.speed_kmh, r.seed));
    out.errors.sort_by_key(|e| e.0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub mode: Mode,
    pub speed_kmh: u32,
    pub seed: u64,
    pub region: RegionId,
    pub rms_cross_track_m: f64,
    pub completion_time_s: f64,
    pub peak_steer_rate_rad_s: f64,
    pub reset_count: u32,
    pub nmpc_nonconverged: u64,
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "mode",
    "speed_kmh",
    "seed",
    "region",
    "rms_cross_track_m",
    "completion_time_s",
    "peak_steer_rate_rad_s",
    "reset_count",
    "nmpc_nonconverged",
];

/// One row per (report, region).
pub fn summary_rows(reports: &[ModeReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.regions.iter().map(move |m| SummaryRow {
                mode: r.mode,
                speed_kmh: r.speed_kmh,
                seed: r.seed,
                region: m.region,
                rms_cross_track_m: m.rms_cross_track,
                completion_time_s: m.completion_time,
                peak_steer_rate_rad_s: m.peak_steer_rate,
                reset_count: m.reset_count,
                nmpc_nonconverged: m.nmpc_nonconverged,
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.name().to_string(),
            r.speed_kmh.to_string(),
            r.seed.to_string(),
            r.region.letter().to_string(),
            r.rms_cross_track_m.to_string(),
            r.completion_time_s.to_string(),
            r.peak_steer_rate_rad_s.to_string(),
            r.reset_count.to_string(),
            r.nmpc_nonconverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let mut idx = [0usize; 9];
    for (k, name) in SUMMARY_HEADER.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| SimError::Schema(format!("summary CSV is missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |k: usize| {
            SimError::Schema(format!(
                "summary CSV row {}: bad `{}` value",
                line + 2,
                SUMMARY_HEADER[k]
            ))
        };
        let f = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let num = |k: usize| f(k).parse::<f64>().map_err(|_| bad(k));
        rows.push(SummaryRow {
            mode: Mode::parse(f(0)).ok_or_else(|| bad(0))?,
            speed_kmh: f(1).parse().map_err(|_| bad(1))?,
            seed: f(2).parse().map_err(|_| bad(2))?,
            region: RegionId::parse(f(3)).ok_or_else(|| bad(3))?,
            rms_cross_track_m: num(4)?,
            completion_time_s: num(5)?,
            peak_steer_rate_rad_s: num(6)?,
            reset_count: f(7).parse().map_err(|_| bad(7))?,
            nmpc_nonconverged: f(8).parse().map_err(|_| bad(8))?,
        });
    }
    if rows.is_empty() {
        return Err(SimError::Schema("summary CSV has no rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: Mode, region: RegionId) -> SummaryRow {
        SummaryRow {
            mode,
            speed_kmh: 26,
            seed: 3,
            region,
            rms_cross_track_m: 0.1 + 0.2,
            completion_time_s: f64::NAN,
            peak_steer_rate_rad_s: std::f64::consts::TAU,
            reset_count: 1,
            nmpc_nonconverged: 0,
        }
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![
            row(Mode::DelaySrpt, RegionId::H),
            row(Mode::NoDelayStanley, RegionId::A),
        ];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let back = read_summary_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].rms_cross_track_m, 0.1 + 0.2);
        assert!(back[0].completion_time_s.is_nan());
        assert_eq!(back[1].mode, Mode::NoDelayStanley);
    }

    #[test]
    fn empty_summary_is_schema_error() {
        let header = SUMMARY_HEADER.join(",") + "\n";
        assert!(matches!(read_summary_csv(header.as_bytes()), Err(SimError::Schema(_))));
        let err = read_summary_csv("mode,speed_kmh\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`seed`"));
    }
}
