//! Post-hoc SVG diagnostics rendered straight from the CSV outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Result, SimError};
use crate::harness::{read_summary_csv, read_trace_csv, Mode, SummaryRow, TraceRow};
use crate::track::RegionId;

const W: f64 = 900.0;
const H: f64 = 520.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#8c564b", "#17becf", "#9467bd", "#7f7f7f",
];

/// Reads the named columns from a CSV, rejecting missing columns and empty files.
pub fn read_columns<R: Read>(input: R, what: &str, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| SimError::Schema(format!("{what} CSV is missing column `{c}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(
            idx.iter()
                .map(|&i| rec.get(i).unwrap_or("").trim().to_string())
                .collect(),
        );
    }
    if rows.is_empty() {
        return Err(SimError::Schema(format!("{what} CSV has no rows")));
    }
    Ok(rows)
}

fn num(v: &str, what: &str, col: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| SimError::Schema(format!("{what} CSV: bad `{col}` value {v:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub region: RegionId,
}

pub fn read_track_csv<R: Read>(input: R) -> Result<Vec<TrackPoint>> {
    read_columns(input, "track", &["s", "x", "y", "region"])?
        .into_iter()
        .map(|r| {
            Ok(TrackPoint {
                s: num(&r[0], "track", "s")?,
                x: num(&r[1], "track", "x")?,
                y: num(&r[2], "track", "y")?,
                region: RegionId::parse(&r[3])
                    .ok_or_else(|| SimError::Schema(format!("track CSV: bad `region` value {:?}", r[3])))?,
            })
        })
        .collect()
}

pub const STEER_RATE_HEADER: [&str; 3] = ["s", "region", "required_steer_rate_rad_s"];

/// Writes one steer-rate requirement profile.
pub fn write_steer_rate_csv<W: std::io::Write>(profile: &[(f64, RegionId, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEER_RATE_HEADER)?;
    for (s, r, rate) in profile {
        w.write_record([s.to_string(), r.letter().to_string(), rate.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_steer_rate_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    read_columns(input, "steer-rate", &["s", "required_steer_rate_rad_s"])?
        .into_iter()
        .map(|r| {
            Ok((
                num(&r[0], "steer-rate", "s")?,
                num(&r[1], "steer-rate", "required_steer_rate_rad_s")?,
            ))
        })
        .collect()
}

/// Linear map from data bounds onto the plot area.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            f = Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    /// Same scale on both axes, for maps.
    fn equal_aspect(mut self) -> Self {
        let sx = (W - 2.0 * MARGIN) / (self.x1 - self.x0);
        let sy = (H - 2.0 * MARGIN) / (self.y1 - self.y0);
        let s = sx.min(sy);
        let cx = 0.5 * (self.x0 + self.x1);
        let cy = 0.5 * (self.y0 + self.y1);
        let hx = 0.5 * (W - 2.0 * MARGIN) / s;
        let hy = 0.5 * (H - 2.0 * MARGIN) / s;
        self = Frame {
            x0: cx - hx,
            x1: cx + hx,
            y0: cy - hy,
            y1: cy + hy,
        };
        self
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
            W / 2.0,
            esc(title)
        );
        Svg { body }
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            self.body,
            "<g stroke=\"black\" fill=\"none\"><line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/><line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\"/></g>",
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for (v, anchor) in [(f.x0, "start"), (f.x1, "end")] {
            let _ = writeln!(
                self.body,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>",
                f.px(v),
                H - MARGIN + 16.0,
                fmt_tick(v)
            );
        }
        for v in [f.y0, f.y1] {
            let _ = writeln!(
                self.body,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                MARGIN - 4.0,
                f.py(v) + 4.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(
            self.body,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            W / 2.0,
            H - 18.0,
            esc(xlabel)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
            H / 2.0,
            H / 2.0,
            esc(ylabel)
        );
    }

    fn polyline(&mut self, f: &Frame, pts: &[(f64, f64)], color: &str, width: f64) {
        let mut p = String::new();
        for &(x, y) in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(p, "{:.2},{:.2} ", f.px(x), f.py(y));
        }
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>",
            p.trim_end()
        );
    }

    /// Non-data line drawn as a path so polyline counts stay per-series.
    fn guide(&mut self, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, f.px(x), f.py(y));
        }
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<path fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"{dash} d=\"{}\"/>",
            d.trim_end()
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, color: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            esc(s)
        );
    }

    fn legend(&mut self, labels: &[String]) {
        for (i, l) in labels.iter().enumerate() {
            let y = MARGIN + 14.0 * i as f64;
            let c = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                self.body,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{c}\"/>",
                W - MARGIN - 170.0,
                y - 9.0
            );
            self.text(W - MARGIN - 155.0, y, l, "black");
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Centerline coloured by region, with region letters.
pub fn track_map_svg(track: &[TrackPoint]) -> String {
    let all: Vec<(f64, f64)> = track.iter().map(|p| (p.x, p.y)).collect();
    let f = Frame::fit(all.iter()).equal_aspect();
    let mut svg = Svg::new("Test track");
    for id in RegionId::ALL {
        let pts: Vec<(f64, f64)> = track.iter().filter(|p| p.region == id).map(|p| (p.x, p.y)).collect();
        if pts.is_empty() {
            continue;
        }
        let c = PALETTE[id.index()];
        svg.polyline(&f, &pts, c, 3.0);
        let (x, y) = pts[pts.len() / 2];
        svg.text(f.px(x) + 6.0, f.py(y) - 6.0, &id.letter().to_string(), c);
    }
    svg.finish()
}

/// Bar chart of mean RMS cross-track error in one region, grouped by speed,
/// one bar per mode.
pub fn region_bar_chart_svg(rows: &[SummaryRow], region: RegionId) -> String {
    let mut acc: BTreeMap<(u32, Mode), (f64, u32)> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| r.region == region && r.rms_cross_track_m.is_finite())
    {
        let e = acc.entry((r.speed_kmh, r.mode)).or_default();
        e.0 += r.rms_cross_track_m;
        e.1 += 1;
    }
    let speeds: Vec<u32> = {
        let mut v: Vec<u32> = acc.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    let modes: Vec<Mode> = Mode::ALL
        .into_iter()
        .filter(|m| acc.keys().any(|k| k.1 == *m))
        .collect();
    let ymax = acc.values().map(|(s, n)| s / *n as f64).fold(0.0, f64::max).max(1e-6);
    let f = Frame {
        x0: 0.0,
        x1: speeds.len().max(1) as f64,
        y0: 0.0,
        y1: ymax * 1.1,
    };
    let mut svg = Svg::new(&format!("Region {}: RMS cross-track error", region.letter()));
    svg.axes(&f, "speed, km/h", "RMS cross-track error, m");
    let slot = 0.8 / modes.len().max(1) as f64;
    for (gi, v) in speeds.iter().enumerate() {
        for (mi, m) in modes.iter().enumerate() {
            let Some((sum, n)) = acc.get(&(*v, *m)) else { continue };
            let mean = sum / *n as f64;
            let x0 = f.px(gi as f64 + 0.1 + slot * mi as f64);
            let x1 = f.px(gi as f64 + 0.1 + slot * (mi + 1) as f64);
            let _ = writeln!(
                svg.body,
                "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{m} {v} km/h: {mean}</title></rect>",
                f.py(mean),
                x1 - x0,
                f.py(0.0) - f.py(mean),
                PALETTE[m.index()]
            );
        }
        svg.text(f.px(gi as f64 + 0.4), H - MARGIN + 30.0, &v.to_string(), "black");
    }
    let labels: Vec<String> = modes.iter().map(|m| m.to_string()).collect();
    let mut legend = Svg { body: String::new() };
    legend.legend(&labels);
    svg.body.push_str(&legend.body);
    svg.finish()
}

/// Vehicle paths over the centerline; one polyline per labelled trace.
pub fn trajectory_overlay_svg(track: Option<&[TrackPoint]>, traces: &[(String, Vec<TraceRow>)]) -> String {
    let mut all: Vec<(f64, f64)> = traces.iter().flat_map(|(_, t)| t.iter().map(|r| (r.x, r.y))).collect();
    if let Some(tr) = track {
        all.extend(tr.iter().map(|p| (p.x, p.y)));
    }
    let f = Frame::fit(all.iter()).equal_aspect();
    let mut svg = Svg::new("Trajectories");
    if let Some(tr) = track {
        let c: Vec<(f64, f64)> = tr.iter().map(|p| (p.x, p.y)).collect();
        svg.guide(&f, &c, "#bbbbbb", true);
    }
    for (i, (_, rows)) in traces.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.y)).collect();
        svg.polyline(&f, &pts, PALETTE[i % PALETTE.len()], 1.5);
    }
    let labels: Vec<String> = traces.iter().map(|(l, _)| l.clone()).collect();
    svg.legend(&labels);
    svg.finish()
}

/// Speed or steering angle against arc length.
pub fn profile_svg(traces: &[(String, Vec<TraceRow>)], steer: bool) -> String {
    let pick = |r: &TraceRow| if steer { r.delta } else { r.vx };
    let series: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|(_, t)| t.iter().map(|r| (r.s, pick(r))).collect())
        .collect();
    let f = Frame::fit(series.iter().flatten());
    let (title, ylabel) = if steer {
        ("Steering angle along the track", "steering angle, rad")
    } else {
        ("Speed along the track", "longitudinal speed, m/s")
    };
    let mut svg = Svg::new(title);
    svg.axes(&f, "arc length, m", ylabel);
    for (i, pts) in series.iter().enumerate() {
        svg.polyline(&f, pts, PALETTE[i % PALETTE.len()], 1.2);
    }
    let labels: Vec<String> = traces.iter().map(|(l, _)| l.clone()).collect();
    svg.legend(&labels);
    svg.finish()
}

/// Required steer-rate magnitude per speed, with the actuator limit dashed.
pub fn steer_rate_requirement_svg(curves: &[(String, Vec<(f64, f64)>)], limit: f64) -> String {
    let abs: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|(_, c)| c.iter().map(|&(s, r)| (s, r.abs())).collect())
        .collect();
    let mut f = Frame::fit(abs.iter().flatten());
    f.y0 = 0.0;
    f.y1 = f.y1.max(limit * 1.1);
    let mut svg = Svg::new("Steer-rate requirement");
    svg.axes(&f, "arc length, m", "|required steer rate|, rad/s");
    for (i, pts) in abs.iter().enumerate() {
        svg.polyline(&f, pts, PALETTE[i % PALETTE.len()], 1.2);
    }
    svg.guide(&f, &[(f.x0, limit), (f.x1, limit)], "black", true);
    let labels: Vec<String> = curves.iter().map(|(l, _)| l.clone()).collect();
    svg.legend(&labels);
    svg.finish()
}

fn csv_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(prefix))
        })
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path, prefix: &str) -> String {
    let s = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    s.strip_prefix(prefix).unwrap_or(s).to_string()
}

fn open(p: &Path) -> Result<std::fs::File> {
    std::fs::File::open(p).map_err(|e| SimError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
}

/// Renders every diagnostic whose inputs exist in `dir` into `out`.
///
/// Inputs: `track.csv`, `matrix_summary.csv`, `trace_*.csv`, `steer_rate_*.csv`.
/// Returns the written files. Fails if none of the inputs is present.
pub fn plot_dir(dir: &Path, out: &Path, steer_limit: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let p = out.join(name);
        std::fs::write(&p, svg)?;
        written.push(p);
        Ok(())
    };

    let track_path = dir.join("track.csv");
    let track = if track_path.exists() {
        Some(read_track_csv(open(&track_path)?)?)
    } else {
        None
    };
    if let Some(t) = &track {
        emit("track_map.svg".into(), track_map_svg(t))?;
    }

    let summary = dir.join("matrix_summary.csv");
    if summary.exists() {
        let rows = read_summary_csv(open(&summary)?)?;
        for id in RegionId::ALL {
            emit(
                format!("rms_region_{}.svg", id.letter()),
                region_bar_chart_svg(&rows, id),
            )?;
        }
    }

    let mut traces = Vec::new();
    for p in csv_files(dir, "trace_")? {
        traces.push((stem(&p, "trace_"), read_trace_csv(open(&p)?)?));
    }
    if !traces.is_empty() {
        emit(
            "trajectory_overlay.svg".into(),
            trajectory_overlay_svg(track.as_deref(), &traces),
        )?;
        emit("speed_profile.svg".into(), profile_svg(&traces, false))?;
        emit("steer_profile.svg".into(), profile_svg(&traces, true))?;
    }

    let mut curves = Vec::new();
    for p in csv_files(dir, "steer_rate_")? {
        curves.push((stem(&p, "steer_rate_"), read_steer_rate_csv(open(&p)?)?));
    }
    if !curves.is_empty() {
        emit(
            "steer_rate_requirement.svg".into(),
            steer_rate_requirement_svg(&curves, steer_limit),
        )?;
    }

    if written.is_empty() {
        return Err(SimError::Schema(format!("no plottable CSV files in {}", dir.display())));
    }
    Ok(written)
}
