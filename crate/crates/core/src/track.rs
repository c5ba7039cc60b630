//! Test-track construction and geometric queries.
//!
//! The course is described as a sequence of curvature plateaus per region.
//! Adjacent plateaus are joined by linear-curvature (clothoid) ramps centred
//! on the plateau boundary, which keeps the heading change of every region
//! equal to `Σ κ·length` regardless of the ramp length.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{wrap_angle, Pose2D};

/// Lateral distance beyond which a query point is considered off the course.
pub const TRACK_CORRIDOR: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl RegionId {
    pub const ALL: [RegionId; 8] = [
        RegionId::A,
        RegionId::B,
        RegionId::C,
        RegionId::D,
        RegionId::E,
        RegionId::F,
        RegionId::G,
        RegionId::H,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut chars = s.trim().chars();
        let c = chars.next()?.to_ascii_uppercase();
        if chars.next().is_some() || !('A'..='H').contains(&c) {
            return None;
        }
        Self::from_index((c as u8 - b'A') as usize)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Rise-plateau-fall lateral wind profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSpec {
    pub peak_speed: f64,
    pub ramp_length: f64,
    pub plateau_length: f64,
    /// Global direction the wind blows towards, in radians.
    pub direction: f64,
    /// Arc length at which the rise begins.
    pub s_start: f64,
}

impl WindSpec {
    pub fn s_end(&self) -> f64 {
        self.s_start + 2.0 * self.ramp_length + self.plateau_length
    }

    /// Wind speed at arc length `s`; zero outside the profile span.
    pub fn speed_at(&self, s: f64) -> f64 {
        let u = s - self.s_start;
        let top = self.ramp_length + self.plateau_length;
        let end = top + self.ramp_length;
        if u <= 0.0 || u >= end {
            0.0
        } else if u < self.ramp_length {
            self.peak_speed * u / self.ramp_length
        } else if u <= top {
            self.peak_speed
        } else {
            self.peak_speed * (end - u) / self.ramp_length
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: RegionId,
    pub s_start: f64,
    pub s_end: f64,
    pub mu: f64,
    pub wind_profile: Option<WindSpec>,
}

impl RegionSpec {
    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_start && s < self.s_end
    }

    pub fn length(&self) -> f64 {
        self.s_end - self.s_start
    }
}

/// A cornering region: straight lead-in, a constant-radius arc, straight exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerSpec {
    pub lead: f64,
    pub radius: f64,
    /// Signed heading change in degrees, positive to the left.
    pub turn_deg: f64,
    pub exit: f64,
    pub transition: f64,
    pub mu: f64,
}

/// Double lane change: shift out, hold, shift back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChangeSpec {
    pub lead: f64,
    pub offset: f64,
    pub shift_length: f64,
    pub hold: f64,
    pub exit: f64,
    pub transition: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StraightSpec {
    pub length: f64,
    pub mu: f64,
}

/// Slalom built from alternating arcs; gates sit where the heading returns
/// to the entry heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlalomSpec {
    pub lead: f64,
    pub gates: u32,
    pub gate_spacing: f64,
    pub amplitude: f64,
    pub exit: f64,
    pub transition: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    pub peak_speed: f64,
    pub ramp_length: f64,
    pub plateau_length: f64,
    /// Offset of the rise from the start of region E.
    pub start_offset: f64,
    /// Direction relative to the track heading where the rise begins.
    pub direction_offset_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub sample_spacing: f64,
    /// Straight appended after region H so look-ahead queries near the
    /// finish stay on a real centerline. Not part of any region.
    pub runout_length: f64,
    /// Upper bound on |dκ/ds| accepted by the builder.
    pub max_curvature_rate: f64,
    pub a: CornerSpec,
    pub b: CornerSpec,
    pub c: LaneChangeSpec,
    pub d: CornerSpec,
    pub e: StraightSpec,
    pub f: StraightSpec,
    pub g: CornerSpec,
    pub h: SlalomSpec,
    pub wind: WindConfig,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            sample_spacing: 0.05,
            runout_length: 30.0,
            max_curvature_rate: 0.5,
            a: CornerSpec {
                lead: 12.0,
                radius: 15.0,
                turn_deg: 90.0,
                exit: 8.0,
                transition: 10.0,
                mu: 1.0,
            },
            b: CornerSpec {
                lead: 8.0,
                radius: 8.0,
                turn_deg: -90.0,
                exit: 8.0,
                transition: 6.0,
                mu: 0.7,
            },
            c: LaneChangeSpec {
                lead: 8.0,
                offset: 3.5,
                shift_length: 25.0,
                hold: 17.0,
                exit: 8.0,
                transition: 0.12,
                mu: 1.0,
            },
            d: CornerSpec {
                lead: 8.0,
                radius: 20.0,
                turn_deg: 90.0,
                exit: 8.0,
                transition: 8.0,
                mu: 0.5,
            },
            e: StraightSpec { length: 36.0, mu: 1.0 },
            f: StraightSpec { length: 36.0, mu: 1.0 },
            g: CornerSpec {
                lead: 8.0,
                radius: 15.0,
                turn_deg: -180.0,
                exit: 8.0,
                transition: 8.0,
                mu: 0.33,
            },
            h: SlalomSpec {
                lead: 8.0,
                gates: 5,
                gate_spacing: 13.0,
                amplitude: 1.75,
                exit: 14.35,
                transition: 0.45,
                mu: 1.0,
            },
            wind: WindConfig {
                peak_speed: 15.0,
                ramp_length: 15.0,
                plateau_length: 20.0,
                start_offset: 5.0,
                direction_offset_deg: 90.0,
            },
        }
    }
}

/// One linear-curvature piece of the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    s0: f64,
    length: f64,
    k0: f64,
    k1: f64,
    /// Heading at `s0` (unwrapped).
    psi0: f64,
}

impl Piece {
    fn curvature(&self, s: f64) -> f64 {
        if self.length <= 0.0 {
            return self.k0;
        }
        let u = (s - self.s0) / self.length;
        self.k0 + (self.k1 - self.k0) * u
    }

    fn heading(&self, s: f64) -> f64 {
        let d = s - self.s0;
        let rate = if self.length > 0.0 {
            (self.k1 - self.k0) / self.length
        } else {
            0.0
        };
        self.psi0 + self.k0 * d + 0.5 * rate * d * d
    }
}

/// Piecewise-linear curvature profile with exact heading integration.
#[derive(Debug, Clone, Default)]
struct CurvatureProfile {
    pieces: Vec<Piece>,
}

impl CurvatureProfile {
    fn length(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.s0 + p.length)
    }

    fn push(&mut self, length: f64, k0: f64, k1: f64) {
        if length <= 0.0 {
            return;
        }
        let (s0, psi0) = match self.pieces.last() {
            Some(p) => (p.s0 + p.length, p.heading(p.s0 + p.length)),
            None => (0.0, 0.0),
        };
        self.pieces.push(Piece {
            s0,
            length,
            k0,
            k1,
            psi0,
        });
    }

    /// Appends plateaus of constant curvature; consecutive plateaus are
    /// joined by ramps of `transition` length centred on their boundary.
    fn push_plateaus(&mut self, plateaus: &[(f64, f64)], transition: f64) {
        let half = 0.5 * transition;
        for (i, &(len, k)) in plateaus.iter().enumerate() {
            let ramp_in = i > 0 && plateaus[i - 1].1 != k;
            let ramp_out = i + 1 < plateaus.len() && plateaus[i + 1].1 != k;
            let flat = len - if ramp_in { half } else { 0.0 } - if ramp_out { half } else { 0.0 };
            self.push(flat, k, k);
            if ramp_out {
                self.push(transition, k, plateaus[i + 1].1);
            }
        }
    }

    fn piece_index(&self, s: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.s0 <= s);
        idx.saturating_sub(1)
    }

    fn curvature(&self, s: f64) -> f64 {
        self.pieces[self.piece_index(s)].curvature(s)
    }

    fn heading(&self, s: f64) -> f64 {
        self.pieces[self.piece_index(s)].heading(s)
    }

    /// Breakpoints (piece boundaries) including both ends.
    fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.pieces.iter().map(|p| p.s0).collect();
        out.push(self.length());
        out
    }

    /// Integrates (cos ψ, sin ψ) over [a, b] where [a, b] lies in one piece.
    fn integrate_in_piece(&self, a: f64, b: f64) -> (f64, f64) {
        // 3-point Gauss-Legendre; ψ is quadratic in s on a piece.
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let piece = &self.pieces[self.piece_index(0.5 * (a + b))];
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (n, w) in NODES.iter().zip(WEIGHTS) {
            let psi = piece.heading(mid + half * n);
            dx += w * psi.cos();
            dy += w * psi.sin();
        }
        (dx * half, dy * half)
    }

    /// Local end point of the profile starting at the origin with heading 0.
    fn end_point(&self) -> (f64, f64) {
        self.point_at(self.length())
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let mut x = 0.0;
        let mut y = 0.0;
        for p in &self.pieces {
            if p.s0 >= s {
                break;
            }
            let end = (p.s0 + p.length).min(s);
            // sub-divide so each Gauss-Legendre interval stays short
            let n = ((end - p.s0) / 0.5).ceil().max(1.0) as usize;
            let h = (end - p.s0) / n as f64;
            for i in 0..n {
                let a = p.s0 + h * i as f64;
                let (dx, dy) = self.integrate_in_piece(a, a + h);
                x += dx;
                y += dy;
            }
        }
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    s: f64,
    x: f64,
    y: f64,
    /// Unwrapped heading.
    psi: f64,
    kappa: f64,
}

/// Arc-length parameterized centerline with region attributes.
#[derive(Debug, Clone)]
pub struct TrackModel {
    samples: Vec<Sample>,
    total_length: f64,
    regions: Vec<RegionSpec>,
    wind: Option<WindSpec>,
}

/// Result of projecting a pose onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub cross_track: f64,
    /// Pose heading minus track heading, wrapped to (-π, π].
    pub heading_err: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(SimError::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(SimError::Config(format!("{name} must be non-negative, got {v}")));
    }
    Ok(())
}

fn check_mu(name: &str, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(SimError::Config(format!("{name}.mu must lie in (0, 1], got {mu}")));
    }
    Ok(())
}

fn corner_plateaus(name: &str, c: &CornerSpec) -> Result<Vec<(f64, f64)>> {
    check_non_negative(&format!("{name}.lead"), c.lead)?;
    check_non_negative(&format!("{name}.exit"), c.exit)?;
    check_positive(&format!("{name}.radius"), c.radius)?;
    check_positive(&format!("{name}.transition"), c.transition)?;
    check_mu(name, c.mu)?;
    let turn = c.turn_deg.to_radians();
    let arc = turn.abs() * c.radius;
    let half = 0.5 * c.transition;
    if c.lead < half || c.exit < half || arc < c.transition {
        return Err(SimError::Config(format!(
            "{name}: transition {} m does not fit the lead, arc ({arc:.2} m) and exit",
            c.transition
        )));
    }
    let k = turn.signum() / c.radius;
    Ok(vec![(c.lead, 0.0), (arc, k), (c.exit, 0.0)])
}

fn lane_change_shift(spec: &LaneChangeSpec, k: f64) -> CurvatureProfile {
    let t = spec.transition;
    let half_len = 0.5 * spec.shift_length;
    let mut p = CurvatureProfile::default();
    // a leading/trailing zero plateau of length t/2 holds the outer ramps
    p.push_plateaus(&[(0.5 * t, 0.0), (half_len, k), (half_len, -k), (0.5 * t, 0.0)], t);
    p
}

fn solve_monotone(target: f64, mut hi: f64, eval: impl Fn(f64) -> f64) -> f64 {
    let mut lo = 0.0;
    while eval(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn lane_change_plateaus(c: &LaneChangeSpec) -> Result<Vec<(f64, f64)>> {
    check_non_negative("c.lead", c.lead)?;
    check_non_negative("c.hold", c.hold)?;
    check_non_negative("c.exit", c.exit)?;
    check_positive("c.offset", c.offset)?;
    check_positive("c.shift_length", c.shift_length)?;
    check_positive("c.transition", c.transition)?;
    check_mu("c", c.mu)?;
    let half = 0.5 * c.transition;
    if c.lead < half || c.exit < half || c.hold < c.transition || 0.5 * c.shift_length < c.transition {
        return Err(SimError::Config("c: transition does not fit the lane change".into()));
    }
    let k = solve_monotone(c.offset, 0.01, |k| lane_change_shift(c, k).end_point().1);
    let hl = 0.5 * c.shift_length;
    Ok(vec![
        (c.lead, 0.0),
        (hl, k),
        (hl, -k),
        (c.hold, 0.0),
        (hl, -k),
        (hl, k),
        (c.exit, 0.0),
    ])
}

fn slalom_arcs(h: &SlalomSpec, k: f64) -> Vec<(f64, f64)> {
    let g = h.gate_spacing;
    let mut out = vec![(0.5 * g, k)];
    let mut sign = -1.0;
    for _ in 0..h.gates {
        out.push((g, sign * k));
        sign = -sign;
    }
    out.push((0.5 * g, sign * k));
    out
}

fn slalom_plateaus(h: &SlalomSpec) -> Result<Vec<(f64, f64)>> {
    check_non_negative("h.lead", h.lead)?;
    check_non_negative("h.exit", h.exit)?;
    check_positive("h.gate_spacing", h.gate_spacing)?;
    check_positive("h.amplitude", h.amplitude)?;
    check_positive("h.transition", h.transition)?;
    check_mu("h", h.mu)?;
    if h.gates == 0 || h.gates.is_multiple_of(2) {
        return Err(SimError::Config("h.gates must be odd and positive".into()));
    }
    let half = 0.5 * h.transition;
    if h.lead < half || h.exit < half || 0.5 * h.gate_spacing < h.transition {
        return Err(SimError::Config("h: transition does not fit the slalom".into()));
    }
    // first gate: half arc plus half of the first full arc
    let first_gate = |k: f64| {
        let t = h.transition;
        let mut plateaus = vec![(0.5 * t, 0.0)];
        plateaus.extend(slalom_arcs(h, k));
        let mut p = CurvatureProfile::default();
        p.push_plateaus(&plateaus, t);
        p.point_at(0.5 * t + h.gate_spacing).1
    };
    let k = solve_monotone(2.0 * h.amplitude, 0.01, first_gate);
    let mut out = vec![(h.lead, 0.0)];
    out.extend(slalom_arcs(h, k));
    out.push((h.exit, 0.0));
    Ok(out)
}

impl TrackModel {
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Arc length at the end of the run-out straight.
    pub fn centerline_length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    pub fn regions(&self) -> &[RegionSpec] {
        &self.regions
    }

    pub fn region(&self, id: RegionId) -> &RegionSpec {
        &self.regions[id.index()]
    }

    pub fn wind(&self) -> Option<&WindSpec> {
        self.wind.as_ref()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Sample arc lengths of the centerline grid.
    pub fn sample_s(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.s)
    }

    /// Region containing `s`; clamps to A before the start and H after the end.
    pub fn region_at(&self, s: f64) -> RegionId {
        for r in &self.regions {
            if s < r.s_end {
                return r.id;
            }
        }
        RegionId::H
    }

    pub fn mu_at(&self, s: f64) -> f64 {
        self.regions[self.region_at(s).index()].mu
    }

    pub fn wind_speed_at(&self, s: f64) -> f64 {
        self.wind.map_or(0.0, |w| w.speed_at(s))
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let n = self.samples.len();
        let s = s.clamp(0.0, self.samples[n - 1].s);
        let i = self.samples.partition_point(|p| p.s <= s).clamp(1, n - 1) - 1;
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let u = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        (i, u)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, u) = self.segment_at(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        a.kappa + u * (b.kappa - a.kappa)
    }

    /// Unwrapped heading at `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, u) = self.segment_at(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        a.psi + u * (b.psi - a.psi)
    }

    /// Pose on the centerline at arc length `s`, clamped to the sampled range.
    pub fn point_at(&self, s: f64) -> Pose2D {
        let (i, u) = self.segment_at(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        Pose2D::new(
            a.x + u * (b.x - a.x),
            a.y + u * (b.y - a.y),
            wrap_angle(a.psi + u * (b.psi - a.psi)),
        )
    }

    /// Projects `(x, y)` onto segment `i`; returns (u, squared distance).
    fn project_segment(&self, i: usize, x: f64, y: f64) -> (f64, f64) {
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len2 = ex * ex + ey * ey;
        let u = (((x - a.x) * ex + (y - a.y) * ey) / len2).clamp(0.0, 1.0);
        let (fx, fy) = (a.x + u * ex, a.y + u * ey);
        (u, (x - fx).powi(2) + (y - fy).powi(2))
    }

    fn best_segment(&self, x: f64, y: f64, lo: usize, hi: usize) -> (usize, f64, f64) {
        let mut best = (lo, 0.0, f64::INFINITY);
        for i in lo..hi {
            let (u, d2) = self.project_segment(i, x, y);
            if d2 < best.2 {
                best = (i, u, d2);
            }
        }
        best
    }

    fn projection_from(&self, p: &Pose2D, i: usize, u: f64) -> Projection {
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt();
        let (fx, fy) = (a.x + u * ex, a.y + u * ey);
        let cross = (ex * (p.y - fy) - ey * (p.x - fx)) / len;
        let s = a.s + u * (b.s - a.s);
        let psi = a.psi + u * (b.psi - a.psi);
        Projection {
            s,
            cross_track: cross,
            heading_err: wrap_angle(p.heading - psi),
        }
    }

    fn corridor_check(&self, p: &Pose2D, d2: f64) -> Result<()> {
        let distance = d2.sqrt();
        if distance > TRACK_CORRIDOR || !distance.is_finite() {
            return Err(SimError::OffTrack {
                x: p.x,
                y: p.y,
                distance,
                corridor: TRACK_CORRIDOR,
            });
        }
        Ok(())
    }

    /// Closest centerline point to `p` by exhaustive search.
    pub fn closest_point(&self, p: &Pose2D) -> Result<Projection> {
        let (i, u, d2) = self.best_segment(p.x, p.y, 0, self.samples.len() - 1);
        self.corridor_check(p, d2)?;
        Ok(self.projection_from(p, i, u))
    }

    /// Closest point searched within `window` metres of `s_hint`, falling back
    /// to the exhaustive search when the local minimum sits on the window edge.
    pub fn closest_point_near(&self, p: &Pose2D, s_hint: f64, window: f64) -> Result<Projection> {
        let n = self.samples.len();
        let lo = self.segment_at(s_hint - window).0;
        let hi = (self.segment_at(s_hint + window).0 + 1).min(n - 1);
        let (i, u, d2) = self.best_segment(p.x, p.y, lo, hi);
        let at_edge = (i == lo && u == 0.0 && lo > 0) || (i + 1 == hi && u == 1.0 && hi < n - 1);
        if at_edge || d2.sqrt() > window {
            return self.closest_point(p);
        }
        self.corridor_check(p, d2)?;
        Ok(self.projection_from(p, i, u))
    }

    /// Open-loop steer-rate requirement along the course at constant speed.
    ///
    /// δ(s) = atan(L·κ(s)); the rate is dδ/ds·V with dδ/ds from three-point
    /// central differences on the (possibly non-uniform) sample grid.
    pub fn steer_rate_requirement(&self, speed: f64, wheelbase: f64) -> Vec<(f64, f64)> {
        let pts: Vec<&Sample> = self
            .samples
            .iter()
            .filter(|p| p.s <= self.total_length + 1e-9)
            .collect();
        let delta: Vec<f64> = pts.iter().map(|p| (wheelbase * p.kappa).atan()).collect();
        let n = pts.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let d = if i == 0 {
                (delta[1] - delta[0]) / (pts[1].s - pts[0].s)
            } else if i == n - 1 {
                (delta[n - 1] - delta[n - 2]) / (pts[n - 1].s - pts[n - 2].s)
            } else {
                let h0 = pts[i].s - pts[i - 1].s;
                let h1 = pts[i + 1].s - pts[i].s;
                (delta[i + 1] * h0 * h0 - delta[i - 1] * h1 * h1 + delta[i] * (h1 * h1 - h0 * h0))
                    / (h0 * h1 * (h0 + h1))
            };
            out.push((pts[i].s, d * speed));
        }
        out
    }

    /// Peak |required steer rate| inside each region.
    pub fn peak_steer_rate_by_region(&self, speed: f64, wheelbase: f64) -> [f64; 8] {
        let mut peaks = [0.0f64; 8];
        for (s, rate) in self.steer_rate_requirement(speed, wheelbase) {
            let r = self.region_at(s).index();
            peaks[r] = peaks[r].max(rate.abs());
        }
        peaks
    }

    /// Largest |κ| on the grid within a region.
    pub fn max_abs_curvature(&self, id: RegionId) -> f64 {
        let r = self.region(id);
        self.samples
            .iter()
            .filter(|p| p.s >= r.s_start && p.s <= r.s_end)
            .map(|p| p.kappa.abs())
            .fold(0.0, f64::max)
    }

    /// Writes `s,x,y,heading,curvature,region,mu,wind_speed` rows for [0, total_length].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "x", "y", "heading", "curvature", "region", "mu", "wind_speed"])?;
        for p in self.samples.iter().filter(|p| p.s <= self.total_length + 1e-9) {
            let region = self.region_at(p.s);
            w.write_record([
                format!("{:.4}", p.s),
                format!("{:.6}", p.x),
                format!("{:.6}", p.y),
                format!("{:.6}", wrap_angle(p.psi)),
                format!("{:.6}", p.kappa),
                region.to_string(),
                format!("{}", self.mu_at(p.s)),
                format!("{:.4}", self.wind_speed_at(p.s)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the A–H course from its configuration.
pub fn build_test_track(cfg: &TrackConfig) -> Result<TrackModel> {
    check_positive("sample_spacing", cfg.sample_spacing)?;
    check_non_negative("runout_length", cfg.runout_length)?;
    check_positive("max_curvature_rate", cfg.max_curvature_rate)?;
    check_non_negative("e.length", cfg.e.length)?;
    check_non_negative("f.length", cfg.f.length)?;
    check_mu("e", cfg.e.mu)?;
    check_mu("f", cfg.f.mu)?;
    check_non_negative("wind.peak_speed", cfg.wind.peak_speed)?;
    check_positive("wind.ramp_length", cfg.wind.ramp_length)?;
    check_non_negative("wind.plateau_length", cfg.wind.plateau_length)?;
    check_non_negative("wind.start_offset", cfg.wind.start_offset)?;

    #[allow(clippy::type_complexity)]
    let region_plateaus: Vec<(RegionId, Vec<(f64, f64)>, f64, f64)> = vec![
        (RegionId::A, corner_plateaus("a", &cfg.a)?, cfg.a.transition, cfg.a.mu),
        (RegionId::B, corner_plateaus("b", &cfg.b)?, cfg.b.transition, cfg.b.mu),
        (RegionId::C, lane_change_plateaus(&cfg.c)?, cfg.c.transition, cfg.c.mu),
        (RegionId::D, corner_plateaus("d", &cfg.d)?, cfg.d.transition, cfg.d.mu),
        (RegionId::E, vec![(cfg.e.length, 0.0)], 1.0, cfg.e.mu),
        (RegionId::F, vec![(cfg.f.length, 0.0)], 1.0, cfg.f.mu),
        (RegionId::G, corner_plateaus("g", &cfg.g)?, cfg.g.transition, cfg.g.mu),
        (RegionId::H, slalom_plateaus(&cfg.h)?, cfg.h.transition, cfg.h.mu),
    ];

    let mut profile = CurvatureProfile::default();
    let mut regions = Vec::with_capacity(8);
    for (id, plateaus, transition, mu) in &region_plateaus {
        let s_start = profile.length();
        profile.push_plateaus(plateaus, *transition);
        regions.push(RegionSpec {
            id: *id,
            s_start,
            s_end: profile.length(),
            mu: *mu,
            wind_profile: None,
        });
    }
    let total_length = profile.length();
    profile.push(cfg.runout_length, 0.0, 0.0);

    for p in &profile.pieces {
        if p.length > 0.0 && ((p.k1 - p.k0) / p.length).abs() > cfg.max_curvature_rate {
            return Err(SimError::Config(format!(
                "curvature rate {:.3} 1/m² at s = {:.2} exceeds max_curvature_rate {}",
                ((p.k1 - p.k0) / p.length).abs(),
                p.s0,
                cfg.max_curvature_rate
            )));
        }
    }

    // Uniform grid plus every piece boundary, so κ is linear between samples.
    let end = profile.length();
    let n = (end / cfg.sample_spacing).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * cfg.sample_spacing).collect();
    grid.extend(profile.breakpoints());
    grid.push(total_length);
    grid.retain(|s| *s <= end + 1e-12);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut samples = Vec::with_capacity(grid.len());
    let (mut x, mut y) = (0.0, 0.0);
    for (i, &s) in grid.iter().enumerate() {
        if i > 0 {
            let s_prev = grid[i - 1];
            let (dx, dy) = profile.integrate_in_piece(s_prev, s);
            x += dx;
            y += dy;
        }
        samples.push(Sample {
            s,
            x,
            y,
            psi: profile.heading(s),
            kappa: profile.curvature(s),
        });
    }

    let e = &regions[RegionId::E.index()];
    let wind_start = e.s_start + cfg.wind.start_offset;
    let wind = WindSpec {
        peak_speed: cfg.wind.peak_speed,
        ramp_length: cfg.wind.ramp_length,
        plateau_length: cfg.wind.plateau_length,
        direction: wrap_angle(profile.heading(wind_start) + cfg.wind.direction_offset_deg.to_radians()),
        s_start: wind_start,
    };
    let f_end = regions[RegionId::F.index()].s_end;
    if wind.s_end() > f_end + 1e-9 {
        return Err(SimError::Config(format!(
            "wind profile ends at {:.2} m, beyond region F ({f_end:.2} m)",
            wind.s_end()
        )));
    }
    regions[RegionId::E.index()].wind_profile = Some(wind);
    regions[RegionId::F.index()].wind_profile = Some(wind);

    Ok(TrackModel {
        samples,
        total_length,
        regions,
        wind: Some(wind),
    })
}

/// Distance from `(x, y)` to the chord between samples, exposed for tests
/// that need an exhaustive oracle independent of the windowed search.
#[doc(hidden)]
pub fn brute_force_distance(track: &TrackModel, x: f64, y: f64) -> f64 {
    track.best_segment(x, y, 0, track.samples.len() - 1).2.sqrt()
}
