//! Position solving from per-step displacements, pulse timing and steps.
//!
//! Line geometry: the walker moves along a straight line with stride `s`.
//! `H` is the foot of the perpendicular from the speaker to that line, `x`
//! the signed offset of the first step point from `H` (negative while the
//! speaker is still ahead) and `y = |AH|` the slant perpendicular distance,
//! so step point `i` (from 0) is `l_i = sqrt(y^2 + (x + i s)^2)` away from
//! the speaker. The ground-plane coordinates used for reporting put the
//! walking direction along `X` with the origin at the first step point:
//! `X = -x`, `Y = sqrt(y^2 - h^2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{Point2, StepTrace};
use crate::pll::{DisplacementSeries, PhaseTrack};
use crate::pulsedet::PulseArrivals;
use crate::waveform::WaveformParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocatorSettings {
    /// Seed box for the along-track offset, m.
    pub x_range: (f64, f64),
    /// Upper end of the seed box for `y`, m; the lower end is `h`.
    pub y_max: f64,
    /// Seeds per axis.
    pub seeds: usize,
    pub max_iterations: usize,
    /// Converged once a step is shorter than this, m.
    pub step_tolerance: f64,
    /// `J^T J` condition number above which the geometry is degenerate.
    pub max_condition: f64,
    /// Solutions further than this from the walk are rejected as unbounded, m.
    pub max_distance: f64,
    /// Longest slant distance a fix may have to anchor synchronization, m.
    pub max_anchor_distance: f64,
    /// Largest RMS residual a fix may have to anchor synchronization, m.
    pub max_anchor_rms: f64,
    /// How long a synchronization stays usable, s.
    pub sync_validity: f64,
}

impl Default for LocatorSettings {
    fn default() -> Self {
        Self {
            x_range: (-20.0, 20.0),
            y_max: 30.0,
            seeds: 9,
            max_iterations: 100,
            step_tolerance: 1e-6,
            max_condition: 1e10,
            max_distance: 100.0,
            max_anchor_distance: 8.0,
            max_anchor_rms: 0.005,
            sync_validity: 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFixInput {
    pub d: DisplacementSeries,
    /// Stride, m.
    pub stride: f64,
    /// Speaker height above the receiver plane, m.
    pub height: f64,
}

impl LineFixInput {
    pub fn new(d: DisplacementSeries, stride: f64, height: f64) -> Self {
        Self { d, stride, height }
    }

    fn validate(&self) -> Result<()> {
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::InvalidParams(format!("stride {}", self.stride)));
        }
        if !(self.height.is_finite() && self.height >= 0.0) {
            return Err(Error::InvalidParams(format!("height {}", self.height)));
        }
        if self.d.valid.len() != self.d.d.len() {
            return Err(Error::InvalidParams("validity mask length".into()));
        }
        if self.d.valid_count() < 2 {
            return Err(Error::InsufficientInput(format!(
                "{} usable displacements, need at least 2",
                self.d.valid_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Estimated,
    Synchronized,
    DeadReckoned,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Estimated => "estimated",
            Provenance::Synchronized => "synchronized",
            Provenance::DeadReckoned => "dead_reckoned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    /// Along-track offset of the first step point from the perpendicular foot, m.
    pub x: f64,
    /// Slant perpendicular distance, m.
    pub y: f64,
    pub height: f64,
    pub stride: f64,
    /// Horizontal distance at every step point, m.
    pub horizontal: Vec<f64>,
    /// Horizontal-plane direction of the speaker at every step point, rad,
    /// measured from the walking direction.
    pub psi: Vec<f64>,
    /// Step point timestamps, if known.
    pub step_times: Vec<f64>,
    pub provenance: Provenance,
    /// Sum of squared residuals, m^2.
    pub residual: f64,
    /// Number of residual terms.
    pub terms: usize,
}

impl PositionFix {
    #[allow(clippy::too_many_arguments)]
    fn build(
        x: f64,
        y: f64,
        height: f64,
        stride: f64,
        n_points: usize,
        step_times: Vec<f64>,
        provenance: Provenance,
        residual: f64,
        terms: usize,
    ) -> Self {
        let mut horizontal = Vec::with_capacity(n_points);
        let mut psi = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let a = x + i as f64 * stride;
            let l = (a * a + y * y - height * height).max(0.0).sqrt();
            horizontal.push(l);
            psi.push(if l > 0.0 {
                (-a / l).clamp(-1.0, 1.0).acos()
            } else {
                PI / 2.0
            });
        }
        Self {
            x,
            y,
            height,
            stride,
            horizontal,
            psi,
            step_times,
            provenance,
            residual,
            terms,
        }
    }

    /// Ground coordinates of the speaker with the first step point at the
    /// origin and the walk along `+X`.
    pub fn ground(&self) -> Point2 {
        Point2::new(
            -self.x,
            (self.y * self.y - self.height * self.height)
                .max(0.0)
                .sqrt(),
        )
    }

    /// Slant distance at step point `i`.
    pub fn slant(&self, i: usize) -> f64 {
        let a = self.x + i as f64 * self.stride;
        (a * a + self.y * self.y).sqrt()
    }

    /// Slant distance at time `t`, interpolated between step points.
    pub fn slant_at(&self, t: f64) -> Option<f64> {
        let ts = &self.step_times;
        if ts.len() < 2 || t < ts[0] || t > ts[ts.len() - 1] {
            return None;
        }
        let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1) - 1;
        let u = (t - ts[i]) / (ts[i + 1] - ts[i]);
        let a = self.x + (i as f64 + u) * self.stride;
        Some((a * a + self.y * self.y).sqrt())
    }

    pub fn rms(&self) -> f64 {
        if self.terms == 0 {
            0.0
        } else {
            (self.residual / self.terms as f64).sqrt()
        }
    }
}

/// Position of the speaker's ground projection in the frame of the first
/// walking segment (origin at its start, `X` along it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundFix {
    pub g: Point2,
    pub provenance: Provenance,
    /// Sum of squared residuals, m^2; zero for dead-reckoned fixes.
    pub residual: f64,
}

/// Pulse sending times on the receiver clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncState {
    /// Sending time of the anchoring pulse, s.
    pub t_s: f64,
    /// Sending period as seen by the receiver, s.
    pub period: f64,
    pub valid_until: f64,
}

impl SyncState {
    /// Corrects the period for a transmitter running `offset_hz` fast at `carrier_hz`.
    pub fn with_clock_offset(self, nominal_period: f64, carrier_hz: f64, offset_hz: f64) -> Self {
        Self {
            period: nominal_period * carrier_hz / (carrier_hz + offset_hz),
            ..self
        }
    }
}

/// A straight walking segment for multi-segment solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub d: DisplacementSeries,
    /// Heading relative to the first segment, rad.
    pub zeta: f64,
    pub n_steps: usize,
}

type Residuals<'a> = dyn Fn([f64; 2], &mut Vec<f64>, &mut Vec<[f64; 2]>) + 'a;

struct Minimum {
    p: [f64; 2],
    cost: f64,
    jtj: [f64; 3],
}

fn normal_equations(r: &[f64], j: &[[f64; 2]]) -> ([f64; 3], [f64; 2]) {
    let mut a = [0.0; 3];
    let mut g = [0.0; 2];
    for (e, row) in r.iter().zip(j) {
        a[0] += row[0] * row[0];
        a[1] += row[0] * row[1];
        a[2] += row[1] * row[1];
        g[0] += row[0] * e;
        g[1] += row[1] * e;
    }
    (a, g)
}

/// Damped Gauss-Newton from one seed, with `p[1] >= lower`.
fn levenberg_marquardt(
    f: &Residuals<'_>,
    seed: [f64; 2],
    lower: f64,
    settings: &LocatorSettings,
) -> Option<Minimum> {
    let mut r = Vec::new();
    let mut j = Vec::new();
    let mut p = seed;
    f(p, &mut r, &mut j);
    let mut cost: f64 = r.iter().map(|e| e * e).sum();
    let mut lambda = 1e-3;
    for _ in 0..settings.max_iterations {
        let (a, g) = normal_equations(&r, &j);
        let tiny = 1e-12 * (a[0] + a[2]).max(1e-30);
        loop {
            let a00 = a[0] + lambda * (a[0] + tiny);
            let a11 = a[2] + lambda * (a[2] + tiny);
            let det = a00 * a11 - a[1] * a[1];
            if det == 0.0 || !det.is_finite() {
                return Some(Minimum { p, cost, jtj: a });
            }
            let dx = -(a11 * g[0] - a[1] * g[1]) / det;
            let dy = -(a00 * g[1] - a[1] * g[0]) / det;
            let q = [p[0] + dx, (p[1] + dy).max(lower)];
            let mut r2 = Vec::new();
            let mut j2 = Vec::new();
            f(q, &mut r2, &mut j2);
            let c2: f64 = r2.iter().map(|e| e * e).sum();
            if c2.is_finite() && c2 <= cost {
                let step = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                p = q;
                cost = c2;
                r = r2;
                j = j2;
                lambda = (lambda / 3.0).max(1e-12);
                if step < settings.step_tolerance {
                    let (a, _) = normal_equations(&r, &j);
                    return Some(Minimum { p, cost, jtj: a });
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                // no downhill step left at working precision
                let (a, _) = normal_equations(&r, &j);
                return Some(Minimum { p, cost, jtj: a });
            }
        }
    }
    None
}

fn condition(a: [f64; 3]) -> f64 {
    let tr = a[0] + a[2];
    let det = a[0] * a[2] - a[1] * a[1];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let hi = tr / 2.0 + disc;
    let lo = tr / 2.0 - disc;
    if hi <= 1e-300 || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Multi-start minimization over a seed grid; keeps the lowest cost.
fn multi_start(
    f: &Residuals<'_>,
    xs: (f64, f64),
    ys: (f64, f64),
    lower: f64,
    settings: &LocatorSettings,
) -> Result<Minimum> {
    let n = settings.seeds.max(1);
    let at = |r: (f64, f64), k: usize| {
        if n == 1 {
            0.5 * (r.0 + r.1)
        } else {
            r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64
        }
    };
    let mut best: Option<Minimum> = None;
    for a in 0..n {
        for b in 0..n {
            let seed = [at(xs, a), at(ys, b).max(lower)];
            if let Some(m) = levenberg_marquardt(f, seed, lower, settings) {
                if best.as_ref().is_none_or(|cur| m.cost < cur.cost) {
                    best = Some(m);
                }
            }
        }
    }
    let best = best.ok_or(Error::NonConvergence(settings.max_iterations))?;
    if best.p[0].abs() > settings.max_distance || best.p[1].abs() > settings.max_distance {
        return Err(Error::DegenerateGeometry(format!(
            "minimum runs off to ({:.1}, {:.1})",
            best.p[0], best.p[1]
        )));
    }
    let cond = condition(best.jtj);
    if cond > settings.max_condition {
        return Err(Error::DegenerateGeometry(format!(
            "normal matrix condition {cond:.2e}"
        )));
    }
    Ok(best)
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Residuals `e_i = l_i - l_{i+1} - d_i` and their gradient in `(x, y)`.
fn line_terms(
    d: &DisplacementSeries,
    s: f64,
    p: [f64; 2],
    r: &mut Vec<f64>,
    j: &mut Vec<[f64; 2]>,
) {
    r.clear();
    j.clear();
    let (x, y) = (p[0], p[1]);
    for (i, (&di, &ok)) in d.d.iter().zip(&d.valid).enumerate() {
        if !ok {
            continue;
        }
        let a = x + i as f64 * s;
        let b = a + s;
        let la = (a * a + y * y).sqrt();
        let lb = (b * b + y * y).sqrt();
        r.push(la - lb - di);
        j.push([
            safe_div(a, la) - safe_div(b, lb),
            safe_div(y, la) - safe_div(y, lb),
        ]);
    }
}

/// `sum e_i^2` for the line model.
pub fn line_cost(d: &DisplacementSeries, stride: f64, x: f64, y: f64) -> f64 {
    let (mut r, mut j) = (Vec::new(), Vec::new());
    line_terms(d, stride, [x, y], &mut r, &mut j);
    r.iter().map(|e| e * e).sum()
}

/// Analytic gradient of [`line_cost`].
pub fn line_gradient(d: &DisplacementSeries, stride: f64, x: f64, y: f64) -> [f64; 2] {
    let (mut r, mut j) = (Vec::new(), Vec::new());
    line_terms(d, stride, [x, y], &mut r, &mut j);
    let (_, g) = normal_equations(&r, &j);
    [2.0 * g[0], 2.0 * g[1]]
}

/// Least-squares `(x, y)` for a straight walk.
pub fn solve_line(input: &LineFixInput, settings: &LocatorSettings) -> Result<PositionFix> {
    input.validate()?;
    let (d, s, h) = (&input.d, input.stride, input.height);
    let f = |p: [f64; 2], r: &mut Vec<f64>, j: &mut Vec<[f64; 2]>| line_terms(d, s, p, r, j);
    let best = multi_start(&f, settings.x_range, (h, settings.y_max), h, settings)?;
    Ok(PositionFix::build(
        best.p[0],
        best.p[1],
        h,
        s,
        d.len() + 1,
        d.step_times.clone(),
        Provenance::Estimated,
        best.cost,
        d.valid_count(),
    ))
}

fn chain_points(segments: &[Segment], stride: f64) -> Vec<Vec<Point2>> {
    let mut p = Point2::default();
    segments
        .iter()
        .map(|seg| {
            let (sn, cs) = seg.zeta.sin_cos();
            let mut pts = vec![p];
            for _ in 0..seg.n_steps {
                p = Point2::new(p.x + stride * cs, p.y + stride * sn);
                pts.push(p);
            }
            pts
        })
        .collect()
}

/// Speaker ground position from a chain of straight segments.
///
/// Stride points are laid out by dead reckoning with the given headings; the
/// residuals of all segments are pooled. A chain without a turn cannot tell
/// left from right and reports the solution with `g_y >= 0`.
pub fn solve_multi_segment(
    segments: &[Segment],
    stride: f64,
    height: f64,
    settings: &LocatorSettings,
) -> Result<GroundFix> {
    if !(stride.is_finite() && stride > 0.0) {
        return Err(Error::InvalidParams(format!("stride {stride}")));
    }
    if segments.is_empty() {
        return Err(Error::InsufficientInput("no segments".into()));
    }
    for seg in segments {
        if seg.d.len() != seg.n_steps || seg.d.valid.len() != seg.d.len() {
            return Err(Error::InvalidParams(format!(
                "segment with {} steps carries {} displacements",
                seg.n_steps,
                seg.d.len()
            )));
        }
    }
    let usable: usize = segments.iter().map(|s| s.d.valid_count()).sum();
    if usable < 2 {
        return Err(Error::InsufficientInput(format!(
            "{usable} usable displacements"
        )));
    }
    let points = chain_points(segments, stride);
    let h2 = height * height;
    let f = |g: [f64; 2], r: &mut Vec<f64>, j: &mut Vec<[f64; 2]>| {
        r.clear();
        j.clear();
        for (seg, pts) in segments.iter().zip(&points) {
            for (i, (&di, &ok)) in seg.d.d.iter().zip(&seg.d.valid).enumerate() {
                if !ok {
                    continue;
                }
                let (pa, pb) = (pts[i], pts[i + 1]);
                let (ax, ay) = (pa.x - g[0], pa.y - g[1]);
                let (bx, by) = (pb.x - g[0], pb.y - g[1]);
                let la = (ax * ax + ay * ay + h2).sqrt();
                let lb = (bx * bx + by * by + h2).sqrt();
                r.push(la - lb - di);
                j.push([
                    safe_div(-ax, la) + safe_div(bx, lb),
                    safe_div(-ay, la) + safe_div(by, lb),
                ]);
            }
        }
    };
    let ys = (-settings.y_max, settings.y_max);
    let best = multi_start(&f, settings.x_range, ys, f64::NEG_INFINITY, settings)?;
    let z0 = segments[0].zeta;
    let straight = segments.iter().all(|s| (s.zeta - z0).sin().abs() < 1e-9);
    let gy = if straight && z0.sin().abs() < 1e-9 {
        best.p[1].abs()
    } else {
        best.p[1]
    };
    Ok(GroundFix {
        g: Point2::new(best.p[0], gy),
        provenance: Provenance::Estimated,
        residual: best.cost,
    })
}

/// Sending time of a detected pulse, from a nearby good fix.
///
/// Uses the first arrival that falls inside the fix's step span; the slant
/// distance at that moment is interpolated between step points.
pub fn anchor_sync(
    fix: &PositionFix,
    arrivals: &PulseArrivals,
    params: &WaveformParams,
    settings: &LocatorSettings,
) -> Result<SyncState> {
    anchor_with(fix, arrivals, params, settings, |t| fix.slant_at(t))
}

/// [`anchor_sync`] with the slant distance carried from the step point
/// before the arrival by the tracked phase, which follows the walker within
/// a stride where linear interpolation does not.
pub fn anchor_sync_tracked(
    fix: &PositionFix,
    arrivals: &PulseArrivals,
    track: &PhaseTrack,
    mpr: f64,
    params: &WaveformParams,
    settings: &LocatorSettings,
) -> Result<SyncState> {
    anchor_with(fix, arrivals, params, settings, |t| {
        let ts = &fix.step_times;
        fix.slant_at(t)?;
        let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len()) - 1;
        let moved = mpr * (track.phase_at(t).ok()? - track.phase_at(ts[i]).ok()?);
        Some(fix.slant(i) - moved)
    })
}

fn anchor_with(
    fix: &PositionFix,
    arrivals: &PulseArrivals,
    params: &WaveformParams,
    settings: &LocatorSettings,
    slant_at: impl Fn(f64) -> Option<f64>,
) -> Result<SyncState> {
    if fix.provenance != Provenance::Estimated {
        return Err(Error::NoAnchor(format!(
            "fix is {}",
            fix.provenance.as_str()
        )));
    }
    if fix.rms() > settings.max_anchor_rms {
        return Err(Error::NoAnchor(format!(
            "fix residual {:.4} m RMS above {:.4} m",
            fix.rms(),
            settings.max_anchor_rms
        )));
    }
    let (tau, l) = arrivals
        .arrivals
        .iter()
        .find_map(|&t| slant_at(t).map(|l| (t, l)))
        .ok_or_else(|| Error::NoAnchor("no pulse arrival during the fix".into()))?;
    if l > settings.max_anchor_distance {
        return Err(Error::NoAnchor(format!(
            "fix {l:.2} m away, anchoring needs <= {:.2} m",
            settings.max_anchor_distance
        )));
    }
    let t_s = tau - l / params.speed_of_sound;
    Ok(SyncState {
        t_s,
        period: params.cycle_period,
        valid_until: t_s + settings.sync_validity,
    })
}

/// Slant and horizontal range from one arrival after synchronization.
pub fn sync_range(
    t_r: f64,
    sync: &SyncState,
    height: f64,
    params: &WaveformParams,
) -> Result<(f64, f64)> {
    if !(t_r >= sync.t_s && t_r <= sync.valid_until) {
        return Err(Error::OutOfRange {
            t: t_r,
            start: sync.t_s,
            end: sync.valid_until,
        });
    }
    let v = params.speed_of_sound;
    let base = ((t_r - sync.t_s) / sync.period).floor();
    let fits: Vec<f64> = (-1..=1)
        .map(|dk| {
            let k = base + dk as f64;
            v * (t_r - sync.t_s - k * sync.period)
        })
        .filter(|l| *l > 0.0 && *l < params.max_range)
        .collect();
    if fits.len() != 1 {
        return Err(Error::AmbiguousEpoch(format!(
            "{} epochs fit below {} m",
            fits.len(),
            params.max_range
        )));
    }
    let l = fits[0];
    if l < height {
        return Err(Error::NegativeRange { l, h: height });
    }
    Ok((l, (l * l - height * height).sqrt()))
}

fn direction_terms(d: &DisplacementSeries, s: f64, l1: f64, psi: f64) -> f64 {
    line_cost(d, s, -l1 * psi.cos(), l1 * psi.sin())
}

/// Slant-plane angle `psi_1` for a known first-point distance `l1`.
fn slant_direction(
    l1: f64,
    d: &DisplacementSeries,
    s: f64,
    h: f64,
    settings: &LocatorSettings,
) -> Result<f64> {
    if !(l1 > h) {
        return Err(Error::DegenerateGeometry(format!(
            "range {l1} not above height {h}"
        )));
    }
    if d.valid_count() < 2 {
        return Err(Error::InsufficientInput(format!(
            "{} usable displacements",
            d.valid_count()
        )));
    }
    // y = l1 sin(psi) must stay above h
    let lo = (h / l1).asin();
    let hi = PI - lo;
    let n = 720;
    let cost = |p: f64| direction_terms(d, s, l1, p);
    let mut best = (lo, cost(lo));
    for k in 1..=n {
        let p = lo + (hi - lo) * k as f64 / n as f64;
        let c = cost(p);
        if c < best.1 {
            best = (p, c);
        }
    }
    // golden-section refine inside the bracketing cells
    let cell = (hi - lo) / n as f64;
    let (mut a, mut b) = ((best.0 - cell).max(lo), (best.0 + cell).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (cost(c), cost(e));
    let mut iters = 0;
    while b - a > 1e-12 {
        iters += 1;
        if iters > 2 * settings.max_iterations {
            return Err(Error::NonConvergence(iters));
        }
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = cost(e);
        }
    }
    Ok(0.5 * (a + b))
}

/// Horizontal-plane direction `psi'_1` of the speaker at the first step
/// point, given its slant distance `l1` from synchronized ranging.
pub fn direction_after_sync(
    l1: f64,
    d: &DisplacementSeries,
    stride: f64,
    height: f64,
    settings: &LocatorSettings,
) -> Result<f64> {
    let psi1 = slant_direction(l1, d, stride, height, settings)?;
    let c = l1 * psi1.cos() / (l1 * l1 - height * height).sqrt();
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Full fix from a synchronized range and the step displacements.
pub fn synchronized_fix(
    l1: f64,
    d: &DisplacementSeries,
    stride: f64,
    height: f64,
    settings: &LocatorSettings,
) -> Result<PositionFix> {
    let psi1 = slant_direction(l1, d, stride, height, settings)?;
    let (x, y) = (-l1 * psi1.cos(), l1 * psi1.sin());
    Ok(PositionFix::build(
        x,
        y.max(height),
        height,
        stride,
        d.len() + 1,
        d.step_times.clone(),
        Provenance::Synchronized,
        line_cost(d, stride, x, y),
        d.valid_count(),
    ))
}

/// Moves a ground fix into the walker's frame after the steps taken in
/// `(from_t, to_t]`: origin at the latest step point, `X` along the latest
/// heading.
pub fn dead_reckon(steps: &StepTrace, last_fix: &GroundFix, from_t: f64, to_t: f64) -> GroundFix {
    let taken: Vec<usize> = steps
        .step_times
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &t)| t > from_t && t <= to_t)
        .map(|(i, _)| i)
        .collect();
    let Some(&last) = taken.last() else {
        return *last_fix;
    };
    let first = taken[0];
    let base = steps.heading_at(first - 1);
    // walker motion expressed in the frame it had at from_t
    let (mut px, mut py) = (0.0, 0.0);
    for &i in &taken {
        let rel = steps.heading_at(i) - base;
        px += steps.stride * rel.cos();
        py += steps.stride * rel.sin();
    }
    let turn = steps.heading_at(last) - base;
    let (dx, dy) = (last_fix.g.x - px, last_fix.g.y - py);
    let (sn, cs) = turn.sin_cos();
    GroundFix {
        g: Point2::new(cs * dx + sn * dy, -sn * dx + cs * dy),
        provenance: Provenance::DeadReckoned,
        residual: 0.0,
    }
}

/// Exact displacements for a straight walk, `d_i = l_i - l_{i+1}`.
pub fn line_displacements(x: f64, y: f64, stride: f64, n: usize) -> Vec<f64> {
    let l = |i: usize| {
        let a = x + i as f64 * stride;
        (a * a + y * y).sqrt()
    };
    (0..n).map(|i| l(i) - l(i + 1)).collect()
}
