//! Acoustic propagation from a fixed speaker to a moving receiver.
//!
//! This is the ground truth the rest of the pipeline is checked against: the
//! receiver position is known at every instant, so distances, displacements
//! and arrival times can be computed exactly and compared with what the
//! receiver chain recovers from the samples alone.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::pll::DisplacementSeries;
use crate::waveform::WaveformParams;
use crate::{Error, Result, SampleStream};

/// Bandwidth the SNR is referred to: the receiver's band-pass width.
pub const SNR_REFERENCE_BANDWIDTH_HZ: f64 = 1000.0;

const NOISE_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn lerp(self, other: Point2, a: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * a,
            self.y + (other.y - self.y) * a,
        )
    }
}

/// Speaker location `(X, Y)` on the ground plane plus its height above the
/// receiver's plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Speaker {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub height: f64,
}

impl Speaker {
    pub fn ground(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Slant distance to a receiver at `p`.
    pub fn distance_to(&self, p: Point2) -> f64 {
        let dx = self.x - p.x;
        let dy = self.y - p.y;
        (dx * dx + dy * dy + self.height * self.height).sqrt()
    }
}

/// A change of walking direction applied to the step with index `step_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub step_index: usize,
    /// Counter-clockwise rotation, rad.
    pub angle: f64,
}

/// Heel-strike timestamps of a walk with fixed stride.
///
/// `step_times[0]` is the instant the walker stands on `start_point`; every
/// later timestamp lands one stride further along the current heading. Turns
/// rotate the heading before the step they are attached to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepTrace {
    pub step_times: Vec<f64>,
    pub stride: f64,
    #[serde(default)]
    pub segment_turns: Vec<Turn>,
    #[serde(default)]
    pub start_point: Point2,
    /// Initial heading, rad. Zero walks along +X.
    #[serde(default)]
    pub start_heading: f64,
}

impl StepTrace {
    /// `n_steps` strides in a straight line, one every `period` seconds from `t0`.
    pub fn straight(t0: f64, period: f64, n_steps: usize, stride: f64) -> Self {
        Self {
            step_times: (0..=n_steps).map(|i| t0 + i as f64 * period).collect(),
            stride,
            segment_turns: Vec::new(),
            start_point: Point2::default(),
            start_heading: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::InvalidParams(format!("stride {}", self.stride)));
        }
        if self.step_times.iter().any(|t| !t.is_finite())
            || self.step_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParams(
                "step times must be finite and strictly increasing".into(),
            ));
        }
        if self
            .segment_turns
            .iter()
            .any(|t| t.step_index == 0 || !t.angle.is_finite())
        {
            return Err(Error::InvalidParams(
                "turns must attach to a step index >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Heading of step `i` (the move from point `i-1` to point `i`).
    pub fn heading_at(&self, i: usize) -> f64 {
        self.start_heading
            + self
                .segment_turns
                .iter()
                .filter(|t| t.step_index <= i)
                .map(|t| t.angle)
                .sum::<f64>()
    }

    /// Ground positions at every timestamp.
    pub fn points(&self) -> Vec<Point2> {
        let mut pts = Vec::with_capacity(self.step_times.len());
        let mut p = self.start_point;
        for i in 0..self.step_times.len() {
            if i > 0 {
                let h = self.heading_at(i);
                p = Point2::new(p.x + self.stride * h.cos(), p.y + self.stride * h.sin());
            }
            pts.push(p);
        }
        if pts.is_empty() {
            pts.push(self.start_point);
        }
        pts
    }
}

/// Timed receiver position for free-form motion (hand gestures, test sweeps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    /// Walking; constant velocity between heel strikes.
    Steps { trace: StepTrace },
    /// Arbitrary waypoints. With `smooth`, each leg eases in and out so the
    /// velocity is continuous and zero at every waypoint.
    Waypoints {
        points: Vec<Waypoint>,
        #[serde(default)]
        smooth: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub speaker: Speaker,
    pub motion: Motion,
    #[serde(default)]
    pub seed: u64,
    /// Simulated span `[0, duration]`, s.
    pub duration: f64,
}

impl Scenario {
    pub fn walking(speaker: Speaker, trace: StepTrace, duration: f64, seed: u64) -> Self {
        Self {
            speaker,
            motion: Motion::Steps { trace },
            seed,
            duration,
        }
    }

    /// Receiver parked at `at` for `duration` seconds.
    pub fn stationary(speaker: Speaker, at: Point2, duration: f64, seed: u64) -> Self {
        Self {
            speaker,
            motion: Motion::Waypoints {
                points: vec![Waypoint {
                    t: 0.0,
                    x: at.x,
                    y: at.y,
                }],
                smooth: false,
            },
            seed,
            duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speaker.height >= 0.0 && self.speaker.height.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "speaker height {}",
                self.speaker.height
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidParams(format!("duration {}", self.duration)));
        }
        match &self.motion {
            Motion::Steps { trace } => trace.validate(),
            Motion::Waypoints { points, .. } => {
                if points.is_empty() {
                    return Err(Error::InvalidParams("no waypoints".into()));
                }
                if points.windows(2).any(|w| w[1].t <= w[0].t) {
                    return Err(Error::InvalidParams("waypoint times must increase".into()));
                }
                Ok(())
            }
        }
    }

    pub fn steps(&self) -> Option<&StepTrace> {
        match &self.motion {
            Motion::Steps { trace } => Some(trace),
            Motion::Waypoints { .. } => None,
        }
    }

    /// Timed knots of the receiver path.
    pub fn knots(&self) -> Vec<(f64, Point2)> {
        match &self.motion {
            Motion::Steps { trace } => {
                let pts = trace.points();
                if trace.step_times.is_empty() {
                    vec![(0.0, pts[0])]
                } else {
                    trace.step_times.iter().copied().zip(pts).collect()
                }
            }
            Motion::Waypoints { points, .. } => points
                .iter()
                .map(|w| (w.t, Point2::new(w.x, w.y)))
                .collect(),
        }
    }

    fn easing(&self) -> Easing {
        match self.motion {
            Motion::Steps { .. } => Easing::WalkEnds,
            Motion::Waypoints { smooth: true, .. } => Easing::Cosine,
            Motion::Waypoints { smooth: false, .. } => Easing::Linear,
        }
    }

    /// Receiver ground position at `t`; static before the first and after the last knot.
    pub fn position(&self, t: f64) -> Result<Point2> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::OutOfRange {
                t,
                start: 0.0,
                end: self.duration,
            });
        }
        Ok(position_on(&self.knots(), self.easing(), t))
    }

    /// Along-track / slant-distance coordinates `(x, y)` of the first walking
    /// segment: `x` is the signed offset of the start point from the foot of
    /// the perpendicular, `y` the slant distance from that foot to the speaker.
    pub fn line_coordinates(&self) -> (f64, f64) {
        let (start, heading) = match &self.motion {
            Motion::Steps { trace } => (trace.start_point, trace.heading_at(1)),
            Motion::Waypoints { points, .. } => {
                let p0 = Point2::new(points[0].x, points[0].y);
                let h = points
                    .get(1)
                    .map_or(0.0, |p1| (p1.y - p0.y).atan2(p1.x - p0.x));
                (p0, h)
            }
        };
        let dx = self.speaker.x - start.x;
        let dy = self.speaker.y - start.y;
        let along = dx * heading.cos() + dy * heading.sin();
        let across = -dx * heading.sin() + dy * heading.cos();
        let h = self.speaker.height;
        (-along, (across * across + h * h).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Easing {
    Linear,
    /// Zero velocity at every knot.
    Cosine,
    /// Constant velocity between knots. The walker speeds up from rest over
    /// the step period before the first knot and slows to rest over the one
    /// after the last, with a smoothstep velocity profile.
    WalkEnds,
}

fn position_on(knots: &[(f64, Point2)], easing: Easing, t: f64) -> Point2 {
    if easing == Easing::WalkEnds && knots.len() >= 2 {
        return walk_position(knots, t);
    }
    let first = knots[0];
    if t <= first.0 {
        return first.1;
    }
    let idx = knots.partition_point(|k| k.0 <= t);
    if idx >= knots.len() {
        return knots[knots.len() - 1].1;
    }
    let (t0, p0) = knots[idx - 1];
    let (t1, p1) = knots[idx];
    let u = (t - t0) / (t1 - t0);
    let a = match easing {
        Easing::Cosine => 0.5 * (1.0 - (PI * u).cos()),
        _ => u,
    };
    p0.lerp(p1, a)
}

/// Distance covered by `x` of a unit ramp whose speed rises as smoothstep.
fn ramp_distance(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x - 0.5 * x * x * x * x
}

fn walk_position(knots: &[(f64, Point2)], t: f64) -> Point2 {
    let n = knots.len();
    let (t0, p0) = knots[0];
    let (tn, pn) = knots[n - 1];
    if t < t0 {
        let (t1, p1) = knots[1];
        // no room to speed up before t = 0 means a standing start
        let ramp = (t1 - t0).min(t0);
        if ramp <= 0.0 {
            return p0;
        }
        let back = ramp * (0.5 - ramp_distance((t - (t0 - ramp)) / ramp)) / (t1 - t0);
        return p0.lerp(p1, -back);
    }
    if t >= tn {
        let (tp, pp) = knots[n - 2];
        let x = (t - tn) / (tn - tp);
        return pp.lerp(pn, 1.0 + x.min(1.0) - ramp_distance(x));
    }
    let idx = knots.partition_point(|k| k.0 <= t);
    let (ta, pa) = knots[idx - 1];
    let (tb, pb) = knots[idx];
    pa.lerp(pb, (t - ta) / (tb - ta))
}

/// Slant distance from the speaker to the receiver at time `t`.
pub fn distance_profile(scenario: &Scenario, t: f64) -> Result<f64> {
    let p = scenario.position(t)?;
    Ok(scenario.speaker.distance_to(p))
}

/// One reflected copy of the direct signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Echo {
    /// Delay beyond the direct path, s.
    pub extra_delay: f64,
    /// Amplitude relative to the direct path.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    /// In-band SNR of the direct path at the scenario start, dB. `None` is noiseless.
    pub snr_db: Option<f64>,
    /// Echoes in addition to the direct path (which always has gain 1).
    pub paths: Vec<Echo>,
    /// Transmitter carrier error, Hz; the transmitter clock runs at `(f + offset) / f`.
    pub freq_offset: f64,
    /// Amplitude follows `(d0 / d(t))^exponent`; 1 is spherical spreading, 0 disables.
    pub amplitude_exponent: f64,
    /// Fractional-delay interpolator length.
    pub interp_taps: usize,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            snr_db: None,
            paths: Vec::new(),
            freq_offset: 0.0,
            amplitude_exponent: 1.0,
            interp_taps: 32,
        }
    }
}

impl ChannelModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_snr(snr_db: f64) -> Self {
        Self {
            snr_db: Some(snr_db),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.paths {
            if !(e.extra_delay > 0.0 && e.extra_delay.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "echo delay {} must be positive",
                    e.extra_delay
                )));
            }
            if !(e.gain > 0.0 && e.gain <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "echo gain {} outside (0, 1]",
                    e.gain
                )));
            }
        }
        if self.interp_taps < 4 || !self.interp_taps.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "interpolator taps {} must be even and >= 4",
                self.interp_taps
            )));
        }
        if !self.freq_offset.is_finite() || !self.amplitude_exponent.is_finite() {
            return Err(Error::InvalidParams("non-finite channel parameter".into()));
        }
        Ok(())
    }

    /// Per-sample noise standard deviation for a unit-amplitude reference carrier.
    pub fn noise_sigma(&self, sample_rate: f64) -> f64 {
        match self.snr_db {
            None => 0.0,
            Some(snr) => {
                let signal_power = 0.5;
                let in_band = signal_power / 10f64.powf(snr / 10.0);
                (in_band * (sample_rate / 2.0) / SNR_REFERENCE_BANDWIDTH_HZ).sqrt()
            }
        }
    }
}

/// Kaiser-windowed sinc fractional-delay interpolator, tabulated on a fine
/// grid of fractional offsets.
#[derive(Debug, Clone)]
pub struct SincInterpolator {
    half: usize,
    phases: usize,
    table: Vec<f64>,
}

impl SincInterpolator {
    const BETA: f64 = 5.0;

    pub fn new(taps: usize) -> Self {
        let half = taps / 2;
        let phases = 1024;
        let mut table = Vec::with_capacity((phases + 1) * taps);
        let norm = bessel_i0(Self::BETA);
        for p in 0..=phases {
            let mu = p as f64 / phases as f64;
            for k in 0..taps {
                // tap k multiplies x[i0 - half + 1 + k]
                let x = (k as f64 - half as f64 + 1.0) - mu;
                let r = x / half as f64;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(Self::BETA * (1.0 - r * r).sqrt()) / norm
                };
                table.push(sinc(x) * w);
            }
        }
        Self {
            half,
            phases,
            table,
        }
    }

    pub fn taps(&self) -> usize {
        2 * self.half
    }

    /// Value of `x` at fractional index `u`; zero outside the buffer.
    pub fn sample(&self, x: &[f64], u: f64) -> f64 {
        let i0 = u.floor();
        let mu = u - i0;
        let i0 = i0 as i64;
        let pos = mu * self.phases as f64;
        let p = (pos.floor() as usize).min(self.phases - 1);
        let a = pos - p as f64;
        let taps = self.taps();
        let row0 = &self.table[p * taps..(p + 1) * taps];
        let row1 = &self.table[(p + 1) * taps..(p + 2) * taps];
        let base = i0 - self.half as i64 + 1;
        let mut acc = 0.0;
        for k in 0..taps {
            let idx = base + k as i64;
            if idx < 0 || idx as usize >= x.len() {
                continue;
            }
            let h = row0[k] + a * (row1[k] - row0[k]);
            acc += x[idx as usize] * h;
        }
        acc
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Propagates `tx` over the whole scenario span `[0, duration)`.
///
/// `params` supplies the speed of sound and the nominal carrier the clock
/// offset is expressed against.
pub fn propagate(
    tx: &SampleStream,
    params: &WaveformParams,
    scenario: &Scenario,
    model: &ChannelModel,
) -> Result<SampleStream> {
    propagate_window(
        tx,
        params,
        scenario,
        model,
        0.0,
        scenario.duration,
        Exec::default(),
    )
}

/// Received signal over `[t0, t1)`.
///
/// Sample `n` at time `t` is the sum over paths of
/// `gain * a(t) * tx((1 + offset/f) * (t - d(t)/v - extra))`, where `tx` is
/// indexed on the transmitter's clock, plus white Gaussian noise. Source times
/// before the start of `tx` read as silence; source times past its end are an
/// error.
pub fn propagate_window(
    tx: &SampleStream,
    params: &WaveformParams,
    scenario: &Scenario,
    model: &ChannelModel,
    t0: f64,
    t1: f64,
    exec: Exec,
) -> Result<SampleStream> {
    scenario.validate()?;
    model.validate()?;
    if !(t0 >= 0.0 && t1 <= scenario.duration + 1e-9 && t1 >= t0) {
        return Err(Error::OutOfRange {
            t: if t0 < 0.0 { t0 } else { t1 },
            start: 0.0,
            end: scenario.duration,
        });
    }
    if (tx.sample_rate() - params.sample_rate).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "stream rate {} Hz differs from parameter rate {} Hz",
            tx.sample_rate(),
            params.sample_rate
        )));
    }
    let fs = tx.sample_rate();
    let n = ((t1 - t0) * fs).round() as usize;
    let knots = scenario.knots();
    let easing = scenario.easing();
    let speaker = scenario.speaker;
    let v = params.speed_of_sound;
    let clock = 1.0 + model.freq_offset / params.carrier_hz;
    let d_ref = speaker
        .distance_to(position_on(&knots, easing, 0.0))
        .max(1e-6);

    let distances: Vec<f64> = par::map_range(exec, n, |i| {
        let t = (t0 + i as f64 / fs).min(scenario.duration);
        speaker.distance_to(position_on(&knots, easing, t))
    });

    let interp = SincInterpolator::new(model.interp_taps);
    let tx_end = tx.start_time() + (tx.len() as f64 - interp.half as f64) / fs;
    if let Some(last) = distances.last() {
        let latest = clock * (t0 + (n - 1) as f64 / fs - last / v);
        let worst = distances
            .iter()
            .enumerate()
            .map(|(i, d)| clock * (t0 + i as f64 / fs - d / v))
            .fold(latest, f64::max);
        if worst > tx_end {
            return Err(Error::InsufficientInput(format!(
                "needs transmit samples up to {worst:.4} s, have until {tx_end:.4} s"
            )));
        }
    }

    let sigma = model.noise_sigma(fs);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut paths = vec![Echo {
        extra_delay: 0.0,
        gain: 1.0,
    }];
    paths.extend(model.paths.iter().copied());
    let x = tx.samples();
    let mut out = vec![0.0; n];
    par::fill_chunks(exec, &mut out, NOISE_CHUNK, |off, chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream((off / NOISE_CHUNK) as u64);
        for (i, y) in chunk.iter_mut().enumerate() {
            let k = off + i;
            let t = t0 + k as f64 / fs;
            let d = distances[k];
            let amp = (d_ref / d).powf(model.amplitude_exponent);
            let mut acc = 0.0;
            for p in &paths {
                let src = clock * (t - d / v - p.extra_delay);
                let u = (src - tx.start_time()) * fs;
                acc += p.gain * interp.sample(x, u);
            }
            *y = amp * acc;
            if sigma > 0.0 {
                *y += sigma * noise.sample(&mut rng);
            }
        }
    });
    SampleStream::new(out, fs, t0)
}

/// Exact per-step displacements `l_i - l_{i+1}` from geometry.
pub fn ideal_displacements(scenario: &Scenario) -> DisplacementSeries {
    let knots = scenario.knots();
    let l: Vec<f64> = knots
        .iter()
        .map(|(_, p)| scenario.speaker.distance_to(*p))
        .collect();
    let d = l.windows(2).map(|w| w[0] - w[1]).collect::<Vec<_>>();
    let times = if knots.len() >= 2 {
        knots.iter().map(|k| k.0).collect()
    } else {
        Vec::new()
    };
    DisplacementSeries::new(d, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn walk(x: f64, y: f64, h: f64, n: usize) -> Scenario {
        let trace = StepTrace::straight(0.5, 0.5, n, 0.6);
        let end = trace.step_times.last().copied().unwrap() + 0.5;
        Scenario::walking(Speaker { x, y, height: h }, trace, end, 1)
    }

    #[test]
    fn perpendicular_foot() {
        let s = Scenario::stationary(
            Speaker {
                x: 0.0,
                y: 4.0,
                height: 0.0,
            },
            Point2::default(),
            1.0,
            0,
        );
        assert_abs_diff_eq!(distance_profile(&s, 0.5).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(distance_profile(&s, 1.0).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn step_distances_closed_form() {
        let s = walk(4.0, 4.0, 0.0, 5);
        // l'_i = sqrt(y^2 + (x + (i-1)s)^2) with x = -4, y = 4
        let l1 = distance_profile(&s, 0.5).unwrap();
        let l2 = distance_profile(&s, 1.0).unwrap();
        assert_abs_diff_eq!(l1, 5.6569, epsilon = 1e-4);
        assert_abs_diff_eq!(l2, 5.2498, epsilon = 1e-4);
        assert_abs_diff_eq!(l1, (16.0f64 + 16.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l2, (16.0f64 + 3.4 * 3.4).sqrt(), epsilon = 1e-12);
        // mid-walk strides run at constant speed
        let mid = distance_profile(&s, 1.25).unwrap();
        assert_abs_diff_eq!(mid, (16.0f64 + 3.1 * 3.1).sqrt(), epsilon = 1e-12);
        let early = distance_profile(&s, 0.55).unwrap();
        assert_abs_diff_eq!(early, (16.0f64 + 3.94 * 3.94).sqrt(), epsilon = 1e-12);
        // speeding up over the step period before the first step point
        let start = s.position(0.0).unwrap();
        assert_abs_diff_eq!(start.x, -0.3, epsilon = 1e-12);
        let before = s.position(0.25).unwrap();
        assert!(before.x > -0.3 && before.x < -0.15);
        // and coming to rest half a stride past the last one
        let stop = s.position(s.duration).unwrap();
        assert_abs_diff_eq!(stop.x, 5.0 * 0.6 + 0.3, epsilon = 1e-12);
        assert!(matches!(
            distance_profile(&s, 100.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn static_profile_constant() {
        let s = Scenario::stationary(
            Speaker {
                x: 3.0,
                y: -2.0,
                height: 1.0,
            },
            Point2::new(1.0, 1.0),
            2.0,
            0,
        );
        let d0 = distance_profile(&s, 0.0).unwrap();
        for k in 0..20 {
            assert_eq!(distance_profile(&s, k as f64 * 0.1).unwrap(), d0);
        }
    }

    #[test]
    fn ideal_displacement_examples() {
        let d = ideal_displacements(&walk(4.0, 4.0, 0.0, 3));
        assert_abs_diff_eq!(d.d[0], 0.4071, epsilon = 1e-4);
        assert_abs_diff_eq!(
            d.d[0],
            32f64.sqrt() - (16.0f64 + 3.4 * 3.4).sqrt(),
            epsilon = 1e-12
        );

        // start 0.6 m before the foot: x = -s, steps straddle the perpendicular
        let d = ideal_displacements(&walk(0.6, 4.0, 0.0, 2));
        let want = (16.0f64 + 0.36).sqrt() - 4.0;
        assert_abs_diff_eq!(d.d[0], want, epsilon = 1e-12);
        assert_abs_diff_eq!(d.d[0], 0.0448, epsilon = 1e-4);
        assert_abs_diff_eq!(d.d[1], -d.d[0], epsilon = 1e-12);

        // walking straight away from a speaker behind the start point
        let d = ideal_displacements(&walk(-2.0, 0.0, 0.0, 6));
        for v in &d.d {
            assert_abs_diff_eq!(*v, -0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn line_coordinates_follow_convention() {
        let (x, y) = walk(4.0, 4.0, 0.0, 3).line_coordinates();
        assert_abs_diff_eq!(x, -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 4.0, epsilon = 1e-12);
        let (x, y) = walk(2.0, 3.0, 4.0, 3).line_coordinates();
        assert_abs_diff_eq!(x, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn turns_rotate_heading() {
        let trace = StepTrace {
            step_times: vec![0.0, 0.5, 1.0, 1.5],
            stride: 1.0,
            segment_turns: vec![Turn {
                step_index: 2,
                angle: PI / 2.0,
            }],
            start_point: Point2::default(),
            start_heading: 0.0,
        };
        let pts = trace.points();
        assert_abs_diff_eq!(pts[1].x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2].x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2].y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[3].y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolator_reproduces_tone_phase() {
        let fs = 44_100.0;
        let f = 19_000.0;
        let x: Vec<f64> = (0..4096)
            .map(|n| (2.0 * PI * f * n as f64 / fs).cos())
            .collect();
        let interp = SincInterpolator::new(32);
        for k in 0..200 {
            let u = 1000.0 + k as f64 * 0.173;
            let want = (2.0 * PI * f * u / fs).cos();
            assert_abs_diff_eq!(interp.sample(&x, u), want, epsilon = 5e-3);
        }
    }

    #[test]
    fn invalid_models() {
        let mut m = ChannelModel::default();
        m.paths.push(Echo {
            extra_delay: -0.001,
            gain: 0.5,
        });
        assert!(m.validate().is_err());
        let mut m = ChannelModel::default();
        m.paths.push(Echo {
            extra_delay: 0.001,
            gain: 1.5,
        });
        assert!(m.validate().is_err());
    }
}
