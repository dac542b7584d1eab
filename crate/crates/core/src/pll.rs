//! Second-order phase-locked loop and the phase-to-displacement conversion.
//!
//! The received carrier is `cos(2*pi*f*t + phi(t))` with
//! `phi(t) = -2*pi*f*l(t)/v`, so tracking `phi` tracks the speaker distance
//! `l` to a small fraction of a wavelength. The loop is the classic
//! mixer / low-pass / proportional-plus-integral / DDS arrangement:
//!
//! * phase detector: `phi_e = LPF(r * gamma1)` with `gamma1 = -2 sin(theta_hat)`,
//!   which leaves `sin(phi - phi_hat)` once the `2f` product is filtered out;
//! * loop filter: `gamma2 = k1 * phi_e`, `gamma3 += k2 * phi_e`;
//! * DDS: `phi_hat += gamma2 + gamma3` on top of the nominal `2*pi*f*Ts` advance.
//!
//! With `k2 = 0` the loop is first order and needs a large `k1` to follow a
//! moving receiver; `gamma3` instead learns the per-sample phase slope
//! (radial speed, or a transmitter frequency error) so `k1` can stay small.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::channel::StepTrace;
use crate::waveform::carrier_phase;
use crate::{Error, Result, SampleStream};

const DETECTOR_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PllConfig {
    /// Proportional gain, rad per unit detector output per sample.
    pub k1: f64,
    /// Integrator gain.
    pub k2: f64,
    /// Nominal carrier, Hz.
    pub carrier_hz: f64,
    pub sample_rate: f64,
    /// Single-pole phase-detector low-pass cutoff, Hz.
    pub lpf_cutoff: f64,
    /// Known transmitter frequency error, Hz, added to the DDS.
    pub freq_offset: f64,
    /// Clamp on `|gamma3|`, rad/sample.
    pub max_slew: f64,
    /// Time constant of the lock metric average, s.
    pub lock_time_constant: f64,
    /// Lock metric above this counts as unlocked.
    pub lock_threshold: f64,
    pub speed_of_sound: f64,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            k1: 2.0e-3,
            k2: 1.5e-6,
            carrier_hz: 19_000.0,
            sample_rate: 44_100.0,
            lpf_cutoff: 2_000.0,
            freq_offset: 0.0,
            max_slew: TAU * 250.0 / 44_100.0,
            lock_time_constant: 0.05,
            lock_threshold: 0.5,
            speed_of_sound: 340.0,
        }
    }
}

impl PllConfig {
    pub fn for_carrier(carrier_hz: f64) -> Self {
        Self {
            carrier_hz,
            ..Self::default()
        }
    }

    /// Same loop with the integrator removed.
    pub fn first_order(k1: f64) -> Self {
        Self {
            k1,
            k2: 0.0,
            ..Self::default()
        }
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn metres_per_radian(&self) -> f64 {
        self.speed_of_sound / (TAU * self.carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "k1 = {} must be positive",
                self.k1
            )));
        }
        if !(self.k2 >= 0.0 && self.k2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "k2 = {} must be >= 0",
                self.k2
            )));
        }
        if !(self.sample_rate > 2.0 * self.carrier_hz) {
            return Err(Error::InvalidParams("sample rate below Nyquist".into()));
        }
        if !(self.lpf_cutoff > 0.0 && self.lpf_cutoff < self.sample_rate / 2.0) {
            return Err(Error::InvalidParams(format!(
                "LPF cutoff {}",
                self.lpf_cutoff
            )));
        }
        Ok(())
    }

    fn lpf_alpha(&self) -> f64 {
        1.0 - (-TAU * self.lpf_cutoff / self.sample_rate).exp()
    }

    fn lock_alpha(&self) -> f64 {
        1.0 - (-1.0 / (self.lock_time_constant * self.sample_rate)).exp()
    }
}

/// Loop state between samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PllState {
    /// Tracked phase relative to the nominal carrier, rad. Never wrapped.
    pub phi_hat: f64,
    /// Local oscillator value used on the last sample.
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub lpf_state: f64,
    /// Smoothed in-phase detector output, near `cos(phi - phi_hat)`.
    pub in_phase: f64,
    /// `1 - in_phase`: about 0 when locked, about 1 while slipping.
    pub lock_metric: f64,
    /// Time of the next sample, s.
    pub t: f64,
}

impl PllState {
    pub fn starting_at(t: f64) -> Self {
        Self {
            t,
            lock_metric: 1.0,
            ..Self::default()
        }
    }

    /// Full oscillator phase (carrier plus tracked offset), reduced to `[0, 2pi)`.
    pub fn dds_phase(&self, config: &PllConfig) -> f64 {
        (carrier_phase(config.carrier_hz + config.freq_offset, self.t) + self.phi_hat)
            .rem_euclid(TAU)
    }
}

/// Advances the loop by one input sample and returns the new `phi_hat`.
pub fn pll_step(state: &mut PllState, sample: f64, config: &PllConfig) -> f64 {
    let theta = carrier_phase(config.carrier_hz + config.freq_offset, state.t) + state.phi_hat;
    state.gamma1 = -2.0 * theta.sin();
    let mixed = sample * state.gamma1;
    state.lpf_state += config.lpf_alpha() * (mixed - state.lpf_state);
    // a levelled carrier keeps the detector within about +-1.5; anything
    // larger is a gain transient and must not wind up the integrator
    let phi_e = state.lpf_state.clamp(-DETECTOR_LIMIT, DETECTOR_LIMIT);
    state.gamma2 = config.k1 * phi_e;
    state.gamma3 = (state.gamma3 + config.k2 * phi_e).clamp(-config.max_slew, config.max_slew);
    state.phi_hat += state.gamma2 + state.gamma3;
    state.in_phase += config.lock_alpha() * (2.0 * sample * theta.cos() - state.in_phase);
    state.lock_metric = 1.0 - state.in_phase;
    state.t += config.sample_period();
    state.phi_hat
}

/// Per-sample loop output over a whole stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    pub start_time: f64,
    pub sample_rate: f64,
    /// Tracked phase `phi_hat` after each sample, rad, unwrapped.
    pub phase: Vec<f64>,
    /// Lock metric after each sample; see [`PllState::lock_metric`].
    pub lock: Vec<f64>,
    /// Integrator value `gamma3` after each sample, rad/sample.
    pub slope: Vec<f64>,
    /// DDS frequency error the loop ran with, Hz.
    pub dds_offset: f64,
}

impl PhaseTrack {
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.phase.len().saturating_sub(1) as f64 / self.sample_rate
    }

    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    fn position(&self, t: f64) -> Result<f64> {
        let u = (t - self.start_time) * self.sample_rate;
        if self.phase.is_empty() || u < -1e-6 || u > (self.phase.len() - 1) as f64 + 1e-6 {
            return Err(Error::OutOfRange {
                t,
                start: self.start_time,
                end: self.end_time(),
            });
        }
        Ok(u.clamp(0.0, (self.phase.len() - 1) as f64))
    }

    /// Tracked phase at time `t`, linearly interpolated.
    pub fn phase_at(&self, t: f64) -> Result<f64> {
        let u = self.position(t)?;
        let i = u.floor() as usize;
        if i + 1 >= self.phase.len() {
            return Ok(self.phase[i]);
        }
        let a = u - i as f64;
        Ok(self.phase[i] + a * (self.phase[i + 1] - self.phase[i]))
    }

    /// Worst lock metric over `[t0, t1]`.
    pub fn max_lock_between(&self, t0: f64, t1: f64) -> Result<f64> {
        let a = self.position(t0)?.floor() as usize;
        let b = self.position(t1)?.ceil() as usize;
        Ok(self.lock[a..=b.min(self.lock.len() - 1)]
            .iter()
            .fold(0.0, |m: f64, v| m.max(*v)))
    }
}

/// Runs the loop over `stream` from a zero initial state.
pub fn track(stream: &SampleStream, config: &PllConfig) -> Result<PhaseTrack> {
    config.validate()?;
    if (stream.sample_rate() - config.sample_rate).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "stream at {} Hz, loop configured for {} Hz",
            stream.sample_rate(),
            config.sample_rate
        )));
    }
    let mut state = PllState::starting_at(stream.start_time());
    let n = stream.len();
    let mut phase = Vec::with_capacity(n);
    let mut lock = Vec::with_capacity(n);
    let mut slope = Vec::with_capacity(n);
    for (i, &x) in stream.samples().iter().enumerate() {
        // keep the clock exact instead of accumulating Ts
        state.t = stream.time_of(i);
        phase.push(pll_step(&mut state, x, config));
        lock.push(state.lock_metric);
        slope.push(state.gamma3);
    }
    Ok(PhaseTrack {
        start_time: stream.start_time(),
        sample_rate: stream.sample_rate(),
        phase,
        lock,
        slope,
        dds_offset: config.freq_offset,
    })
}

/// Orientation calibration applied to raw PLL displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    #[default]
    None,
    /// Approaching the speaker.
    Forward,
    /// Moving away from the speaker.
    Backward,
}

impl Calibration {
    pub const FORWARD_FACTOR: f64 = 1.22;
    pub const BACKWARD_FACTOR: f64 = 1.69;

    pub fn factor(self) -> f64 {
        match self {
            Calibration::None => 1.0,
            Calibration::Forward => Self::FORWARD_FACTOR,
            Calibration::Backward => Self::BACKWARD_FACTOR,
        }
    }

    /// The calibration matching the sign of a raw displacement.
    pub fn for_displacement(d: f64) -> Self {
        if d > 0.0 {
            Calibration::Forward
        } else if d < 0.0 {
            Calibration::Backward
        } else {
            Calibration::None
        }
    }
}

/// `v / (2 pi f) * delta_phi`, times the calibration factor.
pub fn phase_to_displacement(delta_phi: f64, config: &PllConfig, calibration: Calibration) -> f64 {
    config.metres_per_radian() * delta_phi * calibration.factor()
}

/// Per-step distance changes `d_i = l_i - l_{i+1}`; positive when approaching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSeries {
    pub d: Vec<f64>,
    /// Timestamps of the step points; one more than `d` when non-empty.
    pub step_times: Vec<f64>,
    /// False for steps whose phase track lost lock.
    pub valid: Vec<bool>,
}

impl DisplacementSeries {
    pub fn new(d: Vec<f64>, step_times: Vec<f64>) -> Self {
        let valid = vec![true; d.len()];
        Self {
            d,
            step_times,
            valid,
        }
    }

    /// Series without timing, e.g. for solver inputs built by hand.
    pub fn from_values(d: Vec<f64>) -> Self {
        Self::new(d, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of steps that passed the lock gate.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Converts the phase track into per-step displacements at the step timestamps.
pub fn displacements_at_steps(
    track: &PhaseTrack,
    steps: &StepTrace,
    config: &PllConfig,
) -> Result<DisplacementSeries> {
    let times = &steps.step_times;
    let phases = times
        .iter()
        .map(|&t| track.phase_at(t))
        .collect::<Result<Vec<_>>>()?;
    let mut d = Vec::with_capacity(times.len().saturating_sub(1));
    let mut valid = Vec::with_capacity(d.capacity());
    for i in 1..times.len() {
        d.push(phase_to_displacement(
            phases[i] - phases[i - 1],
            config,
            Calibration::None,
        ));
        valid.push(track.max_lock_between(times[i - 1], times[i])? <= config.lock_threshold);
    }
    Ok(DisplacementSeries {
        d,
        step_times: times.clone(),
        valid,
    })
}

/// Transmitter frequency error seen while the receiver is known to be static.
///
/// The integrator settles at the per-sample phase slope, so its mean over the
/// window divided by `2 pi Ts` is the residual offset; the DDS offset the loop
/// already ran with is added back.
pub fn estimate_freq_offset(
    track: &PhaseTrack,
    window: (f64, f64),
    config: &PllConfig,
) -> Result<f64> {
    let (t0, t1) = window;
    if !(t1 - t0 >= 2.0 - 1e-9) {
        return Err(Error::InvalidParams(format!(
            "static window {:.3} s shorter than 2 s",
            t1 - t0
        )));
    }
    let a = ((t0 - track.start_time) * track.sample_rate).round();
    let b = ((t1 - track.start_time) * track.sample_rate).round();
    if a < 0.0 || b as usize > track.len() {
        return Err(Error::OutOfRange {
            t: if a < 0.0 { t0 } else { t1 },
            start: track.start_time,
            end: track.end_time(),
        });
    }
    let (a, b) = (a as usize, (b as usize).min(track.len()));
    let mean_lock = track.lock[a..b].iter().sum::<f64>() / (b - a) as f64;
    if mean_lock > config.lock_threshold {
        return Err(Error::NotConverged(format!(
            "mean lock metric {mean_lock:.3} rad over the static window"
        )));
    }
    let mean_slope = track.slope[a..b].iter().sum::<f64>() / (b - a) as f64;
    Ok(track.dds_offset + mean_slope * track.sample_rate / TAU)
}

/// Counts cycle slips of `tracked` against a reference phase on the same grid.
///
/// The error is smoothed over `smooth` samples, the initial offset removed,
/// and every crossing to a new nearest multiple of `2 pi` counted once.
pub fn count_slips(tracked: &[f64], reference: &[f64], settle: usize, smooth: usize) -> usize {
    let n = tracked.len().min(reference.len());
    if n <= settle + smooth {
        return 0;
    }
    let err: Vec<f64> = (settle..n).map(|i| tracked[i] - reference[i]).collect();
    let w = smooth.max(1);
    let mut acc: f64 = err[..w].iter().sum();
    let base = acc / w as f64;
    let mut level = 0i64;
    let mut slips = 0;
    for i in w..err.len() {
        acc += err[i] - err[i - w];
        let e = acc / w as f64 - base;
        // hysteresis: require the error to pass the midpoint by a margin
        let target = (e / TAU).round() as i64;
        if target != level && (e - level as f64 * TAU).abs() > PI * 1.25 {
            slips += (target - level).unsigned_abs() as usize;
            level = target;
        }
    }
    slips
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn carrier(phi: impl Fn(f64) -> f64, secs: f64) -> SampleStream {
        let fs = 44_100.0;
        let n = (secs * fs) as usize;
        SampleStream::new(
            (0..n)
                .map(|k| {
                    let t = k as f64 / fs;
                    (TAU * 19_000.0 * t + phi(t)).cos()
                })
                .collect(),
            fs,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn static_lock_settles() {
        let cfg = PllConfig::default();
        let tr = track(&carrier(|_| 1.0, 2.0), &cfg).unwrap();
        let last = tr.len() - 1;
        assert_abs_diff_eq!(tr.phase[last], 1.0, epsilon = 0.01);
        assert!(tr.slope[last].abs() < 1e-6);
        assert!(tr.lock[last] < 0.05);
    }

    #[test]
    fn ramp_learned_by_integrator() {
        let cfg = PllConfig::default();
        // 1 m/s radial speed
        let rate = TAU * 19_000.0 / 340.0;
        // speed ramps up over the first 0.5 s
        let phi = move |t: f64| {
            if t < 0.5 {
                rate * t * t
            } else {
                rate * (t - 0.25)
            }
        };
        let tr = track(&carrier(phi, 3.0), &cfg).unwrap();
        let per_sample = rate / 44_100.0;
        let last = tr.len() - 1;
        assert_abs_diff_eq!(tr.slope[last], per_sample, epsilon = per_sample * 0.01);
        let truth = phi(last as f64 / 44_100.0);
        assert_abs_diff_eq!(tr.phase[last], truth, epsilon = 0.05);
    }

    #[test]
    fn free_running_on_silence() {
        let cfg = PllConfig::default();
        let mut st = PllState::default();
        let mut phases = Vec::new();
        for _ in 0..1000 {
            pll_step(&mut st, 0.0, &cfg);
            phases.push(st.dds_phase(&cfg));
        }
        assert_eq!(st.phi_hat, 0.0);
        let step = TAU * 19_000.0 / 44_100.0;
        for w in phases.windows(2) {
            assert_abs_diff_eq!((w[1] - w[0]).rem_euclid(TAU), step, epsilon = 1e-9);
        }
    }

    #[test]
    fn detector_product_identity() {
        // r * gamma1 = sin(phi - phi_hat) - sin(2 theta + phi + phi_hat)
        for &(a, phi, phi_hat) in &[
            (0.3_f64, 0.2_f64, -0.4_f64),
            (1.7, 2.0, 1.5),
            (5.1, -1.0, 0.3),
        ] {
            let r: f64 = (a + phi).cos();
            let g1 = -2.0 * (a + phi_hat).sin();
            let rhs = (phi - phi_hat).sin() - (2.0 * a + phi + phi_hat).sin();
            assert_abs_diff_eq!(r * g1, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_conversion() {
        let cfg = PllConfig::default();
        let one = phase_to_displacement(TAU, &cfg, Calibration::None);
        assert_abs_diff_eq!(one, 340.0 / 19_000.0, epsilon = 1e-15);
        assert_abs_diff_eq!(one, 0.01789, epsilon = 1e-5);
        assert_eq!(phase_to_displacement(0.0, &cfg, Calibration::Forward), 0.0);
        assert_abs_diff_eq!(
            phase_to_displacement(TAU, &cfg, Calibration::Forward),
            0.02183,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            phase_to_displacement(-TAU, &cfg, Calibration::Backward),
            -1.69 * one,
            epsilon = 1e-15
        );
        assert_eq!(Calibration::for_displacement(-0.1), Calibration::Backward);
    }

    #[test]
    fn config_validation() {
        assert!(PllConfig {
            k1: 0.0,
            ..PllConfig::default()
        }
        .validate()
        .is_err());
        assert!(PllConfig {
            k2: -1.0,
            ..PllConfig::default()
        }
        .validate()
        .is_err());
        assert!(PllConfig::first_order(0.01).validate().is_ok());
    }

    #[test]
    fn steps_outside_track() {
        let cfg = PllConfig::default();
        let tr = track(&carrier(|_| 0.0, 0.5), &cfg).unwrap();
        let steps = StepTrace::straight(0.1, 0.5, 2, 0.6);
        assert!(matches!(
            displacements_at_steps(&tr, &steps, &cfg),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn offset_window_checks() {
        let cfg = PllConfig::default();
        let tr = track(&carrier(|_| 0.0, 1.0), &cfg).unwrap();
        assert!(matches!(
            estimate_freq_offset(&tr, (0.0, 0.9), &cfg),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn slip_counter() {
        let n = 10_000;
        let reference = vec![0.0; n];
        let mut tracked = vec![0.3; n];
        for v in &mut tracked[4000..] {
            *v += TAU;
        }
        for v in &mut tracked[7000..] {
            *v -= 2.0 * TAU;
        }
        assert_eq!(count_slips(&tracked, &reference, 100, 50), 3);
        assert_eq!(count_slips(&reference, &reference, 100, 50), 0);
    }
}
