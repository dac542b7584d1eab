//! Transmit waveform: a constant-envelope carrier whose phase is briefly
//! modulated by three half-sine pulses at the end of every cycle.
//!
//! Within cycle `k` the carrier is unmodulated on `[k*T2, k*T2 + T1)`; pulses
//! start at `k*T2 + T1 + j*T3` for `j = 0, 1, 2` and add a phase offset of
//! `pi * sin(pi * (t - tau) / Tp)` for `Tp` seconds. The offset starts and ends
//! at zero, so a slow phase tracker sees an almost clean carrier while a
//! matched filter sees a sharp correlation peak.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::{Error, Result, SampleStream};

/// Pulses sent back-to-back in each cycle.
pub const PULSES_PER_CYCLE: usize = 3;

/// Lowest inaudible carrier frequency.
pub const MIN_CARRIER_HZ: f64 = 17_000.0;
/// Highest carrier a phone microphone is expected to pick up.
pub const MAX_CARRIER_HZ: f64 = 24_000.0;

/// Rounded pulse bandwidth used for the concurrency budget. `pi / Tp` with
/// `Tp = 7 ms` is about 449; the budget arithmetic uses this rounded figure
/// as a fixed constant rather than deriving it.
pub const NOMINAL_PULSE_BANDWIDTH_HZ: f64 = 460.0;

/// Number of carriers that fit between [`MIN_CARRIER_HZ`] and [`MAX_CARRIER_HZ`].
pub fn max_concurrent_carriers() -> usize {
    ((MAX_CARRIER_HZ - MIN_CARRIER_HZ) / NOMINAL_PULSE_BANDWIDTH_HZ).floor() as usize
}

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformParams {
    /// Carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Sample rate, Hz. The sample period is its inverse.
    pub sample_rate: f64,
    /// Pulse duration `Tp`, s.
    pub pulse_duration: f64,
    /// Unmodulated carrier span at the start of each cycle `T1`, s.
    pub carrier_only: f64,
    /// Cycle period `T2`, s.
    pub cycle_period: f64,
    /// Start-to-start spacing of adjacent pulses `T3`, s.
    pub pulse_spacing: f64,
    /// Largest speaker distance that must stay unambiguous, m.
    pub max_range: f64,
    /// Speed of sound, m/s.
    pub speed_of_sound: f64,
}

impl Default for WaveformParams {
    fn default() -> Self {
        Self {
            carrier_hz: 19_000.0,
            sample_rate: 44_100.0,
            pulse_duration: 0.007,
            carrier_only: 0.16,
            cycle_period: 0.25,
            pulse_spacing: 0.03,
            max_range: 85.0,
            speed_of_sound: 340.0,
        }
    }
}

impl WaveformParams {
    /// Default timing on a different carrier.
    pub fn with_carrier(carrier_hz: f64) -> Self {
        Self {
            carrier_hz,
            ..Self::default()
        }
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Samples in one pulse window, truncated.
    pub fn pulse_len(&self) -> usize {
        (self.pulse_duration * self.sample_rate + 1e-9).floor() as usize
    }

    /// Cycle period in samples (not necessarily an integer).
    pub fn cycle_samples(&self) -> f64 {
        self.cycle_period * self.sample_rate
    }

    /// Pulse spacing in samples, rounded.
    pub fn spacing_samples(&self) -> usize {
        (self.pulse_spacing * self.sample_rate).round() as usize
    }

    /// Metres of path length per radian of carrier phase.
    pub fn metres_per_radian(&self) -> f64 {
        self.speed_of_sound / (TAU * self.carrier_hz)
    }

    /// `pi / Tp`, the pulse bandwidth estimate used for spectrum budgeting.
    pub fn pulse_bandwidth(&self) -> f64 {
        PI / self.pulse_duration
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.carrier_hz,
            self.sample_rate,
            self.pulse_duration,
            self.carrier_only,
            self.cycle_period,
            self.pulse_spacing,
            self.max_range,
            self.speed_of_sound,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams(
                "all timing and rate values must be finite and positive".into(),
            ));
        }
        if !(MIN_CARRIER_HZ..=MAX_CARRIER_HZ).contains(&self.carrier_hz) {
            return Err(Error::InvalidParams(format!(
                "carrier {} Hz outside [{MIN_CARRIER_HZ}, {MAX_CARRIER_HZ}]",
                self.carrier_hz
            )));
        }
        if self.sample_rate <= 2.0 * self.carrier_hz {
            return Err(Error::InvalidParams(format!(
                "sample rate {} Hz does not exceed twice the carrier",
                self.sample_rate
            )));
        }
        let expected_t1 = self.cycle_period - PULSES_PER_CYCLE as f64 * self.pulse_spacing;
        if (self.carrier_only - expected_t1).abs() > TIME_EPS {
            return Err(Error::InvalidParams(format!(
                "T1 = {} but T2 - 3*T3 = {expected_t1}",
                self.carrier_only
            )));
        }
        if self.pulse_spacing <= self.pulse_duration {
            return Err(Error::InvalidParams(format!(
                "pulse spacing {} s must exceed pulse duration {} s",
                self.pulse_spacing, self.pulse_duration
            )));
        }
        if self.speed_of_sound * self.cycle_period < self.max_range * (1.0 - 1e-12) {
            return Err(Error::InvalidParams(format!(
                "cycle covers {} m but max range is {} m",
                self.speed_of_sound * self.cycle_period,
                self.max_range
            )));
        }
        Ok(())
    }

    /// Phase offset `pi * sin(pi * (t - tau) / Tp)` for `t` inside the pulse, else 0.
    pub fn pulse_phase(&self, t_in_pulse: f64) -> f64 {
        if (0.0..=self.pulse_duration).contains(&t_in_pulse) {
            PI * (PI * t_in_pulse / self.pulse_duration).sin()
        } else {
            0.0
        }
    }
}

/// Ordered pulse start times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub tau: Vec<f64>,
    pub cycle_period: f64,
    pub pulses_per_cycle: usize,
}

impl PulseSchedule {
    pub fn empty(params: &WaveformParams) -> Self {
        Self {
            tau: Vec::new(),
            cycle_period: params.cycle_period,
            pulses_per_cycle: PULSES_PER_CYCLE,
        }
    }

    /// All pulse starts in `[t0, t1)`.
    pub fn covering(params: &WaveformParams, t0: f64, t1: f64) -> Result<Self> {
        params.validate()?;
        if !(t0.is_finite() && t1.is_finite()) {
            return Err(Error::InvalidParams("non-finite schedule bounds".into()));
        }
        let mut tau = Vec::new();
        if t1 > t0 {
            // A pulse from the previous cycle may still be running at t0, so
            // start one cycle early and filter.
            let first = (t0 / params.cycle_period).floor() as i64 - 1;
            let mut k = first;
            loop {
                let base = k as f64 * params.cycle_period + params.carrier_only;
                if base >= t1 {
                    break;
                }
                for j in 0..PULSES_PER_CYCLE {
                    let t = base + j as f64 * params.pulse_spacing;
                    if t >= t0 - TIME_EPS && t < t1 - TIME_EPS && t >= -TIME_EPS {
                        tau.push(t.max(0.0));
                    }
                }
                k += 1;
            }
        }
        Ok(Self {
            tau,
            cycle_period: params.cycle_period,
            pulses_per_cycle: PULSES_PER_CYCLE,
        })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Start time of the pulse whose window contains `t`.
    pub fn active_pulse(&self, t: f64, pulse_duration: f64) -> Option<f64> {
        let idx = self.tau.partition_point(|&tau| tau <= t);
        if idx == 0 {
            return None;
        }
        let tau = self.tau[idx - 1];
        (t - tau <= pulse_duration).then_some(tau)
    }
}

/// Pulse starts in `[0, duration)`.
pub fn build_pulse_schedule(params: &WaveformParams, duration: f64) -> Result<PulseSchedule> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidParams(format!("duration {duration}")));
    }
    PulseSchedule::covering(params, 0.0, duration)
}

/// Synthesizes `duration` seconds starting at t = 0.
pub fn synthesize(
    params: &WaveformParams,
    schedule: &PulseSchedule,
    duration: f64,
) -> Result<SampleStream> {
    synthesize_span(params, schedule, 0.0, duration, Exec::default())
}

/// Synthesizes the transmit signal over `[start, start + duration)` on the
/// transmitter's own clock.
pub fn synthesize_span(
    params: &WaveformParams,
    schedule: &PulseSchedule,
    start: f64,
    duration: f64,
    exec: Exec,
) -> Result<SampleStream> {
    params.validate()?;
    if !(duration >= 0.0) || !start.is_finite() {
        return Err(Error::InvalidParams(format!(
            "span start {start}, duration {duration}"
        )));
    }
    if (schedule.cycle_period - params.cycle_period).abs() > TIME_EPS
        || schedule.tau.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidParams(
            "schedule does not match parameters".into(),
        ));
    }
    let n = (duration * params.sample_rate).round() as usize;
    let mut out = vec![0.0; n];
    par::fill_chunks(exec, &mut out, 1 << 14, |off, chunk| {
        for (i, v) in chunk.iter_mut().enumerate() {
            let t = start + (off + i) as f64 / params.sample_rate;
            let offset = schedule
                .active_pulse(t, params.pulse_duration)
                .map_or(0.0, |tau| params.pulse_phase(t - tau));
            *v = (carrier_phase(params.carrier_hz, t) + offset).cos();
        }
    });
    SampleStream::new(out, params.sample_rate, start)
}

/// `2*pi*f*t` reduced to `[0, 2*pi)`.
pub fn carrier_phase(freq: f64, t: f64) -> f64 {
    let cycles = freq * t;
    TAU * (cycles - cycles.floor())
}
