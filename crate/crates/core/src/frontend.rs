//! Receiver preprocessing: carrier channel selection and amplitude levelling.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::channel::bessel_i0;
use crate::par::{self, Exec};
use crate::{Error, Result, SampleStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpfSpec {
    pub center: f64,
    pub half_width: f64,
    /// Minimum stopband attenuation, dB.
    pub stop_attenuation: f64,
    /// Odd tap count.
    pub taps: usize,
}

impl Default for BpfSpec {
    fn default() -> Self {
        Self {
            center: 19_000.0,
            half_width: 500.0,
            stop_attenuation: 60.0,
            taps: 255,
        }
    }
}

impl BpfSpec {
    pub fn centered(center: f64) -> Self {
        Self {
            center,
            ..Self::default()
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.half_width > 0.0 && self.center - self.half_width > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "lower edge {} Hz must be positive",
                self.center - self.half_width
            )));
        }
        if self.center + self.half_width >= sample_rate / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "upper edge {} Hz at or above Nyquist {} Hz",
                self.center + self.half_width,
                sample_rate / 2.0
            )));
        }
        if self.taps < 3 || self.taps.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "tap count {} must be odd",
                self.taps
            )));
        }
        if !(self.stop_attenuation > 0.0) {
            return Err(Error::InvalidSpec(
                "stop attenuation must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Linear-phase FIR band-pass (Kaiser-windowed, modulated low-pass prototype).
#[derive(Debug, Clone)]
pub struct BandPass {
    taps: Vec<f64>,
    sample_rate: f64,
}

impl BandPass {
    pub fn design(spec: &BpfSpec, sample_rate: f64) -> Result<Self> {
        spec.validate(sample_rate)?;
        let a = spec.stop_attenuation;
        let beta = if a > 50.0 {
            0.1102 * (a - 8.7)
        } else if a >= 21.0 {
            0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
        } else {
            0.0
        };
        let n = spec.taps;
        let m = (n - 1) as f64 / 2.0;
        let fc = spec.half_width / sample_rate;
        let w0 = 2.0 * PI * spec.center / sample_rate;
        let norm = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..n)
            .map(|k| {
                let x = k as f64 - m;
                let lp = if x == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * PI * fc * x).sin() / (PI * x)
                };
                let r = x / m;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
                2.0 * lp * w * (w0 * x).cos()
            })
            .collect();
        let g = Self::gain_of(&taps, spec.center / sample_rate);
        for t in &mut taps {
            *t /= g;
        }
        Ok(Self { taps, sample_rate })
    }

    fn gain_of(taps: &[f64], f_norm: f64) -> f64 {
        let (re, im) = taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                let ph = -2.0 * PI * f_norm * k as f64;
                (re + h * ph.cos(), im + h * ph.sin())
            });
        re.hypot(im)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Magnitude response at `freq` Hz.
    pub fn response(&self, freq: f64) -> f64 {
        Self::gain_of(&self.taps, freq / self.sample_rate)
    }

    /// Group delay of the causal filter, samples. [`BandPass::apply`] removes it.
    pub fn group_delay_samples(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    pub fn group_delay(&self) -> f64 {
        self.group_delay_samples() as f64 / self.sample_rate
    }

    /// Filters the whole stream with the group delay compensated, so output
    /// sample `n` lines up in time with input sample `n`. Edges see zeros.
    pub fn apply(&self, stream: &SampleStream, exec: Exec) -> Result<SampleStream> {
        if (stream.sample_rate() - self.sample_rate).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "filter designed for {} Hz, stream at {} Hz",
                self.sample_rate,
                stream.sample_rate()
            )));
        }
        let x = stream.samples();
        let len = x.len() as i64;
        let m = self.group_delay_samples() as i64;
        let mut out = vec![0.0; x.len()];
        par::fill_chunks(exec, &mut out, 1 << 13, |off, chunk| {
            for (i, y) in chunk.iter_mut().enumerate() {
                let n = (off + i) as i64;
                let lo = (n + m - len + 1).max(0);
                let hi = (n + m).min(2 * m);
                let mut acc = 0.0;
                for k in lo..=hi {
                    acc += self.taps[k as usize] * x[(n + m - k) as usize];
                }
                *y = acc;
            }
        });
        stream.with_samples(out)
    }
}

/// Band-pass filter with linear phase and compensated delay.
pub fn band_pass(stream: &SampleStream, spec: &BpfSpec) -> Result<SampleStream> {
    BandPass::design(spec, stream.sample_rate())?.apply(stream, Exec::default())
}

/// Sliding-RMS automatic gain control.
///
/// The gain aims at `target_rms / rms(last window)`, moves at most
/// `slew_db_per_ms` per millisecond, and freezes while the window RMS is
/// below `silence_rms`.
#[derive(Debug, Clone)]
pub struct Agc {
    target_rms: f64,
    silence_rms: f64,
    max_step: f64,
    window: usize,
    buf: VecDeque<f64>,
    sum_sq: f64,
    gain: Option<f64>,
    since_resum: usize,
}

impl Agc {
    pub const DEFAULT_WINDOW: f64 = 0.010;
    pub const SLEW_DB_PER_MS: f64 = 3.0;
    pub const SILENCE_RMS: f64 = 1e-4;

    pub fn new(window_s: f64, sample_rate: f64) -> Self {
        let per_sample_db = Self::SLEW_DB_PER_MS * 1000.0 / sample_rate;
        let window = ((window_s * sample_rate).round() as usize).max(1);
        Self {
            target_rms: FRAC_1_SQRT_2,
            silence_rms: Self::SILENCE_RMS,
            max_step: 10f64.powf(per_sample_db / 20.0),
            window,
            buf: VecDeque::with_capacity(window),
            sum_sq: 0.0,
            gain: None,
            since_resum: 0,
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain.unwrap_or(1.0)
    }

    pub fn process(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            let old = self.buf.pop_front().unwrap_or(0.0);
            self.sum_sq -= old * old;
        }
        self.buf.push_back(x);
        self.sum_sq += x * x;
        self.since_resum += 1;
        if self.since_resum >= self.window {
            self.sum_sq = self.buf.iter().map(|v| v * v).sum();
            self.since_resum = 0;
        }
        let rms = (self.sum_sq.max(0.0) / self.buf.len() as f64).sqrt();
        // wait for a full window so a signal onset cannot set a huge gain
        if rms >= self.silence_rms && (self.gain.is_some() || self.buf.len() == self.window) {
            let want = self.target_rms / rms;
            self.gain = Some(match self.gain {
                None => want,
                Some(g) => want.clamp(g / self.max_step, g * self.max_step),
            });
        }
        x * self.gain()
    }
}

/// Levels the stream to a unit-amplitude carrier.
pub fn agc(stream: &SampleStream, window: f64) -> Result<SampleStream> {
    if !(window > 0.0) {
        return Err(Error::InvalidParams(format!("AGC window {window}")));
    }
    let mut a = Agc::new(window, stream.sample_rate());
    let out = stream.samples().iter().map(|&x| a.process(x)).collect();
    stream.with_samples(out)
}

/// Band-pass followed by AGC, the usual receiver front end for one carrier.
pub fn front_end(stream: &SampleStream, spec: &BpfSpec, exec: Exec) -> Result<SampleStream> {
    let bp = BandPass::design(spec, stream.sample_rate())?.apply(stream, exec)?;
    agc(&bp, Agc::DEFAULT_WINDOW)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FS: f64 = 44_100.0;

    fn tone(freq: f64, amp: f64, secs: f64) -> SampleStream {
        let n = (secs * FS) as usize;
        SampleStream::new(
            (0..n)
                .map(|k| amp * (2.0 * PI * freq * k as f64 / FS).cos())
                .collect(),
            FS,
            0.0,
        )
        .unwrap()
    }

    /// Amplitude over the middle of the stream, away from filter edges.
    fn mid_amplitude(s: &SampleStream) -> f64 {
        let x = s.samples();
        let a = x.len() / 4;
        let b = 3 * x.len() / 4;
        (2.0 * x[a..b].iter().map(|v| v * v).sum::<f64>() / (b - a) as f64).sqrt()
    }

    #[test]
    fn passband_identity() {
        let out = band_pass(&tone(19_000.0, 1.0, 0.2), &BpfSpec::default()).unwrap();
        assert_abs_diff_eq!(mid_amplitude(&out), 1.0, epsilon = 0.01);
    }

    #[test]
    fn neighbour_rejected() {
        let out = band_pass(&tone(18_000.0, 1.0, 0.2), &BpfSpec::default()).unwrap();
        let db = 20.0 * mid_amplitude(&out).log10();
        assert!(db <= -40.0, "18 kHz only {db:.1} dB down");
        let bp = BandPass::design(&BpfSpec::default(), FS).unwrap();
        assert!(20.0 * bp.response(18_000.0).log10() <= -40.0);
        assert!(20.0 * bp.response(20_000.0).log10() <= -40.0);
    }

    #[test]
    fn linear_phase_and_zero_delay() {
        let bp = BandPass::design(&BpfSpec::default(), FS).unwrap();
        let h = bp.taps();
        for k in 0..h.len() {
            assert_abs_diff_eq!(h[k], h[h.len() - 1 - k], epsilon = 1e-15);
        }
        assert_eq!(bp.group_delay_samples(), 127);
        let input = tone(19_000.0, 1.0, 0.1);
        let out = bp.apply(&input, Exec::Sequential).unwrap();
        for n in 1000..1100 {
            assert_abs_diff_eq!(out.samples()[n], input.samples()[n], epsilon = 0.01);
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = BpfSpec {
            center: 300.0,
            ..BpfSpec::default()
        };
        assert!(matches!(
            band_pass(&tone(19_000.0, 1.0, 0.01), &bad),
            Err(Error::InvalidSpec(_))
        ));
        let bad = BpfSpec {
            center: 21_800.0,
            ..BpfSpec::default()
        };
        assert!(BandPass::design(&bad, FS).is_err());
        let bad = BpfSpec {
            taps: 254,
            ..BpfSpec::default()
        };
        assert!(BandPass::design(&bad, FS).is_err());
    }

    #[test]
    fn agc_levels_quiet_and_loud() {
        for amp in [0.01, 1.0] {
            let out = agc(&tone(19_000.0, amp, 0.2), 0.01).unwrap();
            assert_abs_diff_eq!(mid_amplitude(&out), 1.0, epsilon = 0.05);
        }
    }

    #[test]
    fn agc_flattens_decay() {
        let n = (2.0 * FS) as usize;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let env = 1.0 - 0.9 * k as f64 / n as f64;
                env * (2.0 * PI * 19_000.0 * k as f64 / FS).cos()
            })
            .collect();
        let out = agc(&SampleStream::new(x, FS, 0.0).unwrap(), 0.01).unwrap();
        let y = out.samples();
        let settle = (0.05 * FS) as usize;
        let win = 441;
        for start in (settle..n - win).step_by(win) {
            let a = (2.0 * y[start..start + win].iter().map(|v| v * v).sum::<f64>() / win as f64)
                .sqrt();
            assert!((a - 1.0).abs() < 0.1, "envelope {a} at {start}");
        }
    }

    #[test]
    fn agc_holds_through_silence() {
        let mut x: Vec<f64> = tone(19_000.0, 0.5, 0.1).into_samples();
        x.extend(std::iter::repeat_n(0.0, 4410));
        let mut a = Agc::new(0.01, FS);
        for v in &x[..4410 + 882] {
            a.process(*v);
        }
        let g = a.gain();
        for v in &x[4410 + 882..] {
            assert_eq!(a.process(*v), 0.0);
        }
        assert_eq!(a.gain(), g);
        assert!(g.is_finite());
    }

    #[test]
    fn agc_keeps_sign() {
        let s = tone(19_000.0, 0.3, 0.05);
        let out = agc(&s, 0.01).unwrap();
        for (a, b) in s.samples().iter().zip(out.samples()) {
            assert_eq!(a.signum(), b.signum());
        }
    }

    #[test]
    fn agc_rejects_bad_window() {
        assert!(agc(&tone(19_000.0, 1.0, 0.01), 0.0).is_err());
    }
}
