//! Synchronization pulse detection.
//!
//! The score `m(k)` correlates the received samples with the expected pulse
//! shape starting at sample `k`, using the carrier phase held by the PLL as
//! the template reference. Because the loop barely reacts to a pulse, the
//! template stays aligned with the carrier and `m` swings from about
//! `-0.15 * L` (no pulse, `L/2 * J0(pi)`) to `+0.5 * L` (aligned pulse).
//! Weak or moving cases sum the score at the known pulse spacing (`m1`) and
//! cycle period (`m2`); a static receiver can fold many cycles together
//! (`m3`), which also separates echoes.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::pll::PhaseTrack;
use crate::waveform::{carrier_phase, WaveformParams};
use crate::{Error, Result, SampleStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreLevel {
    Raw,
    M1,
    M2,
    M3,
}

impl ScoreLevel {
    fn name(self) -> &'static str {
        match self {
            ScoreLevel::Raw => "m",
            ScoreLevel::M1 => "m1",
            ScoreLevel::M2 => "m2",
            ScoreLevel::M3 => "m3",
        }
    }
}

/// One score per sample position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    /// Time of `values[0]`. For folded (`m3`) series this is the offset
    /// within the cycle, i.e. zero.
    pub start_time: f64,
    pub sample_rate: f64,
    pub values: Vec<f64>,
    pub level: ScoreLevel,
}

impl ScoreSeries {
    pub fn time_of(&self, k: f64) -> f64 {
        self.start_time + k / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn with_values(&self, values: Vec<f64>, level: ScoreLevel) -> Self {
        Self {
            start_time: self.start_time,
            sample_rate: self.sample_rate,
            values,
            level,
        }
    }
}

/// Carrier phase used to build the expected pulse.
#[derive(Debug, Clone, Copy)]
pub enum PhaseReference<'a> {
    /// One locked phase for the whole window.
    Fixed(f64),
    /// The loop's phase at each window start, advanced at its frequency.
    Track(&'a PhaseTrack),
}

/// `m(k) = sum_{n < L} r(k+n) cos(2 pi f t_{k+n} + phi_r + pi sin(pi n Ts / Tp))`.
///
/// Positions whose window runs past the end of the stream sum the samples
/// that exist.
pub fn matched_score(
    stream: &SampleStream,
    reference: PhaseReference<'_>,
    params: &WaveformParams,
    exec: Exec,
) -> Result<ScoreSeries> {
    params.validate()?;
    if let PhaseReference::Track(tr) = reference {
        if tr.len() != stream.len()
            || (tr.start_time - stream.start_time()).abs() > 0.5 / stream.sample_rate()
        {
            return Err(Error::InvalidParams(
                "phase track and stream are on different grids".into(),
            ));
        }
    }
    let l = params.pulse_len();
    let ts = stream.sample_period();
    let template: Vec<(f64, f64)> = (0..l)
        .map(|n| {
            let s = PI * (PI * n as f64 * ts / params.pulse_duration).sin();
            (s.cos(), s.sin())
        })
        .collect();
    // Re(x(i) e^{j(carrier_i + s + phi)}), with phi extrapolated from the
    // window start at the loop's frequency: the loop reacts to each pulse,
    // and following it inside the window drags the peak early.
    let x = stream.samples();
    let mixed: Vec<(f64, f64)> = par::map_range(exec, x.len(), |i| {
        let theta = carrier_phase(params.carrier_hz, stream.time_of(i));
        (x[i] * theta.cos(), x[i] * theta.sin())
    });
    // the double-frequency image ripples across the broad peak
    let h = baseband_lowpass(BASEBAND_CUTOFF_HZ / stream.sample_rate());
    let half = (h.len() / 2) as i64;
    let n = mixed.len() as i64;
    let iq: Vec<(f64, f64)> = par::map_range(exec, mixed.len(), |i| {
        let mut acc = (0.0, 0.0);
        for (k, w) in h.iter().enumerate() {
            let j = i as i64 + k as i64 - half;
            if (0..n).contains(&j) {
                acc.0 += w * mixed[j as usize].0;
                acc.1 += w * mixed[j as usize].1;
            }
        }
        acc
    });
    let mut values = vec![0.0; x.len()];
    par::fill_chunks(exec, &mut values, 1 << 12, |off, chunk| {
        for (j, m) in chunk.iter_mut().enumerate() {
            let k = off + j;
            let end = (k + l).min(iq.len());
            let (phi, rate) = match reference {
                PhaseReference::Fixed(p) => (p, 0.0),
                PhaseReference::Track(tr) => (
                    tr.phase[k],
                    tr.slope[k] + TAU * tr.dds_offset / tr.sample_rate,
                ),
            };
            let (step_c, step_s) = (rate.cos(), rate.sin());
            let (mut rc, mut rs) = (phi.cos(), phi.sin());
            let mut acc = 0.0;
            for ((i, q), (c, s)) in iq[k..end].iter().zip(&template) {
                // e^{j(s + phi_n)}
                let (wc, ws) = (c * rc - s * rs, c * rs + s * rc);
                acc += i * wc - q * ws;
                (rc, rs) = (rc * step_c - rs * step_s, rc * step_s + rs * step_c);
            }
            *m = acc;
        }
    });
    Ok(ScoreSeries {
        start_time: stream.start_time(),
        sample_rate: stream.sample_rate(),
        values,
        level: ScoreLevel::Raw,
    })
}

const BASEBAND_CUTOFF_HZ: f64 = 2_000.0;
const BASEBAND_TAPS: usize = 31;

/// Hamming-windowed sinc low-pass, unit DC gain, cutoff as a fraction of fs.
fn baseband_lowpass(fc: f64) -> Vec<f64> {
    let m = (BASEBAND_TAPS - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..BASEBAND_TAPS)
        .map(|k| {
            let x = k as f64 - m;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (TAU * fc * x).sin() / (PI * x)
            };
            sinc * (0.54 + 0.46 * (PI * x / m).cos())
        })
        .collect();
    let g: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= g);
    h
}

fn three_tap(values: &[f64], lag: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let mut s = values[k];
            if k >= lag {
                s += values[k - lag];
            }
            if k + lag < n {
                s += values[k + lag];
            }
            s
        })
        .collect()
}

/// `m1(t) = m(t - T3) + m(t) + m(t + T3)` from a raw score, or
/// `m2(t) = m1(t - T2) + m1(t) + m1(t + T2)` from an `m1` score.
pub fn aggregate(
    score: &ScoreSeries,
    params: &WaveformParams,
    level: ScoreLevel,
) -> Result<ScoreSeries> {
    let (expected, lag) = match level {
        ScoreLevel::M1 => (ScoreLevel::Raw, params.pulse_spacing),
        ScoreLevel::M2 => (ScoreLevel::M1, params.cycle_period),
        other => {
            return Err(Error::WrongLevel {
                expected: "m1 or m2 target".into(),
                got: other.name().into(),
            })
        }
    };
    if score.level != expected {
        return Err(Error::WrongLevel {
            expected: expected.name().into(),
            got: score.level.name().into(),
        });
    }
    let lag = (lag * score.sample_rate).round() as usize;
    Ok(score.with_values(three_tap(&score.values, lag), level))
}

/// Folds `n_cycles` cycles of a score modulo the cycle period.
///
/// Bins are indexed by absolute time modulo `T2`, so the folded peaks do not
/// depend on where the accumulation starts. The result has one cycle of bins
/// with `start_time = 0`.
pub fn static_accumulate(
    score: &ScoreSeries,
    params: &WaveformParams,
    n_cycles: usize,
) -> Result<ScoreSeries> {
    let bins = params.cycle_samples().round() as usize;
    if bins == 0 || n_cycles == 0 {
        return Err(Error::InvalidParams("empty fold".into()));
    }
    let span = (bins * n_cycles).min(score.values.len());
    let mut folded = vec![0.0; bins];
    for (k, v) in score.values[..span].iter().enumerate() {
        let t = score.time_of(k as f64);
        let pos = (t.rem_euclid(params.cycle_period) / params.cycle_period * bins as f64).round()
            as usize
            % bins;
        folded[pos] += v;
    }
    Ok(ScoreSeries {
        start_time: 0.0,
        sample_rate: score.sample_rate,
        values: folded,
        level: ScoreLevel::M3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdPolicy {
    /// Peak must exceed `mean + k_sigma * std` of its epoch.
    pub k_sigma: f64,
    /// Epoch length, s. Folded series are always one epoch.
    pub epoch: f64,
    /// A candidate must be the largest value within this many samples.
    pub min_separation: usize,
    pub max_candidates: usize,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            k_sigma: 4.0,
            epoch: 0.25,
            min_separation: 154,
            max_candidates: 8,
        }
    }
}

impl ThresholdPolicy {
    pub fn for_params(params: &WaveformParams) -> Self {
        Self {
            epoch: params.cycle_period,
            min_separation: params.pulse_len() / 2,
            ..Self::default()
        }
    }
}

/// Pulse arrivals found in a score series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseArrivals {
    /// Strongest candidate per epoch that had any, s.
    pub arrivals: Vec<f64>,
    /// Score at each arrival.
    pub scores: Vec<f64>,
    /// All candidates per epoch, time-sorted; empty epochs are kept.
    pub candidates: Vec<Vec<f64>>,
}

/// Threshold-crossing local maxima, refined with a parabola through the peak
/// and its neighbours.
pub fn detect_pulses(score: &ScoreSeries, policy: &ThresholdPolicy) -> Result<PulseArrivals> {
    let v = &score.values;
    let n = v.len();
    let epoch_len = if score.level == ScoreLevel::M3 {
        n.max(1)
    } else {
        ((policy.epoch * score.sample_rate).round() as usize).max(1)
    };
    let n_epochs = n.div_ceil(epoch_len);
    let sep = policy.min_separation.max(1);
    let mut arrivals = Vec::new();
    let mut scores = Vec::new();
    let mut candidates = Vec::with_capacity(n_epochs);
    for e in 0..n_epochs {
        let a = e * epoch_len;
        let b = ((e + 1) * epoch_len).min(n);
        let slice = &v[a..b];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        let var = slice.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / slice.len() as f64;
        let thr = mean + policy.k_sigma * var.sqrt();
        let mut found: Vec<(f64, f64)> = Vec::new();
        for k in a..b {
            if v[k] <= thr || var == 0.0 {
                continue;
            }
            let lo = k.saturating_sub(sep);
            let hi = (k + sep).min(n - 1);
            // strict on the left so a flat top yields one peak
            let is_peak =
                v[lo..k].iter().all(|x| *x < v[k]) && v[k + 1..=hi].iter().all(|x| *x <= v[k]);
            if !is_peak {
                continue;
            }
            let frac = if k > 0 && k + 1 < n {
                let (y0, y1, y2) = (v[k - 1], v[k], v[k + 1]);
                let den = y0 - 2.0 * y1 + y2;
                if den < 0.0 {
                    (0.5 * (y0 - y2) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            found.push((score.time_of(k as f64 + frac), v[k]));
        }
        found.sort_by(|x, y| y.1.total_cmp(&x.1));
        found.truncate(policy.max_candidates);
        if let Some(best) = found.first() {
            arrivals.push(best.0);
            scores.push(best.1);
        }
        let mut times: Vec<f64> = found.iter().map(|f| f.0).collect();
        times.sort_by(f64::total_cmp);
        candidates.push(times);
    }
    if arrivals.is_empty() {
        return Err(Error::NoDetection);
    }
    Ok(PulseArrivals {
        arrivals,
        scores,
        candidates,
    })
}

/// Picks the candidate pair whose time-of-flight difference best explains
/// the PLL displacement `d` between two static endpoints.
///
/// Candidates are arrival offsets within the cycle (e.g. from a folded
/// score), so the flight-time difference is taken modulo `T2`; the range
/// bound `l_m = v T2` keeps that unambiguous. Pairs whose mismatch
/// `v |wrap(t_a - t_b - d / v)|` is within `tie_tolerance` metres of the best
/// are treated as ties and resolved to the earliest `t_a` (then `t_b`): the
/// direct path arrives first. "Earliest" is [`cycle_offset`], the delay
/// after the cycle's first pulse, so a late echo folded past `T2` does not
/// count as early.
pub fn resolve_multipath(
    cands_a: &[f64],
    cands_b: &[f64],
    d: f64,
    params: &WaveformParams,
    tie_tolerance: f64,
) -> Result<(f64, f64)> {
    if cands_a.is_empty() || cands_b.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let v = params.speed_of_sound;
    let period = params.cycle_period;
    let mut a: Vec<f64> = cands_a.to_vec();
    let mut b: Vec<f64> = cands_b.to_vec();
    let order = |x: &f64, y: &f64| {
        cycle_offset(*x, params)
            .total_cmp(&cycle_offset(*y, params))
            .then(x.total_cmp(y))
    };
    a.sort_by(order);
    b.sort_by(order);
    // b by position on the cycle, for circular nearest-neighbour search
    let mut ring: Vec<(f64, usize)> = b
        .iter()
        .enumerate()
        .map(|(j, t)| (t.rem_euclid(period), j))
        .collect();
    ring.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mismatch = |ta: f64, tb: f64| v * wrap_to_cycle(ta - tb - d / v, 0.0, period).abs();
    let nearest = |ta: f64| -> f64 {
        let target = (ta - d / v).rem_euclid(period);
        let i = ring.partition_point(|x| x.0 < target);
        let n = ring.len();
        // neighbours on both sides, wrapping at the ends
        [(i + n - 1) % n, i % n]
            .iter()
            .map(|&k| mismatch(ta, b[ring[k].1]))
            .fold(f64::INFINITY, f64::min)
    };
    let best: Vec<f64> = a.iter().map(|&ta| nearest(ta)).collect();
    let global = best.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = global + tie_tolerance.max(0.0);
    let ia = best
        .iter()
        .position(|m| *m <= limit)
        .expect("the minimum is within its own tolerance");
    let ta = a[ia];
    let tb = *b
        .iter()
        .find(|&&tb| mismatch(ta, tb) <= limit)
        .expect("the nearest candidate is admissible");
    Ok((ta, tb))
}

/// Delay of `t` after the first pulse start of its cycle, in `[0, T2)`.
pub fn cycle_offset(t: f64, params: &WaveformParams) -> f64 {
    (t - params.carrier_only).rem_euclid(params.cycle_period)
}

/// Unwrapped arrival time nearest to an expected time, modulo the cycle.
pub fn wrap_to_cycle(t: f64, reference: f64, period: f64) -> f64 {
    reference + (t - reference + period / 2.0).rem_euclid(period) - period / 2.0
}

/// Wraps a phase to `(-pi, pi]`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params() -> WaveformParams {
        WaveformParams::default()
    }

    fn series(values: Vec<f64>, level: ScoreLevel) -> ScoreSeries {
        ScoreSeries {
            start_time: 0.0,
            sample_rate: 44_100.0,
            values,
            level,
        }
    }

    #[test]
    fn m1_triples_aligned_deltas() {
        let lag = 1323;
        let mut v = vec![0.0; 10_000];
        for k in [4000 - lag, 4000, 4000 + lag] {
            v[k] = 1.0;
        }
        let m1 = aggregate(&series(v, ScoreLevel::Raw), &params(), ScoreLevel::M1).unwrap();
        assert_eq!(m1.values[4000], 3.0);
        assert_eq!(m1.level, ScoreLevel::M1);
        let max = m1.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 3.0);
    }

    #[test]
    fn aggregation_level_checks() {
        let raw = series(vec![0.0; 100], ScoreLevel::Raw);
        assert!(matches!(
            aggregate(&raw, &params(), ScoreLevel::M2),
            Err(Error::WrongLevel { .. })
        ));
        let zero = aggregate(&raw, &params(), ScoreLevel::M1).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let m2 = aggregate(&zero, &params(), ScoreLevel::M2).unwrap();
        assert!(m2.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fold_single_cycle_is_identity() {
        let v: Vec<f64> = (0..11025).map(|k| (k as f64 * 0.01).sin()).collect();
        let s = series(v.clone(), ScoreLevel::Raw);
        let f = static_accumulate(&s, &params(), 1).unwrap();
        assert_eq!(f.values.len(), 11025);
        for (a, b) in f.values.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fold_peaks_invariant_to_start() {
        let p = params();
        let make = |start: f64| {
            let n = 11025 * 6;
            let mut v = vec![0.0; n];
            for (k, vk) in v.iter_mut().enumerate() {
                let t: f64 = start + k as f64 / 44_100.0;
                let ph = t.rem_euclid(0.25);
                if (ph - 0.1).abs() < 0.5 / 44_100.0 {
                    *vk = 1.0;
                }
            }
            let s = ScoreSeries {
                start_time: start,
                sample_rate: 44_100.0,
                values: v,
                level: ScoreLevel::Raw,
            };
            let f = static_accumulate(&s, &p, 5).unwrap();
            f.values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(make(0.0), make(0.0731));
        assert_eq!(make(0.0), make(3.19));
    }

    #[test]
    fn detects_isolated_peaks() {
        let mut v = vec![0.0; 11025 * 2];
        for (c, k) in [(0usize, 3000usize), (1, 11025 + 5000)] {
            for j in 0..200 {
                let x = (j as f64 - 100.0) / 30.0;
                v[k - 100 + j] += 10.0 * (-x * x).exp();
            }
            let _ = c;
        }
        let s = series(v, ScoreLevel::M1);
        let got = detect_pulses(&s, &ThresholdPolicy::for_params(&params())).unwrap();
        assert_eq!(got.arrivals.len(), 2);
        assert_abs_diff_eq!(got.arrivals[0], 3000.0 / 44_100.0, epsilon = 0.1 / 44_100.0);
        assert_abs_diff_eq!(
            got.arrivals[1],
            16025.0 / 44_100.0,
            epsilon = 0.1 / 44_100.0
        );
    }

    #[test]
    fn flat_series_no_detection() {
        let s = series(vec![1.0; 30_000], ScoreLevel::Raw);
        assert!(matches!(
            detect_pulses(&s, &ThresholdPolicy::default()),
            Err(Error::NoDetection)
        ));
    }

    #[test]
    fn resolve_examples() {
        let p = params();
        assert_eq!(
            resolve_multipath(&[0.1], &[0.2], 0.0, &p, 0.0).unwrap(),
            (0.1, 0.2)
        );
        assert!(matches!(
            resolve_multipath(&[], &[0.2], 0.0, &p, 0.0),
            Err(Error::EmptyCandidates)
        ));
        // direct + 5 ms echo at both ends, 1 m walk toward the speaker
        let ta = [0.010, 0.015];
        let tb = [0.010 - 1.0 / 340.0, 0.015 - 1.0 / 340.0];
        let (a, b) = resolve_multipath(&ta, &tb, 1.0, &p, 0.01).unwrap();
        assert_eq!((a, b), (ta[0], tb[0]));
        let mis = ((a - b) * 340.0 - 1.0).abs();
        let cross = ((ta[0] - tb[1]) * 340.0 - 1.0).abs();
        assert!(mis < cross);
        // offsets on either side of the fold
        let (a, b) = resolve_multipath(&[0.001], &[0.249, 0.1], 0.68, &p, 0.0).unwrap();
        assert_eq!((a, b), (0.001, 0.249));
        // no walk, symmetric candidates: earliest pair
        let (a, b) = resolve_multipath(&[0.02, 0.01], &[0.02, 0.01], 0.0, &p, 0.0).unwrap();
        assert_eq!((a, b), (0.01, 0.01));
        // an echo folded past the cycle end is late, not early
        let (a, b) = resolve_multipath(&[0.005, 0.18], &[0.005, 0.18], 0.0, &p, 0.0).unwrap();
        assert_eq!((a, b), (0.18, 0.18));
    }

    fn brute(a: &[f64], b: &[f64], d: f64, tol: f64) -> (f64, f64) {
        let mut all = Vec::new();
        for &x in a {
            for &y in b {
                all.push((
                    x,
                    y,
                    340.0 * wrap_to_cycle(x - y - d / 340.0, 0.0, 0.25).abs(),
                ));
            }
        }
        let m = all.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        let mut ok: Vec<(f64, f64)> = all
            .iter()
            .filter(|p| p.2 <= m + tol)
            .map(|p| (p.0, p.1))
            .collect();
        let key = |t: f64| (cycle_offset(t, &params()), t);
        ok.sort_by(|p, q| {
            key(p.0)
                .partial_cmp(&key(q.0))
                .unwrap()
                .then(key(p.1).partial_cmp(&key(q.1)).unwrap())
        });
        ok[0]
    }

    proptest! {
        #[test]
        fn resolve_matches_exhaustive(
            a in prop::collection::vec(0.0f64..0.25, 1..6),
            b in prop::collection::vec(0.0f64..0.25, 1..6),
            d in -3.0f64..3.0,
            tol in prop::sample::select(vec![0.0, 0.005, 0.05]),
        ) {
            let got = resolve_multipath(&a, &b, d, &params(), tol).unwrap();
            prop_assert_eq!(got, brute(&a, &b, d, tol));
        }

        #[test]
        fn aggregation_is_linear(
            x in prop::collection::vec(-5.0f64..5.0, 3000),
            y in prop::collection::vec(-5.0f64..5.0, 3000),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let p = params();
            let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = aggregate(&series(comb, ScoreLevel::Raw), &p, ScoreLevel::M1).unwrap();
            let ax = aggregate(&series(x, ScoreLevel::Raw), &p, ScoreLevel::M1).unwrap();
            let ay = aggregate(&series(y, ScoreLevel::Raw), &p, ScoreLevel::M1).unwrap();
            for k in 0..lhs.values.len() {
                let rhs = alpha * ax.values[k] + beta * ay.values[k];
                prop_assert!((lhs.values[k] - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wrap_helpers() {
        assert_abs_diff_eq!(wrap_to_cycle(1.26, 0.0, 0.25), 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI), PI, epsilon = 1e-12);
    }
}
