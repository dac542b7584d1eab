use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mono real-valued samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

/// Timing metadata carried next to raw sample dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMeta {
    pub sample_rate: f64,
    pub start_time: f64,
}

impl SampleStream {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidParams(format!("sample rate {sample_rate}")));
        }
        if !start_time.is_finite() {
            return Err(Error::InvalidParams("non-finite start time".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
        })
    }

    /// Silence of the given length.
    pub fn zeros(len: usize, sample_rate: f64, start_time: f64) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate, start_time)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn meta(&self) -> StreamMeta {
        StreamMeta {
            sample_rate: self.sample_rate,
            start_time: self.start_time,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    /// Nearest sample index for time `t`, if inside the stream.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start_time) * self.sample_rate).round();
        if k < 0.0 || k >= self.samples.len() as f64 {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Same timing, new samples. Used by processing stages that preserve the grid.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate, self.start_time)
    }

    /// Sample-wise sum of streams on the same grid; the shorter ones are zero-extended.
    pub fn mix(streams: &[SampleStream]) -> Result<Self> {
        let first = streams
            .first()
            .ok_or_else(|| Error::InsufficientInput("nothing to mix".into()))?;
        let len = streams.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut out = vec![0.0; len];
        for s in streams {
            if s.sample_rate != first.sample_rate || s.start_time != first.start_time {
                return Err(Error::InvalidParams(
                    "mixing streams on different grids".into(),
                ));
            }
            for (o, v) in out.iter_mut().zip(&s.samples) {
                *o += v;
            }
        }
        Self::new(out, first.sample_rate, first.start_time)
    }
}
