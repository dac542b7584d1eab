//! File formats: mono WAV, raw float32 with a JSON sidecar, and CSV exports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{distance_profile, Scenario};
use crate::locator::{GroundFix, PositionFix};
use crate::pll::PhaseTrack;
use crate::pulsedet::{PulseArrivals, ScoreSeries};
use crate::stream::StreamMeta;
use crate::{Error, Result, SampleStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Writes a mono WAV file. PCM16 output is clipped to full scale.
pub fn write_wav(path: &Path, stream: &SampleStream, format: WavFormat) -> Result<()> {
    let rate = stream.sample_rate();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return Err(Error::InvalidParams(format!(
            "WAV needs an integer rate, got {rate}"
        )));
    }
    let (bits, fmt) = match format {
        WavFormat::Pcm16 => (16, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &x in stream.samples() {
        match format {
            WavFormat::Pcm16 => w.write_sample((x.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
            WavFormat::Float32 => w.write_sample(x as f32)?,
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono WAV file; the stream starts at `start_time`.
pub fn read_wav(path: &Path, start_time: f64) -> Result<SampleStream> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidParams(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    SampleStream::new(samples, spec.sample_rate as f64, start_time)
}

/// Path of the JSON sidecar that goes with a raw sample file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes little-endian float32 samples plus a `<path>.json` sidecar.
pub fn write_raw(path: &Path, stream: &SampleStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &x in stream.samples() {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    w.flush()?;
    let side = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(side, &stream.meta())?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<SampleStream> {
    let meta: StreamMeta =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidParams(format!(
            "{} bytes is not a whole number of float32 samples",
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    SampleStream::new(samples, meta.sample_rate, meta.start_time)
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub distance: f64,
}

/// Receiver trajectory sampled every `dt` seconds over the scenario.
pub fn truth_rows(scenario: &Scenario, dt: f64) -> Result<Vec<TruthRow>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("truth interval {dt}")));
    }
    let n = (scenario.duration / dt).floor() as usize;
    (0..=n)
        .map(|i| {
            let t = (i as f64 * dt).min(scenario.duration);
            let p = scenario.position(t)?;
            Ok(TruthRow {
                t,
                x: p.x,
                y: p.y,
                distance: distance_profile(scenario, t)?,
            })
        })
        .collect()
}

pub fn write_truth_csv(path: &Path, rows: &[TruthRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub t: f64,
    pub phi_hat: f64,
    pub lock_metric: f64,
}

pub fn write_phase_csv(path: &Path, track: &PhaseTrack) -> Result<()> {
    write_rows(
        path,
        (0..track.len()).map(|i| PhaseRow {
            t: track.time_of(i),
            phi_hat: track.phase[i],
            lock_metric: track.lock[i],
        }),
    )
}

/// Rebuilds a phase track from its CSV export; rows must be evenly spaced.
pub fn read_phase_csv(path: &Path) -> Result<PhaseTrack> {
    let rows: Vec<PhaseRow> = read_rows(path)?;
    if rows.len() < 2 {
        return Err(Error::InsufficientInput(
            "phase CSV needs at least 2 rows".into(),
        ));
    }
    let dt = (rows[rows.len() - 1].t - rows[0].t) / (rows.len() - 1) as f64;
    Ok(PhaseTrack {
        start_time: rows[0].t,
        sample_rate: 1.0 / dt,
        phase: rows.iter().map(|r| r.phi_hat).collect(),
        lock: rows.iter().map(|r| r.lock_metric).collect(),
        slope: vec![0.0; rows.len()],
        dds_offset: 0.0,
    })
}

#[derive(Serialize)]
struct ScoreRow {
    t: f64,
    score: f64,
}

pub fn write_score_csv(path: &Path, score: &ScoreSeries) -> Result<()> {
    write_rows(
        path,
        score.values.iter().enumerate().map(|(k, &v)| ScoreRow {
            t: score.time_of(k as f64),
            score: v,
        }),
    )
}

#[derive(Serialize)]
struct PulseRow {
    epoch: usize,
    t: f64,
    best: bool,
}

/// One row per candidate; `best` marks the epoch's arrival.
pub fn write_pulses_csv(path: &Path, arrivals: &PulseArrivals) -> Result<()> {
    let mut rows = Vec::new();
    let mut best = arrivals.arrivals.iter().peekable();
    for (e, cands) in arrivals.candidates.iter().enumerate() {
        let chosen = if cands.is_empty() {
            None
        } else {
            best.next().copied()
        };
        for &t in cands {
            rows.push(PulseRow {
                epoch: e,
                t,
                best: Some(t) == chosen,
            });
        }
    }
    write_rows(path, rows)
}

/// One exported fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub psi_deg: f64,
    pub provenance: String,
    pub residual: f64,
}

impl FixRow {
    /// Row for the fix at its first step point.
    pub fn from_position(fix: &PositionFix) -> Self {
        let g = fix.ground();
        Self {
            t: fix.step_times.first().copied().unwrap_or(0.0),
            x: g.x,
            y: g.y,
            l: fix.horizontal.first().copied().unwrap_or(0.0),
            psi_deg: fix.psi.first().copied().unwrap_or(0.0).to_degrees(),
            provenance: fix.provenance.as_str().into(),
            residual: fix.residual,
        }
    }

    pub fn from_ground(t: f64, fix: &GroundFix) -> Self {
        Self {
            t,
            x: fix.g.x,
            y: fix.g.y,
            l: fix.g.x.hypot(fix.g.y),
            psi_deg: fix.g.y.atan2(fix.g.x).to_degrees(),
            provenance: fix.provenance.as_str().into(),
            residual: fix.residual,
        }
    }
}

pub fn write_fix_csv(path: &Path, rows: &[FixRow]) -> Result<()> {
    write_rows(path, rows)
}
