//! End-to-end scenario runs and batch evaluation against ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{propagate_window, ChannelModel, Scenario, Speaker, StepTrace};
use crate::frontend::{front_end, BpfSpec};
use crate::locator::{line_displacements, solve_line, LineFixInput, LocatorSettings, PositionFix};
use crate::par::{self, Exec};
use crate::pll::{displacements_at_steps, track, DisplacementSeries, PhaseTrack, PllConfig};
use crate::waveform::{synthesize_span, PulseSchedule, WaveformParams};
use crate::{Error, Result, SampleStream};

/// Transmit signal covering everything a receiver can hear in `[t0, t1]`.
pub fn transmit_for(params: &WaveformParams, t0: f64, t1: f64, exec: Exec) -> Result<SampleStream> {
    // reach back one maximum-range flight time plus interpolator slack
    let back = params.max_range / params.speed_of_sound + 0.01;
    let start = (t0 - back).max(0.0);
    let end = t1 + 0.01;
    let sched = PulseSchedule::covering(params, start, end)?;
    synthesize_span(params, &sched, start, end - start, exec)
}

/// Simulated received signal over `[t0, t1]` of a scenario.
pub fn receive(
    params: &WaveformParams,
    scenario: &Scenario,
    model: &ChannelModel,
    t0: f64,
    t1: f64,
    exec: Exec,
) -> Result<SampleStream> {
    // a fast transmitter clock reads slightly further ahead
    let stretch = 1.0 + model.freq_offset.abs() / params.carrier_hz;
    let tx = transmit_for(params, t0, t1 * stretch + 0.01, exec)?;
    propagate_window(&tx, params, scenario, model, t0, t1, exec)
}

/// Band-pass, AGC and PLL on a received stream.
pub fn demodulate(
    rx: &SampleStream,
    bpf: &BpfSpec,
    pll: &PllConfig,
    exec: Exec,
) -> Result<(SampleStream, PhaseTrack)> {
    let filtered = front_end(rx, bpf, exec)?;
    let tr = track(&filtered, pll)?;
    Ok((filtered, tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact geometry plus white noise on every displacement.
    #[default]
    DisplacementNoise,
    /// Full synthesis, channel, front end and PLL per run.
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Speaker offsets along the walk from its start point, m.
    pub xs: Vec<f64>,
    /// Speaker offsets across the walk, m.
    pub ys: Vec<f64>,
    pub runs: usize,
    pub steps: usize,
    pub stride: f64,
    pub step_period: f64,
    pub height: f64,
    pub mode: EvalMode,
    /// Per-step displacement noise for [`EvalMode::DisplacementNoise`], m.
    pub displacement_sigma: f64,
    /// Lead-in before the first step in signal mode, s.
    pub settle: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            xs: vec![2.0, 4.0, 6.0, 8.0],
            ys: vec![2.0, 4.0, 6.0, 8.0],
            runs: 35,
            steps: 10,
            stride: 0.6,
            step_period: 0.5,
            height: 0.0,
            mode: EvalMode::DisplacementNoise,
            displacement_sigma: 0.01,
            settle: 1.0,
        }
    }
}

/// Inputs shared by every run of a batch.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub eval: EvalConfig,
    pub waveform: WaveformParams,
    pub channel: ChannelModel,
    pub bpf: BpfSpec,
    pub pll: PllConfig,
    pub locator: LocatorSettings,
    pub seed: u64,
}

impl EvalSetup {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self {
            eval: cfg.eval.clone(),
            waveform: cfg.waveform,
            channel: cfg.channel.clone(),
            bpf: cfg.bpf_spec(),
            pll: cfg.pll,
            locator: cfg.locator,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    #[serde(rename = "X")]
    pub cell_x: f64,
    #[serde(rename = "Y")]
    pub cell_y: f64,
    pub run: usize,
    pub seed: u64,
    pub detected: bool,
    pub est_x: Option<f64>,
    pub est_y: Option<f64>,
    /// Horizontal distance error at the first step point, m.
    pub range_error: Option<f64>,
    /// Direction error at the first step point, degrees.
    pub direction_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
    pub mean: f64,
    pub n: usize,
}

impl Percentiles {
    /// Linear-interpolated percentiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let i = pos.floor() as usize;
            let j = (i + 1).min(v.len() - 1);
            v[i] + (pos - i as f64) * (v[j] - v[i])
        };
        Some(Self {
            p50: q(0.5),
            p80: q(0.8),
            p90: q(0.9),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub range: Option<Percentiles>,
    pub direction: Option<Percentiles>,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub range: Option<Percentiles>,
    pub direction: Option<Percentiles>,
    pub detection_rate: f64,
    pub cells: Vec<CellSummary>,
}

fn summarize<'a>(
    rows: impl Iterator<Item = &'a EvalRow> + Clone,
) -> (Option<Percentiles>, Option<Percentiles>, f64) {
    let range: Vec<f64> = rows.clone().filter_map(|r| r.range_error).collect();
    let dir: Vec<f64> = rows.clone().filter_map(|r| r.direction_error).collect();
    let total = rows.clone().count();
    let hit = rows.filter(|r| r.detected).count();
    let rate = if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    };
    (Percentiles::of(&range), Percentiles::of(&dir), rate)
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let (range, direction, detection_rate) = summarize(rows.iter());
        let mut keys: Vec<(f64, f64)> = Vec::new();
        for r in &rows {
            if !keys.contains(&(r.cell_x, r.cell_y)) {
                keys.push((r.cell_x, r.cell_y));
            }
        }
        let cells = keys
            .into_iter()
            .map(|(x, y)| {
                let (range, direction, detection_rate) =
                    summarize(rows.iter().filter(move |r| r.cell_x == x && r.cell_y == y));
                CellSummary {
                    x,
                    y,
                    range,
                    direction,
                    detection_rate,
                }
            })
            .collect();
        Self {
            rows,
            range,
            direction,
            detection_rate,
            cells,
        }
    }

    /// Medians of range and direction error pooled over all rows with the given `Y`.
    pub fn medians_for_y(&self, y: f64) -> Option<(f64, f64)> {
        let rows = self.rows.iter().filter(move |r| r.cell_y == y);
        let (range, dir, _) = summarize(rows);
        Some((range?.p50, dir?.p50))
    }
}

/// Seed of run `index`, spread so neighbouring runs are unrelated.
pub fn run_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Walking scenario for one grid cell: the walk starts at the origin along
/// `+X`; the speaker sits at `(x, y)` at height `h`.
pub fn cell_scenario(eval: &EvalConfig, x: f64, y: f64, seed: u64) -> Scenario {
    let trace = StepTrace::straight(eval.settle, eval.step_period, eval.steps, eval.stride);
    let end = eval.settle + eval.steps as f64 * eval.step_period + 0.25;
    Scenario::walking(
        Speaker {
            x,
            y,
            height: eval.height,
        },
        trace,
        end,
        seed,
    )
}

/// Displacements measured through the whole signal chain.
pub fn measured_displacements(
    setup: &EvalSetup,
    scenario: &Scenario,
    exec: Exec,
) -> Result<DisplacementSeries> {
    let steps = scenario
        .steps()
        .ok_or_else(|| Error::InvalidParams("scenario has no step trace".into()))?;
    let rx = receive(
        &setup.waveform,
        scenario,
        &setup.channel,
        0.0,
        scenario.duration,
        exec,
    )?;
    let (_, tr) = demodulate(&rx, &setup.bpf, &setup.pll, exec)?;
    displacements_at_steps(&tr, steps, &setup.pll)
}

fn score(eval: &EvalConfig, x: f64, y: f64, fix: &PositionFix) -> (f64, f64) {
    let truth_l = x.hypot(y);
    let truth_psi = (x / truth_l).clamp(-1.0, 1.0).acos();
    let _ = eval;
    (
        (fix.horizontal[0] - truth_l).abs(),
        (fix.psi[0] - truth_psi).abs().to_degrees(),
    )
}

fn run_one(setup: &EvalSetup, cell: (f64, f64), run: usize, index: u64) -> EvalRow {
    let eval = &setup.eval;
    let (x, y) = cell;
    let seed = run_seed(setup.seed, index);
    let h = eval.height;
    let attempt = || -> Result<PositionFix> {
        let d = match eval.mode {
            EvalMode::DisplacementNoise => {
                let slant_y = (y * y + h * h).sqrt();
                let mut d = line_displacements(-x, slant_y, eval.stride, eval.steps);
                if eval.displacement_sigma > 0.0 {
                    let noise = Normal::new(0.0, eval.displacement_sigma)
                        .map_err(|e| Error::InvalidParams(e.to_string()))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for v in &mut d {
                        *v += noise.sample(&mut rng);
                    }
                }
                DisplacementSeries::from_values(d)
            }
            EvalMode::Signal => {
                let sc = cell_scenario(eval, x, y, seed);
                // runs are already spread over threads
                measured_displacements(setup, &sc, Exec::Sequential)?
            }
        };
        solve_line(&LineFixInput::new(d, eval.stride, h), &setup.locator)
    };
    match attempt() {
        Ok(fix) => {
            let (re, de) = score(eval, x, y, &fix);
            let g = fix.ground();
            EvalRow {
                cell_x: x,
                cell_y: y,
                run,
                seed,
                detected: true,
                est_x: Some(g.x),
                est_y: Some(g.y),
                range_error: Some(re),
                direction_error: Some(de),
                error: None,
            }
        }
        Err(e) => EvalRow {
            cell_x: x,
            cell_y: y,
            run,
            seed,
            detected: false,
            est_x: None,
            est_y: None,
            range_error: None,
            direction_error: None,
            error: Some(e.kind().to_string()),
        },
    }
}

/// Every run of every grid cell, in grid order.
pub fn run_batch(setup: &EvalSetup, exec: Exec) -> Result<EvalReport> {
    let eval = &setup.eval;
    if eval.runs == 0 || eval.xs.is_empty() || eval.ys.is_empty() {
        return Err(Error::InvalidParams("empty evaluation grid".into()));
    }
    if eval.steps < 2 || !(eval.stride > 0.0) || !(eval.step_period > 0.0) {
        return Err(Error::InvalidParams(
            "evaluation walk needs >= 2 steps".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &x in &eval.xs {
        for &y in &eval.ys {
            for run in 0..eval.runs {
                jobs.push(((x, y), run));
            }
        }
    }
    let rows = par::map_range(exec, jobs.len(), |i| {
        let (cell, run) = jobs[i];
        run_one(setup, cell, run, i as u64)
    });
    Ok(EvalReport::from_rows(rows))
}
