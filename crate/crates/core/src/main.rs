use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use relpos::channel::{ideal_displacements, StepTrace};
use relpos::config::Config;
use relpos::eval::{demodulate, receive, run_batch, transmit_for, EvalSetup};
use relpos::io::{self, FixRow};
use relpos::locator::{solve_line, LineFixInput};
use relpos::par::Exec;
use relpos::pll::displacements_at_steps;
use relpos::pulsedet::{aggregate, detect_pulses, matched_score, PhaseReference, ScoreLevel};
use relpos::{Error, Result};

#[derive(Parser)]
#[command(
    name = "relpos",
    version,
    about = "Acoustic relative positioning toolkit"
)]
struct Cli {
    /// JSON configuration (`"schema": 1`); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Carrier frequency to work on, Hz.
    #[arg(long, global = true)]
    channel: Option<f64>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmit waveform to `tx.wav`.
    Synth,
    /// Scenario to `rx.wav`, `truth.csv` and `steps.json`.
    Simulate {
        /// Truth CSV interval, s.
        #[arg(long, default_value_t = 0.01)]
        truth_dt: f64,
    },
    /// Received WAV to `phase.csv`, `score.csv` and `pulses.csv`.
    Demod {
        /// Input WAV; defaults to `<out>/rx.wav`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Phase track and steps to `fix.csv`.
    Locate {
        /// Phase CSV; defaults to `<out>/phase.csv`.
        #[arg(long)]
        phase: Option<PathBuf>,
        /// Step trace JSON; defaults to `<out>/steps.json`.
        #[arg(long)]
        steps: Option<PathBuf>,
    },
    /// Batch evaluation to `report.json`, `rows.csv` and `cells.csv`.
    Eval,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

#[derive(Serialize, Deserialize)]
struct CellRow {
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "Y")]
    y: f64,
    range_p50: Option<f64>,
    range_p80: Option<f64>,
    range_p90: Option<f64>,
    range_mean: Option<f64>,
    direction_p50: Option<f64>,
    direction_p80: Option<f64>,
    direction_p90: Option<f64>,
    direction_mean: Option<f64>,
    detection_rate: f64,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        if let Some(sc) = &mut cfg.scenario {
            sc.seed = s;
        }
    }
    if let Some(f) = cli.channel {
        cfg = cfg.with_channel(f)?;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    std::fs::create_dir_all(&cli.out)?;
    let out = |name: &str| cli.out.join(name);
    match &cli.command {
        Command::Synth => {
            let duration = cfg.scenario.as_ref().map_or(cfg.duration, |s| s.duration);
            let tx = transmit_for(&cfg.waveform, 0.0, duration, exec)?;
            let tx = tx.with_samples(
                tx.samples()[..((duration * cfg.waveform.sample_rate) as usize).min(tx.len())]
                    .to_vec(),
            )?;
            io::write_wav(&out("tx.wav"), &tx, cfg.wav_format)?;
        }
        Command::Simulate { truth_dt } => {
            let sc = cfg
                .scenario
                .as_ref()
                .ok_or_else(|| Error::Config("simulate needs a \"scenario\"".into()))?;
            let rx = receive(&cfg.waveform, sc, &cfg.channel, 0.0, sc.duration, exec)?;
            io::write_wav(&out("rx.wav"), &rx, cfg.wav_format)?;
            io::write_truth_csv(&out("truth.csv"), &io::truth_rows(sc, *truth_dt)?)?;
            if let Some(steps) = sc.steps() {
                write_json(&out("steps.json"), steps)?;
                write_json(&out("ideal_displacements.json"), &ideal_displacements(sc))?;
            }
        }
        Command::Demod { input } => {
            let path = input.clone().unwrap_or_else(|| out("rx.wav"));
            let rx = io::read_wav(&path, 0.0)?;
            let (filtered, tr) = demodulate(&rx, &cfg.bpf_spec(), &cfg.pll, exec)?;
            io::write_phase_csv(&out("phase.csv"), &tr)?;
            let m = matched_score(&filtered, PhaseReference::Track(&tr), &cfg.waveform, exec)?;
            let m1 = aggregate(&m, &cfg.waveform, ScoreLevel::M1)?;
            io::write_score_csv(&out("score.csv"), &m1)?;
            match detect_pulses(&m1, &cfg.detector()) {
                Ok(p) => io::write_pulses_csv(&out("pulses.csv"), &p)?,
                // a carrier without pulses (or out of range) still has a phase track
                Err(Error::NoDetection) => io::write_pulses_csv(
                    &out("pulses.csv"),
                    &relpos::pulsedet::PulseArrivals {
                        arrivals: vec![],
                        scores: vec![],
                        candidates: vec![],
                    },
                )?,
                Err(e) => return Err(e),
            }
        }
        Command::Locate { phase, steps } => {
            let tr = io::read_phase_csv(&phase.clone().unwrap_or_else(|| out("phase.csv")))?;
            let steps_path = steps.clone().unwrap_or_else(|| out("steps.json"));
            let steps: StepTrace = serde_json::from_reader(std::fs::File::open(steps_path)?)?;
            steps.validate()?;
            let d = displacements_at_steps(&tr, &steps, &cfg.pll)?;
            let h = cfg.scenario.as_ref().map_or(0.0, |s| s.speaker.height);
            let fix = solve_line(&LineFixInput::new(d, steps.stride, h), &cfg.locator)?;
            io::write_fix_csv(&out("fix.csv"), &[FixRow::from_position(&fix)])?;
        }
        Command::Eval => {
            let report = run_batch(&EvalSetup::from_config(&cfg), exec)?;
            write_json(&out("report.json"), &report)?;
            let mut w = csv::Writer::from_path(out("rows.csv")).map_err(Error::from)?;
            for r in &report.rows {
                w.serialize(r).map_err(Error::from)?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_path(out("cells.csv")).map_err(Error::from)?;
            for c in &report.cells {
                w.serialize(CellRow {
                    x: c.x,
                    y: c.y,
                    range_p50: c.range.map(|p| p.p50),
                    range_p80: c.range.map(|p| p.p80),
                    range_p90: c.range.map(|p| p.p90),
                    range_mean: c.range.map(|p| p.mean),
                    direction_p50: c.direction.map(|p| p.p50),
                    direction_p80: c.direction.map(|p| p.p80),
                    direction_p90: c.direction.map(|p| p.p90),
                    direction_mean: c.direction.map(|p| p.mean),
                    detection_rate: c.detection_rate,
                })
                .map_err(Error::from)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&report).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::from(2)
        }
    }
}
