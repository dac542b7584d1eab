//! End-to-end runs through the library: synthesis, channel, receiver, solver.

use approx::assert_abs_diff_eq;

use relpos::channel::{
    distance_profile, ideal_displacements, ChannelModel, Point2, Scenario, Speaker, StepTrace,
};
use relpos::eval::{demodulate, receive, transmit_for};
use relpos::frontend::BpfSpec;
use relpos::io::{read_wav, write_wav, WavFormat};
use relpos::locator::{solve_line, LineFixInput, LocatorSettings};
use relpos::par::Exec;
use relpos::pll::{displacements_at_steps, PllConfig};
use relpos::pulsedet::{
    aggregate, detect_pulses, matched_score, PhaseReference, ScoreLevel, ThresholdPolicy,
};
use relpos::waveform::WaveformParams;

fn walk(speaker: Speaker, n: usize) -> (Scenario, StepTrace) {
    let trace = StepTrace::straight(1.0, 0.5, n, 0.6);
    let duration = 1.0 + n as f64 * 0.5 + 0.8;
    (
        Scenario::walking(speaker, trace.clone(), duration, 3),
        trace,
    )
}

#[test]
fn transmitter_output_has_no_displacement() {
    // the receiver sits on the transmitter: a flat phase, however long
    let p = WaveformParams::default();
    let tx = transmit_for(&p, 0.0, 6.0, Exec::Parallel).unwrap();
    let cfg = PllConfig::default();
    let (_, tr) = demodulate(&tx, &BpfSpec::default(), &cfg, Exec::Parallel).unwrap();
    let steps = StepTrace::straight(1.0, 0.5, 8, 0.6);
    let d = displacements_at_steps(&tr, &steps, &cfg).unwrap();
    for v in &d.d {
        assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-3);
    }
}

#[test]
fn walk_recovers_position_through_wav() {
    let speaker = Speaker {
        x: 4.0,
        y: 4.0,
        height: 0.0,
    };
    let (sc, trace) = walk(speaker, 10);
    let p = WaveformParams::default();
    let rx = receive(
        &p,
        &sc,
        &ChannelModel::with_snr(20.0),
        0.0,
        sc.duration,
        Exec::Parallel,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rx.wav");
    write_wav(&path, &rx, WavFormat::Pcm16).unwrap();
    let back = read_wav(&path, 0.0).unwrap();
    assert_eq!(back.len(), rx.len());

    let cfg = PllConfig::default();
    let (_, tr) = demodulate(&back, &BpfSpec::default(), &cfg, Exec::Parallel).unwrap();
    let d = displacements_at_steps(&tr, &trace, &cfg).unwrap();
    let ideal = ideal_displacements(&sc);
    for (a, b) in d.d.iter().zip(&ideal.d) {
        assert_abs_diff_eq!(*a, *b, epsilon = 3e-3);
    }
    let fix = solve_line(&LineFixInput::new(d, 0.6, 0.0), &LocatorSettings::default()).unwrap();
    let g = fix.ground();
    assert!((g.x - 4.0).hypot(g.y - 4.0) < 0.05, "{g:?}");
    assert_abs_diff_eq!(fix.psi[0].to_degrees(), 45.0, epsilon = 2.0);
}

#[test]
fn static_pulses_give_the_range() {
    let speaker = Speaker {
        x: 7.0,
        y: 2.0,
        height: 0.5,
    };
    let sc = Scenario::stationary(speaker, Point2::default(), 3.0, 5);
    let p = WaveformParams::default();
    let rx = receive(
        &p,
        &sc,
        &ChannelModel::with_snr(10.0),
        0.0,
        sc.duration,
        Exec::Parallel,
    )
    .unwrap();
    let (filtered, tr) = demodulate(
        &rx,
        &BpfSpec::default(),
        &PllConfig::default(),
        Exec::Parallel,
    )
    .unwrap();
    let m = matched_score(&filtered, PhaseReference::Track(&tr), &p, Exec::Parallel).unwrap();
    let m1 = aggregate(&m, &p, ScoreLevel::M1).unwrap();
    let found = detect_pulses(&m1, &ThresholdPolicy::for_params(&p)).unwrap();
    let l = distance_profile(&sc, 0.0).unwrap();
    let middle = p.carrier_only + p.pulse_spacing;
    let ranged: Vec<f64> = found
        .arrivals
        .iter()
        .filter(|&&t| t > 0.5 && t < 2.7)
        .map(|&t| {
            let c = ((t - middle - l / p.speed_of_sound) / p.cycle_period).round();
            (t - c * p.cycle_period - middle) * p.speed_of_sound
        })
        .collect();
    assert!(ranged.len() >= 8);
    for r in &ranged {
        assert_abs_diff_eq!(*r, l, epsilon = 0.05);
    }
    let mean = ranged.iter().sum::<f64>() / ranged.len() as f64;
    assert_abs_diff_eq!(mean, l, epsilon = 0.015);
}

#[test]
fn sequential_and_parallel_receivers_agree() {
    let (sc, _) = walk(
        Speaker {
            x: -2.0,
            y: 3.0,
            height: 0.2,
        },
        4,
    );
    let p = WaveformParams::default();
    let model = ChannelModel::with_snr(5.0);
    let a = receive(&p, &sc, &model, 0.0, sc.duration, Exec::Sequential).unwrap();
    let b = receive(&p, &sc, &model, 0.0, sc.duration, Exec::Parallel).unwrap();
    assert_eq!(a.samples(), b.samples());
    let (fa, ta) = demodulate(
        &a,
        &BpfSpec::default(),
        &PllConfig::default(),
        Exec::Sequential,
    )
    .unwrap();
    let (fb, tb) = demodulate(
        &b,
        &BpfSpec::default(),
        &PllConfig::default(),
        Exec::Parallel,
    )
    .unwrap();
    assert_eq!(fa.samples(), fb.samples());
    assert_eq!(ta.phase, tb.phase);
}
