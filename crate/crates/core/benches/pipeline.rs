use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relpos::channel::{ChannelModel, Scenario, Speaker, StepTrace};
use relpos::config::Config;
use relpos::eval::{receive, run_batch, transmit_for, EvalSetup};
use relpos::frontend::{BandPass, BpfSpec};
use relpos::par::Exec;
use relpos::pll::{track, PllConfig};
use relpos::pulsedet::{matched_score, PhaseReference};
use relpos::waveform::WaveformParams;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn scenario() -> Scenario {
    let trace = StepTrace::straight(0.5, 0.5, 6, 0.6);
    Scenario::walking(
        Speaker {
            x: 4.0,
            y: 3.0,
            height: 0.3,
        },
        trace,
        4.0,
        1,
    )
}

fn stages(c: &mut Criterion) {
    let p = WaveformParams::default();
    let sc = scenario();
    let model = ChannelModel::with_snr(10.0);
    let rx = receive(&p, &sc, &model, 0.0, sc.duration, Exec::Parallel).unwrap();
    let bpf = BandPass::design(&BpfSpec::default(), p.sample_rate).unwrap();
    let filtered = bpf.apply(&rx, Exec::Parallel).unwrap();
    let tr = track(&filtered, &PllConfig::default()).unwrap();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("synthesize_4s", name), &exec, |b, &e| {
            b.iter(|| transmit_for(black_box(&p), 0.0, 4.0, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("propagate_4s", name), &exec, |b, &e| {
            b.iter(|| receive(black_box(&p), &sc, &model, 0.0, sc.duration, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("band_pass_4s", name), &exec, |b, &e| {
            b.iter(|| bpf.apply(black_box(&rx), e).unwrap())
        });
        g.bench_with_input(
            BenchmarkId::new("matched_score_4s", name),
            &exec,
            |b, &e| {
                b.iter(|| {
                    matched_score(black_box(&filtered), PhaseReference::Track(&tr), &p, e).unwrap()
                })
            },
        );
    }
    g.finish();
}

fn batch(c: &mut Criterion) {
    let mut cfg = Config::default();
    cfg.eval.runs = 5;
    let setup = EvalSetup::from_config(&cfg);
    let mut g = c.benchmark_group("eval_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| run_batch(black_box(&setup), e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stages, batch);
criterion_main!(benches);
