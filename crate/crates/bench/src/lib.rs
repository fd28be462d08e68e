//! Benchmark groups for the simulator and the moment functionals.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use phenolag::{
    simulate, Family, FixationModel, MomentFunctionals, MutationMeasure, PowerTail, Scenario,
    SpeedModel, TruncationPolicy,
};

fn exponential(m: f64) -> MutationMeasure {
    MutationMeasure::positive(Family::Exponential {
        rate_scale: m,
        mean_effect: 1.0,
    })
    .expect("valid measure")
}

fn small_jumps() -> MutationMeasure {
    MutationMeasure::positive(Family::SmallJumpPowerLaw {
        delta: 0.5,
        rate_scale: 1.0,
        tail: Some(PowerTail {
            coefficient: 1.0,
            exponent: 5.5,
        }),
    })
    .expect("valid measure")
}

fn scenario(measure: MutationMeasure, trunc: TruncationPolicy, v: f64, horizon: f64) -> Scenario {
    Scenario::new(
        measure,
        trunc,
        FixationModel::kimura(1.0).expect("valid sigma"),
        SpeedModel::constant(v),
        0.0,
        horizon,
        1.0,
    )
    .expect("valid scenario")
}

/// One path per iteration; throughput is in units of simulated time.
pub fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for horizon in [100.0, 1000.0] {
        let cases = [
            (
                "transient",
                scenario(exponential(1.0), TruncationPolicy::none(), 2.0, horizon),
            ),
            (
                "recurrent",
                scenario(exponential(2.0), TruncationPolicy::none(), 1.0, horizon),
            ),
            (
                "boundary",
                scenario(
                    MutationMeasure::atom(1.0, 0.7).expect("valid atom"),
                    TruncationPolicy::none(),
                    0.7,
                    horizon,
                ),
            ),
        ];
        group.throughput(Throughput::Elements(horizon as u64));
        for (name, sc) in cases {
            let mut seed = 0;
            group.bench_with_input(BenchmarkId::new(name, horizon), &sc, |b, sc| {
                b.iter(|| {
                    seed += 1;
                    simulate(black_box(sc), seed).expect("path")
                })
            });
        }
    }
    let measure = small_jumps();
    group.throughput(Throughput::Elements(10));
    for eps in [1e-2, 1e-4] {
        let trunc = TruncationPolicy::new(&measure, eps).expect("valid cutoff");
        let sc = scenario(measure.clone(), trunc, 3.0, 10.0);
        let mut seed = 0;
        group.bench_with_input(BenchmarkId::new("small_jumps_eps", eps), &sc, |b, sc| {
            b.iter(|| {
                seed += 1;
                simulate(black_box(sc), seed).expect("path")
            })
        });
    }
    group.finish();
}

/// Quadrature cost of `m(x)` and `V(x)` at increasing lags.
pub fn moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("moments");
    let cases = [
        (
            "exponential",
            MomentFunctionals::new(
                exponential(1.0),
                FixationModel::kimura(1.0).expect("valid sigma"),
            ),
        ),
        (
            "small_jumps",
            MomentFunctionals::new(
                small_jumps(),
                FixationModel::kimura(1.0).expect("valid sigma"),
            ),
        ),
        (
            "power_tail",
            MomentFunctionals::new(
                MutationMeasure::positive(Family::PowerLawTail {
                    delta: 0.75,
                    lower_cut: 1.0,
                    rate_scale: 1.0,
                })
                .expect("valid measure"),
                FixationModel::kimura(1.0).expect("valid sigma"),
            ),
        ),
    ];
    for (name, funcs) in &cases {
        for x in [-1.0, -64.0, -4096.0] {
            group.bench_with_input(
                BenchmarkId::new(format!("m_of_x/{name}"), x),
                &x,
                |b, &x| b.iter(|| funcs.m_of_x(black_box(x)).expect("converges")),
            );
        }
        group.bench_function(BenchmarkId::new("v_of_x", name), |b| {
            b.iter(|| funcs.v_of_x(black_box(-64.0)).expect("converges"))
        });
    }
    group.finish();
}
