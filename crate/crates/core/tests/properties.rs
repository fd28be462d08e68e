//! Properties of the measure and fixation layers.

use phenolag::measures::Domain;
use phenolag::quad::Tolerance;
use phenolag::rng::{stream, uniform};
use phenolag::{
    Atom, Family, FixationKind, FixationModel, MomentFunctionals, MutationMeasure, PowerTail,
    SupportSign, TruncationPolicy,
};
use proptest::prelude::*;

fn families() -> Vec<(&'static str, MutationMeasure)> {
    let pos = |f| MutationMeasure::positive(f).unwrap();
    vec![
        (
            "atoms",
            pos(Family::DiscreteAtoms {
                atoms: vec![
                    Atom {
                        location: 0.5,
                        weight: 0.3,
                    },
                    Atom {
                        location: 2.0,
                        weight: 1.2,
                    },
                ],
            }),
        ),
        (
            "exponential",
            pos(Family::Exponential {
                rate_scale: 1.5,
                mean_effect: 0.7,
            }),
        ),
        (
            "half gaussian",
            pos(Family::HalfGaussian {
                rate_scale: 2.0,
                scale: 1.3,
            }),
        ),
        (
            "power-law tail",
            pos(Family::PowerLawTail {
                delta: 1.0,
                lower_cut: 1.0,
                rate_scale: 1.0,
            }),
        ),
        (
            "small-jump power law",
            pos(Family::SmallJumpPowerLaw {
                delta: 0.5,
                rate_scale: 1.0,
                tail: Some(PowerTail {
                    coefficient: 1.0,
                    exponent: 5.5,
                }),
            }),
        ),
        (
            "two-sided exponential",
            MutationMeasure::new(
                Family::Exponential {
                    rate_scale: 1.0,
                    mean_effect: 1.0,
                },
                SupportSign::TwoSided,
            )
            .unwrap(),
        ),
    ]
}

fn models() -> [FixationModel; 3] {
    [
        FixationModel::kimura(1.0).unwrap(),
        FixationModel::new(FixationKind::HaldaneLinear, 0.7).unwrap(),
        FixationModel::step(),
    ]
}

#[test]
fn sampler_matches_integrator() {
    let f = |a: f64| 1.0 / (1.0 + a * a) + (0.5 * a).sin();
    let n = 1_000_000;
    for (name, measure) in families() {
        let trunc = if measure.has_finite_mass() {
            TruncationPolicy::none()
        } else {
            TruncationPolicy::new(&measure, 1e-3).unwrap()
        };
        let rate = measure.total_rate(&trunc).unwrap();
        let exact = measure
            .restricted(trunc.epsilon)
            .integrate_against(f, &Domain::whole_line(), Tolerance::TIGHT)
            .unwrap()
            / rate;
        let mut rng = stream(42, 0);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let y = f(measure.sample_effect(&trunc, &mut rng));
            sum += y;
            sq += y * y;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "{name}: {mean} vs {exact} (se {se})"
        );
    }
}

#[test]
fn rate_plus_small_mass_is_total_mass() {
    for (name, measure) in families().into_iter().filter(|(_, m)| m.has_finite_mass()) {
        for eps in [0.0, 0.1, 0.5, 1.0, 3.0] {
            let trunc = TruncationPolicy::new(&measure, eps).unwrap();
            let small = measure.abs_moment(0, 0.0, eps, 0.0);
            let total = measure.total_mass();
            let sum = measure.total_rate(&trunc).unwrap() + small;
            assert!(
                (sum - total).abs() <= 1e-12 * total,
                "{name} at {eps}: {sum} vs {total}"
            );
        }
    }
}

#[test]
fn bias_decreases_on_halving_grid() {
    for (name, measure) in families() {
        let biases: Vec<f64> = (0..=20)
            .map(|k| measure.truncation_bias(0.5f64.powi(k)))
            .collect();
        assert!(
            biases.windows(2).all(|w| w[1] <= w[0]),
            "{name}: {biases:?}"
        );
        assert!(
            biases[20] <= 1e-2 * biases[0].max(1e-300) || biases[20] < 1e-5,
            "{name}: {biases:?}"
        );
    }
}

#[test]
fn sample_streams_are_reproducible() {
    let (_, measure) = families().remove(4);
    let trunc = TruncationPolicy::new(&measure, 1e-2).unwrap();
    let draw = || {
        let mut rng = stream(9, 0);
        (0..1000)
            .map(|_| measure.sample_effect(&trunc, &mut rng).to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn envelope_on_a_million_pairs() {
    let mut rng = stream(3, 0);
    for _ in 0..1_000_000 {
        let x = 20.0 * uniform(&mut rng) - 10.0;
        // Include the edge |a| = 2|x| with some probability.
        let alpha = if uniform(&mut rng) < 0.05 {
            -2.0 * x
        } else {
            50.0 * uniform(&mut rng) - 25.0
        };
        let bound = if x * alpha < 0.0 && alpha.abs() <= 2.0 * x.abs() {
            1.0
        } else {
            0.0
        };
        for model in models() {
            let g = model.fixation_prob(x, alpha);
            assert!(
                (0.0..=bound).contains(&g),
                "{model:?} at ({x}, {alpha}): {g}"
            );
        }
    }
}

#[test]
fn moments_increase_toward_their_limits() {
    for (name, measure) in families() {
        let funcs = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        let (m, v) = funcs.limits();
        let grid: Vec<f64> = (0..=20).map(|k| -(2f64.powi(k))).collect();
        let ms: Vec<f64> = grid.iter().map(|&x| funcs.m_of_x(x).unwrap()).collect();
        let vs: Vec<f64> = grid.iter().map(|&x| funcs.v_of_x(x).unwrap()).collect();
        assert!(ms.windows(2).all(|w| w[1] >= w[0]), "{name}: m {ms:?}");
        assert!(vs.windows(2).all(|w| w[1] >= w[0]), "{name}: V {vs:?}");
        assert!((ms[20] - m).abs() <= 1e-3 * m, "{name}: {} vs {m}", ms[20]);
        if v.is_finite() {
            assert!((vs[20] - v).abs() <= 1e-3 * v, "{name}: {} vs {v}", vs[20]);
        }
    }
}

#[test]
fn variance_over_lag_vanishes() {
    for (name, measure) in families() {
        let funcs = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        let ratios: Vec<f64> = (3..=24)
            .map(|k| {
                let x = -(2f64.powi(k));
                funcs.v_of_x(x).unwrap() / x.abs()
            })
            .collect();
        assert!(
            ratios.windows(2).all(|w| w[1] <= w[0]),
            "{name}: {ratios:?}"
        );
        assert!(ratios[21] < 1e-3, "{name}: {ratios:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kimura_below_haldane(s in 0.0f64..50.0) {
        prop_assert!(-(-2.0 * s).exp_m1() <= (2.0 * s).min(1.0));
    }

    #[test]
    fn step_dominates_kimura(x in -20.0f64..20.0, alpha in -40.0f64..40.0, sigma in 0.01f64..5.0) {
        let kimura = FixationModel::kimura(sigma).unwrap();
        let step = FixationModel::step();
        prop_assert!(kimura.fixation_prob(x, alpha) <= step.fixation_prob(x, alpha));
    }

    #[test]
    fn drift_is_nonpositive_at_the_boundary(u in 0.0f64..1e4, which in 0usize..6) {
        let (_, measure) = families().swap_remove(which);
        let funcs = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        let m = funcs.limits().0;
        prop_assert!(funcs.psi(m, -u).unwrap() <= 0.0);
    }

    #[test]
    fn deficit_and_moment_add_up(u in 0.01f64..200.0, which in 0usize..6) {
        let (_, measure) = families().swap_remove(which);
        let funcs = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        let m = funcs.limits().0;
        let total = funcs.m_of_x(-u).unwrap() + funcs.deficit(1, -u).unwrap();
        prop_assert!((total - m).abs() <= 1e-9 * m);
    }
}
