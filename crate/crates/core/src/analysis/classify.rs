use std::fmt;

use serde::Serialize;

use crate::fixation::MomentFunctionals;
use crate::measures::MeasureError;
use crate::simulator::SpeedModel;

use super::conditions::{
    check_assumption_a, check_assumption_b, check_cond1, check_cond2_prop6, check_lem_to0,
    default_grid, ConditionVerdict, Satisfied,
};
use super::serde_inf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// `X_t / t -> -(vbar - m)`.
    Transient {
        speed: f64,
    },
    PositiveRecurrent,
    BoundaryNullRecurrent,
    BoundaryTransientZeroSpeed,
    BoundaryUndetermined,
}

impl Verdict {
    pub fn is_boundary(&self) -> bool {
        matches!(
            self,
            Verdict::BoundaryNullRecurrent
                | Verdict::BoundaryTransientZeroSpeed
                | Verdict::BoundaryUndetermined
        )
    }

    pub fn is_decided(&self) -> bool {
        !matches!(self, Verdict::BoundaryUndetermined)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Transient { speed } => write!(f, "Transient, speed {speed:.3}"),
            Verdict::PositiveRecurrent => write!(f, "Positive recurrent"),
            Verdict::BoundaryNullRecurrent => write!(f, "Boundary: null recurrent"),
            Verdict::BoundaryTransientZeroSpeed => write!(f, "Boundary: transient with zero speed"),
            Verdict::BoundaryUndetermined => write!(f, "Boundary: undetermined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    #[serde(serialize_with = "serde_inf::scalar")]
    pub m: f64,
    #[serde(rename = "V", serialize_with = "serde_inf::scalar")]
    pub v: f64,
    pub vbar: f64,
    pub verdict: Verdict,
    pub condition_evidence: Vec<ConditionVerdict>,
    /// Exponent found by the transient-boundary search, if any.
    pub p: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    /// Relative tolerance for `m = vbar`.
    pub tol: f64,
    pub grid: Vec<f64>,
    pub p0: f64,
    pub beta0: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            tol: 1e-9,
            grid: default_grid(),
            p0: 0.9,
            beta0: 0.5,
        }
    }
}

/// Classifies the long-run regime with the default grid and search settings.
pub fn classify(funcs: &MomentFunctionals, speed: &SpeedModel, tol: f64) -> RegimeReport {
    classify_with(
        funcs,
        speed,
        &ClassifyOptions {
            tol,
            ..ClassifyOptions::default()
        },
    )
}

pub fn classify_with(
    funcs: &MomentFunctionals,
    speed: &SpeedModel,
    opts: &ClassifyOptions,
) -> RegimeReport {
    let (m, v) = funcs.limits();
    let vbar = speed.vbar();
    let mut report = RegimeReport {
        m,
        v,
        vbar,
        verdict: Verdict::BoundaryUndetermined,
        condition_evidence: Vec::new(),
        p: None,
        notes: Vec::new(),
    };
    if m.is_infinite() {
        report.verdict = Verdict::PositiveRecurrent;
        report.notes.push("m is infinite".into());
        return report;
    }
    if (m - vbar).abs() > opts.tol * m.abs().max(vbar.abs()) {
        report.verdict = if m < vbar {
            Verdict::Transient { speed: vbar - m }
        } else {
            Verdict::PositiveRecurrent
        };
        return report;
    }
    if let Err(e) = boundary(funcs, speed, opts, &mut report) {
        report.verdict = Verdict::BoundaryUndetermined;
        report
            .notes
            .push(format!("condition evaluation failed: {e}"));
    }
    report
}

fn boundary(
    funcs: &MomentFunctionals,
    speed: &SpeedModel,
    opts: &ClassifyOptions,
    report: &mut RegimeReport,
) -> Result<(), MeasureError> {
    let grid = &opts.grid;
    report.condition_evidence.push(check_lem_to0(funcs, grid)?);
    if speed.has_noise() {
        report.notes.push(
            "random speed at the boundary: the conditions are not established for a noisy environment".into(),
        );
        return Ok(());
    }
    if speed.is_constant() {
        let v = speed.vbar();
        let c1 = check_cond1(funcs, v, grid)?;
        let c1_ok = c1.satisfied == Satisfied::Yes;
        report.condition_evidence.push(c1);
        if c1_ok {
            report.verdict = Verdict::BoundaryNullRecurrent;
            return Ok(());
        }
        let c2 = check_cond2_prop6(funcs, v, grid, opts.p0, opts.beta0)?;
        let ok = c2.satisfied == Satisfied::Yes;
        report.p = c2.p;
        report.condition_evidence.push(c2.cond2);
        report.condition_evidence.push(c2.prop6);
        if ok {
            report.verdict = Verdict::BoundaryTransientZeroSpeed;
        } else {
            report.notes.push(open_case_note(funcs));
        }
        return Ok(());
    }
    // Extremes within the boundary tolerance of m are treated as equal to it, so a
    // vanishing amplitude reduces to the constant-speed conditions.
    let m = report.m;
    let snap = |v: f64| {
        if (v - m).abs() <= opts.tol * m.abs().max(v.abs()) {
            m
        } else {
            v
        }
    };
    let b = check_assumption_b(funcs, snap(speed.v_inf()), grid)?;
    let a = check_assumption_a(funcs, snap(speed.v_sup()), grid)?;
    let b_ok = b.satisfied == Satisfied::Yes;
    let a_ok = a.satisfied == Satisfied::Yes;
    report.condition_evidence.push(a);
    report.condition_evidence.push(b);
    if b_ok {
        let c2 = check_cond2_prop6(funcs, speed.vbar(), grid, opts.p0, opts.beta0)?;
        let ok = c2.prop6.satisfied == Satisfied::Yes;
        report.p = c2.p;
        report.condition_evidence.push(c2.prop6);
        if ok {
            report.verdict = Verdict::BoundaryTransientZeroSpeed;
            return Ok(());
        }
    }
    if a_ok {
        report.notes.push(
            "assumption A holds: recurrent; null recurrence unproven for a time-varying speed"
                .into(),
        );
    } else {
        report
            .notes
            .push("neither assumption decides the time-varying boundary case".into());
    }
    Ok(())
}

fn open_case_note(funcs: &MomentFunctionals) -> String {
    if funcs.limits().1.is_infinite() {
        "boundary with infinite V: neither condition is established; this is an open case \
         (e.g. tails a^(-2-delta) with 0 < delta <= 1/2)"
            .into()
    } else {
        "boundary: the grid evidence decides neither condition".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixation::FixationModel;
    use crate::measures::{Family, MutationMeasure, SupportSign};
    use crate::simulator::RateProfile;

    fn exponential(m: f64) -> MomentFunctionals {
        let measure = MutationMeasure::positive(Family::Exponential {
            rate_scale: m,
            mean_effect: 1.0,
        })
        .unwrap();
        MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap())
    }

    fn atoms() -> MomentFunctionals {
        MomentFunctionals::new(
            MutationMeasure::atom(1.0, 0.7).unwrap(),
            FixationModel::kimura(1.0).unwrap(),
        )
    }

    #[test]
    fn trichotomy_away_from_boundary() {
        let f = exponential(1.0);
        let r = classify(&f, &SpeedModel::constant(2.0), 1e-9);
        assert_eq!(r.verdict, Verdict::Transient { speed: 1.0 });
        assert_eq!(r.verdict.to_string(), "Transient, speed 1.000");
        let f = exponential(2.0);
        assert_eq!(
            classify(&f, &SpeedModel::constant(1.0), 1e-9).verdict,
            Verdict::PositiveRecurrent
        );
    }

    #[test]
    fn finite_atoms_are_null_recurrent() {
        let r = classify(&atoms(), &SpeedModel::constant(0.7), 1e-9);
        assert_eq!(r.verdict, Verdict::BoundaryNullRecurrent, "{:?}", r.notes);
    }

    #[test]
    fn atoms_fail_cond2() {
        let out = check_cond2_prop6(&atoms(), 0.7, &default_grid(), 0.9, 0.5).unwrap();
        assert_eq!(out.cond2.satisfied, Satisfied::No);
        assert_eq!(out.satisfied, Satisfied::No);
    }

    #[test]
    fn prop6_vanishes_on_empty_support() {
        // beta >= 2 leaves nothing between beta |x| and 2 |x|.
        let f = atoms();
        for &x in &default_grid() {
            assert_eq!(f.upper_second_moment(x, 2.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn infinite_m_is_positive_recurrent() {
        let measure = MutationMeasure::new(
            Family::PowerLawTail {
                delta: -0.5,
                lower_cut: 1.0,
                rate_scale: 1.0,
            },
            SupportSign::PositiveOnly,
        )
        .unwrap();
        let f = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        assert!(f.limits().0.is_infinite());
        assert_eq!(
            classify(&f, &SpeedModel::constant(5.0), 1e-9).verdict,
            Verdict::PositiveRecurrent
        );
    }

    #[test]
    fn report_serializes_infinite_variance() {
        let measure = MutationMeasure::positive(Family::PowerLawTail {
            delta: 0.25,
            lower_cut: 1.0,
            rate_scale: 1.0,
        })
        .unwrap();
        let f = MomentFunctionals::new(measure, FixationModel::kimura(1.0).unwrap());
        let m = f.limits().0;
        let r = classify(&f, &SpeedModel::constant(m), 1e-9);
        assert_eq!(r.verdict, Verdict::BoundaryUndetermined);
        assert!(
            r.notes.iter().any(|n| n.contains("open case")),
            "{:?}",
            r.notes
        );
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""V":"inf""#));
    }

    #[test]
    fn sinusoid_without_amplitude_matches_constant() {
        let f = atoms();
        let grid = default_grid();
        let c1 = check_cond1(&f, 0.7, &grid).unwrap();
        let a = check_assumption_a(&f, 0.7, &grid).unwrap();
        assert_eq!(c1.satisfied, a.satisfied);
        for (x, y) in c1.values.iter().zip(&a.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let speed = SpeedModel::DeterministicRate {
            rate: RateProfile::Sinusoidal {
                mean: 0.7,
                amplitude: 0.0,
                period: 10.0,
                phase: 0.0,
            },
        };
        assert!(speed.is_constant());
    }
}
