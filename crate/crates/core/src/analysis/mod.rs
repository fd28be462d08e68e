//! Regime classification and ensemble estimators.
//!
//! [`classify`] turns the limits `m`, `V` and the mean speed into a verdict,
//! consulting the grid-based condition checkers in the boundary case. The
//! estimators in [`estimators`] confront those verdicts with simulated paths.

mod classify;
pub mod conditions;
pub mod estimators;

pub use classify::{classify, classify_with, ClassifyOptions, RegimeReport, Verdict};
pub use conditions::{
    check_assumption_a, check_assumption_b, check_cond1, check_cond2, check_cond2_prop6,
    check_lem_to0, default_grid, limit_estimate, trend, Cond2Prop6, ConditionId, ConditionVerdict,
    Satisfied, Trend,
};
pub use estimators::{
    estimate_speed, occupation_fraction, return_time_stats, AnalysisError, ReturnTimeStats,
    SpeedEstimate,
};

/// JSON has no infinity; non-finite numbers are written as strings.
pub mod serde_inf {
    use serde::ser::{SerializeSeq, Serializer};

    fn write<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn scalar<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        write(*v, s)
    }

    struct Num(f64);

    impl serde::Serialize for Num {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            write(self.0, s)
        }
    }

    pub fn vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&Num(x))?;
        }
        seq.end()
    }

    #[cfg(test)]
    mod tests {
        #[derive(serde::Serialize)]
        struct Probe {
            #[serde(serialize_with = "super::scalar")]
            a: f64,
            #[serde(serialize_with = "super::vec")]
            b: Vec<f64>,
        }

        #[test]
        fn infinities_become_strings() {
            let p = Probe {
                a: f64::INFINITY,
                b: vec![1.5, f64::NEG_INFINITY],
            };
            assert_eq!(
                serde_json::to_string(&p).unwrap(),
                r#"{"a":"inf","b":[1.5,"-inf"]}"#
            );
        }
    }
}
