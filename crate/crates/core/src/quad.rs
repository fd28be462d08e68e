//! Adaptive Gauss-Kronrod quadrature.
//!
//! Finite intervals use a global adaptive G7/K15 scheme: the subinterval with the
//! largest error estimate is bisected until the summed error meets the
//! tolerance. Semi-infinite intervals and endpoint singularities are reduced to a
//! series of dyadic blocks whose decay ratio is monitored, which is also how
//! non-integrable behaviour is detected.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Stopping rule for a quadrature: stop when the error estimate drops below
/// `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    /// Absolute 1e-9 or relative 1e-8, whichever is met first.
    pub const DEFAULT: Tolerance = Tolerance {
        abs: 1e-9,
        rel: 1e-8,
        max_intervals: 4000,
    };

    /// Used for quantities that are compared against each other at the
    /// 1e-10 level (moment deficits, convergence grids).
    pub const TIGHT: Tolerance = Tolerance {
        abs: 1e-15,
        rel: 1e-11,
        max_intervals: 8000,
    };

    /// Purely relative accuracy, for positive integrands whose size is not
    /// known in advance and may be far below any fixed absolute floor.
    pub const RELATIVE: Tolerance = Tolerance {
        abs: 1e-300,
        rel: 1e-9,
        max_intervals: 8000,
    };

    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl Estimate {
    const ZERO: Estimate = Estimate {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };

    fn add(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            error: self.error + other.error,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("refinement limit reached (value {value:e}, error estimate {error:e})")]
    NonConvergent { value: f64, error: f64 },
    #[error("integrand is not integrable on the requested domain")]
    Divergent,
}

// Nodes and weights as tabulated (more digits than an f64 holds).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = fc.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    if !res_k.is_finite() {
        return Err(QuadError::Divergent);
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    res_asc *= h;
    res_abs *= h;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel {
        a,
        b,
        value: res_k * half,
        error: err,
    })
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// `breaks` are interior points where `f` has kinks, layers or other features;
/// the initial partition is built from them so that narrow features are not
/// stepped over by the first Kronrod sample.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate, QuadError> {
    if a == b {
        return Ok(Estimate::ZERO);
    }
    if a > b {
        let est = integrate(f, b, a, breaks, tol)?;
        return Ok(Estimate {
            value: -est.value,
            ..est
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(QuadError::Divergent);
    }

    let mut nodes: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    nodes.push(a);
    nodes.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    nodes.push(b);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let mut heap = BinaryHeap::with_capacity(2 * nodes.len());
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in nodes.windows(2) {
        let p = gk15(&f, w[0], w[1])?;
        evaluations += 15;
        total += p.value;
        total_err += p.error;
        heap.push(p);
    }

    // Panels too narrow to bisect; their error can no longer be reduced.
    let mut frozen_err = 0.0;
    while total_err > tol.target(total) {
        let Some(worst) = heap.pop() else { break };
        if heap.len() + 2 > tol.max_intervals {
            return Err(QuadError::NonConvergent {
                value: total,
                error: total_err,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            frozen_err += worst.error;
            if frozen_err > tol.target(total) {
                return Err(QuadError::NonConvergent {
                    value: total,
                    error: total_err,
                });
            }
            continue;
        }
        let left = gk15(&f, worst.a, mid)?;
        let right = gk15(&f, mid, worst.b)?;
        evaluations += 30;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum to shed the drift accumulated by incremental updates.
    let (mut value, mut error) = (0.0, frozen_err);
    for p in heap.iter() {
        value += p.value;
        error += p.error;
    }
    if !value.is_finite() {
        return Err(QuadError::Divergent);
    }
    Ok(Estimate {
        value,
        error,
        evaluations,
    })
}

/// Sums blocks produced by `block(k)` for k = 0, 1, ... whose magnitudes are
/// expected to decay geometrically once past every feature of the integrand.
fn sum_blocks<B>(mut block: B, max_blocks: usize, tol: Tolerance) -> Result<Estimate, QuadError>
where
    B: FnMut(usize) -> Result<Estimate, QuadError>,
{
    let mut sum = Estimate::ZERO;
    let mut prev = 0.0_f64;
    let mut ratios: Vec<f64> = Vec::new();
    let mut zeros = 0;
    for k in 0..max_blocks {
        let est = block(k)?;
        sum = sum.add(est);
        if !sum.value.is_finite() {
            return Err(QuadError::Divergent);
        }
        let mag = est.value.abs();
        if mag == 0.0 {
            zeros += 1;
            if zeros >= 3 {
                return Ok(sum);
            }
            continue;
        }
        zeros = 0;
        if prev > 0.0 {
            ratios.push(mag / prev);
        }
        prev = mag;

        let n = ratios.len();
        if n >= 6 && ratios[n - 6..].iter().all(|&r| r >= 1.0 - 1e-9) {
            return Err(QuadError::Divergent);
        }
        if n >= 3 {
            let r = ratios[n - 3..].iter().copied().fold(0.0, f64::max);
            if r < 1.0 - 1e-3 {
                let remainder = mag * r / (1.0 - r);
                if remainder <= 0.5 * tol.target(sum.value) {
                    sum.error += remainder;
                    return Ok(sum);
                }
            }
        }
    }
    Err(QuadError::NonConvergent {
        value: sum.value,
        error: sum.error,
    })
}

fn block_tolerance(tol: Tolerance) -> Tolerance {
    Tolerance {
        abs: tol.abs * 1e-2,
        ..tol
    }
}

/// Integrate `f` over `[a, +inf)`.
///
/// Everything up to the largest break point (or `max(a, 1)`) is handled by
/// [`integrate`]; beyond it the tail is summed over dyadic blocks
/// `[L 2^k, L 2^(k+1)]`. Blocks that stop shrinking are reported as
/// [`QuadError::Divergent`].
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate, QuadError> {
    let start = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(a.max(1.0).max(2.0 * a), f64::max);
    let head = integrate(&f, a, start, breaks, tol)?;
    let btol = block_tolerance(tol);
    let tail = sum_blocks(
        |k| {
            let lo = start * 2f64.powi(k as i32);
            integrate(&f, lo, 2.0 * lo, &[], btol)
        },
        900,
        tol,
    )?;
    Ok(head.add(tail))
}

/// Integrate `f` over `(0, b]` where `f` may be singular at zero.
///
/// Above the smallest positive break point the integral is computed by
/// [`integrate`]; below it the interval is split into dyadic blocks
/// `[S 2^-(k+1), S 2^-k]` accumulated until their decay makes the remainder
/// negligible. Blocks that fail to shrink signal a non-integrable singularity.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate, QuadError> {
    if b <= 0.0 {
        return Ok(Estimate::ZERO);
    }
    let split = breaks
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x < b)
        .fold(0.5 * b, f64::min);
    let head = integrate(&f, split, b, breaks, tol)?;
    let btol = block_tolerance(tol);
    let tail = sum_blocks(
        |k| {
            let hi = split * 0.5f64.powi(k as i32);
            integrate(&f, 0.5 * hi, hi, &[], btol)
        },
        1000,
        tol,
    )?;
    Ok(head.add(tail))
}

/// Geometric ladder of points `center ± scale * 4^j` clipped to `(lo, hi)`,
/// used to seed partitions around boundary layers of width `scale`.
pub fn layer_breaks(anchor: f64, scale: f64, direction: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    if !(scale > 0.0) || !scale.is_finite() {
        return;
    }
    let mut step = scale / 64.0;
    let span = hi - lo;
    while step < span {
        let p = anchor + direction * step;
        if p > lo && p < hi {
            out.push(p);
        }
        step *= 4.0;
    }
}
