//! Shared numerical helpers: compensated summation, adaptive Gauss–Kronrod
//! quadrature, least-squares line fits and Kolmogorov–Smirnov distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<NeumaierSum>().value()
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // shift by the first sample so constant data gives exactly zero variance
    let pivot = xs[0];
    let shifted_mean = xs.iter().map(|x| x - pivot).collect::<NeumaierSum>().value() / n as f64;
    let mean = pivot + shifted_mean;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = xs
        .iter()
        .map(|x| {
            let d = (x - pivot) - shifted_mean;
            d * d
        })
        .collect::<NeumaierSum>()
        .value();
    (mean, ss / (n - 1) as f64)
}

/// Ordinary least-squares fit `y = slope * x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = sum(xs) / n as f64;
    let my = sum(ys) / n as f64;
    let mut sxx = NeumaierSum::new();
    let mut sxy = NeumaierSum::new();
    for (x, y) in xs.iter().zip(ys) {
        sxx.add((x - mx) * (x - mx));
        sxy.add((x - mx) * (y - my));
    }
    let sxx = sxx.value();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy.value() / sxx;
    Some((slope, my - slope * mx))
}

/// Geometric grid of `points` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov distances

/// Classical one-sample Kolmogorov–Smirnov distance `sup |F_n - F|`.
pub fn ks_distance_classical(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = cdf(x);
        let upper = (i as f64 + 1.0) / n - f;
        let lower = f - i as f64 / n;
        acc.max(upper).max(lower)
    })
}

/// Kolmogorov–Smirnov distance with ties resolved at the middle of each jump.
///
/// At every distinct sample value the target CDF is compared with the
/// midpoint of the empirical jump, `(F_n(x-) + F_n(x)) / 2`. For continuous
/// data this differs from the classical statistic by at most `1/(2n)`; for
/// lattice-valued data (integer Birkhoff sums) it removes the half-jump that
/// the classical statistic charges against every atom.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let mid = (i + j) as f64 / (2.0 * n);
        d = d.max((mid - cdf(xs[i])).abs());
        i = j;
    }
    d
}

// ---------------------------------------------------------------------------
// Quadrature

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and |Kronrod - Gauss| on `[a, b]`.
pub fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Gauss–Legendre 7-point mean of `f` over `[a, b]` (the Gauss half of GK15).
pub fn gauss_mean_7(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = WG[3] * f(c);
    for j in (1..7).step_by(2) {
        let dx = h * XGK[j];
        acc += WG[j / 2] * (f(c - dx) + f(c + dx));
    }
    0.5 * acc
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Globally adaptive GK15 quadrature: the segment with the largest error is
/// bisected until the summed error drops below `tol` (absolute).
pub fn integrate_adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_segments: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v, e) = gauss_kronrod_15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total_err = e;
    loop {
        if !total_err.is_finite() {
            return Err(Error::NonConvergence {
                op: "integrate_adaptive",
                detail: format!("non-finite integrand on [{a}, {b}]"),
            });
        }
        if total_err <= tol {
            break;
        }
        if heap.len() >= max_segments {
            return Err(Error::NonConvergence {
                op: "integrate_adaptive",
                detail: format!(
                    "error {total_err:.3e} above tolerance {tol:.1e} after {max_segments} segments on [{a}, {b}]"
                ),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::NonConvergence {
                op: "integrate_adaptive",
                detail: format!("segment collapsed at {mid}"),
            });
        }
        let (v1, e1) = gauss_kronrod_15(f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(f, mid, worst.b);
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // deterministic summation order
    let mut segs = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).collect::<NeumaierSum>().value();
    let error = segs.iter().map(|s| s.error).sum();
    Ok((value, error))
}

/// Controls for integrals over `(0, 1)` with geometric refinement toward
/// both endpoints.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnitQuadrature {
    /// Absolute tolerance of the adaptive part.
    pub tol: f64,
    /// Pieces `[2^-(j+1), 2^-j]` are integrated for `j < endpoint_levels`;
    /// the remainder `[0, 2^-endpoint_levels]` is extrapolated.
    pub endpoint_levels: u32,
    pub max_segments: usize,
}

impl Default for UnitQuadrature {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            endpoint_levels: 38,
            max_segments: 4000,
        }
    }
}

/// Result of an integral over `(0, 1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnitIntegral {
    pub value: f64,
    /// Error estimate of the adaptively integrated part.
    pub quadrature_error: f64,
    /// Extrapolated contribution of the two endpoint remainders.
    pub tail_value: f64,
    /// Uncertainty of the endpoint extrapolation.
    pub tail_error: f64,
}

impl UnitIntegral {
    pub fn error(&self) -> f64 {
        self.quadrature_error + self.tail_error
    }
}

/// Extrapolates the remainder `[0, d]` from the integrals over `[d, 2d]` and
/// `[2d, 4d]`, assuming locally geometric decay.
fn endpoint_remainder(last: f64, previous: f64) -> (f64, f64) {
    let ratio = last / previous;
    let rem = if previous != 0.0 && ratio > 0.3 && ratio < 0.95 {
        last * ratio / (1.0 - ratio)
    } else {
        last
    };
    let err = (rem - last).abs().max((last - 0.5 * previous).abs());
    (rem, err)
}

/// Integrates `f` over `(0, 1)` splitting geometrically toward the endpoints.
///
/// Integrands may be singular like `x^{-a}` (`a < 1`) at either endpoint;
/// `f` is never evaluated at 0 or 1.
pub fn integrate_unit_interval(
    f: &(impl Fn(f64) -> f64 + Sync),
    cfg: &UnitQuadrature,
) -> Result<UnitIntegral> {
    let levels = cfg.endpoint_levels.max(3);
    let mut pieces = Vec::with_capacity(2 * levels as usize);
    for j in 1..levels {
        let lo = 0.5f64.powi(j as i32 + 1);
        let hi = 0.5f64.powi(j as i32);
        pieces.push((lo, hi));
        pieces.push((1.0 - hi, 1.0 - lo));
    }
    let share = cfg.tol / pieces.len() as f64;
    let results: Vec<Result<(f64, f64)>> = pieces
        .par_iter()
        .map(|&(a, b)| integrate_adaptive(f, a, b, share, cfg.max_segments))
        .collect();
    let mut core = NeumaierSum::new();
    let mut core_err = 0.0;
    let mut by_piece = Vec::with_capacity(pieces.len());
    for r in results {
        let (v, e) = r?;
        core.add(v);
        core_err += e;
        by_piece.push(v);
    }
    // pieces are interleaved left/right, innermost last
    let n = by_piece.len();
    let (left_rem, left_err) = endpoint_remainder(by_piece[n - 2], by_piece[n - 4]);
    let (right_rem, right_err) = endpoint_remainder(by_piece[n - 1], by_piece[n - 3]);
    let tail_value = left_rem + right_rem;
    let value = core.value() + tail_value;
    if !value.is_finite() {
        return Err(Error::NonConvergence {
            op: "integrate_unit_interval",
            detail: "non-finite integral".into(),
        });
    }
    Ok(UnitIntegral {
        value,
        quadrature_error: core_err,
        tail_value,
        tail_error: left_err + right_err,
    })
}
