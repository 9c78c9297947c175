//! Riemann zeta-function and its first two derivatives by Euler–Maclaurin
//! summation, plus growth-exponent fits along vertical lines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fit_line, NeumaierSum};

pub type Complex = num_complex::Complex64;

/// `B_{2j} / (2j)!` for `j = 1..=9`.
const BERNOULLI_COEFF: [f64; 9] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40_320.0,
    5.0 / 66.0 / 3_628_800.0,
    -691.0 / 2730.0 / 479_001_600.0,
    7.0 / 6.0 / 87_178_291_200.0,
    -3617.0 / 510.0 / 20_922_789_888_000.0,
    43867.0 / 798.0 / 6_402_373_705_728_000.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaConfig {
    /// Upper bound `N_max` on the number of directly summed terms.
    pub term_cap: usize,
    /// Number `p` of Bernoulli corrections `B_2, ..., B_{2p}` in the tail.
    pub bernoulli_order: u32,
    /// Relative accuracy an evaluation is compared against in [`ZetaValue::within_target`].
    pub target_rel_error: f64,
}

impl Default for ZetaConfig {
    fn default() -> Self {
        Self {
            term_cap: 200_000,
            bernoulli_order: 8,
            target_rel_error: 1e-12,
        }
    }
}

impl ZetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.term_cap < 10 {
            return Err(Error::invalid(format!("term cap {} is below 10", self.term_cap)));
        }
        let p = self.bernoulli_order;
        if p < 2 || p > 16 || p % 2 != 0 {
            return Err(Error::invalid(format!(
                "Bernoulli order {p} must be even and in 2..=16"
            )));
        }
        if !(self.target_rel_error > 0.0) {
            return Err(Error::invalid("target relative error must be positive"));
        }
        Ok(())
    }

    /// Largest `|Im z|` evaluated at full accuracy.
    pub fn full_accuracy_height(&self) -> f64 {
        self.term_cap as f64 / 1.3
    }

    /// Smallest configuration that reaches full accuracy up to height `t_max`.
    pub fn for_height(t_max: f64) -> Self {
        let cap = (1.3 * t_max.abs()).ceil() as usize + 20;
        Self {
            term_cap: cap.max(Self::default().term_cap),
            ..Self::default()
        }
    }

    /// Number of leading terms for an argument with imaginary part `t`.
    pub fn terms_for(&self, t: f64) -> usize {
        let wanted = (1.3 * t.abs()).ceil() + 10.0;
        let wanted = if wanted.is_finite() && wanted < usize::MAX as f64 {
            wanted as usize
        } else {
            usize::MAX
        };
        wanted.max(10).min(self.term_cap)
    }
}

/// A value of `ζ` or one of its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaValue {
    pub value: Complex,
    /// Estimated absolute error.
    pub error_estimate: f64,
    /// Set when `|Im z|` exceeds the full-accuracy height of the configuration.
    pub degraded: bool,
    pub terms: usize,
}

impl ZetaValue {
    pub fn within_target(&self, cfg: &ZetaConfig) -> bool {
        self.error_estimate <= cfg.target_rel_error * self.value.norm().max(1.0)
    }
}

/// Value and first two derivatives of an analytic function at a point.
#[derive(Debug, Clone, Copy)]
struct Jet([Complex; 3]);

impl Jet {
    fn mul(self, o: Jet) -> Jet {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        Jet([a0 * b0, a0 * b1 + a1 * b0, a0 * b2 + 2.0 * a1 * b1 + a2 * b0])
    }

    fn scale(self, c: f64) -> Jet {
        Jet(self.0.map(|v| v * c))
    }

    /// `N^{-z-c}` with `l = ln N`.
    fn power(z: Complex, c: f64, l: f64) -> Jet {
        let e = (-(z + c) * l).exp();
        Jet([e, -l * e, l * l * e])
    }

    /// `z + c` as a function of `z`.
    fn shifted(z: Complex, c: f64) -> Jet {
        Jet([z + c, Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)])
    }
}

fn check_argument(z: Complex) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain("zeta", format!("non-finite argument {z}")));
    }
    if z.re <= -1.0 {
        return Err(Error::domain(
            "zeta",
            format!("Re z = {} is outside the supported half-plane Re z > -1", z.re),
        ));
    }
    if z == Complex::new(1.0, 0.0) {
        return Err(Error::Pole);
    }
    Ok(())
}

/// Euler–Maclaurin evaluation of `ζ^{(k)}(z)` with `n_terms` leading terms
/// and at most `order` Bernoulli corrections.
///
/// With `truncate_optimally` the correction series stops as soon as its
/// terms stop decreasing.
pub fn zeta_with_terms(
    z: Complex,
    k: usize,
    n_terms: usize,
    order: u32,
    truncate_optimally: bool,
) -> Result<ZetaValue> {
    check_argument(z)?;
    if k > 2 {
        return Err(Error::invalid(format!("derivative order {k} is not in 0..=2")));
    }
    if n_terms < 2 {
        return Err(Error::invalid("at least two leading terms are needed"));
    }
    let n = n_terms;
    let mut re = NeumaierSum::new();
    let mut im = NeumaierSum::new();
    let mut abs_sum = 0.0;
    // phase errors grow like |z| ln n per term and accumulate as a random walk
    let mut phase_sq = 0.0;
    for j in 1..n {
        let l = (j as f64).ln();
        let term = (-z * l).exp() * (-l).powi(k as i32);
        re.add(term.re);
        im.add(term.im);
        let mag = term.norm();
        abs_sum += mag;
        phase_sq += (mag * z.norm() * l).powi(2);
    }

    let big_n = n as f64;
    let l = big_n.ln();
    // N^{1-z} / (z - 1)
    let w = z - 1.0;
    let inv = Jet([1.0 / w, -1.0 / (w * w), 2.0 / (w * w * w)]);
    let integral = Jet::power(z, -1.0, l).mul(inv);
    let half = Jet::power(z, 0.0, l).scale(0.5);
    let mut tail = integral.0[k] + half.0[k];

    let pairs = order as usize;
    let mut poly = Jet::shifted(z, 0.0);
    let mut last_mag = f64::INFINITY;
    let mut omitted = None;
    for j in 1..=pairs + 1 {
        let term = poly
            .mul(Jet::power(z, (2 * j - 1) as f64, l))
            .scale(BERNOULLI_COEFF[j - 1])
            .0[k];
        let mag = term.norm();
        if j > pairs || (truncate_optimally && mag >= last_mag) {
            omitted = Some(mag);
            break;
        }
        tail += term;
        last_mag = mag;
        poly = poly
            .mul(Jet::shifted(z, (2 * j - 1) as f64))
            .mul(Jet::shifted(z, (2 * j) as f64));
    }

    let value = Complex::new(re.value() + tail.re, im.value() + tail.im);
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonConvergence {
            op: "zeta",
            detail: format!("non-finite result at z = {z}"),
        });
    }
    let rounding = f64::EPSILON * (16.0 * (abs_sum + tail.norm() + value.norm()) + 2.0 * phase_sq.sqrt());
    let error_estimate = 2.0 * omitted.unwrap_or(0.0) + rounding;
    Ok(ZetaValue {
        value,
        error_estimate,
        degraded: false,
        terms: n,
    })
}

fn evaluate(z: Complex, k: usize, cfg: &ZetaConfig) -> Result<ZetaValue> {
    cfg.validate()?;
    let degraded = z.im.abs() > cfg.full_accuracy_height();
    let n = cfg.terms_for(z.im);
    let mut v = zeta_with_terms(z, k, n, cfg.bernoulli_order, degraded)?;
    v.degraded = degraded;
    Ok(v)
}

/// `ζ(z)` for `Re z > -1`, `z ≠ 1`.
pub fn zeta_eval(z: Complex, cfg: &ZetaConfig) -> Result<ZetaValue> {
    evaluate(z, 0, cfg)
}

/// `ζ^{(k)}(z)` for `k ∈ {1, 2}`.
pub fn zeta_derivative(z: Complex, k: usize, cfg: &ZetaConfig) -> Result<ZetaValue> {
    if !(1..=2).contains(&k) {
        return Err(Error::invalid(format!("derivative order {k} must be 1 or 2")));
    }
    evaluate(z, k, cfg)
}

/// Least-squares slope of `ln(running max of |f|)` against `ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub exponent: f64,
    /// `exp(intercept)`, the fitted implicit constant.
    pub constant: f64,
}

/// Fits the growth exponent of the running-maximum envelope of `magnitudes`
/// sampled at the increasing heights `t_grid`.
pub fn envelope_exponent(t_grid: &[f64], magnitudes: &[f64]) -> Result<GrowthFit> {
    if t_grid.len() != magnitudes.len() || t_grid.len() < 2 {
        return Err(Error::invalid("grid and samples must match and have at least two points"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] <= 0.0 {
        return Err(Error::invalid("grid must be positive and strictly increasing"));
    }
    let mut running = 0.0f64;
    let mut xs = Vec::with_capacity(t_grid.len());
    let mut ys = Vec::with_capacity(t_grid.len());
    for (&t, &m) in t_grid.iter().zip(magnitudes) {
        if !m.is_finite() {
            return Err(Error::invalid(format!("non-finite magnitude at t = {t}")));
        }
        running = running.max(m.abs());
        if running > 0.0 {
            xs.push(t.ln());
            ys.push(running.ln());
        }
    }
    if xs.is_empty() {
        // identically zero: flat envelope
        return Ok(GrowthFit { exponent: 0.0, constant: 0.0 });
    }
    let (slope, intercept) = if xs.len() >= 2 {
        fit_line(&xs, &ys).ok_or_else(|| Error::invalid("degenerate grid"))?
    } else {
        (0.0, ys[0])
    };
    Ok(GrowthFit {
        exponent: slope,
        constant: intercept.exp(),
    })
}

/// Fits the envelope exponent of `|ζ^{(k)}(s + it)|` over `t_grid`.
pub fn growth_exponent_fit(s: f64, t_grid: &[f64], k: usize, cfg: &ZetaConfig) -> Result<GrowthFit> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid(format!("s = {s} is outside (0, 1)")));
    }
    if t_grid.len() < 50 {
        return Err(Error::invalid(format!(
            "growth fits need at least 50 grid points, got {}",
            t_grid.len()
        )));
    }
    let mags: Vec<f64> = t_grid
        .par_iter()
        .map(|&t| {
            let z = Complex::new(s, t);
            let v = if k == 0 { zeta_eval(z, cfg) } else { zeta_derivative(z, k, cfg) }?;
            Ok(v.value.norm())
        })
        .collect::<Result<_>>()?;
    envelope_exponent(t_grid, &mags)
}
