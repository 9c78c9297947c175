//! Observables `h` on the real line, their pullbacks `h̃ = h∘ξ` to `(0, 1)`,
//! the weight `R_α`, ball oscillations and the `|·|_{α,β}` seminorm.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{phi, xi, xi_inverse};
use crate::error::{Error, Result};
use crate::numeric::{
    fit_line, gauss_mean_7, integrate_adaptive, integrate_unit_interval, UnitIntegral,
    UnitQuadrature,
};
use crate::zeta::{zeta_derivative, zeta_eval, Complex, GrowthFit, ZetaConfig};

/// Built-in test observables, written as functions of `t` on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// `h ≡ c`.
    Const(f64),
    /// `h(t) = 1[t ≤ 0]`, so `h̃(x) = 1[x ≥ 1/2]`, the first binary digit.
    Digit,
    /// `h(t) = (t² - 1)/(t² + 1)`, so `h̃(x) = cos 2πx`.
    Cos,
    /// `h(t) = |t|^p`.
    Power(f64),
    /// `g - g∘φ` with `g(t) = 1/(1 + t²)`.
    Coboundary,
    /// `h(t) = 1/(1 + t²)`.
    Lorentz,
    /// `h(t) = t/(1 + t²)`.
    LorentzOdd,
    /// `h(t) = ξ^{-1}(t)`, so `h̃(x) = x`.
    Angle,
}

impl Builtin {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Builtin::Const(c) => c,
            Builtin::Digit => {
                if t <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Cos => {
                if t.abs() > 1e150 {
                    1.0
                } else {
                    let t2 = t * t;
                    (t2 - 1.0) / (t2 + 1.0)
                }
            }
            Builtin::Power(p) => t.abs().powf(p),
            Builtin::Coboundary => lorentz(t) - lorentz(phi(t)),
            Builtin::Lorentz => lorentz(t),
            Builtin::LorentzOdd => {
                if t.abs() > 1e150 {
                    1.0 / t
                } else {
                    t / (1.0 + t * t)
                }
            }
            Builtin::Angle => xi_inverse(t),
        }
    }

    /// Growth exponent `w` with `|h(t)| ≪ |t|^w`.
    pub fn declared_w(&self) -> f64 {
        match *self {
            Builtin::Power(p) => p,
            _ => 0.0,
        }
    }

    pub fn is_coboundary(&self) -> bool {
        matches!(self, Builtin::Coboundary)
    }
}

fn lorentz(t: f64) -> f64 {
    if t.abs() > 1e150 {
        0.0
    } else {
        1.0 / (1.0 + t * t)
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Const(c) => write!(f, "const:{c}"),
            Builtin::Digit => f.write_str("digit"),
            Builtin::Cos => f.write_str("cos"),
            Builtin::Power(p) => write!(f, "power:{p}"),
            Builtin::Coboundary => f.write_str("coboundary"),
            Builtin::Lorentz => f.write_str("lorentz"),
            Builtin::LorentzOdd => f.write_str("lorentz-odd"),
            Builtin::Angle => f.write_str("angle"),
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::invalid(format!("bad numeric parameter in observable '{s}'")))
        };
        Ok(match s.trim() {
            "digit" => Builtin::Digit,
            "cos" => Builtin::Cos,
            "coboundary" => Builtin::Coboundary,
            "lorentz" => Builtin::Lorentz,
            "lorentz-odd" => Builtin::LorentzOdd,
            "angle" => Builtin::Angle,
            other => {
                if let Some(v) = other.strip_prefix("const:") {
                    Builtin::Const(parse_num(v)?)
                } else if let Some(v) = other.strip_prefix("power:") {
                    let p = parse_num(v)?;
                    if p < 0.0 {
                        return Err(Error::invalid(format!("power exponent {p} is negative")));
                    }
                    Builtin::Power(p)
                } else {
                    return Err(Error::invalid(format!("unknown observable '{other}'")));
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservableKind {
    ZetaRe,
    ZetaIm,
    ZetaAbs,
    Builtin(Builtin),
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::ZetaRe => f.write_str("zeta-re"),
            ObservableKind::ZetaIm => f.write_str("zeta-im"),
            ObservableKind::ZetaAbs => f.write_str("zeta-abs"),
            ObservableKind::Builtin(b) => b.fmt(f),
        }
    }
}

/// An observable `h` together with its growth exponent `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    /// Real part of the vertical line for zeta kinds.
    pub s: Option<f64>,
    pub w: f64,
    pub zeta: ZetaConfig,
}

/// `δ_s = s/4 - 1/12`.
pub fn delta_s(s: f64) -> f64 {
    s / 4.0 - 1.0 / 12.0
}

/// Growth exponent of `ζ(s + it)` observables: `(1 - s)/2 + δ_s`, which is
/// below 1/3 exactly when `s > 1/3`; for `s ≤ 1/3` only `(1 - s)/2` is used.
pub fn zeta_growth_exponent(s: f64) -> f64 {
    (1.0 - s) / 2.0 + delta_s(s).max(0.0)
}

/// Default `(α, β)`: the points splitting `(w, 1/3)` into thirds.
pub fn default_alpha_beta(w: f64) -> (f64, f64) {
    let gap = 1.0 / 3.0 - w;
    (w + gap / 3.0, w + 2.0 * gap / 3.0)
}

impl ObservableSpec {
    pub fn zeta(kind: ObservableKind, s: f64) -> Result<Self> {
        if matches!(kind, ObservableKind::Builtin(_)) {
            return Err(Error::invalid("zeta constructor called with a builtin kind"));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!("s = {s} is outside the critical strip (0, 1)")));
        }
        Ok(Self {
            kind,
            s: Some(s),
            w: zeta_growth_exponent(s),
            zeta: ZetaConfig::default(),
        })
    }

    pub fn builtin(b: Builtin) -> Self {
        Self {
            kind: ObservableKind::Builtin(b),
            s: None,
            w: b.declared_w(),
            zeta: ZetaConfig::default(),
        }
    }

    /// Parses `zeta-re`, `zeta-im`, `zeta-abs` (which need `s`) or a builtin name.
    pub fn parse(name: &str, s: Option<f64>) -> Result<Self> {
        let kind = match name.trim() {
            "zeta-re" => Some(ObservableKind::ZetaRe),
            "zeta-im" => Some(ObservableKind::ZetaIm),
            "zeta-abs" => Some(ObservableKind::ZetaAbs),
            _ => None,
        };
        match kind {
            Some(k) => {
                let s = s.ok_or_else(|| Error::invalid(format!("observable '{name}' needs s")))?;
                Self::zeta(k, s)
            }
            None => Ok(Self::builtin(name.parse()?)),
        }
    }

    pub fn with_zeta_config(mut self, cfg: ZetaConfig) -> Self {
        self.zeta = cfg;
        self
    }

    pub fn is_zeta(&self) -> bool {
        self.s.is_some()
    }

    /// `w < 1/3`, the range covered by the limit theorem.
    pub fn admissible(&self) -> bool {
        self.w < 1.0 / 3.0
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn default_alpha_beta(&self) -> (f64, f64) {
        default_alpha_beta(self.w)
    }

    /// Quadrature settings for integrals of `h̃` over `(0, 1)`.
    ///
    /// Zeta observables stop the endpoint refinement at `2^-12`, where the
    /// pullback already oscillates on the scale of the pieces; the remainder
    /// is extrapolated.
    pub fn quadrature(&self) -> UnitQuadrature {
        if self.is_zeta() {
            UnitQuadrature {
                tol: 1e-9,
                endpoint_levels: 12,
                max_segments: 20_000,
            }
        } else {
            UnitQuadrature::default()
        }
    }
}

impl Serialize for ObservableSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("ObservableSpec", 4)?;
        st.serialize_field("name", &self.name())?;
        st.serialize_field("s", &self.s)?;
        st.serialize_field("w", &self.w)?;
        st.serialize_field("admissible", &self.admissible())?;
        st.end()
    }
}

/// `h(t)` together with the degraded-accuracy flag of the underlying zeta evaluation.
pub fn eval_h_flagged(spec: &ObservableSpec, t: f64) -> Result<(f64, bool)> {
    if !t.is_finite() {
        return Err(Error::domain("eval_h", format!("non-finite argument {t}")));
    }
    let zeta_at = |s: f64| zeta_eval(Complex::new(s, t), &spec.zeta);
    Ok(match (spec.kind, spec.s) {
        (ObservableKind::Builtin(b), _) => (b.eval(t), false),
        (kind, Some(s)) => {
            let v = zeta_at(s)?;
            let x = match kind {
                ObservableKind::ZetaRe => v.value.re,
                ObservableKind::ZetaIm => v.value.im,
                _ => v.value.norm(),
            };
            (x, v.degraded)
        }
        (_, None) => return Err(Error::invalid("zeta observable without s")),
    })
}

/// `h(t)`.
pub fn eval_h(spec: &ObservableSpec, t: f64) -> Result<f64> {
    eval_h_flagged(spec, t).map(|v| v.0)
}

/// `h̃(x) = h(ξ(x))` for `x` in `(0, 1)`.
pub fn tilde_eval(spec: &ObservableSpec, x: f64) -> Result<f64> {
    eval_h(spec, xi(x)?)
}

/// `h̃` as a plain function, panicking only for arguments outside `(0, 1)`.
pub fn tilde_fn(spec: &ObservableSpec) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| tilde_eval(spec, x).unwrap_or(f64::NAN)
}

/// Derivative of `t ↦ h(t)` for zeta observables, from `ζ'`.
pub fn zeta_h_derivative(spec: &ObservableSpec, t: f64) -> Result<f64> {
    let s = spec.s.ok_or_else(|| Error::invalid("zeta observable without s"))?;
    let z = Complex::new(s, t);
    let d = zeta_derivative(z, 1, &spec.zeta)?.value * Complex::new(0.0, 1.0);
    Ok(match spec.kind {
        ObservableKind::ZetaRe => d.re,
        ObservableKind::ZetaIm => d.im,
        _ => {
            let v = zeta_eval(z, &spec.zeta)?.value;
            let n = v.norm();
            if n == 0.0 {
                0.0
            } else {
                (v.conj() * d).re / n
            }
        }
    })
}

/// `R_α f(x) = x^α (1 - x)^α f(x)`, set to 0 at the endpoints without evaluating `f`.
pub fn r_alpha(f: &impl Fn(f64) -> f64, alpha: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (x * (1.0 - x)).powf(alpha) * f(x)
    }
}

/// `sup - inf` of `f` over `resolution` equispaced points of `[a, b]`.
pub fn oscillation(f: &impl Fn(f64) -> f64, a: f64, b: f64, resolution: usize) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let res = resolution.max(2);
    let (lo, hi) = (0..res)
        .map(|i| f(a + (b - a) * i as f64 / (res - 1) as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// `ε = 2^-k` for `k = 4..=17`.
pub fn default_schedule() -> Vec<f64> {
    (4..=17).map(|k| 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormConfig {
    /// Strictly decreasing radii `ε`.
    pub schedule: Vec<f64>,
    /// Minimum number of grid points inside every ball `B_ε(x)`.
    pub points_per_ball: usize,
}

impl Default for SeminormConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            points_per_ball: 32,
        }
    }
}

impl SeminormConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.len() < 3 {
            return Err(Error::invalid("the schedule needs at least three radii"));
        }
        if s.iter().any(|&e| !(e > 0.0 && e < 0.5)) {
            return Err(Error::invalid("schedule radii must lie in (0, 1/2)"));
        }
        if s.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("schedule must be strictly decreasing"));
        }
        if *s.last().unwrap() >= 1e-5 {
            return Err(Error::invalid("schedule must decrease below 1e-5"));
        }
        if self.points_per_ball < 2 {
            return Err(Error::invalid("need at least two points per ball"));
        }
        Ok(())
    }

    /// Number of grid intervals, a power of two.
    pub fn grid_intervals(&self) -> usize {
        let eps_min = self.schedule.last().copied().unwrap_or(1e-6);
        let need = (self.points_per_ball as f64 / (2.0 * eps_min)).ceil() as usize;
        need.next_power_of_two()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon_schedule: Vec<f64>,
    /// `∫ osc(R_α f, B_ε(x)) dx / ε^β` for every `ε` of the schedule.
    pub per_epsilon: Vec<f64>,
    /// Maximum over the last third of the schedule, `None` when divergent.
    pub value: Option<f64>,
    pub diverges: bool,
    /// Least-squares slope of `ln(per-ε value)` against `ln(1/ε)` on the tail.
    pub tail_slope: f64,
    pub grid_intervals: usize,
    pub min_points_per_ball: usize,
}

impl SeminormEstimate {
    pub fn tail_len(&self) -> usize {
        (self.per_epsilon.len() / 3).max(1)
    }

    pub fn tail(&self) -> &[f64] {
        &self.per_epsilon[self.per_epsilon.len() - self.tail_len()..]
    }

    pub fn tail_max(&self) -> f64 {
        self.tail().iter().copied().fold(0.0, f64::max)
    }

    pub fn tail_median(&self) -> f64 {
        let mut t = self.tail().to_vec();
        t.sort_by(f64::total_cmp);
        let n = t.len();
        if n % 2 == 1 {
            t[n / 2]
        } else {
            0.5 * (t[n / 2 - 1] + t[n / 2])
        }
    }

    /// Finite seminorm value or the divergence error.
    pub fn finite(&self) -> Result<f64> {
        self.value.ok_or(Error::SeminormDiverges {
            last: self.per_epsilon.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Per-ε values larger than this mark the seminorm as infinite.
pub const SEMINORM_OVERFLOW: f64 = 1e6;
/// Tail growth rate in `1/ε` above which the seminorm is deemed infinite.
pub const SEMINORM_DIVERGENT_SLOPE: f64 = 0.1;
/// Tails entirely below this are rounding noise and never count as growing.
pub const SEMINORM_NOISE_FLOOR: f64 = 1e-9;

/// Samples of `R_α f` on the grid `i / g`, `i = 0..=g`.
pub fn sample_weighted(f: &(impl Fn(f64) -> f64 + Sync), alpha: f64, g: usize) -> Vec<f64> {
    (0..=g)
        .into_par_iter()
        .map(|i| r_alpha(f, alpha, i as f64 / g as f64))
        .collect()
}

/// `∫₀¹ osc(v, B_ε(x)) dx` for grid samples `v` on `[0, 1]`, with a ball of
/// `half_width` grid steps, by the trapezoidal rule.
pub fn ball_oscillation_integral(v: &[f64], half_width: usize) -> f64 {
    let n = v.len();
    let h = 1.0 / (n - 1) as f64;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    let mut acc = 0.0;
    for i in 0..n {
        let hi = (i + half_width).min(n - 1);
        while next <= hi {
            while maxq.back().is_some_and(|&j| v[j] <= v[next]) {
                maxq.pop_back();
            }
            maxq.push_back(next);
            while minq.back().is_some_and(|&j| v[j] >= v[next]) {
                minq.pop_back();
            }
            minq.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(half_width);
        while maxq.front().is_some_and(|&j| j < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < lo) {
            minq.pop_front();
        }
        let osc = v[maxq[0]] - v[minq[0]];
        let weight = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += weight * osc;
    }
    acc * h
}

/// Per-ε values of the seminorm from precomputed samples of `R_α f`.
pub fn per_epsilon_values(weighted: &[f64], beta: f64, schedule: &[f64]) -> Vec<f64> {
    let g = weighted.len() - 1;
    schedule
        .par_iter()
        .map(|&eps| {
            let half = (eps * g as f64).floor() as usize;
            ball_oscillation_integral(weighted, half) / eps.powf(beta)
        })
        .collect()
}

fn check_alpha_beta(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < beta && beta <= 1.0) {
        return Err(Error::invalid(format!("need 0 < α < β ≤ 1, got α = {alpha}, β = {beta}")));
    }
    Ok(())
}

/// Summarizes a per-ε sequence into a seminorm estimate.
pub fn summarize_seminorm(
    alpha: f64,
    beta: f64,
    schedule: &[f64],
    per_epsilon: Vec<f64>,
    grid_intervals: usize,
) -> SeminormEstimate {
    let n = per_epsilon.len();
    let tail_len = (n / 3).max(1);
    let tail = &per_epsilon[n - tail_len..];
    let tail_eps = &schedule[n - tail_len..];
    let tail_max = tail.iter().copied().fold(0.0, f64::max);
    let overflow = per_epsilon.iter().any(|v| !v.is_finite() || *v > SEMINORM_OVERFLOW);
    let xs: Vec<f64> = tail_eps.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let tail_slope = if tail.iter().all(|&v| v > 0.0) {
        fit_line(&xs, &ys).map(|(m, _)| m).unwrap_or(0.0)
    } else {
        0.0
    };
    let growing = tail_len >= 2
        && tail_slope >= SEMINORM_DIVERGENT_SLOPE
        && tail[tail_len - 1] > tail[0]
        && tail_max > SEMINORM_NOISE_FLOOR;
    let diverges = overflow || growing;
    let min_points = schedule
        .iter()
        .map(|&e| 2 * (e * grid_intervals as f64).floor() as usize + 1)
        .min()
        .unwrap_or(0);
    SeminormEstimate {
        alpha,
        beta,
        epsilon_schedule: schedule.to_vec(),
        per_epsilon,
        value: if diverges { None } else { Some(tail_max) },
        diverges,
        tail_slope,
        grid_intervals,
        min_points_per_ball: min_points,
    }
}

/// Grid estimate of `|f|_{α,β} = limsup_ε ∫ osc(R_α f, B_ε(x)) dx / ε^β`.
pub fn seminorm_estimate(
    f: &(impl Fn(f64) -> f64 + Sync),
    alpha: f64,
    beta: f64,
    cfg: &SeminormConfig,
) -> Result<SeminormEstimate> {
    check_alpha_beta(alpha, beta)?;
    cfg.validate()?;
    let g = cfg.grid_intervals();
    let weighted = sample_weighted(f, alpha, g);
    if let Some(i) = weighted.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(
            "seminorm_estimate",
            format!("non-finite weighted value at x = {}", i as f64 / g as f64),
        ));
    }
    let per = per_epsilon_values(&weighted, beta, &cfg.schedule);
    Ok(summarize_seminorm(alpha, beta, &cfg.schedule, per, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub seminorm: SeminormEstimate,
    /// `‖f‖₂ + |f|_{α,β}`.
    pub norm_ab: f64,
    /// `‖f‖₁ + |f|_{α,β}`.
    pub norm_ab_prime: f64,
}

/// `L¹`, `L²` norms and the seminorm of `f` on `(0, 1)`.
pub fn norms(
    f: &(impl Fn(f64) -> f64 + Sync),
    alpha: f64,
    beta: f64,
    cfg: &SeminormConfig,
    quad: &UnitQuadrature,
) -> Result<Norms> {
    let seminorm = seminorm_estimate(f, alpha, beta, cfg)?;
    let semi = seminorm.finite()?;
    let l1 = integrate_unit_interval(&|x| f(x).abs(), quad)?.value;
    let l2 = integrate_unit_interval(&|x| f(x).powi(2), quad)?.value.sqrt();
    Ok(Norms {
        l1,
        l2,
        seminorm,
        norm_ab: l2 + semi,
        norm_ab_prime: l1 + semi,
    })
}

/// A function on `[0, 1]` constant on the dyadic bins `[j 2^-m, (j+1) 2^-m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicFunction {
    pub m: u32,
    pub values: Vec<f64>,
}

impl DyadicFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let j = ((x * n as f64).floor().max(0.0) as usize).min(n - 1);
        self.values[j]
    }
}

/// `E(f | B_m)`: the mean of `f` over each dyadic bin of width `2^-m`.
pub fn dyadic_average(f: &(impl Fn(f64) -> f64 + Sync), m: u32, quad: &UnitQuadrature) -> Result<DyadicFunction> {
    if m == 0 || m > 24 {
        return Err(Error::invalid(format!("dyadic level {m} outside 1..=24")));
    }
    let n = 1usize << m;
    let h = 1.0 / n as f64;
    let values = (0..n)
        .into_par_iter()
        .map(|j| {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            if j == 0 || j == n - 1 {
                // possible endpoint singularity: refine geometrically inside the bin
                let g = |u: f64| f(a + u * h);
                let inner = UnitQuadrature {
                    endpoint_levels: quad.endpoint_levels.saturating_sub(m).max(3),
                    ..*quad
                };
                Ok(integrate_unit_interval(&g, &inner)?.value)
            } else {
                let tol = quad.tol.max(1e-14);
                Ok(integrate_adaptive(f, a, b, tol * h, quad.max_segments)?.0 / h)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DyadicFunction { m, values })
}

/// Outcome of comparing the envelope growth of `|h|` and `|h'|` with `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub value_fit: GrowthFit,
    pub derivative_fit: GrowthFit,
    pub declared_w: f64,
    /// `min(w, 1/3) + 0.05`.
    pub threshold: f64,
    pub pass: bool,
}

/// Step of the central difference used for `h'` in [`growth_check`].
pub const GROWTH_FD_STEP: f64 = 1e-3;

/// Fits envelope exponents of `|h|` and of a central-difference `|h'|` on
/// `t_grid` and compares them with the declared exponent.
pub fn growth_check(spec: &ObservableSpec, t_grid: &[f64]) -> Result<GrowthCheck> {
    if t_grid.len() < 2 {
        return Err(Error::invalid("growth grid needs at least two points"));
    }
    let t_max = t_grid.iter().fold(0.0f64, |m, t| m.max(t.abs())) + 1.0;
    let mut spec = *spec;
    if spec.zeta.full_accuracy_height() < t_max {
        spec.zeta = ZetaConfig::for_height(t_max);
    }
    let samples: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let v = eval_h(&spec, t)?;
            let d = (eval_h(&spec, t + GROWTH_FD_STEP)? - eval_h(&spec, t - GROWTH_FD_STEP)?)
                / (2.0 * GROWTH_FD_STEP);
            Ok((v.abs(), d.abs()))
        })
        .collect::<Result<_>>()?;
    let (vals, ders): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let value_fit = crate::zeta::envelope_exponent(t_grid, &vals)?;
    let derivative_fit = crate::zeta::envelope_exponent(t_grid, &ders)?;
    let threshold = spec.w.min(1.0 / 3.0) + 0.05;
    Ok(GrowthCheck {
        value_fit,
        derivative_fit,
        declared_w: spec.w,
        threshold,
        pass: value_fit.exponent < threshold && derivative_fit.exponent < threshold,
    })
}

/// Both sides of `∫ h̃² dλ = ∫ h² dμ` restricted to `x ∈ [δ, 1 - δ]`, i.e.
/// `t ∈ [ξ(1 - δ), ξ(δ)]`, with `δ = 2^-levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Identity {
    pub delta: f64,
    pub x_side: f64,
    pub t_side: f64,
    pub relative_difference: f64,
}

pub fn l2_identity(spec: &ObservableSpec, levels: u32) -> Result<L2Identity> {
    let delta = 0.5f64.powi(levels as i32);
    let tol = 1e-11;
    let cap = 200_000;
    let h2 = |x: f64| tilde_eval(spec, x).map(|v| v * v).unwrap_or(f64::NAN);
    // x side on dyadic pieces toward both ends
    let mut pieces = vec![(0.25, 0.75)];
    for j in 2..levels {
        let (lo, hi) = (0.5f64.powi(j as i32 + 1), 0.5f64.powi(j as i32));
        pieces.push((lo, hi));
        pieces.push((1.0 - hi, 1.0 - lo));
    }
    let x_side: f64 = pieces
        .par_iter()
        .map(|&(a, b)| integrate_adaptive(&h2, a, b, tol, cap).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    // t side: the same pieces mapped through ξ, integrated against dμ
    let t_pieces: Vec<(f64, f64)> = pieces
        .iter()
        .map(|&(a, b)| Ok((xi(b)?, xi(a)?)))
        .collect::<Result<_>>()?;
    let density = |t: f64| {
        let v = eval_h(spec, t).unwrap_or(f64::NAN);
        v * v / (std::f64::consts::PI * (1.0 + t * t))
    };
    let t_side: f64 = t_pieces
        .par_iter()
        .map(|&(a, b)| integrate_adaptive(&density, a, b, tol, cap).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(L2Identity {
        delta,
        x_side,
        t_side,
        relative_difference: (x_side - t_side).abs() / x_side.abs().max(f64::MIN_POSITIVE),
    })
}

/// `∫₀¹ h̃ dλ = ∫ h dμ` with geometric refinement toward the endpoints.
pub fn integrate_tilde(spec: &ObservableSpec, power: i32) -> Result<UnitIntegral> {
    let f = |x: f64| tilde_eval(spec, x).map(|v| v.powi(power)).unwrap_or(f64::NAN);
    integrate_unit_interval(&f, &spec.quadrature())
}

/// Cell means of `h̃` against a 7-point Gauss rule on `2^m` dyadic bins.
pub fn gauss_bin_means(f: &(impl Fn(f64) -> f64 + Sync), m: u32) -> Vec<f64> {
    let n = 1usize << m;
    let h = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|j| gauss_mean_7(f, j as f64 * h, (j + 1) as f64 * h))
        .collect()
}
