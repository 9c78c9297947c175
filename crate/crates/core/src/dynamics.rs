//! The Boolean-type map `φ(x) = (x - 1/x)/2` on the real line, the doubling
//! map `ψ` on `[0, 1]`, the conjugacy `ξ(x) = cot(πx)` between them and the
//! invariant Cauchy measure.

use std::f64::consts::PI;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from the poles of `ξ` below which evaluation is refused.
pub const XI_POLE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Phi,
    Psi,
}

/// `φ(x) = (x - 1/x)/2`, with `φ(0) = 0`.
#[inline]
pub fn phi(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        0.5 * (x - 1.0 / x)
    }
}

/// The doubling map `2x mod 1` on `[0, 1]`.
pub fn psi(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("psi", format!("{x} is outside [0, 1]")));
    }
    Ok((2.0 * x).fract())
}

/// `ξ(x) = cot(πx)` on `(0, 1)`.
///
/// The middle half is evaluated as `tan(π(1/2 - x))` so that `ξ(1/2) = 0`
/// exactly and the sign near `1/2` is always correct; the outer quarters use
/// `cos/sin`, reflected to the left quarter for `x > 3/4`.
pub fn xi(x: f64) -> Result<f64> {
    if !(x > XI_POLE_GUARD && x < 1.0 - XI_POLE_GUARD) {
        return Err(Error::domain("xi", format!("{x} is within {XI_POLE_GUARD:e} of a pole or outside (0, 1)")));
    }
    Ok(if x < 0.25 {
        let a = PI * x;
        a.cos() / a.sin()
    } else if x <= 0.75 {
        (PI * (0.5 - x)).tan()
    } else {
        let a = PI * (1.0 - x);
        -a.cos() / a.sin()
    })
}

/// The inverse of `ξ`: the unique `x` in `(0, 1)` with `cot(πx) = t`.
#[inline]
pub fn xi_inverse(t: f64) -> f64 {
    1.0f64.atan2(t) / PI
}

/// Maps a uniform variate `u` in `(0, 1)` to the Cauchy quantile `tan(π(u - 1/2))`.
#[inline]
pub fn cauchy_quantile(u: f64) -> f64 {
    (PI * (u - 0.5)).tan()
}

/// Standard Cauchy distribution function, the CDF of `μ`.
#[inline]
pub fn cauchy_cdf(t: f64) -> f64 {
    0.5 + t.atan() / PI
}

/// Uniform variate strictly inside `(0, 1)`.
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw from `dμ = dt / (π(1 + t²))`.
pub fn sample_mu<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    cauchy_quantile(open_uniform(rng))
}

/// Independent deterministic stream for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `[x0, T x0, ..., T^{n-1} x0]` for `T` the chosen map.
pub fn orbit(x0: f64, n: usize, map: MapKind) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("orbit length must be at least 1"));
    }
    if !x0.is_finite() {
        return Err(Error::domain("orbit", format!("start point {x0} is not finite")));
    }
    let mut out = Vec::with_capacity(n);
    let mut x = x0;
    out.push(x);
    for _ in 1..n {
        x = match map {
            MapKind::Phi => phi(x),
            MapKind::Psi => psi(x)?,
        };
        out.push(x);
    }
    if map == MapKind::Psi {
        psi(x0)?;
    }
    Ok(out)
}

/// `|φ(ξ(x)) - ξ(ψ(x))|`.
pub fn conjugacy_defect(x: f64) -> Result<f64> {
    const GUARD: f64 = 1e-9;
    if !(x > GUARD && x < 1.0 - GUARD) || (x - 0.5).abs() < GUARD {
        return Err(Error::domain(
            "conjugacy_defect",
            format!("{x} is within {GUARD:e} of 0, 1/2 or 1"),
        ));
    }
    Ok((phi(xi(x)?) - xi(psi(x)?)?).abs())
}

/// Reproducibility contract of a Monte-Carlo orbit run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitConfig {
    pub seed: u64,
    pub n: usize,
    pub trials: usize,
    pub burn_in: usize,
    pub map: MapKind,
}

impl OrbitConfig {
    pub fn new(seed: u64, n: usize, trials: usize) -> Self {
        Self {
            seed,
            n,
            trials,
            burn_in: 0,
            map: MapKind::Phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::invalid("orbit length and trial count must be positive"));
        }
        Ok(())
    }
}

/// Orbits from invariant-measure starting points, one per trial.
///
/// `φ`-orbits start from `μ`, `ψ`-orbits from Lebesgue measure. Trial `k`
/// always uses stream `k`, so the output does not depend on scheduling.
pub fn simulate_orbits(cfg: &OrbitConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, k as u64);
            let x0 = match cfg.map {
                MapKind::Phi => sample_mu(&mut rng),
                MapKind::Psi => open_uniform(&mut rng),
            };
            let full = orbit(x0, cfg.burn_in + cfg.n, cfg.map)?;
            Ok(full[cfg.burn_in..].to_vec())
        })
        .collect()
}

/// A periodic orbit `p/q -> 2p/q -> ...` of the doubling map in exact arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalCycle {
    pub q: u64,
    #[serde(with = "ratio_list")]
    pub points: Vec<Ratio<u64>>,
    pub period: usize,
}

mod ratio_list {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Ratio<u64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|r| format!("{}/{}", r.numer(), r.denom()))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Ratio<u64>>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| s.parse::<Ratio<u64>>().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Exact `2r mod 1`.
pub fn double_mod_one(r: Ratio<u64>) -> Ratio<u64> {
    let (p, q) = (*r.numer(), *r.denom());
    Ratio::new((2 * p) % q, q)
}

/// The `ψ`-cycle through `p/q` for odd `q`.
pub fn periodic_cycle(p: u64, q: u64) -> Result<RationalCycle> {
    if q % 2 == 0 {
        return Err(Error::invalid(format!(
            "denominator {q} is even; only odd denominators give purely periodic points"
        )));
    }
    if p == 0 || p >= q {
        return Err(Error::invalid(format!("need 0 < p < q, got {p}/{q}")));
    }
    if num_integer::gcd(p, q) != 1 {
        return Err(Error::invalid(format!("{p}/{q} is not in lowest terms")));
    }
    if q > u64::MAX / 2 {
        return Err(Error::invalid("denominator too large for exact doubling"));
    }
    let start = Ratio::new(p, q);
    let mut points = vec![start];
    let mut r = double_mod_one(start);
    while r != start {
        points.push(r);
        r = double_mod_one(r);
    }
    let period = points.len();
    Ok(RationalCycle { q, points, period })
}

impl RationalCycle {
    /// True when exact doubling of the last point returns the first.
    pub fn closes(&self) -> bool {
        match (self.points.first(), self.points.last()) {
            (Some(&a), Some(&b)) => double_mod_one(b) == a,
            _ => false,
        }
    }

    pub fn points_f64(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|r| *r.numer() as f64 / *r.denom() as f64)
            .collect()
    }

    /// The corresponding `φ`-cycle, `ξ` applied to every point.
    pub fn phi_points(&self) -> Result<Vec<f64>> {
        self.points_f64().into_iter().map(xi).collect()
    }
}
