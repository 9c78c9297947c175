//! Birkhoff sums, expectations, the asymptotic variance `σ²`, Monte-Carlo
//! limit-theorem experiments and the periodic-orbit coboundary test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{phi, sample_mu, trial_rng, RationalCycle};
use crate::error::{Error, Result};
use crate::numeric::{ks_distance, ks_distance_classical, mean_var, NeumaierSum, UnitIntegral};
use crate::observables::{eval_h_flagged, integrate_tilde, tilde_eval, ObservableSpec};
use crate::transfer::{
    covariance_table, covariance_trajectory_length, fit_decay, sample_orbits, CovarianceReport, OrbitSample,
};

/// Width of the window around zero used for the degenerate branch.
pub const DEGENERATE_EPS: f64 = 0.1;
/// `σ²` below this is reported as the degenerate branch.
pub const DEGENERATE_SIGMA2: f64 = 1e-3;
/// Largest fraction of degraded zeta evaluations in a clean run.
pub const FLAG_BUDGET: f64 = 1e-3;
/// Verdict threshold of the cycle-sum test.
pub const COBOUNDARY_TOL: f64 = 1e-6;
pub const DEFAULT_K_MAX: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffSum {
    pub value: f64,
    pub flagged: u64,
}

/// `S_n = Σ_{j<n} h(φ^j x0)` along the orbit of `x0`.
pub fn birkhoff_sum(spec: &ObservableSpec, x0: f64, n: usize) -> Result<BirkhoffSum> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut acc = NeumaierSum::new();
    let mut flagged = 0;
    let mut x = x0;
    for _ in 0..n {
        let (v, f) = eval_h_flagged(spec, x)?;
        acc.add(v);
        flagged += f as u64;
        x = phi(x);
    }
    Ok(BirkhoffSum {
        value: acc.value(),
        flagged,
    })
}

/// `S_n` for an arbitrary observable.
pub fn birkhoff_sum_fn(h: impl Fn(f64) -> f64, x0: f64, n: usize) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut x = x0;
    for _ in 0..n {
        acc.add(h(x));
        x = phi(x);
    }
    acc.value()
}

/// `∫ h dμ = ∫₀¹ h̃ dλ`.
pub fn expectation_quadrature(spec: &ObservableSpec) -> Result<UnitIntegral> {
    if spec.w >= 1.0 {
        return Err(Error::invalid(format!("growth exponent w = {} must be below 1", spec.w)));
    }
    integrate_tilde(spec, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Series {
    /// `V(h) + 2 Σ_{k=1}^{k_max} Cov(h, h∘φ^k)`.
    pub value: f64,
    /// Monte-Carlo standard error plus the truncation bound.
    pub se: f64,
    pub monte_carlo_se: f64,
    /// `2|Cov(k_max)| θ/(1-θ)` from the fitted decay, or 0 without a fit.
    pub truncation_tail: f64,
    pub covariance: CovarianceReport,
}

/// `σ²` from the per-trajectory lag covariances of an orbit sample.
pub(crate) fn sigma2_from_sample(sample: &OrbitSample, k_max: usize) -> Sigma2Series {
    let (cov, se, per) = covariance_table(sample, k_max);
    let per_sigma: Vec<f64> = per
        .iter()
        .map(|c| {
            let mut acc = NeumaierSum::new();
            acc.add(c[0]);
            c[1..].iter().for_each(|v| acc.add(2.0 * v));
            acc.value()
        })
        .collect();
    let (value, var) = mean_var(&per_sigma);
    let monte_carlo_se = (var / per_sigma.len() as f64).sqrt();
    let (theta, fit_constant, usable) = fit_decay(&cov, &se);
    let last = cov.len() - 1;
    let truncation_tail = match theta {
        Some(t) if t < 1.0 => 2.0 * cov[last].abs() * t / (1.0 - t),
        _ => 0.0,
    };
    let covariance = CovarianceReport {
        k_max: last,
        mean: sample.pivot + sample.shifted_mean(),
        theta,
        fit_constant,
        usable_lags: usable,
        fit_available: theta.is_some(),
        trajectories: sample.shifted.len(),
        trajectory_length: sample.shifted.first().map_or(0, |t| t.len()),
        evaluations: sample.evaluations(),
        flagged: sample.flagged,
        cov,
        se,
    };
    Sigma2Series {
        value,
        se: monte_carlo_se + truncation_tail,
        monte_carlo_se,
        truncation_tail,
        covariance,
    }
}

/// `σ²` by the covariance series from `n_samples` independent trajectories.
pub fn sigma2_series(spec: &ObservableSpec, k_max: usize, n_samples: usize, seed: u64) -> Result<Sigma2Series> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    let sample = sample_orbits(spec, n_samples, covariance_trajectory_length(k_max), seed)?;
    Ok(sigma2_from_sample(&sample, k_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
    /// Fraction of normalized values with `|z| < 0.1`.
    pub mass_near_zero: f64,
}

fn summarize(xs: &[f64]) -> SampleSummary {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    SampleSummary {
        min: v[0],
        q05: q(0.05),
        median: q(0.5),
        q95: q(0.95),
        max: v[v.len() - 1],
        mass_near_zero: xs.iter().filter(|x| x.abs() < DEGENERATE_EPS).count() as f64 / xs.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub trials: usize,
    pub mean_sn: f64,
    pub var_sn: f64,
    /// `Var(S_n)/n`.
    pub sigma2_empirical: f64,
    /// Normal-theory standard error of `sigma2_empirical`.
    pub sigma2_empirical_se: f64,
    /// Covariance series from the same trajectories.
    pub sigma2_series: Sigma2Series,
    pub summary: SampleSummary,
    /// Ties-aware distance to `N(0, sigma2_empirical)`; absent in the degenerate branch.
    pub ks_distance: Option<f64>,
    pub ks_distance_classical: Option<f64>,
    pub degenerate: bool,
    pub evaluations: u64,
    pub flagged: u64,
    pub clean: bool,
    /// `(S_n - mean)/√n` per trial.
    #[serde(skip)]
    pub normalized: Vec<f64>,
}

/// Monte-Carlo central limit experiment over `trials` independent `μ`-distributed starts.
pub fn clt_experiment(spec: &ObservableSpec, n: usize, trials: usize, seed: u64) -> Result<CltReport> {
    clt_experiment_with(spec, n, trials, seed, DEFAULT_K_MAX)
}

pub fn clt_experiment_with(
    spec: &ObservableSpec,
    n: usize,
    trials: usize,
    seed: u64,
    k_max: usize,
) -> Result<CltReport> {
    if n < 100 || trials < 100 {
        return Err(Error::invalid(format!("need n ≥ 100 and trials ≥ 100, got {n} and {trials}")));
    }
    if k_max < 1 || k_max >= n {
        return Err(Error::invalid(format!("k_max = {k_max} must lie in 1..n")));
    }
    let sample = sample_orbits(spec, trials, n, seed)?;
    let sums: Vec<f64> = sample
        .shifted
        .iter()
        .map(|t| {
            let mut acc: NeumaierSum = t.iter().copied().collect();
            acc.add(n as f64 * sample.pivot);
            acc.value()
        })
        .collect();
    let (mean_sn, var_sn) = mean_var(&sums);
    let root_n = (n as f64).sqrt();
    let normalized: Vec<f64> = sums.iter().map(|s| (s - mean_sn) / root_n).collect();
    let sigma2_empirical = var_sn / n as f64;
    let sigma2_empirical_se = sigma2_empirical * (2.0 / (trials - 1) as f64).sqrt();
    let degenerate = sigma2_empirical < DEGENERATE_SIGMA2;
    let (ks, ks_classical) = if degenerate {
        (None, None)
    } else {
        let normal = Normal::new(0.0, sigma2_empirical.sqrt())
            .map_err(|e| Error::domain("clt_experiment", e.to_string()))?;
        (
            Some(ks_distance(&normalized, |x| normal.cdf(x))),
            Some(ks_distance_classical(&normalized, |x| normal.cdf(x))),
        )
    };
    let evaluations = sample.evaluations();
    let flagged = sample.flagged;
    Ok(CltReport {
        n,
        trials,
        mean_sn,
        var_sn,
        sigma2_empirical,
        sigma2_empirical_se,
        sigma2_series: sigma2_from_sample(&sample, k_max),
        summary: summarize(&normalized),
        ks_distance: ks,
        ks_distance_classical: ks_classical,
        degenerate,
        evaluations,
        flagged,
        clean: (flagged as f64) < FLAG_BUDGET * evaluations as f64,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongLaw {
    pub n: usize,
    pub trials: usize,
    /// Mean of `S_n/n` over trials.
    pub birkhoff_mean: f64,
    /// Cross-trial standard error of `birkhoff_mean`.
    pub birkhoff_se: f64,
    pub quadrature_mean: f64,
    pub quadrature_error: f64,
    pub z: f64,
    pub evaluations: u64,
    pub flagged: u64,
    pub clean: bool,
}

/// Compares time averages along `φ`-orbits with `∫ h dμ`.
pub fn strong_law_check(spec: &ObservableSpec, n: usize, trials: usize, seed: u64) -> Result<StrongLaw> {
    if n < 1000 {
        return Err(Error::invalid(format!("need n ≥ 1000, got {n}")));
    }
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let runs: Vec<BirkhoffSum> = (0..trials)
        .into_par_iter()
        .map(|b| {
            let mut rng = trial_rng(seed, b as u64);
            birkhoff_sum(spec, sample_mu(&mut rng), n)
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = runs.iter().map(|r| r.value / n as f64).collect();
    let (birkhoff_mean, var) = mean_var(&means);
    let birkhoff_se = (var / trials as f64).sqrt();
    let q = expectation_quadrature(spec)?;
    let diff = birkhoff_mean - q.value;
    let scale = (birkhoff_se.powi(2) + q.error().powi(2)).sqrt();
    let z = if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(4.0 * f64::EPSILON * q.value.abs())
    };
    let flagged = runs.iter().map(|r| r.flagged).sum::<u64>();
    let evaluations = (n * trials) as u64;
    Ok(StrongLaw {
        n,
        trials,
        birkhoff_mean,
        birkhoff_se,
        quadrature_mean: q.value,
        quadrature_error: q.error(),
        z,
        evaluations,
        flagged,
        clean: (flagged as f64) < FLAG_BUDGET * evaluations as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoboundaryReport {
    pub cycle: RationalCycle,
    pub observable: ObservableSpec,
    /// `h̃` at each cycle point.
    pub terms: Vec<f64>,
    pub cycle_sum: f64,
    /// `|cycle_sum| > 1e-6`: `h` is not a coboundary with continuous transfer function.
    pub nonzero: bool,
}

/// Sum of `h̃` over a periodic cycle of the doubling map.
pub fn coboundary_cycle_sum(spec: &ObservableSpec, cycle: &RationalCycle) -> Result<CoboundaryReport> {
    if !cycle.closes() {
        return Err(Error::invalid("cycle does not close under doubling"));
    }
    let terms: Vec<f64> = cycle
        .points_f64()
        .into_iter()
        .map(|x| tilde_eval(spec, x))
        .collect::<Result<_>>()?;
    let cycle_sum = terms.iter().copied().collect::<NeumaierSum>().value();
    Ok(CoboundaryReport {
        cycle: cycle.clone(),
        observable: spec.clone(),
        terms,
        cycle_sum,
        nonzero: cycle_sum.abs() > COBOUNDARY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::periodic_cycle;
    use crate::observables::{Builtin, ObservableKind};
    use crate::transfer::lag_covariances;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn zeta(kind: ObservableKind) -> ObservableSpec {
        ObservableSpec::zeta(kind, 0.5).unwrap()
    }

    #[test]
    fn birkhoff_examples() {
        let c = ObservableSpec::builtin(Builtin::Const(1.25));
        assert_eq!(birkhoff_sum(&c, 0.7, 40).unwrap().value, 50.0);
        let z = zeta(ObservableKind::ZetaRe);
        let x0 = 1.0 / (PI / 3.0).tan();
        let one = birkhoff_sum(&z, x0, 1).unwrap().value;
        assert_eq!(one, crate::observables::eval_h(&z, x0).unwrap());
        let two = birkhoff_sum(&z, x0, 2).unwrap();
        assert!((two.value - (-0.632184187171494320)).abs() < 1e-9, "{}", two.value);
        assert_eq!(two.flagged, 0);
        assert!(birkhoff_sum(&z, x0, 0).is_err());
    }

    #[test]
    fn expectation_examples() {
        let c = expectation_quadrature(&ObservableSpec::builtin(Builtin::Const(-2.5))).unwrap();
        assert!((c.value + 2.5).abs() < 1e-12);
        let odd = expectation_quadrature(&ObservableSpec::builtin(Builtin::LorentzOdd)).unwrap();
        assert!(odd.value.abs() < 1e-10, "{}", odd.value);
        let l = expectation_quadrature(&ObservableSpec::builtin(Builtin::Lorentz)).unwrap();
        assert!((l.value - 0.5).abs() < 1e-10, "{}", l.value);
        let digit = expectation_quadrature(&ObservableSpec::builtin(Builtin::Digit)).unwrap();
        assert!((digit.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn sigma2_examples() {
        let c = sigma2_series(&ObservableSpec::builtin(Builtin::Const(3.0)), 10, 200, 1).unwrap();
        assert_eq!(c.value, 0.0);
        let d = sigma2_series(&ObservableSpec::builtin(Builtin::Digit), 10, 20_000, 2).unwrap();
        assert!((d.value - 0.25).abs() < 3.0 * d.se, "{} ± {}", d.value, d.se);
        let cob = sigma2_series(&ObservableSpec::builtin(Builtin::Coboundary), 10, 20_000, 3).unwrap();
        assert!(cob.value.abs() < 3.0 * cob.se.max(1e-6), "{} ± {}", cob.value, cob.se);
    }

    #[test]
    fn clt_constant_is_degenerate() {
        let r = clt_experiment(&ObservableSpec::builtin(Builtin::Const(0.3)), 100, 100, 4).unwrap();
        assert!(r.normalized.iter().all(|&v| v == 0.0));
        assert!(r.degenerate && r.ks_distance.is_none());
        assert_eq!(r.summary.mass_near_zero, 1.0);
        assert_eq!(r.sigma2_empirical, 0.0);
    }

    #[test]
    fn clt_digit_matches_coin_oracle() {
        let r = clt_experiment(&ObservableSpec::builtin(Builtin::Digit), 1000, 5000, 5).unwrap();
        assert!((r.sigma2_empirical - 0.25).abs() < 0.02, "{}", r.sigma2_empirical);
        let ks = r.ks_distance.unwrap();
        assert!(ks < 0.02, "{ks}");
        let normal = Normal::new(0.0, 0.5).unwrap();
        assert!(ks_distance(&r.normalized, |x| normal.cdf(x)) < 0.02);
        let s = &r.sigma2_series;
        let combined = (s.se.powi(2) + r.sigma2_empirical_se.powi(2)).sqrt();
        assert!((s.value - r.sigma2_empirical).abs() < 3.0 * combined, "{} vs {}", s.value, r.sigma2_empirical);
        assert!(r.clean && !r.degenerate);
    }

    #[test]
    fn clt_coboundary_is_degenerate() {
        let r = clt_experiment(&ObservableSpec::builtin(Builtin::Coboundary), 10_000, 100, 6).unwrap();
        assert!(r.degenerate && r.sigma2_empirical < 1e-3);
        assert_eq!(r.summary.mass_near_zero, 1.0);
    }

    #[test]
    fn clt_rejects_small_runs() {
        let d = ObservableSpec::builtin(Builtin::Digit);
        assert!(clt_experiment(&d, 99, 100, 0).is_err());
        assert!(clt_experiment(&d, 100, 99, 0).is_err());
    }

    #[test]
    fn strong_law_examples() {
        let c = strong_law_check(&ObservableSpec::builtin(Builtin::Const(0.75)), 1000, 10, 7).unwrap();
        assert_eq!(c.birkhoff_mean, c.quadrature_mean);
        assert_eq!(c.z, 0.0);
        let d = strong_law_check(&ObservableSpec::builtin(Builtin::Digit), 10_000, 50, 8).unwrap();
        assert!((d.birkhoff_mean - 0.5).abs() < 0.01 && (d.quadrature_mean - 0.5).abs() < 1e-10);
        assert!(d.z.abs() < 3.0, "{}", d.z);
    }

    #[test]
    fn cycle_sums_at_paper_points() {
        let third = periodic_cycle(1, 3).unwrap();
        let re = coboundary_cycle_sum(&zeta(ObservableKind::ZetaRe), &third).unwrap();
        assert!((re.cycle_sum - (-0.632184187171494320)).abs() < 1e-9 && re.nonzero);
        let abs = coboundary_cycle_sum(&zeta(ObservableKind::ZetaAbs), &third).unwrap();
        assert!((abs.cycle_sum - 1.992883508654645268).abs() < 1e-9 && abs.nonzero);
        let im3 = coboundary_cycle_sum(&zeta(ObservableKind::ZetaIm), &third).unwrap();
        assert!(im3.cycle_sum.abs() < 1e-9 && !im3.nonzero);
        let im7 = coboundary_cycle_sum(&zeta(ObservableKind::ZetaIm), &periodic_cycle(1, 7).unwrap()).unwrap();
        assert!((im7.cycle_sum - (-0.3901157566783625)).abs() < 1e-9 && im7.nonzero, "{}", im7.cycle_sum);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn coboundary_cycle_sums_telescope(p in 1u64..200, q in 3u64..200) {
            prop_assume!(q % 2 == 1 && p < q && num_integer::gcd(p, q) == 1);
            let cycle = periodic_cycle(p, q).unwrap();
            let r = coboundary_cycle_sum(&ObservableSpec::builtin(Builtin::Coboundary), &cycle).unwrap();
            prop_assert!(r.cycle_sum.abs() < 1e-9, "{}", r.cycle_sum);
        }

        #[test]
        fn birkhoff_sums_scale_exactly(k in -4i32..5, x0 in -50.0f64..50.0, n in 1usize..200) {
            let c = 2f64.powi(k);
            let h = |t: f64| 1.0 / (1.0 + t * t) + t.sin();
            let base = birkhoff_sum_fn(h, x0, n);
            prop_assert_eq!(birkhoff_sum_fn(|t| c * h(t), x0, n), c * base);
        }

        #[test]
        fn covariances_scale_quadratically(k in -4i32..5, seed in 0u64..1000) {
            let c = 2f64.powi(k);
            let mut rng = trial_rng(seed, 0);
            let v: Vec<f64> = (0..64).map(|_| sample_mu(&mut rng).atan()).collect();
            let w: Vec<f64> = v.iter().map(|a| c * a).collect();
            let a = lag_covariances(&v, 0.1, 5);
            let b = lag_covariances(&w, c * 0.1, 5);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(c * c * x, *y);
            }
        }
    }
}
