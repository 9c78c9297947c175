//! The transfer operator `ψ̂f(x) = (f(x/2) + f((x+1)/2))/2` of the doubling
//! map, its Ulam discretization and spectral diagnostics, and Monte-Carlo
//! estimates of the decay of correlations along `φ`-orbits.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{phi, sample_mu, trial_rng};
use crate::error::{Error, Result};
use crate::numeric::{fit_line, gauss_mean_7, NeumaierSum};
use crate::observables::{
    eval_h_flagged, per_epsilon_values, sample_weighted, summarize_seminorm, ObservableSpec,
    SeminormConfig, SeminormEstimate,
};

/// A function on `[0, 1]` stored by its means over `resolution` equal bins.
///
/// With a power-of-two resolution the half-argument evaluations of `ψ̂` land
/// on whole bins, so the operator acts exactly on this representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("resolution {n} is not a power of two ≥ 2")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        Ok(Self { values })
    }

    /// Bin means of `f` by 7-point Gauss quadrature.
    pub fn from_fn(f: &(impl Fn(f64) -> f64 + Sync), resolution: usize) -> Result<Self> {
        if resolution < 2 || !resolution.is_power_of_two() {
            return Err(Error::invalid(format!("resolution {resolution} is not a power of two ≥ 2")));
        }
        let h = 1.0 / resolution as f64;
        let values = (0..resolution)
            .into_par_iter()
            .map(|j| gauss_mean_7(f, j as f64 * h, (j + 1) as f64 * h))
            .collect();
        Self::from_values(values)
    }

    pub fn constant(c: f64, resolution: usize) -> Result<Self> {
        Self::from_values(vec![c; resolution])
    }

    pub fn resolution(&self) -> usize {
        self.values.len()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let j = ((x * n as f64).floor().max(0.0) as usize).min(n - 1);
        self.values[j]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().copied().collect::<NeumaierSum>().value() * self.bin_width()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).collect::<NeumaierSum>().value() * self.bin_width()
    }

    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).collect::<NeumaierSum>().value() * self.bin_width()).sqrt()
    }

    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect::<NeumaierSum>()
            .value()
            * self.bin_width())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.check_same(other)?;
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    /// Bin means of `f∘ψ`: on bin `i` these average the two bins `2i, 2i+1 (mod N)`.
    pub fn compose_psi(&self) -> GridFunction {
        let n = self.values.len();
        GridFunction {
            values: (0..n)
                .map(|i| 0.5 * (self.values[(2 * i) % n] + self.values[(2 * i + 1) % n]))
                .collect(),
        }
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::invalid("grid functions have different resolutions"));
        }
        Ok(())
    }
}

/// `ψ̂f` on the same grid.
pub fn apply_transfer(f: &GridFunction) -> GridFunction {
    let n = f.values.len();
    let half = n / 2;
    GridFunction {
        values: (0..n)
            .map(|j| 0.5 * (f.values[j / 2] + f.values[j / 2 + half]))
            .collect(),
    }
}

/// `ψ̂f` as a function on `(0, 1)`.
pub fn transfer_fn(f: &(impl Fn(f64) -> f64 + Sync)) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x| 0.5 * (f(0.5 * x) + f(0.5 * (x + 1.0)))
}

/// `|∫ f·(g∘ψ) dλ - ∫ (ψ̂f)·g dλ|`.
pub fn adjoint_residual(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let lhs = f.inner(&g.compose_psi())?;
    let rhs = apply_transfer(f).inner(g)?;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `‖ψ̂f‖₁ ≤ ‖f‖₁`.
pub fn l1_contraction_check(f: &GridFunction) -> ContractionCheck {
    let lhs = apply_transfer(f).l1();
    let rhs = f.l1();
    ContractionCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-9,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormContraction {
    pub transferred: SeminormEstimate,
    pub original: SeminormEstimate,
    /// `2^{α-β}`.
    pub factor: f64,
    /// Per-ε `|ψ̂f|` values on the tail.
    pub lhs: Vec<f64>,
    /// Per-ε `2^{α-β}|f|` values on the tail.
    pub rhs: Vec<f64>,
    /// Largest `lhs / rhs` on the tail.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Relative slack allowed in the per-ε contraction comparison.
pub const CONTRACTION_SLACK: f64 = 0.05;

/// Compares `|ψ̂f|_{α,β}` with `2^{α-β}|f|_{α,β}` per `ε` on the tail of the schedule.
pub fn seminorm_contraction_check(
    f: &(impl Fn(f64) -> f64 + Sync),
    alpha: f64,
    beta: f64,
    cfg: &SeminormConfig,
) -> Result<SeminormContraction> {
    if !(alpha > 0.0 && alpha < beta && beta <= 1.0) {
        return Err(Error::invalid(format!("need 0 < α < β ≤ 1, got α = {alpha}, β = {beta}")));
    }
    cfg.validate()?;
    let g = cfg.grid_intervals();
    let tf = transfer_fn(f);
    let est = |h: &(dyn Fn(f64) -> f64 + Sync)| -> Result<SeminormEstimate> {
        let w = sample_weighted(&h, alpha, g);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("seminorm_contraction_check", "non-finite sample"));
        }
        let per = per_epsilon_values(&w, beta, &cfg.schedule);
        Ok(summarize_seminorm(alpha, beta, &cfg.schedule, per, g))
    };
    let transferred = est(&tf)?;
    let original = est(f)?;
    transferred.finite()?;
    original.finite()?;
    let factor = 2f64.powf(alpha - beta);
    let k = original.tail_len();
    let lhs = transferred.tail().to_vec();
    let rhs: Vec<f64> = original.tail().iter().map(|v| factor * v).collect();
    let worst_ratio = lhs
        .iter()
        .zip(&rhs)
        .map(|(l, r)| if *r > 0.0 { l / r } else if *l > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let pass = lhs
        .iter()
        .zip(&rhs)
        .all(|(l, r)| *l <= (1.0 + CONTRACTION_SLACK) * r + 1e-12);
    debug_assert_eq!(lhs.len(), k);
    Ok(SeminormContraction {
        transferred,
        original,
        factor,
        lhs,
        rhs,
        worst_ratio,
        pass,
    })
}

/// Ulam matrix of the doubling map on `2^m` dyadic bins: row `i` has `1/2`
/// in columns `2i mod 2^m` and `2i + 1 mod 2^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamMatrix {
    pub m: u32,
    /// The two nonzero columns of every row.
    pub columns: Vec<[usize; 2]>,
}

pub const ULAM_MAX_M: u32 = 14;

pub fn ulam_matrix(m: u32) -> Result<UlamMatrix> {
    if !(1..=ULAM_MAX_M).contains(&m) {
        return Err(Error::invalid(format!("Ulam resolution m = {m} outside 1..={ULAM_MAX_M}")));
    }
    let n = 1usize << m;
    Ok(UlamMatrix {
        m,
        columns: (0..n).map(|i| [(2 * i) % n, (2 * i + 1) % n]).collect(),
    })
}

impl UlamMatrix {
    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let [a, b] = self.columns[i];
        (if a == j { 0.5 } else { 0.0 }) + (if b == j { 0.5 } else { 0.0 })
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n).map(|i| (0..n).map(|j| self.entry(i, j)).collect()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.size())
            .map(|i| (0..self.size()).map(|j| self.entry(i, j)).sum())
            .collect()
    }

    /// `Pᵀv`: the push-forward of a density on the bins.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &[a, b]) in self.columns.iter().enumerate() {
            out[a] += 0.5 * v[i];
            out[b] += 0.5 * v[i];
        }
        out
    }

    /// `Pv`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&[a, b]| 0.5 * (v[a] + v[b])).collect()
    }

    /// Row `i` of `P^k`.
    pub fn power_row(&self, i: usize, k: u32) -> Vec<f64> {
        let mut v = vec![0.0; self.size()];
        v[i] = 1.0;
        for _ in 0..k {
            v = self.apply_transpose(&v);
        }
        v
    }

    /// Largest `|(P^k)_{ij} - 1/N|` over all entries.
    pub fn power_uniformity_defect(&self, k: u32) -> f64 {
        let n = self.size();
        let target = 1.0 / n as f64;
        (0..n)
            .into_par_iter()
            .map(|i| {
                self.power_row(i, k)
                    .iter()
                    .map(|v| (v - target).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub m: u32,
    /// Eigenvalue moduli in decreasing order, with multiplicity.
    pub moduli: Vec<f64>,
    pub lambda1: f64,
    /// Leading eigenvector, normalized to mean 1.
    pub leading_eigenvector: Vec<f64>,
    pub lambda2_modulus: f64,
    /// `1 - |λ₂|`.
    pub gap: f64,
    /// Smallest `k` with `(Pᵀ)^k` vanishing on mean-zero test vectors, when found.
    pub nilpotent_index: Option<usize>,
    pub power_iterations: usize,
}

/// Spectrum of an Ulam matrix by power iteration and deflation of the
/// invariant density.
///
/// The complement of the leading eigenvector is probed with integer test
/// vectors, for which every iterate of `Pᵀ` is exactly representable; if the
/// iterates vanish after `k` steps the complement is nilpotent and all other
/// eigenvalues are exactly zero. Otherwise `|λ₂|` is estimated from the
/// growth rate `‖A^k x‖^{1/k}`.
pub fn spectrum(p: &UlamMatrix, max_iterations: usize) -> Result<SpectralReport> {
    let n = p.size();
    if max_iterations == 0 {
        return Err(Error::invalid("iteration cap must be positive"));
    }
    let mut rng = trial_rng(0x5eed, p.m as u64);
    // leading eigenpair of Pᵀ from a positive start
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut lambda1 = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let w = p.apply_transpose(&v);
        iterations += 1;
        let nv: f64 = v.iter().sum();
        let nw: f64 = w.iter().sum();
        lambda1 = nw / nv;
        let mean = nw / n as f64;
        let change = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a / mean - b * n as f64 / nv).abs())
            .fold(0.0, f64::max);
        v = w;
        if change == 0.0 || (iterations > p.m as usize && change < 1e-15) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            op: "spectrum",
            detail: format!("power iteration did not settle in {max_iterations} steps"),
        });
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let leading: Vec<f64> = v.iter().map(|x| x / mean).collect();

    // probe the deflated operator with exactly representable mean-zero vectors
    let probes = 4;
    let mut index = Some(0usize);
    let mut growth: f64 = 0.0;
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-65536i64..=65536) as f64).collect();
        let mx = x.iter().sum::<f64>() / n as f64;
        let mut y: Vec<f64> = x.iter().map(|a| a - mx).collect();
        let norm0 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut k = 0;
        let mut vanished = false;
        while k < max_iterations {
            if y.iter().all(|&a| a == 0.0) {
                vanished = true;
                break;
            }
            y = p.apply_transpose(&y);
            k += 1;
        }
        if vanished {
            index = index.map(|i| i.max(k));
        } else {
            index = None;
            let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            growth = growth.max((norm / norm0).powf(1.0 / k as f64));
        }
    }
    let lambda2 = if index.is_some() { 0.0 } else { growth };
    let mut moduli = vec![lambda2; n];
    moduli[0] = lambda1.abs();
    Ok(SpectralReport {
        m: p.m,
        moduli,
        lambda1,
        leading_eigenvector: leading,
        lambda2_modulus: lambda2,
        gap: 1.0 - lambda2,
        nilpotent_index: index,
        power_iterations: iterations,
    })
}

/// Monte-Carlo covariances `Cov(h, h∘φ^k)` with a geometric fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub k_max: usize,
    /// `Cov(h, h∘φ^k)` for `k = 0..=k_max`; entry 0 is the variance.
    pub cov: Vec<f64>,
    /// Standard errors from the spread over trajectories.
    pub se: Vec<f64>,
    pub mean: f64,
    /// Fitted decay rate `θ` of `|Cov(k)| ≈ R θ^k`.
    pub theta: Option<f64>,
    pub fit_constant: Option<f64>,
    /// Lags used in the fit (contiguous from 1, `|Cov| > 3 SE`).
    pub usable_lags: usize,
    pub fit_available: bool,
    pub trajectories: usize,
    pub trajectory_length: usize,
    pub evaluations: u64,
    pub flagged: u64,
}

/// `h` along the `φ`-orbit of `x0`, with the number of flagged evaluations.
pub fn orbit_values(spec: &ObservableSpec, x0: f64, len: usize) -> Result<(Vec<f64>, u64)> {
    let mut x = x0;
    let mut out = Vec::with_capacity(len);
    let mut flagged = 0;
    for _ in 0..len {
        let (v, f) = eval_h_flagged(spec, x)?;
        flagged += f as u64;
        out.push(v);
        x = phi(x);
    }
    Ok((out, flagged))
}

/// Per-trajectory lag covariances around a common mean.
pub fn lag_covariances(values: &[f64], mean: f64, k_max: usize) -> Vec<f64> {
    let n = values.len();
    (0..=k_max.min(n - 1))
        .map(|k| {
            let mut acc = NeumaierSum::new();
            for j in 0..n - k {
                acc.add((values[j] - mean) * (values[j + k] - mean));
            }
            acc.value() / (n - k) as f64
        })
        .collect()
}

/// Sample of `h` along `μ`-distributed `φ`-orbits, shifted by a pivot so that
/// constant observables produce exact zeros.
pub(crate) struct OrbitSample {
    pub pivot: f64,
    /// `h - pivot` along every trajectory.
    pub shifted: Vec<Vec<f64>>,
    pub flagged: u64,
}

impl OrbitSample {
    pub fn evaluations(&self) -> u64 {
        self.shifted.iter().map(|t| t.len() as u64).sum()
    }

    /// Mean of the shifted values.
    pub fn shifted_mean(&self) -> f64 {
        let n = self.evaluations() as f64;
        self.shifted
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect::<NeumaierSum>()
            .value()
            / n
    }
}

pub(crate) fn sample_orbits(spec: &ObservableSpec, trajectories: usize, len: usize, seed: u64) -> Result<OrbitSample> {
    let pivot = {
        let mut rng = trial_rng(seed, 0);
        eval_h_flagged(spec, sample_mu(&mut rng))?.0
    };
    let runs: Vec<(Vec<f64>, u64)> = (0..trajectories)
        .into_par_iter()
        .map(|b| {
            let mut rng = trial_rng(seed, b as u64);
            let x0 = sample_mu(&mut rng);
            let (mut v, f) = orbit_values(spec, x0, len)?;
            v.iter_mut().for_each(|a| *a -= pivot);
            Ok((v, f))
        })
        .collect::<Result<_>>()?;
    let flagged = runs.iter().map(|r| r.1).sum();
    Ok(OrbitSample {
        pivot,
        shifted: runs.into_iter().map(|r| r.0).collect(),
        flagged,
    })
}

/// Per-lag mean and standard error of per-trajectory covariance estimates.
pub(crate) fn covariance_table(sample: &OrbitSample, k_max: usize) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let m = sample.shifted_mean();
    let per: Vec<Vec<f64>> = sample
        .shifted
        .par_iter()
        .map(|t| lag_covariances(t, m, k_max))
        .collect();
    let b = per.len() as f64;
    let lags = per[0].len();
    let mut cov = Vec::with_capacity(lags);
    let mut se = Vec::with_capacity(lags);
    for k in 0..lags {
        let col: Vec<f64> = per.iter().map(|p| p[k]).collect();
        let (mean, var) = crate::numeric::mean_var(&col);
        cov.push(mean);
        se.push(if b > 1.0 { (var / b).sqrt() } else { f64::INFINITY });
    }
    (cov, se, per)
}

/// Least-squares fit of `ln|Cov(k)|` on the contiguous lags `k ≥ 1` whose
/// covariance exceeds three standard errors.
pub fn fit_decay(cov: &[f64], se: &[f64]) -> (Option<f64>, Option<f64>, usize) {
    let usable = (1..cov.len())
        .take_while(|&k| cov[k].abs() > 3.0 * se[k] && cov[k] != 0.0)
        .count();
    if usable < 3 {
        return (None, None, usable);
    }
    let xs: Vec<f64> = (1..=usable).map(|k| k as f64).collect();
    let ys: Vec<f64> = (1..=usable).map(|k| cov[k].abs().ln()).collect();
    match fit_line(&xs, &ys) {
        Some((slope, intercept)) => (Some(slope.exp()), Some(intercept.exp()), usable),
        None => (None, None, usable),
    }
}

/// Default trajectory length for covariance estimation: `2(k_max + 1)`.
pub fn covariance_trajectory_length(k_max: usize) -> usize {
    2 * (k_max + 1)
}

/// Estimates `Cov(h, h∘φ^k)` for `k ≤ k_max` from `n_samples` independent
/// `μ`-distributed trajectories and fits `θ`.
pub fn correlation_decay(spec: &ObservableSpec, k_max: usize, n_samples: usize, seed: u64) -> Result<CovarianceReport> {
    if k_max < 2 {
        return Err(Error::invalid("k_max must be at least 2"));
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    let len = covariance_trajectory_length(k_max);
    let sample = sample_orbits(spec, n_samples, len, seed)?;
    Ok(covariance_report(&sample, k_max))
}

pub(crate) fn covariance_report(sample: &OrbitSample, k_max: usize) -> CovarianceReport {
    let (cov, se, _) = covariance_table(sample, k_max);
    let (theta, fit_constant, usable) = fit_decay(&cov, &se);
    CovarianceReport {
        k_max,
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
    }
}
