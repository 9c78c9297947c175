//! Acceptance criteria 1-12. Prints one line per criterion and exits nonzero
//! if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ergozeta::dynamics::{cauchy_cdf, conjugacy_defect, open_uniform, periodic_cycle, phi, sample_mu, trial_rng};
use ergozeta::numeric::{geometric_grid, ks_distance, ks_distance_classical};
use ergozeta::observables::{
    seminorm_estimate, tilde_fn, Builtin, ObservableKind, ObservableSpec, SeminormConfig,
};
use ergozeta::stats::{clt_experiment, coboundary_cycle_sum, strong_law_check, CltReport};
use ergozeta::transfer::{
    adjoint_residual, apply_transfer, seminorm_contraction_check, spectrum, ulam_matrix, GridFunction,
};
use ergozeta::zeta::{growth_exponent_fit, ZetaConfig};
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn zeta(kind: ObservableKind) -> ObservableSpec {
    ObservableSpec::zeta(kind, 0.5).unwrap()
}

fn digit_clt() -> &'static CltReport {
    static R: OnceLock<CltReport> = OnceLock::new();
    R.get_or_init(|| clt_experiment(&ObservableSpec::builtin(Builtin::Digit), 1000, 5000, 2024).unwrap())
}

fn zeta_clt() -> &'static CltReport {
    static R: OnceLock<CltReport> = OnceLock::new();
    R.get_or_init(|| clt_experiment(&zeta(ObservableKind::ZetaRe), 1000, 2000, 2025).unwrap())
}

fn within_budget(elapsed: Duration, budget: Duration) -> (bool, String) {
    (elapsed <= budget, format!("{:.2}s of {}s", elapsed.as_secs_f64(), budget.as_secs()))
}

fn ac1() -> Outcome {
    let t0 = Instant::now();
    let third = periodic_cycle(1, 3).unwrap();
    let seventh = periodic_cycle(1, 7).unwrap();
    let checks = [
        ("Re 1/3", ObservableKind::ZetaRe, &third, -0.632184187171495),
        ("Abs 1/3", ObservableKind::ZetaAbs, &third, 1.99288350865465),
        ("Im 1/7", ObservableKind::ZetaIm, &seventh, -0.448038121638635),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, kind, cycle, want) in checks {
        let got = coboundary_cycle_sum(&zeta(kind), cycle).unwrap().cycle_sum;
        let ok = (got - want).abs() < 1e-9;
        pass &= ok;
        parts.push(format!("{label} {got:.15} vs {want} [{}]", if ok { "ok" } else { "off" }));
    }
    let (fast, time) = within_budget(t0.elapsed(), Duration::from_secs(1));
    outcome(pass && fast, format!("{}; {time}", parts.join(", ")))
}

fn ac2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = trial_rng(2, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 10_000 {
        let x = open_uniform(&mut rng);
        if let Ok(d) = conjugacy_defect(x) {
            worst = worst.max(d);
            count += 1;
        }
    }
    let (fast, time) = within_budget(t0.elapsed(), Duration::from_secs(1));
    outcome(worst < 1e-9 && fast, format!("max defect {worst:.3e} < 1e-9; {time}"))
}

fn ac3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = trial_rng(3, 0);
    let pushed: Vec<f64> = (0..1_000_000).map(|_| phi(sample_mu(&mut rng))).collect();
    let d = ks_distance_classical(&pushed, cauchy_cdf);
    let (fast, time) = within_budget(t0.elapsed(), Duration::from_secs(10));
    outcome(d < 0.005 && fast, format!("KS {d:.5} < 0.005; {time}"))
}

fn ac4() -> Outcome {
    let res = 1 << 14;
    let grid = |f: fn(f64) -> f64| GridFunction::from_fn(&f, res).unwrap();
    let one = GridFunction::constant(1.0, res).unwrap();
    let x = grid(|x| x);
    let c = grid(|x| (2.0 * PI * x).cos());
    let s = grid(|x| (2.0 * PI * x).sin());
    let residuals = [
        adjoint_residual(&one, &one).unwrap(),
        adjoint_residual(&x, &x).unwrap(),
        adjoint_residual(&c, &s).unwrap(),
    ];
    let adj_ok = residuals.iter().all(|r| *r < 1e-8);
    let fixed = apply_transfer(&one) == one;
    let p = ulam_matrix(8).unwrap();
    let sp = spectrum(&p, 10_000).unwrap();
    let l1_ok = (sp.lambda1 - 1.0).abs() <= 1e-12;
    let l2_ok = sp.lambda2_modulus < 1e-10;
    let defect = p.power_uniformity_defect(8);
    let uniform = defect <= 1e-12;
    outcome(
        adj_ok && fixed && l1_ok && l2_ok && uniform,
        format!(
            "adjoint residuals {:.1e}/{:.1e}/{:.1e}, ψ̂1 = 1 {fixed}, λ₁ = {}, |λ₂| = {:.1e}, P⁸ defect {defect:.1e}",
            residuals[0], residuals[1], residuals[2], sp.lambda1, sp.lambda2_modulus
        ),
    )
}

fn ac5() -> Outcome {
    let cfg = SeminormConfig::default();
    let (a, b) = (0.25, 0.30);
    let wild = |x: f64| if (0.01..=0.99).contains(&x) && x != 0.5 { (1.0 / (x - 0.5)).sin() } else { 0.0 };
    let zre = zeta(ObservableKind::ZetaRe);
    let zf = tilde_fn(&zre);
    let runs = [
        ("constant", seminorm_contraction_check(&|_x| 1.0, a, b, &cfg)),
        ("sin(1/(x-1/2))", seminorm_contraction_check(&wild, a, b, &cfg)),
        ("zeta-re", seminorm_contraction_check(&zf, a, b, &cfg)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r) in runs {
        match r {
            Ok(c) => {
                pass &= c.pass;
                parts.push(format!("{label} worst ratio {:.3}", c.worst_ratio));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label} error {e}"));
            }
        }
    }
    outcome(pass, format!("{} (≤ 1.05)", parts.join(", ")))
}

fn ac6() -> Outcome {
    let t0 = Instant::now();
    let r = digit_clt();
    let normal = Normal::new(0.0, 0.5).unwrap();
    let ks = ks_distance(&r.normalized, |x| normal.cdf(x));
    let ks_classical = ks_distance_classical(&r.normalized, |x| normal.cdf(x));
    let s_ok = (r.sigma2_empirical - 0.25).abs() <= 0.02;
    let (fast, time) = within_budget(t0.elapsed(), Duration::from_secs(30));
    outcome(
        s_ok && ks < 0.02 && fast,
        format!(
            "σ²_emp {:.4} (0.25 ± 0.02), KS to N(0, 0.25) {ks:.4} < 0.02 (classical {ks_classical:.4}); {time}",
            r.sigma2_empirical
        ),
    )
}

fn ac7() -> Outcome {
    let t0 = Instant::now();
    let r = zeta_clt();
    let ks = r.ks_distance.unwrap_or(f64::INFINITY);
    let frac = r.flagged as f64 / r.evaluations as f64;
    outcome(
        r.sigma2_empirical > 0.01 && ks < 0.03 && frac < 1e-3,
        format!(
            "σ²_emp {:.4} > 0.01, KS {ks:.4} < 0.03, flagged {}/{} ({:.2e}) < 1e-3; {:.1}s",
            r.sigma2_empirical,
            r.flagged,
            r.evaluations,
            frac,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn ac8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r) in [("digit", digit_clt()), ("zeta-re", zeta_clt())] {
        let series = &r.sigma2_series;
        let diff = (series.value - r.sigma2_empirical).abs();
        let rel = diff / r.sigma2_empirical;
        let combined = (series.se.powi(2) + r.sigma2_empirical_se.powi(2)).sqrt();
        let ok = rel <= 0.10 || diff <= 3.0 * combined;
        pass &= ok;
        parts.push(format!(
            "{label} series {:.4} ± {:.4} vs empirical {:.4} ± {:.4} (rel {:.3})",
            series.value, series.se, r.sigma2_empirical, r.sigma2_empirical_se, rel
        ));
    }
    outcome(pass, parts.join(", "))
}

fn ac9() -> Outcome {
    let r = clt_experiment(&ObservableSpec::builtin(Builtin::Coboundary), 10_000, 200, 9).unwrap();
    outcome(
        r.sigma2_empirical < 1e-3 && r.degenerate,
        format!(
            "σ²_emp {:.2e} < 1e-3, degenerate {}, mass in (-0.1, 0.1) {:.3}",
            r.sigma2_empirical, r.degenerate, r.summary.mass_near_zero
        ),
    )
}

fn ac10() -> Outcome {
    let t0 = Instant::now();
    let grid = geometric_grid(1e2, 1e6, 60);
    let cfg = ZetaConfig::for_height(1e6);
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [0.4, 0.5, 0.8] {
        for k in [0, 1] {
            let fit = growth_exponent_fit(s, &grid, k, &cfg).unwrap();
            pass &= fit.exponent < 1.0 / 3.0;
            parts.push(format!("s={s} k={k}: {:.3}", fit.exponent));
        }
    }
    let (fast, time) = within_budget(t0.elapsed(), Duration::from_secs(300));
    outcome(pass && fast, format!("{} (< 1/3); {time}", parts.join(", ")))
}

fn ac11() -> Outcome {
    let cfg = SeminormConfig::default();
    let zre = zeta(ObservableKind::ZetaRe);
    let (a, b) = zre.default_alpha_beta();
    let z = seminorm_estimate(&tilde_fn(&zre), a, b, &cfg).unwrap();
    let bounded = !z.diverges && z.tail_max() < 10.0 * z.tail_median();
    let wild = |x: f64| if x == 0.5 { 0.0 } else { (1.0 / (x - 0.5)).sin() };
    let w = seminorm_estimate(&wild, 0.25, 0.7, &cfg).unwrap();
    outcome(
        bounded && w.diverges,
        format!(
            "zeta-re (α, β) = ({a:.4}, {b:.4}) tail max {:.4} vs median {:.4}; sin(1/(x-1/2)) at β = 0.7 flagged {}",
            z.tail_max(),
            z.tail_median(),
            w.diverges
        ),
    )
}

fn ac12() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, kind) in [
        ("Re", ObservableKind::ZetaRe),
        ("Im", ObservableKind::ZetaIm),
        ("Abs", ObservableKind::ZetaAbs),
    ] {
        let r = strong_law_check(&zeta(kind), 100_000, 50, 12).unwrap();
        pass &= r.z.abs() < 3.0;
        parts.push(format!(
            "{label} {:.5} vs {:.5} z = {:.2}",
            r.birkhoff_mean, r.quadrature_mean, r.z
        ));
    }
    outcome(pass, format!("{} (|z| < 3)", parts.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("coboundary cycle sums", ac1),
        ("conjugacy", ac2),
        ("measure invariance", ac3),
        ("transfer operator", ac4),
        ("seminorm contraction", ac5),
        ("digit CLT", ac6),
        ("zeta CLT", ac7),
        ("sigma2 consistency", ac8),
        ("degenerate branch", ac9),
        ("growth bounds", ac10),
        ("seminorm finiteness", ac11),
        ("strong law", ac12),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<22} {}  {}",
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
