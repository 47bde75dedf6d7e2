//! Self-check suites behind `qsv oracle-check`.

use serde::Serialize;

use qsv::certbank::binomial::{ln_binom_tail, ln_binom_upper_tail};
use qsv::certbank::{certify, dqsv_intermediates, solve_j, CertificateQuery};
use qsv::config::strategy_for_lambda;
use qsv::oracle::{
    dqsv_soundness_sweep, exact_stats_enumerated, exact_stats_with_limit, random_mixture,
    sqsv_worst_case_scan, SweepReport, MAX_ENUMERATED,
};
use qsv::rng::{experiment, SeedPlan};
use qsv::sources::{honest_iid, rho1, rho2, NoiseSpec, ProductSequenceMixture};
use qsv::strategy::build_singlet_strategy;
use qsv::{QsvError, Result};

const MAX_DETAILS: usize = 20;

#[derive(Debug, Default, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: u64,
    pub failures: u64,
    pub passed: bool,
    /// First few failures.
    pub details: Vec<String>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            ..Self::default()
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.details.len() < MAX_DETAILS {
                self.details.push(detail());
            }
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.failures == 0;
        self
    }
}

/// `a > b` for probabilities given as (log value, log complement). Each side
/// is compared in whichever form is below 1/2, where it is accurate.
pub fn strictly_greater(a: (f64, f64), b: (f64, f64)) -> bool {
    let small_a = a.0 < a.1;
    let small_b = b.0 < b.1;
    match (small_a, small_b) {
        (true, true) => a.0 > b.0,
        (false, false) => a.1 < b.1,
        (false, true) => true,
        (true, false) => false,
    }
}

fn tail_pair(z: u64, k: u64, p: f64) -> Result<(f64, f64)> {
    Ok((ln_binom_tail(z, k, p)?, ln_binom_upper_tail(z, k, p)?))
}

/// Tail monotonicity in `p`, `k` and `z` for `z ≤ z_max`, plus the `k = 0`
/// closed form of `J`.
pub fn binom(z_max: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("binom");
    let ps: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let zs: Vec<u64> = (1..=z_max).filter(|z| *z <= 20 || z % 10 == 0).collect();
    for &z in &zs {
        for k in 0..z {
            for w in ps.windows(2) {
                let (a, b) = (tail_pair(z, k, w[0])?, tail_pair(z, k, w[1])?);
                r.check(strictly_greater(a, b), || {
                    format!(
                        "B_{{{z},{k}}} not decreasing between p = {} and {}",
                        w[0], w[1]
                    )
                });
            }
            for &p in &ps {
                let here = tail_pair(z, k, p)?;
                if k + 1 < z {
                    let up = tail_pair(z, k + 1, p)?;
                    r.check(strictly_greater(up, here), || {
                        format!("B_{{{z},k}}({p}) not increasing at k = {k}")
                    });
                }
                let next = tail_pair(z + 1, k, p)?;
                r.check(strictly_greater(here, next), || {
                    format!("B_{{z,{k}}}({p}) not decreasing at z = {z}")
                });
            }
        }
    }
    for n in [1u64, 10, 100, 1000, 10_000] {
        for delta in [0.01, 0.05, 0.5, 0.9] {
            let j = solve_j(n, 0, delta)?;
            let closed = -(delta.ln() / n as f64).exp_m1();
            r.check((j - closed).abs() <= 1e-12, || {
                format!("J({n}, 0, {delta}) = {j}, closed form {closed}")
            });
        }
    }
    Ok(r.finish())
}

/// `h_z` strictly decreasing in `z` for `k ≤ z ≤ N + 1`.
pub fn h_monotone(n_max: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("h-monotone");
    let ns: Vec<u64> = (1..=n_max).filter(|n| *n <= 20 || n % 20 == 0).collect();
    for lambda in [0.1, 1.0 / 3.0, 0.9] {
        for &n in &ns {
            for k in (0..n).filter(|k| *k <= 5 || k % 7 == 0) {
                let q = CertificateQuery::dqsv(n, k, 1.0, lambda)?;
                let it = dqsv_intermediates(&q)?;
                for z in k as usize..=n as usize {
                    let a = (it.h[z].ln(), it.h_complement[z].ln());
                    let b = (it.h[z + 1].ln(), it.h_complement[z + 1].ln());
                    r.check(strictly_greater(a, b), || {
                        format!("h not decreasing at N = {n}, k = {k}, λ = {lambda}, z = {z}")
                    });
                }
            }
        }
    }
    Ok(r.finish())
}

/// The `binom` suite and `h` monotonicity together.
pub fn binom_with_h(z_max: u64) -> Result<SuiteReport> {
    let a = binom(z_max)?;
    let b = h_monotone(z_max)?;
    let mut r = SuiteReport::new("binom");
    r.checks = a.checks + b.checks;
    r.failures = a.failures + b.failures;
    r.details = a
        .details
        .into_iter()
        .chain(b.details)
        .take(MAX_DETAILS)
        .collect();
    Ok(r.finish())
}

/// Brute-force worst-case scan against the closed certificate.
pub fn sqsv(n_max: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("sqsv");
    let strat = build_singlet_strategy();
    let grid = 2000usize;
    let step = 1.0 / grid as f64;
    for n in [1u64, 2, 5, 10, 20, 50, 100, 200, 500]
        .into_iter()
        .filter(|n| *n <= n_max)
    {
        for k in [0u64, 1, 2, 5].into_iter().filter(|k| *k < n) {
            for delta in [0.01, 0.05, 0.5, 0.9, 1.0] {
                let scan = sqsv_worst_case_scan(n, k, delta, &strat, grid)?;
                let cert = certify(&CertificateQuery::sqsv(n, k, delta, strat.lambda())?)?;
                let eps = cert.infidelity_bound;
                r.check(scan <= eps + 1e-12 && eps - scan <= step + 1e-12, || {
                    format!("N = {n}, k = {k}, δ = {delta}: scan {scan}, certificate {eps}")
                });
            }
        }
    }
    Ok(r.finish())
}

fn structured_mixtures(systems: usize) -> Result<Vec<(String, ProductSequenceMixture)>> {
    let n = systems - 1;
    Ok(vec![
        (
            "honest(0.9)".into(),
            honest_iid(systems, NoiseSpec::new(0.9)?)?,
        ),
        ("rho1".into(), rho1(n, NoiseSpec::IDEAL)?),
        ("rho1(0.98)".into(), rho1(n, NoiseSpec::new(0.98)?)?),
        (
            "rho2(pi)".into(),
            rho2(n, std::f64::consts::PI, NoiseSpec::IDEAL)?,
        ),
        (
            "rho2(pi/3,0.95)".into(),
            rho2(n, std::f64::consts::FRAC_PI_3, NoiseSpec::new(0.95)?)?,
        ),
    ])
}

/// Convolution against brute-force enumeration for `N ≤ n_max`.
pub fn factorization(n_max: u64, seed: u64) -> Result<SuiteReport> {
    if n_max > MAX_ENUMERATED as u64 {
        return Err(QsvError::InvalidParameter(format!(
            "enumeration budget is at most {}",
            MAX_ENUMERATED
        )));
    }
    let mut r = SuiteReport::new("factorization");
    let strat = build_singlet_strategy();
    let seeds = SeedPlan::new(seed, experiment::SWEEP);
    for n in 1..=n_max as usize {
        let mut cases = structured_mixtures(n + 1)?;
        for t in 0..20 {
            let d = random_mixture(n + 1, &mut seeds.child(n as u64).stream(t));
            cases.push((format!("random#{t}"), d.build()?));
        }
        for (name, m) in &cases {
            for k in 0..=n as u64 {
                let a = exact_stats_with_limit(m, k, &strat, MAX_ENUMERATED + 1)?;
                let b = exact_stats_enumerated(m, k, &strat)?;
                let ok = (a.p_k - b.p_k).abs() <= 1e-12 && (a.f_k - b.f_k).abs() <= 1e-12;
                r.check(ok, || {
                    format!("{name}, N = {n}, k = {k}: factorized {a:?}, enumerated {b:?}")
                });
            }
        }
    }
    Ok(r.finish())
}

#[derive(Debug, Serialize)]
pub struct SweepOutcome {
    pub suite: String,
    pub passed: bool,
    #[serde(flatten)]
    pub report: SweepReport,
}

pub fn dqsv_sweep(n: u64, k: u64, lambda: f64, trials: u64, seed: u64) -> Result<SweepOutcome> {
    let strat = strategy_for_lambda(lambda)?;
    let report = dqsv_soundness_sweep(
        n,
        k,
        &strat,
        trials,
        SeedPlan::new(seed, experiment::SWEEP).child(n * 64 + k),
    )?;
    Ok(SweepOutcome {
        suite: "dqsv-sweep".into(),
        passed: report.passed(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_comparison_uses_either_form() {
        let p = |x: f64| (x.ln(), (1.0 - x).ln());
        assert!(strictly_greater(p(0.3), p(0.2)));
        assert!(strictly_greater(p(0.6), p(0.4)));
        assert!(!strictly_greater(p(0.4), p(0.6)));
        assert!(!strictly_greater(p(0.2), p(0.2)));
        // Indistinguishable from 1 directly, resolved by the complement.
        assert!(strictly_greater((0.0, -50.0), (0.0, -40.0)));
        assert!(!strictly_greater((0.0, -40.0), (0.0, -50.0)));
    }

    #[test]
    fn small_suites_pass() {
        assert!(binom_with_h(30).unwrap().passed);
        assert!(sqsv(20).unwrap().passed);
        assert!(factorization(4, 0).unwrap().passed);
        assert!(dqsv_sweep(4, 1, 1.0 / 3.0, 200, 0).unwrap().passed);
    }
}
