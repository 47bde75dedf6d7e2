//! Exact reference values for small sources.
//!
//! For a mixture of product sequences on `N + 1` systems, with one
//! uniformly chosen system left untested, the acceptance probability and
//! fidelity numerator are
//!
//! ```text
//! p_k = Σ_b w_b · 1/(N+1) · Σ_l P[fails among the others ≤ k]
//! f_k = Σ_b w_b · 1/(N+1) · Σ_l P[fails among the others ≤ k] · ⟨ψ|σ_{b,l}|ψ⟩
//! ```
//!
//! Each tested system fails independently with probability `1 − tr(Ωσ)`,
//! so the failure count is Poisson-binomial. [`exact_stats`] evaluates it
//! with a truncated convolution; [`exact_stats_enumerated`] sums all `2^N`
//! pass/fail patterns instead and serves as an independent check.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::certbank::binomial::binom_upper_tail;
use crate::certbank::{binom_tail, certify, CertificateQuery};
use crate::error::{QsvError, Result};
use crate::linalg::DensityMatrix;
use crate::rng::SeedPlan;
use crate::sources::{worst_case_state, ProductSequence, ProductSequenceMixture, StateSpec};
use crate::strategy::HomogeneousStrategy;

/// Default limit on `N + 1` for exact evaluation.
pub const MAX_SYSTEMS: usize = 16;

/// Largest `N` accepted by the enumeration path.
pub const MAX_ENUMERATED: usize = 20;

/// Largest `n` accepted by [`dqsv_soundness_sweep`].
pub const MAX_SWEEP_N: usize = 12;

/// Smallest grid accepted by [`sqsv_worst_case_scan`].
pub const MIN_SCAN_GRID: usize = 1000;

/// Slack below which a sweep trial counts as a violation.
pub const SOUNDNESS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactStats {
    /// Acceptance probability.
    pub p_k: f64,
    /// Fidelity numerator: acceptance and leftover fidelity jointly.
    pub f_k: f64,
    /// `f_k / p_k`, absent when `p_k = 0`.
    pub conditional_fidelity: Option<f64>,
}

impl ExactStats {
    fn from_sums(p_k: f64, f_k: f64) -> Self {
        let p_k = p_k.clamp(0.0, 1.0);
        let f_k = f_k.clamp(0.0, p_k);
        Self {
            p_k,
            f_k,
            conditional_fidelity: (p_k > 0.0).then(|| (f_k / p_k).min(1.0)),
        }
    }
}

fn check_budget(m: &ProductSequenceMixture, limit: usize) -> Result<usize> {
    let systems = m.num_systems();
    if systems > limit {
        return Err(QsvError::Budget { systems, limit });
    }
    Ok(systems - 1)
}

/// Per-system failure probabilities and target fidelities of one branch.
fn branch_scalars(seq: &ProductSequence, strat: &HomogeneousStrategy) -> (Vec<f64>, Vec<f64>) {
    let pal_q: Vec<f64> = seq
        .palette()
        .iter()
        .map(|s| 1.0 - strat.pass_probability(s))
        .collect();
    let pal_f: Vec<f64> = seq
        .palette()
        .iter()
        .map(|s| s.fidelity_with(strat.target()))
        .collect();
    let q = seq.layout().iter().map(|&i| pal_q[i as usize]).collect();
    let f = seq.layout().iter().map(|&i| pal_f[i as usize]).collect();
    (q, f)
}

/// `P[X ≤ k]` for a sum of independent Bernoulli(`q_i`), skipping index `skip`.
fn poisson_binomial_cdf(q: &[f64], skip: usize, k: usize) -> f64 {
    let mut dist = vec![0.0; k + 1];
    dist[0] = 1.0;
    for (i, &qi) in q.iter().enumerate() {
        if i == skip {
            continue;
        }
        for j in (1..=k).rev() {
            dist[j] = dist[j] * (1.0 - qi) + dist[j - 1] * qi;
        }
        dist[0] *= 1.0 - qi;
    }
    dist.iter().sum()
}

/// Same as [`poisson_binomial_cdf`] by summing every pass/fail pattern.
fn enumerated_cdf(q: &[f64], skip: usize, k: usize) -> f64 {
    let tested: Vec<f64> = q
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, &x)| x)
        .collect();
    let n = tested.len();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let mut p = 1.0;
        for (i, &qi) in tested.iter().enumerate() {
            p *= if mask >> i & 1 == 1 { qi } else { 1.0 - qi };
        }
        total += p;
    }
    total
}

fn leftover_average(
    m: &ProductSequenceMixture,
    k: u64,
    strat: &HomogeneousStrategy,
    cdf: fn(&[f64], usize, usize) -> f64,
) -> ExactStats {
    let systems = m.num_systems();
    let n = systems - 1;
    let k = (k as usize).min(n);
    let mut p_sum = 0.0;
    let mut f_sum = 0.0;
    for (w, seq) in m.branches() {
        let (q, fid) = branch_scalars(seq, strat);
        let mut pb = 0.0;
        let mut fb = 0.0;
        for (l, f) in fid.iter().enumerate() {
            let acc = cdf(&q, l, k);
            pb += acc;
            fb += acc * f;
        }
        p_sum += w * pb / systems as f64;
        f_sum += w * fb / systems as f64;
    }
    ExactStats::from_sums(p_sum, f_sum)
}

/// Exact `p_k`, `f_k` and `F_k` for `N = num_systems − 1` tests, limited to
/// [`MAX_SYSTEMS`] systems.
pub fn exact_stats(
    m: &ProductSequenceMixture,
    k: u64,
    strat: &HomogeneousStrategy,
) -> Result<ExactStats> {
    exact_stats_with_limit(m, k, strat, MAX_SYSTEMS)
}

/// [`exact_stats`] with an explicit system limit. Cost grows as
/// `branches · N² · k`.
pub fn exact_stats_with_limit(
    m: &ProductSequenceMixture,
    k: u64,
    strat: &HomogeneousStrategy,
    limit: usize,
) -> Result<ExactStats> {
    check_budget(m, limit)?;
    Ok(leftover_average(m, k, strat, poisson_binomial_cdf))
}

/// [`exact_stats`] by brute-force enumeration of pass/fail patterns.
pub fn exact_stats_enumerated(
    m: &ProductSequenceMixture,
    k: u64,
    strat: &HomogeneousStrategy,
) -> Result<ExactStats> {
    check_budget(m, MAX_ENUMERATED + 1)?;
    Ok(leftover_average(m, k, strat, enumerated_cdf))
}

pub fn exact_pk(m: &ProductSequenceMixture, k: u64, strat: &HomogeneousStrategy) -> Result<f64> {
    exact_stats(m, k, strat).map(|s| s.p_k)
}

pub fn exact_fk(m: &ProductSequenceMixture, k: u64, strat: &HomogeneousStrategy) -> Result<f64> {
    exact_stats(m, k, strat).map(|s| s.f_k)
}

/// Largest infidelity `ε` on the grid `{0, 1/g, …, 1}` for which a
/// worst-case IID state is still accepted with probability at least `δ`.
pub fn sqsv_worst_case_scan(
    n: u64,
    k: u64,
    delta: f64,
    strat: &HomogeneousStrategy,
    grid_size: usize,
) -> Result<f64> {
    if grid_size < MIN_SCAN_GRID {
        return Err(QsvError::param(format!(
            "grid_size must be at least {MIN_SCAN_GRID}, got {grid_size}"
        )));
    }
    CertificateQuery::sqsv(n, k, delta, strat.lambda())?;
    let mut best = 0.0;
    for i in 0..=grid_size {
        let eps = i as f64 / grid_size as f64;
        let tau = worst_case_state(eps, strat)?;
        let fail = 1.0 - strat.pass_probability(&tau);
        // Near δ = 1 the tail itself rounds to 1; compare complements.
        let accepted = if delta > 0.5 {
            binom_upper_tail(n, k, fail)? <= 1.0 - delta
        } else {
            binom_tail(n, k, fail)? >= delta
        };
        if accepted {
            best = eps;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Serializable description of one branch of a random mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDescriptor {
    pub weight: f64,
    pub states: Vec<StateSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDescriptor {
    pub branches: Vec<BranchDescriptor>,
}

impl MixtureDescriptor {
    pub fn build(&self) -> Result<ProductSequenceMixture> {
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let states = b
                    .states
                    .iter()
                    .map(StateSpec::to_density)
                    .collect::<Result<Vec<DensityMatrix>>>()?;
                Ok((
                    b.weight,
                    ProductSequence::from_states(&states, format!("b{i}"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        ProductSequenceMixture::new(branches)
    }
}

fn random_spec<R: Rng + ?Sized>(rng: &mut R) -> StateSpec {
    match rng.random_range(0..20) {
        0..5 => StateSpec::Singlet,
        5..10 => StateSpec::SingletPhi(rng.random::<f64>() * TAU),
        10..13 => StateSpec::Mixed,
        _ => StateSpec::Werner(0.25 + 0.75 * rng.random::<f64>()),
    }
}

/// A mixture of 1 to 8 branches on `systems` systems. Each branch has a
/// random fill state with each position replaced by another random state
/// with probability 1/3. Weights are flat-Dirichlet.
pub fn random_mixture<R: Rng + ?Sized>(systems: usize, rng: &mut R) -> MixtureDescriptor {
    let count = rng.random_range(1..=8);
    let raw: Vec<f64> = (0..count).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let branches = raw
        .into_iter()
        .map(|x| {
            let fill = random_spec(rng);
            let states = (0..systems)
                .map(|_| {
                    if rng.random_range(0..3) == 0 {
                        random_spec(rng)
                    } else {
                        fill
                    }
                })
                .collect();
            BranchDescriptor {
                weight: x / total,
                states,
            }
        })
        .collect();
    MixtureDescriptor { branches }
}

/// Exact conditional fidelity against the defensive certificate at
/// `δ = p_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundnessCheck {
    pub stats: ExactStats,
    pub certificate: f64,
    /// `F_k − certificate`; absent when `p_k = 0`.
    pub slack: Option<f64>,
}

pub fn soundness_check(
    m: &ProductSequenceMixture,
    k: u64,
    strat: &HomogeneousStrategy,
) -> Result<SoundnessCheck> {
    let n = m.num_systems() as u64 - 1;
    let stats = exact_stats(m, k, strat)?;
    let Some(f) = stats.conditional_fidelity else {
        return Ok(SoundnessCheck {
            stats,
            certificate: 0.0,
            slack: None,
        });
    };
    let certificate = if k >= n {
        0.0
    } else {
        certify(&CertificateQuery::dqsv(n, k, stats.p_k, strat.lambda())?)?.fidelity_bound
    };
    Ok(SoundnessCheck {
        stats,
        certificate,
        slack: Some(f - certificate),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: u64,
    pub mixture: MixtureDescriptor,
    pub check: SoundnessCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n: u64,
    pub k: u64,
    pub lambda: f64,
    pub trials: u64,
    /// Trials where `p_k > B_{N,k}(ν)`, i.e. the certificate is non-zero.
    pub nontrivial: u64,
    pub min_slack: Option<f64>,
    pub argmin: Option<Counterexample>,
    pub violations: Vec<Counterexample>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the defensive certificate on `trials` random mixtures of `n + 1`
/// systems. Trial `t` draws from `seeds.stream(t)`.
pub fn dqsv_soundness_sweep(
    n: u64,
    k: u64,
    strat: &HomogeneousStrategy,
    trials: u64,
    seeds: SeedPlan,
) -> Result<SweepReport> {
    if n < 1 || n as usize > MAX_SWEEP_N {
        return Err(QsvError::param(format!(
            "sweep needs 1 ≤ n ≤ {MAX_SWEEP_N}, got {n}"
        )));
    }
    if k >= n {
        return Err(QsvError::param(format!("sweep needs k < n, got k = {k}")));
    }
    let trivial_below = binom_tail(n, k, strat.nu())?;
    let results: Vec<(Counterexample, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mixture = random_mixture(n as usize + 1, &mut seeds.stream(t));
            let check = soundness_check(&mixture.build()?, k, strat)?;
            let nontrivial = check.stats.p_k > trivial_below;
            Ok((
                Counterexample {
                    trial: t,
                    mixture,
                    check,
                },
                nontrivial,
            ))
        })
        .collect::<Result<_>>()?;

    let nontrivial = results.iter().filter(|(_, nt)| *nt).count() as u64;
    let mut argmin: Option<&Counterexample> = None;
    for (c, _) in &results {
        if let Some(s) = c.check.slack {
            if argmin.is_none_or(|a| s < a.check.slack.unwrap()) {
                argmin = Some(c);
            }
        }
    }
    let violations = results
        .iter()
        .filter(|(c, _)| c.check.slack.is_some_and(|s| s < -SOUNDNESS_TOL))
        .map(|(c, _)| c.clone())
        .collect();
    Ok(SweepReport {
        n,
        k,
        lambda: strat.lambda(),
        trials,
        nontrivial,
        min_slack: argmin.and_then(|a| a.check.slack),
        argmin: argmin.cloned(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certbank::binom_tail;
    use crate::sources::{honest_iid, rho1, rho2, NoiseSpec};
    use crate::strategy::build_singlet_strategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn ideal_source_is_always_accepted() {
        let strat = build_singlet_strategy();
        let m = honest_iid(7, NoiseSpec::IDEAL).unwrap();
        for k in 0..4 {
            let s = exact_stats(&m, k, &strat).unwrap();
            assert!((s.p_k - 1.0).abs() < 1e-14);
            assert!((s.f_k - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_iid_reduces_to_binomial() {
        let strat = build_singlet_strategy();
        let m = honest_iid(11, NoiseSpec::new(0.25).unwrap()).unwrap();
        for k in 0..10 {
            let p = exact_pk(&m, k, &strat).unwrap();
            let b = binom_tail(10, k, 0.5).unwrap();
            assert!((p - b).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn rho1_small_example() {
        let strat = build_singlet_strategy();
        let m = rho1(4, NoiseSpec::IDEAL).unwrap();
        let p = exact_pk(&m, 0, &strat).unwrap();
        assert!((p - 0.6875).abs() < 1e-14);
    }

    #[test]
    fn factorized_matches_enumeration() {
        let strat = build_singlet_strategy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let systems = rng.random_range(2..=9);
            let m = random_mixture(systems, &mut rng).build().unwrap();
            for k in 0..systems as u64 {
                let a = exact_stats(&m, k, &strat).unwrap();
                let b = exact_stats_enumerated(&m, k, &strat).unwrap();
                assert!((a.p_k - b.p_k).abs() < 1e-12);
                assert!((a.f_k - b.f_k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let strat = build_singlet_strategy();
        let m = honest_iid(17, NoiseSpec::IDEAL).unwrap();
        assert!(matches!(
            exact_stats(&m, 0, &strat),
            Err(QsvError::Budget {
                systems: 17,
                limit: 16
            })
        ));
        assert!(exact_stats_with_limit(&m, 0, &strat, 17).is_ok());
    }

    #[test]
    fn worst_case_scan_matches_certificate() {
        let strat = build_singlet_strategy();
        let eps = sqsv_worst_case_scan(10, 0, 0.05, &strat, 1_000_000).unwrap();
        assert!((eps - 0.388299).abs() < 2e-6, "{eps}");
        assert_eq!(sqsv_worst_case_scan(10, 0, 1.0, &strat, 1000).unwrap(), 0.0);
        assert!(sqsv_worst_case_scan(10, 0, 0.5, &strat, 999).is_err());
    }

    #[test]
    fn rho2_is_sound_and_nontrivial() {
        let strat = build_singlet_strategy();
        let m = rho2(5, PI, NoiseSpec::IDEAL).unwrap();
        let c = soundness_check(&m, 0, &strat).unwrap();
        let f = c.stats.conditional_fidelity.unwrap();
        assert!(f > 0.0 && f < 1.0);
        // The bound is attained here up to rounding.
        assert!(c.slack.unwrap().abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn small_sweep_has_no_violations() {
        let strat = build_singlet_strategy();
        let r = dqsv_soundness_sweep(4, 1, &strat, 300, SeedPlan::new(1, 1)).unwrap();
        assert!(r.passed(), "{:?}", r.violations.first());
        assert!(r.nontrivial > 0);
        assert!(r.min_slack.unwrap() >= -SOUNDNESS_TOL);
        let json = serde_json::to_string(&r).unwrap();
        let back: SweepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.trials, 300);
        assert!(dqsv_soundness_sweep(13, 1, &strat, 1, SeedPlan::new(1, 1)).is_err());
    }

    #[test]
    fn descriptor_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_mixture(5, &mut rng);
        let json = serde_json::to_string(&d).unwrap();
        let back: MixtureDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.branches.len(), d.branches.len());
        back.build().unwrap();
    }
}
