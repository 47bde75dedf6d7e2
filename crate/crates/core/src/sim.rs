//! Monte Carlo simulation of verification rounds.
//!
//! A round samples one branch of the source, applies a randomly chosen test
//! to each of `N` systems and counts failures. In the defensive protocol
//! the `N` tested systems are all but one uniformly chosen leftover; the
//! leftover is probed with one further test so that its conditional
//! fidelity can be estimated the way an experiment would, by inverting
//! `p = λ + νF`. The ground-truth fidelity of the leftover (known only
//! because the simulator knows the sampled branch) is recorded alongside.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certbank::{certify, clopper_pearson, CertificateQuery, Protocol};
use crate::error::{QsvError, Result};
use crate::linalg::DensityMatrix;
use crate::rng::SeedPlan;
use crate::sources::{NoiseSpec, ProductSequenceMixture};
use crate::strategy::HomogeneousStrategy;

/// Two-sided confidence level for `p̂` intervals.
pub const P_HAT_CONFIDENCE: f64 = 0.95;

const CHUNK: u64 = 2048;

/// One simulated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Test setting index per tested system, in testing order.
    pub settings: Vec<u8>,
    pub passes: Vec<bool>,
    pub failures: u64,
    /// Untested system (defensive protocol only).
    pub leftover_index: Option<usize>,
    /// `⟨ψ|σ_leftover|ψ⟩` of the sampled branch (defensive protocol only).
    pub leftover_truth_fidelity: Option<f64>,
    /// Outcome of one extra test applied to the leftover.
    pub leftover_probe_passed: Option<bool>,
    /// Mean `⟨ψ|σ|ψ⟩` over the tested systems of the sampled branch.
    pub tested_truth_fidelity: f64,
    pub branch_index: usize,
}

impl RunOutcome {
    pub fn accepted(&self, k: u64) -> bool {
        self.failures <= k
    }

    pub fn passes_count(&self) -> u64 {
        self.passes.len() as u64 - self.failures
    }
}

fn test_systems<R: Rng + ?Sized>(
    states: impl Iterator<Item = DensityMatrix>,
    strat: &HomogeneousStrategy,
    rng: &mut R,
    settings: &mut Vec<u8>,
    passes: &mut Vec<bool>,
) -> f64 {
    let target = strat.target();
    let mut fid_sum = 0.0;
    for s in states {
        let r = strat.sample_test(&s, rng);
        settings.push(r.setting as u8);
        passes.push(r.passed);
        fid_sum += s.fidelity_with(target);
    }
    fid_sum
}

/// Standard protocol: tests the first `n` systems of a sampled sequence.
pub fn run_sqsv_round<R: Rng + ?Sized>(
    m: &ProductSequenceMixture,
    n: usize,
    strat: &HomogeneousStrategy,
    rng: &mut R,
) -> Result<RunOutcome> {
    if n == 0 || m.num_systems() < n {
        return Err(QsvError::param(format!(
            "cannot test {n} systems of a {}-system source",
            m.num_systems()
        )));
    }
    let (branch_index, seq) = m.sample_sequence(rng);
    let mut settings = Vec::with_capacity(n);
    let mut passes = Vec::with_capacity(n);
    let fid_sum = test_systems(
        seq.iter().take(n).copied(),
        strat,
        rng,
        &mut settings,
        &mut passes,
    );
    let failures = passes.iter().filter(|p| !**p).count() as u64;
    Ok(RunOutcome {
        settings,
        passes,
        failures,
        leftover_index: None,
        leftover_truth_fidelity: None,
        leftover_probe_passed: None,
        tested_truth_fidelity: fid_sum / n as f64,
        branch_index,
    })
}

/// Defensive protocol: leaves one uniformly chosen system of `n + 1`
/// untested, tests the rest, then probes the leftover once.
pub fn run_dqsv_round<R: Rng + ?Sized>(
    m: &ProductSequenceMixture,
    n: usize,
    strat: &HomogeneousStrategy,
    rng: &mut R,
) -> Result<RunOutcome> {
    if n == 0 || m.num_systems() != n + 1 {
        return Err(QsvError::param(format!(
            "defensive rounds need exactly N + 1 = {} systems, source has {}",
            n + 1,
            m.num_systems()
        )));
    }
    let (branch_index, seq) = m.sample_sequence(rng);
    let leftover = rng.random_range(0..=n);
    let mut settings = Vec::with_capacity(n);
    let mut passes = Vec::with_capacity(n);
    let tested = seq
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != leftover)
        .map(|(_, s)| *s);
    let fid_sum = test_systems(tested, strat, rng, &mut settings, &mut passes);
    let failures = passes.iter().filter(|p| !**p).count() as u64;
    let left_state = seq.state(leftover);
    let probe = strat.sample_test(left_state, rng);
    Ok(RunOutcome {
        settings,
        passes,
        failures,
        leftover_index: Some(leftover),
        leftover_truth_fidelity: Some(left_state.fidelity_with(strat.target())),
        leftover_probe_passed: Some(probe.passed),
        tested_truth_fidelity: fid_sum / n as f64,
        branch_index,
    })
}

pub fn run_round<R: Rng + ?Sized>(
    protocol: Protocol,
    m: &ProductSequenceMixture,
    n: usize,
    strat: &HomogeneousStrategy,
    rng: &mut R,
) -> Result<RunOutcome> {
    match protocol {
        Protocol::Sqsv => run_sqsv_round(m, n, strat, rng),
        Protocol::Dqsv => run_dqsv_round(m, n, strat, rng),
    }
}

/// When to stop running rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRule {
    FixedRounds {
        rounds: u64,
    },
    /// Run until `target` rounds have been accepted, or `max_rounds` in total.
    UntilAccepted {
        target: u64,
        max_rounds: u64,
    },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::FixedRounds { rounds: 0 } => {
                Err(QsvError::param("rounds must be at least 1"))
            }
            StoppingRule::UntilAccepted { target, max_rounds }
                if target == 0 || max_rounds < target =>
            {
                Err(QsvError::param(format!(
                    "need 1 ≤ target ≤ max_rounds, got target = {target}, max_rounds = {max_rounds}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Runs rounds until the stopping rule fires. Round `i` uses
/// `seeds.stream(i)`, so the result does not depend on thread count.
pub fn simulate_rounds(
    m: &ProductSequenceMixture,
    n: usize,
    k: u64,
    strat: &HomogeneousStrategy,
    protocol: Protocol,
    stopping: StoppingRule,
    seeds: SeedPlan,
) -> Result<Vec<RunOutcome>> {
    stopping.validate()?;
    let one = |i: u64| run_round(protocol, m, n, strat, &mut seeds.stream(i));
    match stopping {
        StoppingRule::FixedRounds { rounds } => (0..rounds).into_par_iter().map(one).collect(),
        StoppingRule::UntilAccepted { target, max_rounds } => {
            let mut out = Vec::new();
            let mut accepted = 0u64;
            let mut start = 0u64;
            while start < max_rounds {
                let end = (start + CHUNK).min(max_rounds);
                let chunk: Vec<RunOutcome> = (start..end)
                    .into_par_iter()
                    .map(one)
                    .collect::<Result<_>>()?;
                for r in chunk {
                    accepted += u64::from(r.accepted(k));
                    out.push(r);
                    if accepted == target {
                        return Ok(out);
                    }
                }
                start = end;
            }
            Ok(out)
        }
    }
}

/// Mean with spread over independent samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut count = 0u64;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in xs {
            count += 1;
            let d = x - mean;
            mean += d / count as f64;
            m2 += d * (x - mean);
        }
        if count == 0 {
            return None;
        }
        let var = if count > 1 {
            m2 / (count - 1) as f64
        } else {
            0.0
        };
        let sd = var.max(0.0).sqrt();
        Some(Self {
            mean,
            std_dev: sd,
            std_error: sd / (count as f64).sqrt(),
            samples: count,
        })
    }
}

/// Aggregate statistics of a batch of rounds at one acceptance threshold `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub protocol: Protocol,
    pub n: u64,
    pub k: u64,
    pub rounds: u64,
    pub accepted: u64,
    pub p_hat: f64,
    /// Two-sided Clopper–Pearson interval at [`P_HAT_CONFIDENCE`].
    pub p_hat_ci: [f64; 2],
    /// Simulation-only: mean ground-truth leftover fidelity over accepted
    /// rounds.
    pub conditional_fidelity_truth: Option<Estimate>,
    /// Leftover fidelity from the probe pass rate over accepted rounds.
    pub conditional_fidelity_measured: Option<Estimate>,
    /// Simulation-only: mean ground-truth fidelity of the tested systems.
    pub unconditional_fidelity_truth: Estimate,
    /// Per-round pass rates inverted to fidelities, averaged over rounds.
    pub unconditional_fidelity_measured: Estimate,
    /// Number of rounds with exactly `f` failures, keyed by `f`.
    pub per_k_histogram: BTreeMap<u64, u64>,
}

pub fn summarize(
    outcomes: &[RunOutcome],
    n: u64,
    k: u64,
    protocol: Protocol,
    strat: &HomogeneousStrategy,
) -> Result<ExperimentSummary> {
    if outcomes.is_empty() {
        return Err(QsvError::param("no rounds to summarise"));
    }
    let lambda = strat.lambda();
    let nu = strat.nu();
    let rounds = outcomes.len() as u64;
    let accepted_rounds: Vec<&RunOutcome> = outcomes.iter().filter(|r| r.accepted(k)).collect();
    let accepted = accepted_rounds.len() as u64;
    let (lo, hi) = clopper_pearson(accepted, rounds, 1.0 - P_HAT_CONFIDENCE)?;

    let conditional_fidelity_truth = Estimate::from_samples(
        accepted_rounds
            .iter()
            .filter_map(|r| r.leftover_truth_fidelity),
    );

    let probes: Vec<bool> = accepted_rounds
        .iter()
        .filter_map(|r| r.leftover_probe_passed)
        .collect();
    let conditional_fidelity_measured = (!probes.is_empty()).then(|| {
        let m = probes.len() as f64;
        let rate = probes.iter().filter(|p| **p).count() as f64 / m;
        let sd = (rate * (1.0 - rate)).sqrt() / nu;
        Estimate {
            mean: (rate - lambda) / nu,
            std_dev: sd,
            std_error: sd / m.sqrt(),
            samples: probes.len() as u64,
        }
    });

    let unconditional_fidelity_truth =
        Estimate::from_samples(outcomes.iter().map(|r| r.tested_truth_fidelity))
            .expect("outcomes is non-empty");
    let unconditional_fidelity_measured = Estimate::from_samples(outcomes.iter().map(|r| {
        let rate = r.passes_count() as f64 / r.passes.len() as f64;
        (rate - lambda) / nu
    }))
    .expect("outcomes is non-empty");

    let mut per_k_histogram = BTreeMap::new();
    for r in outcomes {
        *per_k_histogram.entry(r.failures).or_insert(0u64) += 1;
    }

    Ok(ExperimentSummary {
        protocol,
        n,
        k,
        rounds,
        accepted,
        p_hat: accepted as f64 / rounds as f64,
        p_hat_ci: [lo, hi],
        conditional_fidelity_truth,
        conditional_fidelity_measured,
        unconditional_fidelity_truth,
        unconditional_fidelity_measured,
        per_k_histogram,
    })
}

/// Rounds and their summary.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub outcomes: Vec<RunOutcome>,
    pub summary: ExperimentSummary,
}

#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    m: &ProductSequenceMixture,
    n: usize,
    k: u64,
    strat: &HomogeneousStrategy,
    protocol: Protocol,
    stopping: StoppingRule,
    seeds: SeedPlan,
) -> Result<Experiment> {
    let outcomes = simulate_rounds(m, n, k, strat, protocol, stopping, seeds)?;
    let summary = summarize(&outcomes, n as u64, k, protocol, strat)?;
    Ok(Experiment { outcomes, summary })
}

/// Guaranteed infidelities after `n` tests with `k` failures. When every
/// test failed no certificate applies and both are reported as 1.
pub fn infidelity_pair(n: u64, k: u64, delta: f64, lambda: f64) -> Result<(f64, f64)> {
    if k >= n {
        return Ok((1.0, 1.0));
    }
    let s = certify(&CertificateQuery::sqsv(n, k, delta, lambda)?)?;
    let d = certify(&CertificateQuery::dqsv(n, k, delta, lambda)?)?;
    Ok((s.infidelity_bound, d.infidelity_bound))
}

/// Certificates along one growing run of tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub k: u64,
    pub eps_sqsv: f64,
    pub eps_dqsv: f64,
}

/// Certificates averaged over independent runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedScalingRow {
    pub n: u64,
    pub mean_k: f64,
    pub eps_sqsv: Estimate,
    pub eps_dqsv: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    /// First run on its own.
    pub single: Vec<ScalingRow>,
    /// Mean and spread over all runs.
    pub averaged: Vec<AveragedScalingRow>,
}

/// Failure counts after each prefix length in `n_grid` of one run of
/// `n_grid.last()` tests on IID copies of `state`.
pub fn failure_trajectory<R: Rng + ?Sized>(
    state: &DensityMatrix,
    n_grid: &[u64],
    strat: &HomogeneousStrategy,
    rng: &mut R,
) -> Vec<u64> {
    let mut out = Vec::with_capacity(n_grid.len());
    let mut failures = 0u64;
    let mut done = 0u64;
    for &n in n_grid {
        while done < n {
            failures += u64::from(!strat.sample_test(state, rng).passed);
            done += 1;
        }
        out.push(failures);
    }
    out
}

/// One growing run of tests on an honest IID source, evaluated at each
/// grid point with `k` = failures so far.
pub fn scaling_round<R: Rng + ?Sized>(
    noise: NoiseSpec,
    delta: f64,
    n_grid: &[u64],
    strat: &HomogeneousStrategy,
    rng: &mut R,
) -> Result<Vec<ScalingRow>> {
    check_grid(n_grid)?;
    let state = noise.apply(strat.target())?;
    let ks = failure_trajectory(&state, n_grid, strat, rng);
    n_grid
        .iter()
        .zip(ks)
        .map(|(&n, k)| {
            let (eps_sqsv, eps_dqsv) = infidelity_pair(n, k, delta, strat.lambda())?;
            Ok(ScalingRow {
                n,
                k,
                eps_sqsv,
                eps_dqsv,
            })
        })
        .collect()
}

/// `rounds` independent growing runs; run `r` uses `seeds.stream(r)`.
pub fn scaling_experiment(
    noise: NoiseSpec,
    delta: f64,
    n_grid: &[u64],
    strat: &HomogeneousStrategy,
    rounds: u64,
    seeds: SeedPlan,
) -> Result<ScalingTable> {
    check_grid(n_grid)?;
    if rounds == 0 {
        return Err(QsvError::param("rounds must be at least 1"));
    }
    let state = noise.apply(strat.target())?;
    let trajectories: Vec<Vec<u64>> = (0..rounds)
        .into_par_iter()
        .map(|r| failure_trajectory(&state, n_grid, strat, &mut seeds.stream(r)))
        .collect();

    // Certificates depend only on (n, k); evaluate each distinct pair once.
    let mut pairs: Vec<(u64, u64)> = trajectories
        .iter()
        .flat_map(|t| n_grid.iter().copied().zip(t.iter().copied()))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let certs: BTreeMap<(u64, u64), (f64, f64)> = pairs
        .into_par_iter()
        .map(|(n, k)| infidelity_pair(n, k, delta, strat.lambda()).map(|e| ((n, k), e)))
        .collect::<Result<_>>()?;

    let rows_of = |t: &Vec<u64>| -> Vec<ScalingRow> {
        n_grid
            .iter()
            .zip(t)
            .map(|(&n, &k)| {
                let (eps_sqsv, eps_dqsv) = certs[&(n, k)];
                ScalingRow {
                    n,
                    k,
                    eps_sqsv,
                    eps_dqsv,
                }
            })
            .collect()
    };
    let all: Vec<Vec<ScalingRow>> = trajectories.iter().map(rows_of).collect();
    let averaged = (0..n_grid.len())
        .map(|g| {
            let col = || all.iter().map(move |rows| rows[g]);
            AveragedScalingRow {
                n: n_grid[g],
                mean_k: col().map(|r| r.k as f64).sum::<f64>() / rounds as f64,
                eps_sqsv: Estimate::from_samples(col().map(|r| r.eps_sqsv)).unwrap(),
                eps_dqsv: Estimate::from_samples(col().map(|r| r.eps_dqsv)).unwrap(),
            }
        })
        .collect();
    Ok(ScalingTable {
        single: all.into_iter().next().unwrap(),
        averaged,
    })
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QsvError::param(
            "n_grid must be non-empty, positive and strictly ascending",
        ));
    }
    Ok(())
}
