//! Canned experiment grids.
//!
//! * [`fig3`]: the all-or-nothing correlated source at `N = 100` for a range
//!   of `k`, standard and defensive protocol side by side.
//! * [`fig4`]: the hidden phase-flip source, once over `N` at `φ = π` and
//!   once over `φ` at `N = 5`, with exact oracle values next to simulation.
//! * [`fig5`]: certified infidelity against `N` for an honest source.
//!
//! Each `write_*` function writes plot-ready CSV, optionally with a JSON
//! copy, into a directory and returns the paths written.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certbank::{certify, CertificateQuery, Protocol};
use crate::error::{QsvError, Result};
use crate::oracle::exact_stats_with_limit;
use crate::output::{write_csv, write_json};
use crate::rng::{experiment, SeedPlan};
use crate::sim::{
    run_experiment, scaling_experiment, simulate_rounds, summarize, ExperimentSummary, StoppingRule,
};
use crate::sources::{rho1, rho2, NoiseSpec};
use crate::strategy::{build_singlet_strategy, HomogeneousStrategy};

/// Certificate fidelity, or `None` where no certificate applies
/// (`δ = 0` or `k ≥ n`).
pub fn certificate_at(
    protocol: Protocol,
    n: u64,
    k: u64,
    delta: f64,
    lambda: f64,
) -> Result<Option<f64>> {
    if delta <= 0.0 || k >= n {
        return Ok(None);
    }
    let q = CertificateQuery::new(protocol, n, k, delta.min(1.0), lambda)?;
    Ok(Some(certify(&q)?.fidelity_bound))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Options {
    pub n: u64,
    pub k_max: u64,
    pub rounds: u64,
    /// Per-copy fidelity of the singlet branch.
    pub prep_fidelity: f64,
    pub seed: u64,
}

impl Default for Fig3Options {
    fn default() -> Self {
        Self {
            n: 100,
            k_max: 10,
            rounds: 10_000,
            prep_fidelity: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub k: u64,
    pub sqsv_p_hat: f64,
    pub sqsv_p_lo: f64,
    pub sqsv_p_hi: f64,
    pub unconditional_truth: f64,
    pub unconditional_truth_se: f64,
    pub unconditional_measured: f64,
    pub unconditional_measured_se: f64,
    pub sqsv_cert_p_hat: Option<f64>,
    pub sqsv_cert_p_lo: Option<f64>,
    pub dqsv_p_hat: f64,
    pub dqsv_p_lo: f64,
    pub dqsv_p_hi: f64,
    pub dqsv_accepted: u64,
    pub conditional_truth: Option<f64>,
    pub conditional_truth_se: Option<f64>,
    pub conditional_measured: Option<f64>,
    pub conditional_measured_se: Option<f64>,
    pub dqsv_cert_p_hat: Option<f64>,
    pub dqsv_cert_p_lo: Option<f64>,
    pub exact_p_k: f64,
    pub exact_conditional_fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Table {
    pub options: Fig3Options,
    pub rows: Vec<Fig3Row>,
}

pub fn fig3(opts: &Fig3Options) -> Result<Fig3Table> {
    let strat = build_singlet_strategy();
    let lambda = strat.lambda();
    let n = opts.n;
    if opts.k_max >= n {
        return Err(QsvError::param(format!(
            "k_max must be below n = {n}, got {}",
            opts.k_max
        )));
    }
    let nu = usize::try_from(n).map_err(|_| QsvError::param("n too large"))?;
    let m = rho1(nu, NoiseSpec::new(opts.prep_fidelity)?)?;
    let stop = StoppingRule::FixedRounds {
        rounds: opts.rounds,
    };
    // The acceptance threshold does not affect fixed-round runs; summaries
    // are taken per k afterwards.
    let sq = simulate_rounds(
        &m,
        nu,
        0,
        &strat,
        Protocol::Sqsv,
        stop,
        SeedPlan::new(opts.seed, experiment::FIG3_SQSV),
    )?;
    let dq = simulate_rounds(
        &m,
        nu,
        0,
        &strat,
        Protocol::Dqsv,
        stop,
        SeedPlan::new(opts.seed, experiment::FIG3_DQSV),
    )?;
    let rows = (0..=opts.k_max)
        .map(|k| {
            let s = summarize(&sq, n, k, Protocol::Sqsv, &strat)?;
            let d = summarize(&dq, n, k, Protocol::Dqsv, &strat)?;
            let exact = exact_stats_with_limit(&m, k, &strat, nu + 1)?;
            Ok(Fig3Row {
                k,
                sqsv_p_hat: s.p_hat,
                sqsv_p_lo: s.p_hat_ci[0],
                sqsv_p_hi: s.p_hat_ci[1],
                unconditional_truth: s.unconditional_fidelity_truth.mean,
                unconditional_truth_se: s.unconditional_fidelity_truth.std_error,
                unconditional_measured: s.unconditional_fidelity_measured.mean,
                unconditional_measured_se: s.unconditional_fidelity_measured.std_error,
                sqsv_cert_p_hat: certificate_at(Protocol::Sqsv, n, k, s.p_hat, lambda)?,
                sqsv_cert_p_lo: certificate_at(Protocol::Sqsv, n, k, s.p_hat_ci[0], lambda)?,
                dqsv_p_hat: d.p_hat,
                dqsv_p_lo: d.p_hat_ci[0],
                dqsv_p_hi: d.p_hat_ci[1],
                dqsv_accepted: d.accepted,
                conditional_truth: d.conditional_fidelity_truth.map(|e| e.mean),
                conditional_truth_se: d.conditional_fidelity_truth.map(|e| e.std_error),
                conditional_measured: d.conditional_fidelity_measured.map(|e| e.mean),
                conditional_measured_se: d.conditional_fidelity_measured.map(|e| e.std_error),
                dqsv_cert_p_hat: certificate_at(Protocol::Dqsv, n, k, d.p_hat, lambda)?,
                dqsv_cert_p_lo: certificate_at(Protocol::Dqsv, n, k, d.p_hat_ci[0], lambda)?,
                exact_p_k: exact.p_k,
                exact_conditional_fidelity: exact.conditional_fidelity,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Fig3Table {
        options: opts.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Options {
    pub k: u64,
    pub n_grid: Vec<u64>,
    pub phi_for_n_grid: f64,
    pub phi_grid: Vec<f64>,
    pub n_for_phi_grid: u64,
    /// Stop each run after this many accepted rounds.
    pub target_accepted: u64,
    pub max_rounds: u64,
    pub prep_fidelity: f64,
    pub seed: u64,
}

impl Default for Fig4Options {
    fn default() -> Self {
        Self {
            k: 1,
            n_grid: (2..=10).collect(),
            phi_for_n_grid: PI,
            phi_grid: vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI],
            n_for_phi_grid: 5,
            target_accepted: 1000,
            max_rounds: 1_000_000,
            prep_fidelity: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig4Grid {
    NSweep,
    PhiSweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub grid: Fig4Grid,
    pub n: u64,
    pub phi: f64,
    pub k: u64,
    pub exact_p_k: f64,
    pub exact_conditional_fidelity: Option<f64>,
    pub exact_unconditional_fidelity: f64,
    pub sqsv_cert_exact: Option<f64>,
    pub dqsv_cert_exact: Option<f64>,
    /// Exact conditional fidelity minus the defensive certificate.
    pub dqsv_slack_exact: Option<f64>,
    pub sqsv_rounds: u64,
    pub sqsv_p_hat: f64,
    pub sqsv_p_lo: f64,
    pub sim_unconditional_truth: f64,
    pub sqsv_cert_p_hat: Option<f64>,
    pub dqsv_rounds: u64,
    pub dqsv_accepted: u64,
    pub dqsv_p_hat: f64,
    pub dqsv_p_lo: f64,
    pub sim_conditional_truth: Option<f64>,
    pub sim_conditional_truth_se: Option<f64>,
    pub sim_conditional_measured: Option<f64>,
    pub sim_conditional_measured_se: Option<f64>,
    pub dqsv_cert_p_hat: Option<f64>,
    pub dqsv_cert_p_lo: Option<f64>,
}

impl Fig4Row {
    /// Whether the standard certificate (at the exact `p_k`) is above the
    /// conditional or unconditional fidelity.
    pub fn sqsv_violated(&self) -> bool {
        self.sqsv_cert_exact.is_some_and(|c| {
            c > self.exact_unconditional_fidelity
                || self.exact_conditional_fidelity.is_some_and(|f| c > f)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Table {
    pub options: Fig4Options,
    pub rows: Vec<Fig4Row>,
}

fn fig4_point(
    grid: Fig4Grid,
    n: u64,
    phi: f64,
    opts: &Fig4Options,
    strat: &HomogeneousStrategy,
    seeds: SeedPlan,
) -> Result<Fig4Row> {
    let k = opts.k;
    let lambda = strat.lambda();
    let nu = usize::try_from(n).map_err(|_| QsvError::param("n too large"))?;
    let m = rho2(nu, phi, NoiseSpec::new(opts.prep_fidelity)?)?;
    let exact = exact_stats_with_limit(&m, k, strat, nu + 1)?;
    let unconditional = m.mean_marginal_fidelity(strat.target());
    let stop = StoppingRule::UntilAccepted {
        target: opts.target_accepted,
        max_rounds: opts.max_rounds,
    };
    let run = |protocol, id| -> Result<ExperimentSummary> {
        Ok(run_experiment(&m, nu, k, strat, protocol, stop, seeds.child(id))?.summary)
    };
    let s = run(Protocol::Sqsv, 0)?;
    let d = run(Protocol::Dqsv, 1)?;
    let sqsv_cert_exact = certificate_at(Protocol::Sqsv, n, k, exact.p_k, lambda)?;
    let dqsv_cert_exact = certificate_at(Protocol::Dqsv, n, k, exact.p_k, lambda)?;
    Ok(Fig4Row {
        grid,
        n,
        phi,
        k,
        exact_p_k: exact.p_k,
        exact_conditional_fidelity: exact.conditional_fidelity,
        exact_unconditional_fidelity: unconditional,
        sqsv_cert_exact,
        dqsv_cert_exact,
        dqsv_slack_exact: exact
            .conditional_fidelity
            .zip(dqsv_cert_exact)
            .map(|(f, c)| f - c),
        sqsv_rounds: s.rounds,
        sqsv_p_hat: s.p_hat,
        sqsv_p_lo: s.p_hat_ci[0],
        sim_unconditional_truth: s.unconditional_fidelity_truth.mean,
        sqsv_cert_p_hat: certificate_at(Protocol::Sqsv, n, k, s.p_hat, lambda)?,
        dqsv_rounds: d.rounds,
        dqsv_accepted: d.accepted,
        dqsv_p_hat: d.p_hat,
        dqsv_p_lo: d.p_hat_ci[0],
        sim_conditional_truth: d.conditional_fidelity_truth.map(|e| e.mean),
        sim_conditional_truth_se: d.conditional_fidelity_truth.map(|e| e.std_error),
        sim_conditional_measured: d.conditional_fidelity_measured.map(|e| e.mean),
        sim_conditional_measured_se: d.conditional_fidelity_measured.map(|e| e.std_error),
        dqsv_cert_p_hat: certificate_at(Protocol::Dqsv, n, k, d.p_hat, lambda)?,
        dqsv_cert_p_lo: certificate_at(Protocol::Dqsv, n, k, d.p_hat_ci[0], lambda)?,
    })
}

pub fn fig4(opts: &Fig4Options) -> Result<Fig4Table> {
    let strat = build_singlet_strategy();
    let seeds = SeedPlan::new(opts.seed, experiment::FIG4_DQSV);
    let points = opts
        .n_grid
        .iter()
        .map(|&n| (Fig4Grid::NSweep, n, opts.phi_for_n_grid))
        .chain(
            opts.phi_grid
                .iter()
                .map(|&phi| (Fig4Grid::PhiSweep, opts.n_for_phi_grid, phi)),
        );
    let rows = points
        .enumerate()
        .map(|(i, (grid, n, phi))| fig4_point(grid, n, phi, opts, &strat, seeds.child(i as u64)))
        .collect::<Result<_>>()?;
    Ok(Fig4Table {
        options: opts.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Options {
    pub fidelity: f64,
    pub delta: f64,
    pub n_grid: Vec<u64>,
    pub rounds: u64,
    pub seed: u64,
}

/// Roughly logarithmic grid from 1 to 1000.
pub fn default_fig5_grid() -> Vec<u64> {
    let mut g = Vec::new();
    for decade in [1, 10, 100] {
        for m in [1, 2, 3, 5, 7] {
            g.push(decade * m);
        }
    }
    g.push(1000);
    g
}

impl Default for Fig5Options {
    fn default() -> Self {
        Self {
            fidelity: 0.99,
            delta: 0.05,
            n_grid: default_fig5_grid(),
            rounds: 80,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5SingleRow {
    pub n: u64,
    pub k: u64,
    pub eps_sqsv: f64,
    pub eps_dqsv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5AverageRow {
    pub n: u64,
    pub mean_k: f64,
    pub eps_sqsv_mean: f64,
    pub eps_sqsv_sd: f64,
    pub eps_sqsv_se: f64,
    pub eps_dqsv_mean: f64,
    pub eps_dqsv_sd: f64,
    pub eps_dqsv_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Table {
    pub options: Fig5Options,
    pub single: Vec<Fig5SingleRow>,
    pub average: Vec<Fig5AverageRow>,
}

pub fn fig5(opts: &Fig5Options) -> Result<Fig5Table> {
    let strat = build_singlet_strategy();
    let t = scaling_experiment(
        NoiseSpec::new(opts.fidelity)?,
        opts.delta,
        &opts.n_grid,
        &strat,
        opts.rounds,
        SeedPlan::new(opts.seed, experiment::FIG5),
    )?;
    Ok(Fig5Table {
        options: opts.clone(),
        single: t
            .single
            .iter()
            .map(|r| Fig5SingleRow {
                n: r.n,
                k: r.k,
                eps_sqsv: r.eps_sqsv,
                eps_dqsv: r.eps_dqsv,
            })
            .collect(),
        average: t
            .averaged
            .iter()
            .map(|r| Fig5AverageRow {
                n: r.n,
                mean_k: r.mean_k,
                eps_sqsv_mean: r.eps_sqsv.mean,
                eps_sqsv_sd: r.eps_sqsv.std_dev,
                eps_sqsv_se: r.eps_sqsv.std_error,
                eps_dqsv_mean: r.eps_dqsv.mean,
                eps_dqsv_sd: r.eps_dqsv.std_dev,
                eps_dqsv_se: r.eps_dqsv.std_error,
            })
            .collect(),
    })
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_fig3(dir: &Path, t: &Fig3Table, with_json: bool) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut out = vec![dir.join("fig3.csv")];
    write_csv(&out[0], "fig3", &t.rows)?;
    if with_json {
        out.push(dir.join("fig3.json"));
        write_json(&out[1], t)?;
    }
    Ok(out)
}

pub fn write_fig4(dir: &Path, t: &Fig4Table, with_json: bool) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut out = vec![dir.join("fig4.csv")];
    write_csv(&out[0], "fig4", &t.rows)?;
    if with_json {
        out.push(dir.join("fig4.json"));
        write_json(&out[1], t)?;
    }
    Ok(out)
}

pub fn write_fig5(dir: &Path, t: &Fig5Table, with_json: bool) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut out = vec![dir.join("fig5_single.csv"), dir.join("fig5_average.csv")];
    write_csv(&out[0], "fig5_single", &t.single)?;
    write_csv(&out[1], "fig5_average", &t.average)?;
    if with_json {
        out.push(dir.join("fig5.json"));
        write_json(&out[2], t)?;
    }
    Ok(out)
}
