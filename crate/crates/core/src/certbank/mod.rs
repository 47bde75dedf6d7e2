//! Fidelity certificates for standard (IID) and defensive (adversarial)
//! verification with a homogeneous strategy.
//!
//! Both certificates answer the same question: after at most `k` failures in
//! `N` tests, what is the smallest fidelity consistent with the source
//! being accepted with probability at least `δ`?
//!
//! * **SQSV** assumes every copy is the same state `σ`. The worst case puts
//!   all infidelity in the `λ`-eigenspace of `Ω`, so the certificate is
//!   `1 − J(N,k,δ)/ν` where `J` inverts the binomial tail.
//! * **DQSV** lets the source prepare any joint state of `N + 1` systems,
//!   tests `N` of them chosen at random and certifies the conditional state
//!   of the one left over. The optimum is a two-point interpolation between
//!   the sequences `h_z` and `g_z` described on [`DqsvIntermediates`].

pub mod binomial;

use std::fmt;

use serde::{Deserialize, Serialize};
use tracing::warn;

pub use binomial::{binom_tail, clopper_pearson, ln_binom_tail, solve_j};

use crate::error::{QsvError, Result};
use binomial::{ln_add_exp, ln_binom_upper_tail};

/// Slack allowed on the `[0, 1]` range of a certificate before it is treated
/// as an internal error.
pub const RANGE_TOL: f64 = 1e-12;

/// `h_z` within this relative distance of `δ` counts as `h_z ≥ δ`.
pub const TIE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Sqsv,
    Dqsv,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Sqsv => "sqsv",
            Protocol::Dqsv => "dqsv",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = QsvError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqsv" => Ok(Protocol::Sqsv),
            "dqsv" => Ok(Protocol::Dqsv),
            other => Err(QsvError::param(format!(
                "unknown protocol `{other}` (expected sqsv or dqsv)"
            ))),
        }
    }
}

/// Inputs to a certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateQuery {
    pub protocol: Protocol,
    /// Number of tests `N`.
    pub n: u64,
    /// Number of tolerated failures.
    pub k: u64,
    /// Significance level.
    pub delta: f64,
    /// Second-largest eigenvalue of the strategy.
    pub lambda: f64,
}

impl CertificateQuery {
    pub fn new(protocol: Protocol, n: u64, k: u64, delta: f64, lambda: f64) -> Result<Self> {
        let q = Self {
            protocol,
            n,
            k,
            delta,
            lambda,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn sqsv(n: u64, k: u64, delta: f64, lambda: f64) -> Result<Self> {
        Self::new(Protocol::Sqsv, n, k, delta, lambda)
    }

    pub fn dqsv(n: u64, k: u64, delta: f64, lambda: f64) -> Result<Self> {
        Self::new(Protocol::Dqsv, n, k, delta, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < self.k + 1 {
            return Err(QsvError::param(format!(
                "need N ≥ k + 1, got N = {}, k = {}",
                self.n, self.k
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(QsvError::param(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        let lambda_ok = match self.protocol {
            Protocol::Sqsv => (0.0..1.0).contains(&self.lambda),
            // λ = 0 is outside the hypothesis of the DQSV formula.
            Protocol::Dqsv => self.lambda > 0.0 && self.lambda < 1.0,
        };
        if !lambda_ok {
            let range = match self.protocol {
                Protocol::Sqsv => "[0, 1)",
                Protocol::Dqsv => "(0, 1)",
            };
            return Err(QsvError::param(format!(
                "lambda must lie in {range} for {}, got {}",
                self.protocol, self.lambda
            )));
        }
        Ok(())
    }

    pub fn nu(&self) -> f64 {
        1.0 - self.lambda
    }
}

/// A guaranteed fidelity (and its complement) for a query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub query: CertificateQuery,
    pub fidelity_bound: f64,
    pub infidelity_bound: f64,
}

/// The quantities behind a DQSV certificate.
///
/// For `0 ≤ z ≤ N + 1`, with `B_z = B_{z,k}(ν)`:
///
/// ```text
/// h_z = 1                                         z ≤ k
///     = ((N − z + 1)·B_z + z·B_{z−1}) / (N + 1)   z > k
/// g_z = (N − z + 1) / (N + 1)                     z ≤ k
///     = (N − z + 1)·B_z / (N + 1)                 z > k
/// ```
///
/// `ẑ` is the largest `z` with `h_z ≥ δ`; `κ` places `δ` between `h_{ẑ+1}`
/// and `h_ẑ`, and `ζ̃ = (1 − κ)·g_{ẑ+1} + κ·g_ẑ`. The certificate is `ζ̃/δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqsvIntermediates {
    /// `h_z` for `z = 0..=N+1`.
    pub h: Vec<f64>,
    /// `1 − h_z`, evaluated directly from upper binomial tails.
    pub h_complement: Vec<f64>,
    /// `g_z` for `z = 0..=N+1`.
    pub g: Vec<f64>,
    pub zhat: u64,
    pub kappa: f64,
    pub zeta_tilde: f64,
}

/// Certificate for either protocol.
pub fn certify(q: &CertificateQuery) -> Result<Certificate> {
    match q.protocol {
        Protocol::Sqsv => sqsv_certificate(q),
        Protocol::Dqsv => dqsv_certificate(q),
    }
}

/// IID certificate `max(0, 1 − J(N,k,δ)/ν)`.
pub fn sqsv_certificate(q: &CertificateQuery) -> Result<Certificate> {
    expect_protocol(q, Protocol::Sqsv)?;
    q.validate()?;
    let j = solve_j(q.n, q.k, q.delta)?;
    // The infidelity is primary so that small values keep full precision.
    let infidelity = (j / q.nu()).min(1.0);
    Ok(Certificate {
        query: *q,
        fidelity_bound: 1.0 - infidelity,
        infidelity_bound: infidelity,
    })
}

/// Evaluates `h`, `g`, `ẑ`, `κ` and `ζ̃` for a non-degenerate DQSV query
/// (`δ > B_{N,k}(ν)`).
pub fn dqsv_intermediates(q: &CertificateQuery) -> Result<DqsvIntermediates> {
    expect_protocol(q, Protocol::Dqsv)?;
    q.validate()?;
    let table = HTable::new(q)?;
    if table.at_least_delta(q.n as usize + 1) {
        return Err(QsvError::Domain(format!(
            "delta = {} ≤ B_{{N,k}}(ν) = {:e}; the certificate is 0",
            q.delta,
            table.h[q.n as usize + 1]
        )));
    }
    table.finish()
}

/// Adversarial certificate: `0` when `δ ≤ B_{N,k}(ν)`, otherwise `ζ̃/δ`.
pub fn dqsv_certificate(q: &CertificateQuery) -> Result<Certificate> {
    expect_protocol(q, Protocol::Dqsv)?;
    q.validate()?;
    let table = HTable::new(q)?;
    if table.at_least_delta(q.n as usize + 1) {
        return Ok(Certificate {
            query: *q,
            fidelity_bound: 0.0,
            infidelity_bound: 1.0,
        });
    }
    let inter = table.finish()?;
    let f = checked_unit(inter.zeta_tilde / q.delta, "DQSV fidelity bound")?;
    Ok(Certificate {
        query: *q,
        fidelity_bound: f,
        infidelity_bound: 1.0 - f,
    })
}

fn expect_protocol(q: &CertificateQuery, p: Protocol) -> Result<()> {
    if q.protocol != p {
        return Err(QsvError::param(format!(
            "{p} certificate requested for a {} query",
            q.protocol
        )));
    }
    Ok(())
}

fn checked_unit(x: f64, what: &str) -> Result<f64> {
    if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&x) || x.is_nan() {
        return Err(QsvError::Numerical(format!("{what} = {x} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&x) {
        warn!(value = x, "{what} clamped into [0, 1]");
    }
    Ok(x.clamp(0.0, 1.0))
}

/// `h`, `1 − h` and `g` evaluated from log-space binomial tails.
struct HTable {
    q: CertificateQuery,
    h: Vec<f64>,
    hc: Vec<f64>,
    g: Vec<f64>,
}

impl HTable {
    fn new(q: &CertificateQuery) -> Result<Self> {
        let n = q.n;
        let k = q.k;
        let nu = q.nu();
        let len = n as usize + 2;
        let ln_np1 = ((n + 1) as f64).ln();

        // ln B_{z,k}(ν) and ln(1 − B_{z,k}(ν)) for z = 0..=N+1.
        let mut ln_b = Vec::with_capacity(len);
        let mut ln_u = Vec::with_capacity(len);
        for z in 0..=n + 1 {
            ln_b.push(ln_binom_tail(z, k, nu)?);
            ln_u.push(ln_binom_upper_tail(z, k, nu)?);
        }

        let mut h = vec![0.0; len];
        let mut hc = vec![0.0; len];
        let mut g = vec![0.0; len];
        for z in 0..=n + 1 {
            let zi = z as usize;
            let weight_here = (n + 1 - z) as f64;
            if z <= k {
                h[zi] = 1.0;
                hc[zi] = 0.0;
                g[zi] = weight_here / (n + 1) as f64;
                continue;
            }
            let ln_here = weight_here.ln();
            let ln_prev = (z as f64).ln();
            let ln_h = ln_add_exp(ln_here + ln_b[zi], ln_prev + ln_b[zi - 1]) - ln_np1;
            let ln_hc = ln_add_exp(ln_here + ln_u[zi], ln_prev + ln_u[zi - 1]) - ln_np1;
            h[zi] = ln_h.exp();
            hc[zi] = ln_hc.exp();
            g[zi] = (ln_here + ln_b[zi] - ln_np1).exp();
        }
        Ok(Self { q: *q, h, hc, g })
    }

    /// `h_z ≥ δ` up to [`TIE_TOL`], compared through `1 − h_z` when
    /// `δ > 1/2` where the complement carries more precision.
    fn at_least_delta(&self, z: usize) -> bool {
        let delta = self.q.delta;
        if delta > 0.5 {
            self.hc[z] <= (1.0 - delta) * (1.0 + TIE_TOL)
        } else {
            self.h[z] >= delta * (1.0 - TIE_TOL)
        }
    }

    fn finish(self) -> Result<DqsvIntermediates> {
        let n = self.q.n as usize;
        let k = self.q.k as usize;
        let delta = self.q.delta;

        // Largest z in [k, N] with h_z ≥ δ; h_k = 1 ≥ δ, and h is strictly
        // decreasing on [k, N + 1].
        let (mut lo, mut hi) = (k, n + 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.at_least_delta(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zhat = lo;

        let (num, den) = if delta > 0.5 {
            (
                self.hc[zhat + 1] - (1.0 - delta),
                self.hc[zhat + 1] - self.hc[zhat],
            )
        } else {
            (delta - self.h[zhat + 1], self.h[zhat] - self.h[zhat + 1])
        };
        if !(den > 0.0) {
            return Err(QsvError::Numerical(format!(
                "h_ẑ − h_ẑ₊₁ = {den:e} at ẑ = {zhat}; h is not strictly decreasing"
            )));
        }
        // h_ẑ may sit within the tie tolerance below δ.
        let kappa = if num >= den {
            1.0
        } else {
            checked_unit(num / den, "kappa")?
        };
        let zeta_tilde = (1.0 - kappa) * self.g[zhat + 1] + kappa * self.g[zhat];

        Ok(DqsvIntermediates {
            h: self.h,
            h_complement: self.hc,
            g: self.g,
            zhat: zhat as u64,
            kappa,
            zeta_tilde,
        })
    }
}
