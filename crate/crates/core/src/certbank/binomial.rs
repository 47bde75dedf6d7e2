//! Binomial lower tails `B_{z,k}(p) = Σ_{j≤k} C(z,j) pʲ(1−p)^{z−j}` and their
//! inversion in `p`.
//!
//! Individual terms come from Loader's saddle-point form of the binomial
//! pmf, which keeps full relative precision in log space for any `z`. For
//! `z ≤ 100` the tail is the compensated sum of all terms. Above that the
//! sum is anchored at its largest term and accumulated in log space,
//! walking outwards until the geometric bound on the remaining terms is
//! negligible; pmf log-concavity makes that bound rigorous.

use crate::error::{QsvError, Result};

/// Largest `z` evaluated by direct summation of every term.
pub const DIRECT_SUM_MAX_Z: u64 = 100;

/// Iteration cap for [`solve_j`].
pub const BISECTION_MAX_ITER: usize = 200;
/// Bracket width below which [`solve_j`] accepts an unconverged bisection.
pub const BISECTION_X_TOL: f64 = 1e-13;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TRUNCATION_REL: f64 = 1e-17;

/// `ln n! − ln(√(2πn)(n/e)ⁿ)` for `n = 1..=15`.
const STIRLERR_TABLE: [f64; 15] = [
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_29,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_09,
    0.016_644_691_189_821_19,
    0.013_876_128_823_070_75,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_1,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_87,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

/// Error term of Stirling's approximation to `ln n!`.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    if n <= 15 {
        return STIRLERR_TABLE[(n - 1) as usize];
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        (S0 - S1 / nn) / nf
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/m) + m − x`, evaluated by series when `x ≈ m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / m).ln() + m - x
}

/// `ln C(z,j) pʲ (1−p)^{z−j}`, with `0⁰ = 1`.
pub fn ln_binom_pmf(z: u64, j: u64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if j > z {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if j == z { 0.0 } else { f64::NEG_INFINITY };
    }
    let zf = z as f64;
    if j == 0 {
        return zf * (-p).ln_1p();
    }
    if j == z {
        return zf * p.ln();
    }
    let jf = j as f64;
    let lc = stirlerr(z) - stirlerr(j) - stirlerr(z - j) - bd0(jf, zf * p) - bd0(zf - jf, zf * q);
    let lf = 2.0 * LN_SQRT_2PI + jf.ln() + (-jf / zf).ln_1p();
    lc - 0.5 * lf
}

pub fn binom_pmf(z: u64, j: u64, p: f64) -> f64 {
    ln_binom_pmf(z, j, p).exp()
}

fn check_args(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QsvError::param(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln Σ_{j=lo}^{hi} pmf(z, j, p)`, anchored at the largest term.
fn ln_range_sum(z: u64, lo: u64, hi: u64, p: f64) -> f64 {
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let mode = (((z + 1) as f64) * p).floor().min(z as f64) as u64;
    let anchor = mode.clamp(lo, hi);
    let ln_anchor = ln_binom_pmf(z, anchor, p);
    if ln_anchor == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }

    let mut acc = KahanSum::default();
    acc.add(1.0);

    let walk = |indices: &mut dyn Iterator<Item = u64>, acc: &mut KahanSum| {
        let mut prev = 1.0;
        for j in indices {
            let t = (ln_binom_pmf(z, j, p) - ln_anchor).exp();
            acc.add(t);
            let ratio = if prev > 0.0 { t / prev } else { 0.0 };
            if t == 0.0 || (ratio < 1.0 && t * ratio / (1.0 - ratio) < TRUNCATION_REL * acc.value())
            {
                break;
            }
            prev = t;
        }
    };
    if anchor > lo {
        walk(&mut (lo..anchor).rev(), &mut acc);
    }
    if anchor < hi {
        walk(&mut (anchor + 1..=hi), &mut acc);
    }
    // A probability; rounding can push a near-total sum just above 1.
    (ln_anchor + acc.value().ln()).min(0.0)
}

/// `ln B_{z,k}(p)`, computed entirely in log space.
pub fn ln_binom_tail(z: u64, k: u64, p: f64) -> Result<f64> {
    check_args(p)?;
    if k >= z {
        return Ok(0.0);
    }
    Ok(ln_range_sum(z, 0, k, p))
}

/// `ln(1 − B_{z,k}(p))`, the log of the upper tail `P(X > k)`.
pub fn ln_binom_upper_tail(z: u64, k: u64, p: f64) -> Result<f64> {
    check_args(p)?;
    if k >= z {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_range_sum(z, k + 1, z, p))
}

/// `B_{z,k}(p)`: probability of at most `k` successes in `z` Bernoulli(`p`)
/// trials.
pub fn binom_tail(z: u64, k: u64, p: f64) -> Result<f64> {
    check_args(p)?;
    if k >= z {
        return Ok(1.0);
    }
    if z <= DIRECT_SUM_MAX_Z {
        let mut acc = KahanSum::default();
        for j in 0..=k {
            acc.add(binom_pmf(z, j, p));
        }
        return Ok(acc.value().min(1.0));
    }
    Ok(ln_range_sum(z, 0, k, p).exp().min(1.0))
}

/// `1 − B_{z,k}(p)` without cancellation.
pub fn binom_upper_tail(z: u64, k: u64, p: f64) -> Result<f64> {
    Ok(ln_binom_upper_tail(z, k, p)?.exp())
}

/// `J(N, k, δ)`: the unique `x ∈ [0, 1]` with `B_{N,k}(x) = δ`.
///
/// Bisects until the bracket cannot be split further in double precision
/// (or [`BISECTION_MAX_ITER`] halvings), since the slope of `B_{N,k}` near
/// the root can exceed 10³ for large `N`.
pub fn solve_j(n: u64, k: u64, delta: f64) -> Result<f64> {
    if n < k + 1 {
        return Err(QsvError::param(format!(
            "need N ≥ k + 1, got N = {n}, k = {k}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(QsvError::param(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if delta == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut b_lo, mut b_hi) = (1.0f64, 0.0f64);
    let mut converged = false;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        let b = binom_tail(n, k, mid)?;
        if b == delta {
            return Ok(mid);
        }
        if b > delta {
            lo = mid;
            b_lo = b;
        } else {
            hi = mid;
            b_hi = b;
        }
    }
    if !converged && hi - lo > BISECTION_X_TOL {
        return Err(QsvError::Numerical(format!(
            "bisection for J({n}, {k}, {delta}) did not converge: bracket [{lo}, {hi}]"
        )));
    }
    Ok(if (b_lo - delta).abs() <= (delta - b_hi).abs() {
        lo
    } else {
        hi
    })
}

/// Two-sided Clopper–Pearson interval for a binomial proportion with
/// `successes` out of `trials`, at confidence `1 − alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(QsvError::param(format!(
            "need 0 ≤ successes ≤ trials and trials > 0, got {successes}/{trials}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QsvError::param(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let lower = if successes == 0 {
        0.0
    } else {
        solve_j(trials, successes - 1, 1.0 - alpha / 2.0)?
    };
    let upper = if successes == trials {
        1.0
    } else {
        solve_j(trials, successes, alpha / 2.0)?
    };
    Ok((lower, upper))
}

/// `ln(eᵃ + eᵇ)`.
pub(crate) fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
