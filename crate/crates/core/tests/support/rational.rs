//! Exact rational evaluation of the defensive certificate, used as an
//! independent reference for the floating-point implementation.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

pub fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

fn choose(n: u64, k: u64) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    let mut r = BigRational::one();
    for _ in 0..e {
        r *= x;
    }
    r
}

/// `P[X ≤ k]` for `X ~ Binomial(z, p)`.
pub fn binom_tail(z: u64, k: u64, p: &BigRational) -> BigRational {
    let q = BigRational::one() - p;
    (0..=k.min(z))
        .map(|j| BigRational::from_integer(choose(z, j)) * pow(p, j) * pow(&q, z - j))
        .fold(BigRational::zero(), |a, b| a + b)
}

#[derive(Clone, Debug)]
pub struct ExactDqsv {
    pub h: Vec<BigRational>,
    pub g: Vec<BigRational>,
    /// `None` in the degenerate case `δ ≤ B_{N,k}(ν)`.
    pub zhat: Option<u64>,
    pub kappa: BigRational,
    pub zeta_tilde: BigRational,
    pub fidelity: BigRational,
}

/// Straight evaluation of `h`, `g`, `ẑ`, `κ`, `ζ̃` and `ζ̃/δ`.
pub fn dqsv(n: u64, k: u64, delta: &BigRational, lambda: &BigRational) -> ExactDqsv {
    let nu = BigRational::one() - lambda;
    let np1 = BigRational::from_integer(BigInt::from(n + 1));
    let b: Vec<BigRational> = (0..=n + 1).map(|z| binom_tail(z, k, &nu)).collect();
    let mut h = Vec::new();
    let mut g = Vec::new();
    for z in 0..=n + 1 {
        let here = BigRational::from_integer(BigInt::from(n + 1 - z));
        if z <= k {
            h.push(BigRational::one());
            g.push(here / &np1);
        } else {
            let prev = BigRational::from_integer(BigInt::from(z));
            let bz = &b[z as usize];
            h.push((&here * bz + prev * &b[z as usize - 1]) / &np1);
            g.push(here * bz / &np1);
        }
    }
    if *delta <= h[n as usize + 1] {
        return ExactDqsv {
            h,
            g,
            zhat: None,
            kappa: BigRational::zero(),
            zeta_tilde: BigRational::zero(),
            fidelity: BigRational::zero(),
        };
    }
    let zhat = (k..=n)
        .filter(|&z| h[z as usize] >= *delta)
        .max()
        .expect("h_k = 1");
    let (hi, lo) = (&h[zhat as usize], &h[zhat as usize + 1]);
    let kappa = (delta - lo) / (hi - lo);
    let zeta_tilde =
        (BigRational::one() - &kappa) * &g[zhat as usize + 1] + &kappa * &g[zhat as usize];
    let fidelity = &zeta_tilde / delta;
    ExactDqsv {
        h,
        g,
        zhat: Some(zhat),
        kappa,
        zeta_tilde,
        fidelity,
    }
}
