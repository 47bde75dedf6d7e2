//! Acceptance probability and fidelity numerator by direct enumeration.

#![allow(dead_code)]

use qsv::linalg::{expectation, DensityMatrix};
use qsv::sources::ProductSequenceMixture;
use qsv::strategy::HomogeneousStrategy;

/// `p_k` and `f_k` straight from the definition: average over the leftover,
/// sum over every failure pattern of the tested systems, with each factor
/// traced against `Ω` or `I − Ω` directly.
pub fn brute_force(m: &ProductSequenceMixture, k: u64, strat: &HomogeneousStrategy) -> (f64, f64) {
    let systems = m.num_systems();
    let mut p = 0.0;
    let mut f = 0.0;
    for (w, seq) in m.branches() {
        for left in 0..systems {
            let tested: Vec<&DensityMatrix> = (0..systems)
                .filter(|i| *i != left)
                .map(|i| seq.state(i))
                .collect();
            let pass: Vec<f64> = tested
                .iter()
                .map(|s| expectation(strat.omega(), s).unwrap())
                .collect();
            let mut acc = 0.0;
            for mask in 0u32..(1 << tested.len()) {
                if u64::from(mask.count_ones()) > k {
                    continue;
                }
                acc += pass
                    .iter()
                    .enumerate()
                    .map(|(i, &q)| if mask >> i & 1 == 1 { 1.0 - q } else { q })
                    .product::<f64>();
            }
            let fid = seq.state(left).fidelity_with(strat.target());
            p += w * acc / systems as f64;
            f += w * acc * fid / systems as f64;
        }
    }
    (p, f)
}
