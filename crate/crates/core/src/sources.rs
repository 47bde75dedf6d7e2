//! Sources as weighted mixtures of product sequences.
//!
//! A source of `N + 1` two-qubit systems is represented by
//! `Σ_b w_b · σ_{b,1} ⊗ … ⊗ σ_{b,N+1}`. This covers honest IID sources, the
//! classically correlated attack that is either all-singlet or all-noise,
//! and the attack that hides one phase-flipped copy at a uniformly random
//! position. Globally entangled sources are not representable.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsvError, Result};
use crate::linalg::{projector, werner_visibility, DensityMatrix, PureState};
use crate::strategy::HomogeneousStrategy;

const WEIGHT_TOL: f64 = 1e-12;

/// Per-copy preparation noise: each intended singlet-like copy is
/// depolarised to the given fidelity with its own ideal state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub fidelity: f64,
}

impl NoiseSpec {
    pub const IDEAL: NoiseSpec = NoiseSpec { fidelity: 1.0 };

    pub fn new(fidelity: f64) -> Result<Self> {
        let n = Self { fidelity };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.25..=1.0).contains(&self.fidelity) {
            return Err(QsvError::param(format!(
                "preparation fidelity must lie in [1/4, 1] for a positive Werner state, got {}",
                self.fidelity
            )));
        }
        Ok(())
    }

    /// Werner visibility `v = (4F − 1)/3`.
    pub fn visibility(&self) -> f64 {
        werner_visibility(self.fidelity)
    }

    /// `v·|ψ⟩⟨ψ| + (1 − v)·I/4` for the given ideal state.
    pub fn apply(&self, ideal: &PureState) -> Result<DensityMatrix> {
        self.validate()?;
        DensityMatrix::depolarized(ideal, self.visibility())
    }
}

/// Declarative single-system state, as written in config files:
/// `singlet`, `singlet_phi(φ)`, `mixed` or `werner(F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StateSpec {
    Singlet,
    SingletPhi(f64),
    Mixed,
    Werner(f64),
}

impl StateSpec {
    pub fn to_density(&self) -> Result<DensityMatrix> {
        match *self {
            StateSpec::Singlet => Ok(projector(&PureState::singlet())),
            StateSpec::SingletPhi(phi) => Ok(projector(&PureState::singlet_phase(phi))),
            StateSpec::Mixed => Ok(DensityMatrix::maximally_mixed()),
            StateSpec::Werner(f) => DensityMatrix::werner(f),
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Singlet => write!(f, "singlet"),
            StateSpec::SingletPhi(phi) => write!(f, "singlet_phi({phi})"),
            StateSpec::Mixed => write!(f, "mixed"),
            StateSpec::Werner(x) => write!(f, "werner({x})"),
        }
    }
}

impl FromStr for StateSpec {
    type Err = QsvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |name: &str| -> Option<Result<f64>> {
            let rest = s.strip_prefix(name)?.trim();
            let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| QsvError::param(format!("bad number in `{s}`: {e}"))),
            )
        };
        match s {
            "singlet" => return Ok(StateSpec::Singlet),
            "mixed" => return Ok(StateSpec::Mixed),
            _ => {}
        }
        if let Some(phi) = arg("singlet_phi") {
            return Ok(StateSpec::SingletPhi(phi?));
        }
        if let Some(f) = arg("werner") {
            let f = f?;
            if !(0.25..=1.0).contains(&f) {
                return Err(QsvError::param(format!(
                    "werner fidelity must lie in [1/4, 1], got {f}"
                )));
            }
            return Ok(StateSpec::Werner(f));
        }
        Err(QsvError::param(format!(
            "unknown state `{s}` (expected singlet, singlet_phi(φ), mixed or werner(F))"
        )))
    }
}

impl From<StateSpec> for String {
    fn from(s: StateSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for StateSpec {
    type Error = QsvError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// An ordered tensor product of single-system states.
///
/// States are stored once in a palette and referenced by index, so long
/// sequences with few distinct factors stay small.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSequence {
    palette: Vec<DensityMatrix>,
    layout: Vec<u16>,
    pub label: String,
}

impl ProductSequence {
    /// `len` copies of `fill`, with `overrides` replacing individual positions.
    pub fn with_overrides(
        len: usize,
        fill: DensityMatrix,
        overrides: &[(usize, DensityMatrix)],
        label: impl Into<String>,
    ) -> Result<Self> {
        if len < 2 {
            return Err(QsvError::param(format!(
                "a sequence needs at least 2 systems, got {len}"
            )));
        }
        let mut seq = Self {
            palette: vec![fill],
            layout: vec![0; len],
            label: label.into(),
        };
        for &(pos, state) in overrides {
            if pos >= len {
                return Err(QsvError::param(format!(
                    "override position {pos} outside a sequence of length {len}"
                )));
            }
            let idx = seq.palette_index(state)?;
            seq.layout[pos] = idx;
        }
        Ok(seq)
    }

    pub fn uniform(len: usize, state: DensityMatrix, label: impl Into<String>) -> Result<Self> {
        Self::with_overrides(len, state, &[], label)
    }

    pub fn from_states(states: &[DensityMatrix], label: impl Into<String>) -> Result<Self> {
        let first = *states
            .first()
            .ok_or_else(|| QsvError::param("empty sequence"))?;
        let overrides: Vec<_> = states.iter().copied().enumerate().skip(1).collect();
        Self::with_overrides(states.len(), first, &overrides, label)
    }

    fn palette_index(&mut self, state: DensityMatrix) -> Result<u16> {
        if let Some(i) = self.palette.iter().position(|s| *s == state) {
            return Ok(i as u16);
        }
        if self.palette.len() >= u16::MAX as usize {
            return Err(QsvError::param("too many distinct states in one sequence"));
        }
        self.palette.push(state);
        Ok((self.palette.len() - 1) as u16)
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn state(&self, i: usize) -> &DensityMatrix {
        &self.palette[self.layout[i] as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DensityMatrix> + '_ {
        self.layout.iter().map(|&i| &self.palette[i as usize])
    }

    /// Distinct states referenced by this sequence.
    pub fn palette(&self) -> &[DensityMatrix] {
        &self.palette
    }

    /// Palette index of each position.
    pub fn layout(&self) -> &[u16] {
        &self.layout
    }

    /// The same sequence with positions reordered: output position `i`
    /// holds input position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            palette: self.palette.clone(),
            layout: perm.iter().map(|&p| self.layout[p]).collect(),
            label: self.label.clone(),
        }
    }
}

/// A weighted mixture of equal-length product sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSequenceMixture {
    branches: Vec<(f64, ProductSequence)>,
    num_systems: usize,
}

impl ProductSequenceMixture {
    pub fn new(branches: Vec<(f64, ProductSequence)>) -> Result<Self> {
        let num_systems = branches
            .first()
            .map(|(_, s)| s.len())
            .ok_or_else(|| QsvError::param("a mixture needs at least one branch"))?;
        if branches.iter().any(|(_, s)| s.len() != num_systems) {
            return Err(QsvError::param("all branches must have the same length"));
        }
        if branches.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(QsvError::param("branch weights must be non-negative"));
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(QsvError::param(format!(
                "branch weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            branches,
            num_systems,
        })
    }

    pub fn branches(&self) -> &[(f64, ProductSequence)] {
        &self.branches
    }

    /// Number of systems `N + 1` in every branch.
    pub fn num_systems(&self) -> usize {
        self.num_systems
    }

    /// Unconditional reduced state of system `i`.
    pub fn marginal(&self, i: usize) -> Result<DensityMatrix> {
        let parts: Vec<_> = self
            .branches
            .iter()
            .map(|(w, s)| (*w, *s.state(i)))
            .collect();
        DensityMatrix::mixture(&parts)
    }

    /// Fidelity of the unconditional reduced state, averaged over systems.
    pub fn mean_marginal_fidelity(&self, target: &PureState) -> f64 {
        let per_branch = self.branches.iter().map(|(w, s)| {
            w * s.iter().map(|d| d.fidelity_with(target)).sum::<f64>() / s.len() as f64
        });
        per_branch.sum()
    }

    /// Draws a branch with probability equal to its weight.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, &ProductSequence) {
        if self.branches.len() == 1 {
            return (0, &self.branches[0].1);
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, (w, s)) in self.branches.iter().enumerate() {
            acc += w;
            if u < acc {
                return (i, s);
            }
        }
        let last = self.branches.len() - 1;
        (last, &self.branches[last].1)
    }
}

/// `n_plus_1` independent copies of the noisy singlet.
pub fn honest_iid(n_plus_1: usize, noise: NoiseSpec) -> Result<ProductSequenceMixture> {
    let state = noise.apply(&PureState::singlet())?;
    let seq = ProductSequence::uniform(n_plus_1, state, "honest")?;
    ProductSequenceMixture::new(vec![(1.0, seq)])
}

/// `N + 1` noisy singlets with probability 2/3, otherwise `N + 1` maximally
/// mixed states.
pub fn rho1(n: usize, prep: NoiseSpec) -> Result<ProductSequenceMixture> {
    if n < 1 {
        return Err(QsvError::param("rho1 needs N ≥ 1"));
    }
    let singlet = prep.apply(&PureState::singlet())?;
    let good = ProductSequence::uniform(n + 1, singlet, "singlet")?;
    let bad = ProductSequence::uniform(n + 1, DensityMatrix::maximally_mixed(), "mixed")?;
    ProductSequenceMixture::new(vec![(2.0 / 3.0, good), (1.0 / 3.0, bad)])
}

/// `N` noisy singlets and one noisy `|Ψ(φ)⟩`, the odd copy placed at each of
/// the `N + 1` positions with equal probability. Branch `l` has the odd copy
/// at position `l`.
pub fn rho2(n: usize, phi: f64, prep: NoiseSpec) -> Result<ProductSequenceMixture> {
    if n < 1 {
        return Err(QsvError::param("rho2 needs N ≥ 1"));
    }
    let singlet = prep.apply(&PureState::singlet())?;
    let odd = prep.apply(&PureState::singlet_phase(phi))?;
    let w = 1.0 / (n + 1) as f64;
    let branches = (0..=n)
        .map(|l| {
            ProductSequence::with_overrides(n + 1, singlet, &[(l, odd)], format!("odd@{l}"))
                .map(|s| (w, s))
        })
        .collect::<Result<Vec<_>>>()?;
    ProductSequenceMixture::new(branches)
}

/// A state with the given infidelity that passes `strat` with the largest
/// possible probability `1 − ν·ε`: the infidelity sits entirely in the
/// `λ`-eigenspace of `Ω`.
pub fn worst_case_state(infidelity: f64, strat: &HomogeneousStrategy) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&infidelity) {
        return Err(QsvError::param(format!(
            "infidelity must lie in [0, 1], got {infidelity}"
        )));
    }
    let target = projector(strat.target());
    let perp = projector(&strat.target().orthogonal_complement_vector());
    DensityMatrix::mixture(&[(1.0 - infidelity, target), (infidelity, perp)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::build_singlet_strategy;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn singlet() -> PureState {
        PureState::singlet()
    }

    #[test]
    fn honest_iid_examples() {
        let m = honest_iid(5, NoiseSpec::IDEAL).unwrap();
        assert_eq!(m.branches().len(), 1);
        for s in m.branches()[0].1.iter() {
            assert!(s.matrix().approx_eq(projector(&singlet()).matrix(), 1e-14));
        }
        let m = honest_iid(3, NoiseSpec::new(0.25).unwrap()).unwrap();
        assert!(m.branches()[0]
            .1
            .state(0)
            .matrix()
            .approx_eq(DensityMatrix::maximally_mixed().matrix(), 1e-14));

        let strat = build_singlet_strategy();
        let m = honest_iid(3, NoiseSpec::new(0.98).unwrap()).unwrap();
        let p = strat.pass_probability(m.branches()[0].1.state(2));
        assert!((p - 0.98667).abs() < 1e-5);
        assert!((p - (1.0 / 3.0 + 2.0 / 3.0 * 0.98)).abs() < 1e-12);

        assert!(NoiseSpec::new(0.2).is_err());
        assert!(honest_iid(1, NoiseSpec::IDEAL).is_err());
    }

    #[test]
    fn rho1_marginal_fidelity() {
        let m = rho1(4, NoiseSpec::IDEAL).unwrap();
        let w: Vec<f64> = m.branches().iter().map(|(w, _)| *w).collect();
        assert_eq!(w, vec![2.0 / 3.0, 1.0 / 3.0]);
        let f = m.marginal(0).unwrap().fidelity_with(&singlet());
        assert!((f - 0.75).abs() < 1e-12);
        let m = rho1(4, NoiseSpec::new(0.98).unwrap()).unwrap();
        let f = m.marginal(3).unwrap().fidelity_with(&singlet());
        assert!((f - (2.0 / 3.0 * 0.98 + 1.0 / 12.0)).abs() < 1e-12);
        assert!((f - 0.7367).abs() < 1e-4);
    }

    #[test]
    fn rho2_examples() {
        let honest = honest_iid(6, NoiseSpec::IDEAL).unwrap();
        let m = rho2(5, 0.0, NoiseSpec::IDEAL).unwrap();
        assert_eq!(m.branches().len(), 6);
        for (_, s) in m.branches() {
            for (a, b) in s.iter().zip(honest.branches()[0].1.iter()) {
                assert!(a.matrix().approx_eq(b.matrix(), 1e-14));
            }
        }

        let flipped = PureState::singlet_phase(PI);
        assert!(singlet().inner(&flipped).norm() < 1e-15);
        let n = 5;
        let m = rho2(n, PI, NoiseSpec::IDEAL).unwrap();
        let f = m.marginal(2).unwrap().fidelity_with(&singlet());
        assert!((f - n as f64 / (n + 1) as f64).abs() < 1e-12);
        assert!((m.mean_marginal_fidelity(&singlet()) - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn rho2_is_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = rho2(6, 1.1, NoiseSpec::new(0.9).unwrap()).unwrap();
        let key = |s: &ProductSequence| -> Vec<u16> {
            // The odd copy is the only non-palette-0 entry.
            s.iter()
                .map(|d| u16::from(*d != *s.palette().first().unwrap()))
                .collect()
        };
        let mut original: Vec<Vec<u16>> = m.branches().iter().map(|(_, s)| key(s)).collect();
        original.sort();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..7).collect();
            perm.shuffle(&mut rng);
            let mut permuted: Vec<Vec<u16>> = m
                .branches()
                .iter()
                .map(|(_, s)| key(&s.permuted(&perm)))
                .collect();
            permuted.sort();
            assert_eq!(original, permuted);
        }
        let w0 = m.branches()[0].0;
        assert!(m.branches().iter().all(|(w, _)| (w - w0).abs() < 1e-15));
    }

    #[test]
    fn ideal_singlet_branches_pass_with_certainty() {
        let strat = build_singlet_strategy();
        let sources = [
            rho1(5, NoiseSpec::IDEAL).unwrap().branches()[0].1.clone(),
            rho2(5, 0.0, NoiseSpec::IDEAL).unwrap().branches()[3]
                .1
                .clone(),
            honest_iid(6, NoiseSpec::IDEAL).unwrap().branches()[0]
                .1
                .clone(),
        ];
        for s in &sources {
            for d in s.iter() {
                assert!((strat.pass_probability(d) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = honest_iid(3, NoiseSpec::IDEAL).unwrap();
        assert!((0..100).all(|_| m.sample_sequence(&mut rng).0 == 0));

        let draws = 100_000;
        let m = rho1(3, NoiseSpec::IDEAL).unwrap();
        let first = (0..draws)
            .filter(|_| m.sample_sequence(&mut rng).0 == 0)
            .count();
        let sd = (draws as f64 * 2.0 / 9.0).sqrt();
        assert!((first as f64 - draws as f64 * 2.0 / 3.0).abs() < 4.0 * sd);

        let m = rho2(5, PI, NoiseSpec::IDEAL).unwrap();
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[m.sample_sequence(&mut rng).0] += 1;
        }
        let sd = (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - draws as f64 / 6.0).abs() < 4.0 * sd,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn mixture_validation() {
        let s = ProductSequence::uniform(3, DensityMatrix::maximally_mixed(), "x").unwrap();
        let t = ProductSequence::uniform(4, DensityMatrix::maximally_mixed(), "y").unwrap();
        assert!(ProductSequenceMixture::new(vec![(0.5, s.clone()), (0.5, t)]).is_err());
        assert!(ProductSequenceMixture::new(vec![(0.6, s.clone()), (0.5, s.clone())]).is_err());
        assert!(ProductSequenceMixture::new(vec![]).is_err());
        assert!(ProductSequence::uniform(1, DensityMatrix::maximally_mixed(), "z").is_err());
    }

    #[test]
    fn state_spec_round_trip() {
        for s in [
            "singlet",
            "mixed",
            "werner(0.98)",
            "singlet_phi(3.141592653589793)",
        ] {
            let spec: StateSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            spec.to_density().unwrap();
        }
        assert!("werner(0.1)".parse::<StateSpec>().is_err());
        assert!("bell".parse::<StateSpec>().is_err());
        assert!("werner(x)".parse::<StateSpec>().is_err());
    }

    #[test]
    fn worst_case_state_saturates_pass_bound() {
        let strat = build_singlet_strategy();
        for eps in [0.0, 0.01, 0.3, 1.0] {
            let s = worst_case_state(eps, &strat).unwrap();
            assert!((s.fidelity_with(&singlet()) - (1.0 - eps)).abs() < 1e-12);
            let p = strat.pass_probability(&s);
            assert!((p - (1.0 - strat.nu() * eps)).abs() < 1e-12);
        }
    }
}
