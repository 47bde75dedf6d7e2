//! Homogeneous verification strategies and the singlet Pauli strategy.
//!
//! A strategy is a probability distribution over two-outcome projective tests.
//! Its verification operator `Ω = Σ wᵢ Pᵢ` is homogeneous when
//! `Ω = |ψ⟩⟨ψ| + λ(I − |ψ⟩⟨ψ|)`, in which case the pass probability of any
//! state is an affine function of its fidelity with the target `|ψ⟩`.

use rand::Rng;
use tracing::warn;

use crate::error::{QsvError, Result};
use crate::linalg::{
    expectation, kron, pauli_x, pauli_y, pauli_z, projector, ComplexMatrix, DensityMatrix,
    PureState,
};

const WEIGHT_TOL: f64 = 1e-12;
const OMEGA_TOL: f64 = 1e-10;

/// One projective test: the state passes with probability `tr(P·σ)`.
#[derive(Clone, Debug)]
pub struct Test {
    pub label: String,
    pub projector: ComplexMatrix,
    pub weight: f64,
}

/// Outcome of one randomly chosen test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestResult {
    /// Index into [`HomogeneousStrategy::tests`].
    pub setting: usize,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct HomogeneousStrategy {
    tests: Vec<Test>,
    target: PureState,
    lambda: f64,
    nu: f64,
    omega: ComplexMatrix,
}

impl HomogeneousStrategy {
    /// Assembles a strategy and verifies that it is homogeneous with the
    /// stated `lambda`.
    ///
    /// `lambda` is taken as given (so that `1/3` stays the nearest double to
    /// one third) and cross-checked against the spectrum of `Ω`.
    pub fn new(tests: Vec<Test>, target: PureState, lambda: f64) -> Result<Self> {
        if tests.is_empty() {
            return Err(QsvError::InvalidStrategy("no tests".into()));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(QsvError::InvalidStrategy(format!(
                "lambda must lie in [0, 1), got {lambda}"
            )));
        }
        let total: f64 = tests.iter().map(|t| t.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL || tests.iter().any(|t| t.weight < 0.0) {
            return Err(QsvError::InvalidStrategy(format!(
                "test weights must be a probability vector (sum {total})"
            )));
        }
        let mut omega = ComplexMatrix::zeros(4)?;
        for t in &tests {
            if t.projector.dim() != 4 {
                return Err(QsvError::Dimension(format!(
                    "test `{}` is not a two-qubit operator",
                    t.label
                )));
            }
            let sq = t.projector * t.projector;
            if !t.projector.is_hermitian(OMEGA_TOL) || !sq.approx_eq(&t.projector, OMEGA_TOL) {
                return Err(QsvError::InvalidStrategy(format!(
                    "test `{}` is not an orthogonal projector",
                    t.label
                )));
            }
            omega = omega + t.projector.scale_real(t.weight);
        }

        let target_proj = *projector(&target).matrix();
        let ideal =
            target_proj.scale_real(1.0 - lambda) + ComplexMatrix::identity(4)?.scale_real(lambda);
        if !omega.approx_eq(&ideal, OMEGA_TOL) {
            return Err(QsvError::InvalidStrategy(format!(
                "Ω is not |ψ⟩⟨ψ| + {lambda}(I − |ψ⟩⟨ψ|)"
            )));
        }
        let image = omega.apply(target.amplitudes())?;
        if image
            .iter()
            .zip(target.amplitudes())
            .any(|(a, b)| (a - b).norm() > OMEGA_TOL)
        {
            return Err(QsvError::InvalidStrategy(
                "target does not pass every test with certainty".into(),
            ));
        }
        let spectrum = omega.hermitian_eigenvalues();
        let expected = [lambda, lambda, lambda, 1.0];
        if spectrum
            .iter()
            .zip(expected)
            .any(|(a, b)| (a - b).abs() > OMEGA_TOL)
        {
            return Err(QsvError::InvalidStrategy(format!(
                "spectrum {spectrum:?} does not match lambda = {lambda}"
            )));
        }

        Ok(Self {
            tests,
            target,
            lambda,
            nu: 1.0 - lambda,
            omega,
        })
    }

    /// Homogeneous strategy for an arbitrary target with a chosen `lambda`:
    /// the trivial test (always passes) with weight `lambda` and the
    /// projector onto the target with weight `1 − lambda`.
    pub fn with_lambda(target: PureState, lambda: f64) -> Result<Self> {
        let tests = vec![
            Test {
                label: "I".into(),
                projector: ComplexMatrix::identity(4)?,
                weight: lambda,
            },
            Test {
                label: "target".into(),
                projector: *projector(&target).matrix(),
                weight: 1.0 - lambda,
            },
        ];
        Self::new(tests, target, lambda)
    }

    pub fn tests(&self) -> &[Test] {
        &self.tests
    }

    pub fn target(&self) -> &PureState {
        &self.target
    }

    /// Second-largest eigenvalue of `Ω`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Spectral gap `1 − λ`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn omega(&self) -> &ComplexMatrix {
        &self.omega
    }

    pub fn label(&self, setting: usize) -> &str {
        &self.tests[setting].label
    }

    /// `tr(Ω·s)`, clamped into `[0, 1]`.
    pub fn pass_probability(&self, s: &DensityMatrix) -> f64 {
        let p = expectation(&self.omega, s).expect("Ω is Hermitian and 4×4");
        clamp_probability(p, "pass probability")
    }

    /// Pass probability of each individual test, in test order.
    pub fn setting_pass_probabilities(&self, s: &DensityMatrix) -> Vec<f64> {
        self.tests
            .iter()
            .map(|t| {
                let p = expectation(&t.projector, s).expect("test projectors are Hermitian");
                clamp_probability(p, "test pass probability")
            })
            .collect()
    }

    /// Chooses a setting according to the test weights, then samples the
    /// pass/fail outcome for that setting.
    pub fn sample_test<R: Rng + ?Sized>(&self, s: &DensityMatrix, rng: &mut R) -> TestResult {
        let setting = self.sample_setting(rng);
        let p = expectation(&self.tests[setting].projector, s).expect("projectors are Hermitian");
        let p = clamp_probability(p, "test pass probability");
        TestResult {
            setting,
            passed: rng.random::<f64>() < p,
        }
    }

    pub fn sample_setting<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, t) in self.tests.iter().enumerate() {
            acc += t.weight;
            if u < acc {
                return i;
            }
        }
        self.tests.len() - 1
    }
}

/// The singlet strategy: `XX`, `YY` and `ZZ` each with weight 1/3, passing
/// on outcome −1. Each test projector is `(I − W⊗W)/2`.
pub fn build_singlet_strategy() -> HomogeneousStrategy {
    let id = ComplexMatrix::identity(4).unwrap();
    let tests = [("XX", pauli_x()), ("YY", pauli_y()), ("ZZ", pauli_z())]
        .into_iter()
        .map(|(label, w)| {
            let ww = kron(&w, &w).unwrap();
            Test {
                label: label.into(),
                projector: (id - ww).scale_real(0.5),
                weight: 1.0 / 3.0,
            }
        })
        .collect();
    HomogeneousStrategy::new(tests, PureState::singlet(), 1.0 / 3.0)
        .expect("the singlet Pauli strategy is homogeneous")
}

/// Inverts `rate = λ + (1 − λ)F`. The result is not clamped: rates below
/// `λ` give negative values.
pub fn fidelity_from_pass_rate(rate: f64, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(QsvError::param(format!(
            "lambda must lie in [0, 1), got {lambda}"
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(QsvError::param(format!(
            "pass rate must lie in [0, 1], got {rate}"
        )));
    }
    Ok((rate - lambda) / (1.0 - lambda))
}

fn clamp_probability(p: f64, what: &str) -> f64 {
    if !(-1e-10..=1.0 + 1e-10).contains(&p) {
        warn!(value = p, "{what} outside [0, 1]; clamping");
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singlet_strategy_parameters() {
        let s = build_singlet_strategy();
        assert_eq!(s.lambda(), 1.0 / 3.0);
        assert_eq!(s.nu(), 1.0 - s.lambda());
        assert_eq!(s.tests().len(), 3);
        let psi = projector(&PureState::singlet());
        assert!((s.pass_probability(&psi) - 1.0).abs() < 1e-14);
        // tr Ω = 1 + 3λ = 2, so tr(Ω·I/4) = 1/2.
        assert!((s.omega().trace().re - 2.0).abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed();
        assert!((s.pass_probability(&mixed) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn werner_pass_probability() {
        let s = build_singlet_strategy();
        let w = DensityMatrix::werner(0.98).unwrap();
        let expected = 1.0 / 3.0 + (2.0 / 3.0) * 0.98;
        assert!((s.pass_probability(&w) - expected).abs() < 1e-12);
        assert!((s.pass_probability(&w) - 0.98667).abs() < 1e-5);
    }

    #[test]
    fn test_projectors_have_rank_two() {
        let s = build_singlet_strategy();
        for t in s.tests() {
            let ev = t.projector.hermitian_eigenvalues();
            let rank = ev.iter().filter(|&&e| e > 0.5).count();
            let tr = t.projector.trace().re;
            assert!((tr - rank as f64).abs() < 1e-12, "{}: {ev:?}", t.label);
            assert_eq!(rank, 2);
        }
    }

    #[test]
    fn fidelity_from_pass_rate_examples() {
        let l = 1.0 / 3.0;
        assert!((fidelity_from_pass_rate(1.0, l).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity_from_pass_rate(l, l).unwrap().abs() < 1e-15);
        assert!((fidelity_from_pass_rate(7.0 / 9.0, l).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(fidelity_from_pass_rate(0.1, l).unwrap() < 0.0);
        assert!(fidelity_from_pass_rate(0.5, 1.0).is_err());
    }

    #[test]
    fn sample_test_on_target_always_passes() {
        let s = build_singlet_strategy();
        let psi = projector(&PureState::singlet());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| s.sample_test(&psi, &mut rng).passed));
    }

    #[test]
    fn sample_test_fails_on_states_outside_a_setting_eigenspace() {
        // (X⊗X)(Y⊗Y) = −Z⊗Z, so no state fails all three tests. Φ+ is +1 for
        // XX and ZZ and −1 for YY: it fails exactly when XX or ZZ is drawn.
        let s = build_singlet_strategy();
        let phi_plus = PureState::normalized([
            num_complex::Complex64::new(1.0, 0.0),
            0.0.into(),
            0.0.into(),
            num_complex::Complex64::new(1.0, 0.0),
        ])
        .unwrap();
        let probs = s.setting_pass_probabilities(&projector(&phi_plus));
        // Φ+ is +1 for XX and ZZ (fails), −1 for YY (passes).
        assert!(probs[0].abs() < 1e-12 && (probs[1] - 1.0).abs() < 1e-12 && probs[2].abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = s.sample_test(&projector(&phi_plus), &mut rng);
            assert_eq!(r.passed, s.label(r.setting) == "YY");
        }
    }

    #[test]
    fn sample_test_matches_pass_probability_on_mixed_state() {
        let s = build_singlet_strategy();
        let mixed = DensityMatrix::maximally_mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let passes = (0..n)
            .filter(|_| s.sample_test(&mixed, &mut rng).passed)
            .count();
        let sd = (n as f64 * 0.25).sqrt();
        assert!(((passes as f64) - 0.5 * n as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn general_lambda_strategies() {
        for lambda in [0.0, 0.1, 0.5, 0.9] {
            let s = HomogeneousStrategy::with_lambda(PureState::singlet(), lambda).unwrap();
            assert_eq!(s.lambda(), lambda);
            let mixed = DensityMatrix::maximally_mixed();
            let expected = lambda + (1.0 - lambda) * 0.25;
            assert!((s.pass_probability(&mixed) - expected).abs() < 1e-12);
        }
        assert!(HomogeneousStrategy::with_lambda(PureState::singlet(), 1.0).is_err());
    }

    #[test]
    fn rejects_wrong_lambda() {
        let s = build_singlet_strategy();
        let err = HomogeneousStrategy::new(s.tests().to_vec(), PureState::singlet(), 0.3);
        assert!(matches!(err, Err(QsvError::InvalidStrategy(_))));
    }

    #[test]
    fn rejects_bad_weights() {
        let s = build_singlet_strategy();
        let mut tests = s.tests().to_vec();
        tests[0].weight = 0.5;
        assert!(HomogeneousStrategy::new(tests, PureState::singlet(), 1.0 / 3.0).is_err());
    }
}
