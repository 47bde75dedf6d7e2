//! Small dense complex linear algebra for one- and two-qubit operators.
//!
//! Everything here is specialised to dimension 2 (one qubit) and 4 (two
//! qubits). Two-qubit operators use the computational basis in the order
//! `|00⟩, |01⟩, |10⟩, |11⟩`, with the first tensor factor as the most
//! significant bit. Entries are stored row-major: entry `(i, j)` lives at
//! `i * dim + j`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QsvError, Result};

/// Default per-entry tolerance for [`ComplexMatrix::approx_eq`].
pub const ENTRY_TOL: f64 = 1e-12;
/// Tolerance for the Hermitian, trace and positivity checks on density matrices.
pub const STATE_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A dense 2×2 or 4×4 complex matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: [Complex64; 16],
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            entries: [ZERO; 16],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.set(i, i, ONE);
        }
        Ok(m)
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be 4 or 16.
    pub fn from_row_major(entries: &[Complex64]) -> Result<Self> {
        let dim = match entries.len() {
            4 => 2,
            16 => 4,
            n => {
                return Err(QsvError::Dimension(format!(
                    "expected 4 or 16 entries, got {n}"
                )))
            }
        };
        let mut m = Self::zeros(dim)?;
        m.entries[..entries.len()].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(diag.len())?;
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, Complex64::new(d, 0.0));
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.entries[i * self.dim + j] = v;
    }

    /// Row-major view of the live entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.entries[..self.dim * self.dim]
    }

    pub fn scale(&self, a: Complex64) -> Self {
        let mut out = *self;
        for e in out.entries.iter_mut() {
            *e *= a;
        }
        out
    }

    pub fn scale_real(&self, a: f64) -> Self {
        self.scale(Complex64::new(a, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, self.get(j, i).conj());
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.same_dim(rhs)?;
        let d = self.dim;
        let mut out = Self::zeros(d)?;
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for l in 0..d {
                    acc += self.get(i, l) * rhs.get(l, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(QsvError::Dimension(format!(
                "vector of length {} against {}×{} matrix",
                v.len(),
                self.dim,
                self.dim
            )));
        }
        Ok((0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    /// `tr(self · rhs)` without forming the product.
    pub fn trace_product(&self, rhs: &Self) -> Result<Complex64> {
        self.same_dim(rhs)?;
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            for l in 0..d {
                acc += self.get(i, l) * rhs.get(l, i);
            }
        }
        Ok(acc)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self
                .as_slice()
                .iter()
                .zip(other.as_slice())
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.approx_eq(&self.adjoint(), tol)
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    ///
    /// The Hermitian part `(M + M†)/2` is diagonalised; callers check
    /// Hermiticity separately when it matters.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(self)
    }

    fn same_dim(&self, rhs: &Self) -> Result<()> {
        if self.dim != rhs.dim {
            return Err(QsvError::Dimension(format!(
                "{}×{} against {}×{}",
                self.dim, self.dim, rhs.dim, rhs.dim
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}×{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self.get(i, j);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix add");
        for (a, b) in self.entries.iter_mut().zip(rhs.entries.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(mut self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix sub");
        for (a, b) in self.entries.iter_mut().zip(rhs.entries.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> Self {
        self.matmul(&rhs).expect("dimension mismatch in matrix mul")
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(QsvError::Dimension(format!(
            "only dimensions 2 and 4 are supported, got {dim}"
        )))
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_major(&[ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    let i = Complex64::i();
    ComplexMatrix::from_row_major(&[ZERO, -i, i, ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diagonal(&[1.0, -1.0]).unwrap()
}

/// Kronecker product of two single-qubit operators.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(QsvError::Dimension(format!(
            "kron expects two 2×2 operands, got {}×{} and {}×{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    let mut out = ComplexMatrix::zeros(4)?;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out.set(2 * i + k, 2 * j + l, a.get(i, j) * b.get(k, l));
                }
            }
        }
    }
    Ok(out)
}

/// A normalised two-qubit state vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState {
    amps: [Complex64; 4],
}

impl PureState {
    /// Rejects vectors whose norm differs from one by more than [`STATE_TOL`].
    pub fn new(amps: [Complex64; 4]) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(QsvError::InvalidState(format!(
                "pure state has norm {norm}, expected 1"
            )));
        }
        Ok(Self { amps })
    }

    /// Normalises an arbitrary nonzero vector.
    pub fn normalized(amps: [Complex64; 4]) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(QsvError::InvalidState("zero vector".into()));
        }
        Ok(Self {
            amps: amps.map(|a| a / norm),
        })
    }

    /// Computational basis state `|index⟩` with `index` in `0..4`.
    pub fn basis(index: usize) -> Self {
        let mut amps = [ZERO; 4];
        amps[index] = ONE;
        Self { amps }
    }

    /// The singlet `(|01⟩ − |10⟩)/√2`.
    pub fn singlet() -> Self {
        Self::singlet_phase(0.0)
    }

    /// `(|01⟩ − e^{iφ}|10⟩)/√2`; `singlet_phase(0)` is the singlet.
    pub fn singlet_phase(phi: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amps: [
                ZERO,
                Complex64::new(s, 0.0),
                -Complex64::from_polar(s, phi),
                ZERO,
            ],
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `⟨self|m|self⟩`.
    pub fn sandwich(&self, m: &ComplexMatrix) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                acc += self.amps[i].conj() * m.get(i, j) * self.amps[j];
            }
        }
        acc
    }

    /// A unit vector orthogonal to `self`, from Gram–Schmidt on the basis.
    pub fn orthogonal_complement_vector(&self) -> PureState {
        let mut best: Option<([Complex64; 4], f64)> = None;
        for b in 0..4 {
            let e = PureState::basis(b);
            let overlap = self.inner(&e);
            let mut v = e.amps;
            for (vi, si) in v.iter_mut().zip(self.amps.iter()) {
                *vi -= overlap * si;
            }
            let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>();
            if best.as_ref().is_none_or(|(_, bn)| n > *bn) {
                best = Some((v, n));
            }
        }
        let (v, _) = best.unwrap();
        PureState::normalized(v).expect("some basis vector has a nonzero residual")
    }
}

/// A two-qubit density operator: Hermitian, unit trace and positive
/// semidefinite, each up to [`STATE_TOL`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if mat.dim() != 4 {
            return Err(QsvError::Dimension(format!(
                "density matrices are 4×4, got {}×{}",
                mat.dim(),
                mat.dim()
            )));
        }
        if !mat.is_hermitian(STATE_TOL) {
            return Err(QsvError::InvalidState("matrix is not Hermitian".into()));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(QsvError::InvalidState(format!(
                "trace is {}{:+}i, expected 1",
                tr.re, tr.im
            )));
        }
        let min_eig = mat.hermitian_eigenvalues()[0];
        if min_eig < -STATE_TOL {
            return Err(QsvError::InvalidState(format!(
                "smallest eigenvalue {min_eig:e} is negative"
            )));
        }
        Ok(Self { mat })
    }

    pub fn maximally_mixed() -> Self {
        Self {
            mat: ComplexMatrix::identity(4).unwrap().scale_real(0.25),
        }
    }

    /// `v·|target⟩⟨target| + (1−v)·I/4`. Positive for `v ∈ [−1/3, 1]`.
    pub fn depolarized(target: &PureState, v: f64) -> Result<Self> {
        let p = projector(target).mat;
        let mixed = ComplexMatrix::identity(4)?.scale_real((1.0 - v) / 4.0);
        Self::new(p.scale_real(v) + mixed)
    }

    /// Werner state with singlet fidelity `fidelity`, valid for `fidelity ≥ 1/4`.
    pub fn werner(fidelity: f64) -> Result<Self> {
        if !(0.25..=1.0).contains(&fidelity) {
            return Err(QsvError::InvalidParameter(format!(
                "Werner fidelity must lie in [1/4, 1], got {fidelity}"
            )));
        }
        Self::depolarized(&PureState::singlet(), werner_visibility(fidelity))
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights must be a probability vector.
    pub fn mixture(parts: &[(f64, DensityMatrix)]) -> Result<Self> {
        let mut acc = ComplexMatrix::zeros(4)?;
        for (w, d) in parts {
            acc = acc + d.mat.scale_real(*w);
        }
        Self::new(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    /// `⟨ψ|ρ|ψ⟩`, clamped into `[0, 1]` against rounding.
    pub fn fidelity_with(&self, target: &PureState) -> f64 {
        target.sandwich(&self.mat).re.clamp(0.0, 1.0)
    }

    /// Draws a full-rank random state `GG†/tr(GG†)` from a complex Ginibre matrix.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut g = ComplexMatrix::zeros(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                g.set(i, j, Complex64::new(re, im));
            }
        }
        let gg = g * g.adjoint();
        let tr = gg.trace().re;
        let mut mat = gg.scale_real(1.0 / tr);
        // Symmetrise away rounding asymmetry from the product.
        mat = (mat + mat.adjoint()).scale_real(0.5);
        Self { mat }
    }
}

/// Werner visibility `v = (4F − 1)/3` for singlet fidelity `F`.
pub fn werner_visibility(fidelity: f64) -> f64 {
    (4.0 * fidelity - 1.0) / 3.0
}

/// `|s⟩⟨s|`.
pub fn projector(s: &PureState) -> DensityMatrix {
    let a = s.amplitudes();
    let mut m = ComplexMatrix::zeros(4).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            m.set(i, j, a[i] * a[j].conj());
        }
    }
    DensityMatrix { mat: m }
}

/// `Re tr(m·s)`, rejecting results with an imaginary part above [`STATE_TOL`].
pub fn expectation(m: &ComplexMatrix, s: &DensityMatrix) -> Result<f64> {
    let t = m.trace_product(s.matrix())?;
    if t.im.abs() > STATE_TOL {
        return Err(QsvError::NotHermitian(t.im));
    }
    Ok(t.re)
}

/// Eigenvalues of the Hermitian part of a 2×2 or 4×4 matrix, ascending.
///
/// A `d×d` Hermitian `A + iB` is embedded as the real symmetric
/// `[[A, −B], [B, A]]`, whose spectrum is that of the original with every
/// eigenvalue doubled; cyclic Jacobi rotations then diagonalise it.
fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let d = m.dim();
    let n = 2 * d;
    let mut a = vec![0.0f64; n * n];
    for i in 0..d {
        for j in 0..d {
            let h = 0.5 * (m.get(i, j) + m.get(j, i).conj());
            a[i * n + j] = h.re;
            a[(i + d) * n + (j + d)] = h.re;
            a[(i + d) * n + j] = h.im;
            a[i * n + (j + d)] = -h.im;
        }
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off < 1e-300 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    diag.sort_by(f64::total_cmp);
    diag.into_iter().step_by(2).collect()
}
