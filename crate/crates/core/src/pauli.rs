//! Pauli-string algebra, local measurement settings and ground-truth states.
//!
//! Conventions used throughout the crate:
//!
//! * `σ₀ = I`, `σ₁ = X`, `σ₂ = Y`, `σ₃ = Z`.
//! * Qubit 0 is the most significant bit of a computational-basis index.
//! * The `+1` eigenvectors are `|0⟩` (Z), `|+⟩ = (|0⟩+|1⟩)/√2` (X) and
//!   `|+i⟩ = (|0⟩+i|1⟩)/√2` (Y); the `−1` eigenvectors are their orthogonal
//!   complements.
//! * Outcomes are enumerated like basis indices: bit `n-1-k` of the outcome
//!   index is set when qubit `k` returned `−1`. Outcome `0` is `(+1,…,+1)`.
//! * Pauli strings are indexed in base 4 and settings in base 3 (digit
//!   `direction - 1`), qubit 0 being the most significant digit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest qubit count for which dense matrices are built.
pub const MAX_DENSE_QUBITS: usize = 6;

/// Largest qubit count accepted by the closed-form spectral formulas.
pub const MAX_ANALYTIC_QUBITS: usize = 10;

/// Tolerance on `max |ρ - ρ†|` and `|tr ρ - 1|`.
pub const MATRIX_TOLERANCE: f64 = 1e-12;

const PROBABILITY_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PauliError {
    #[error("qubit count {0} outside the supported range 1..={1}")]
    QubitCount(usize, usize),
    #[error("label {label} at position {position} is not allowed here")]
    InvalidLabel { position: usize, label: u8 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (max |A - A^dag| = {0:e})")]
    NotHermitian(f64),
    #[error("matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("purity weight q = {0} outside [0, 1]")]
    PurityOutOfRange(f64),
    #[error("white noise state requires q = 0, got {0}")]
    WhiteNoiseWithSignal(f64),
    #[error("rank {rank} invalid for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },
    #[error("Dicke excitation count {k} exceeds qubit count {n}")]
    TooManyExcitations { k: usize, n: usize },
    #[error("explicit matrix state needs {expected} entries, found {found}")]
    ExplicitEntries { expected: usize, found: usize },
    #[error("probability {0} is negative beyond tolerance")]
    NegativeProbability(f64),
}

fn check_qubits(n: usize, max: usize) -> Result<(), PauliError> {
    if n == 0 || n > max {
        return Err(PauliError::QubitCount(n, max));
    }
    Ok(())
}

/// Tensor product `σ_{μ₁} ⊗ … ⊗ σ_{μₙ}` identified by its labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    labels: Vec<u8>,
}

impl PauliString {
    pub fn new(labels: Vec<u8>) -> Result<Self, PauliError> {
        check_qubits(labels.len(), MAX_ANALYTIC_QUBITS)?;
        if let Some((position, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 3) {
            return Err(PauliError::InvalidLabel { position, label });
        }
        Ok(Self { labels })
    }

    pub fn identity(n: usize) -> Self {
        Self { labels: vec![0; n] }
    }

    /// Inverse of [`PauliString::index`].
    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut labels = vec![0u8; n];
        for slot in labels.iter_mut().rev() {
            *slot = (index % 4) as u8;
            index /= 4;
        }
        Self { labels }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn qubits(&self) -> usize {
        self.labels.len()
    }

    /// Base-4 index, qubit 0 most significant.
    pub fn index(&self) -> usize {
        self.labels.iter().fold(0, |acc, &l| acc * 4 + l as usize)
    }

    /// Number of identity factors (`j(μ)`).
    pub fn identity_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    /// True when the string is compatible with `setting`, i.e. every
    /// non-identity label equals the setting's direction on that qubit.
    pub fn is_supported_on(&self, setting: &Setting) -> bool {
        self.labels.len() == setting.directions.len()
            && self
                .labels
                .iter()
                .zip(&setting.directions)
                .all(|(&l, &d)| l == 0 || l == d)
    }

    pub(crate) fn action(&self) -> PauliAction {
        PauliAction::from_labels(&self.labels)
    }
}

/// Column action of a Pauli string in the computational basis:
/// `σ|b⟩ = i^{y} (−1)^{popcount(b & z)} |b ⊕ x⟩`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PauliAction {
    pub x_mask: usize,
    pub z_mask: usize,
    pub y_count: u32,
}

impl PauliAction {
    pub fn from_labels(labels: &[u8]) -> Self {
        let n = labels.len();
        let mut action = PauliAction {
            x_mask: 0,
            z_mask: 0,
            y_count: 0,
        };
        for (k, &l) in labels.iter().enumerate() {
            let bit = 1usize << (n - 1 - k);
            match l {
                1 => action.x_mask |= bit,
                2 => {
                    action.x_mask |= bit;
                    action.z_mask |= bit;
                    action.y_count += 1;
                }
                3 => action.z_mask |= bit,
                _ => {}
            }
        }
        action
    }

    /// Row index and value of the single non-zero entry in column `b`.
    #[inline]
    pub fn column(&self, b: usize) -> (usize, Complex64) {
        let mut power = self.y_count;
        if (b & self.z_mask).count_ones() % 2 == 1 {
            power += 2;
        }
        let phase = match power % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        (b ^ self.x_mask, phase)
    }
}

/// A full local measurement basis: one Pauli direction in `{1,2,3}` per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    directions: Vec<u8>,
}

impl Setting {
    pub fn new(directions: Vec<u8>) -> Result<Self, PauliError> {
        check_qubits(directions.len(), MAX_ANALYTIC_QUBITS)?;
        if let Some((position, &label)) = directions
            .iter()
            .enumerate()
            .find(|(_, &d)| !(1..=3).contains(&d))
        {
            return Err(PauliError::InvalidLabel { position, label });
        }
        Ok(Self { directions })
    }

    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut directions = vec![1u8; n];
        for slot in directions.iter_mut().rev() {
            *slot = (index % 3) as u8 + 1;
            index /= 3;
        }
        Self { directions }
    }

    /// All `3ⁿ` settings in index order.
    pub fn all(n: usize) -> impl Iterator<Item = Setting> {
        (0..3usize.pow(n as u32)).map(move |i| Setting::from_index(n, i))
    }

    pub fn directions(&self) -> &[u8] {
        &self.directions
    }

    pub fn qubits(&self) -> usize {
        self.directions.len()
    }

    pub fn index(&self) -> usize {
        self.directions
            .iter()
            .fold(0, |acc, &d| acc * 3 + (d - 1) as usize)
    }
}

/// One `±1` result per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    signs: Vec<i8>,
}

impl Outcome {
    pub fn from_index(n: usize, index: usize) -> Self {
        let signs = (0..n)
            .map(|k| if index >> (n - 1 - k) & 1 == 1 { -1 } else { 1 })
            .collect();
        Self { signs }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn index(&self) -> usize {
        self.signs
            .iter()
            .fold(0, |acc, &s| acc * 2 + usize::from(s < 0))
    }

    /// Product of the signs on the non-identity positions of `mu`.
    pub fn parity(&self, mu: &PauliString) -> i32 {
        self.signs
            .iter()
            .zip(mu.labels())
            .filter(|(_, &l)| l != 0)
            .map(|(&s, _)| s as i32)
            .product()
    }
}

/// Dense Hermitian unit-trace matrix on `n` qubits. Positivity is not
/// enforced: linear estimates are allowed to be unphysical.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates hermiticity and unit trace to [`MATRIX_TOLERANCE`].
    pub fn new(qubits: usize, matrix: DMatrix<Complex64>) -> Result<Self, PauliError> {
        check_qubits(qubits, MAX_DENSE_QUBITS)?;
        let dim = 1usize << qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(PauliError::DimensionMismatch {
                expected: dim,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let defect = hermiticity_defect(&matrix);
        if defect > MATRIX_TOLERANCE {
            return Err(PauliError::NotHermitian(defect));
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > MATRIX_TOLERANCE {
            return Err(PauliError::BadTrace(trace));
        }
        Ok(Self { qubits, matrix })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts(qubits: usize, matrix: DMatrix<Complex64>) -> Self {
        Self { qubits, matrix }
    }

    pub fn white_noise(qubits: usize) -> Result<Self, PauliError> {
        check_qubits(qubits, MAX_DENSE_QUBITS)?;
        let dim = 1usize << qubits;
        let matrix = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Ok(Self { qubits, matrix })
    }

    /// `|ψ⟩⟨ψ|` for a state vector, normalised on the way in.
    pub fn pure(qubits: usize, state: &DVector<Complex64>) -> Result<Self, PauliError> {
        check_qubits(qubits, MAX_DENSE_QUBITS)?;
        let dim = 1usize << qubits;
        if state.len() != dim {
            return Err(PauliError::DimensionMismatch {
                expected: dim,
                found: state.len(),
            });
        }
        let psi = state / Complex64::new(state.norm(), 0.0);
        let matrix = &psi * psi.adjoint();
        Ok(Self { qubits, matrix })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `q·self + (1-q)·I/2ⁿ`.
    pub fn mixed_with_white_noise(&self, q: f64) -> Self {
        let dim = self.dim();
        let noise = Complex64::new((1.0 - q) / dim as f64, 0.0);
        let mut matrix = self.matrix.map(|z| z * q);
        for i in 0..dim {
            matrix[(i, i)] += noise;
        }
        Self {
            qubits: self.qubits,
            matrix,
        }
    }
}

pub(crate) fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

/// Which family of ground-truth state to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    WhiteNoise,
    PurePlusNoise,
    RankRPlusNoise,
    GhzPlusNoise,
    DickePlusNoise,
    ExplicitMatrix,
}

/// Recipe for a ground-truth state `q·ρ_r + (1-q)·I/2ⁿ`.
///
/// JSON form: `{"kind": "ghz_plus_noise", "n": 6, "q": 0.8, "r": 1, "k": 0,
/// "seed": null}`. `explicit_matrix` additionally carries `entries`, the
/// row-major `[re, im]` pairs of the full matrix (`q` is then ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub kind: StateKind,
    pub n: usize,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub r: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<[f64; 2]>>,
}

impl StateSpec {
    fn with_kind(kind: StateKind, n: usize, q: f64, r: usize) -> Self {
        Self {
            kind,
            n,
            q,
            r,
            k: 0,
            seed: None,
            entries: None,
        }
    }

    pub fn white_noise(n: usize) -> Self {
        Self::with_kind(StateKind::WhiteNoise, n, 0.0, 0)
    }

    pub fn ghz(n: usize, q: f64) -> Self {
        Self::with_kind(StateKind::GhzPlusNoise, n, q, 1)
    }

    pub fn dicke(n: usize, k: usize, q: f64) -> Self {
        Self {
            k,
            ..Self::with_kind(StateKind::DickePlusNoise, n, q, 1)
        }
    }

    pub fn pure_random(n: usize, q: f64, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::with_kind(StateKind::PurePlusNoise, n, q, 1)
        }
    }

    pub fn rank_random(n: usize, r: usize, q: f64, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::with_kind(StateKind::RankRPlusNoise, n, q, r)
        }
    }

    pub fn explicit(rho: &DensityMatrix) -> Self {
        let entries = rho.matrix().transpose().iter().map(|z| [z.re, z.im]).collect();
        Self {
            entries: Some(entries),
            ..Self::with_kind(StateKind::ExplicitMatrix, rho.qubits(), 1.0, 0)
        }
    }

    /// Rank of the signal part (`None` for explicit matrices).
    pub fn signal_rank(&self) -> Option<usize> {
        match self.kind {
            StateKind::WhiteNoise => Some(0),
            StateKind::PurePlusNoise | StateKind::GhzPlusNoise | StateKind::DickePlusNoise => Some(1),
            StateKind::RankRPlusNoise => Some(self.r),
            StateKind::ExplicitMatrix => None,
        }
    }

    pub fn validate(&self) -> Result<(), PauliError> {
        check_qubits(self.n, MAX_DENSE_QUBITS)?;
        let dim = 1usize << self.n;
        if !(0.0..=1.0).contains(&self.q) {
            return Err(PauliError::PurityOutOfRange(self.q));
        }
        match self.kind {
            StateKind::WhiteNoise if self.q != 0.0 => {
                return Err(PauliError::WhiteNoiseWithSignal(self.q))
            }
            StateKind::RankRPlusNoise if self.r == 0 || self.r > dim => {
                return Err(PauliError::InvalidRank { rank: self.r, dim })
            }
            StateKind::DickePlusNoise if self.k > self.n => {
                return Err(PauliError::TooManyExcitations { k: self.k, n: self.n })
            }
            StateKind::ExplicitMatrix => {
                let found = self.entries.as_ref().map_or(0, Vec::len);
                if found != dim * dim {
                    return Err(PauliError::ExplicitEntries {
                        expected: dim * dim,
                        found,
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Builds the ground-truth density matrix described by `spec`.
pub fn build_state(spec: &StateSpec) -> Result<DensityMatrix, PauliError> {
    spec.validate()?;
    let n = spec.n;
    let dim = 1usize << n;
    let signal = match spec.kind {
        StateKind::WhiteNoise => return DensityMatrix::white_noise(n),
        StateKind::ExplicitMatrix => {
            let entries = spec.entries.as_deref().unwrap_or_default();
            let matrix = DMatrix::from_row_iterator(
                dim,
                dim,
                entries.iter().map(|&[re, im]| Complex64::new(re, im)),
            );
            return DensityMatrix::new(n, matrix);
        }
        StateKind::GhzPlusNoise => {
            let mut psi = DVector::zeros(dim);
            psi[0] = Complex64::new(1.0, 0.0);
            psi[dim - 1] = Complex64::new(1.0, 0.0);
            DensityMatrix::pure(n, &psi)?
        }
        StateKind::DickePlusNoise => {
            let psi = DVector::from_fn(dim, |b, _| {
                if b.count_ones() as usize == spec.k {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            DensityMatrix::pure(n, &psi)?
        }
        StateKind::PurePlusNoise => {
            let basis = haar_orthonormal(dim, 1, spec.seed.unwrap_or(0));
            DensityMatrix::pure(n, &basis.column(0).into_owned())?
        }
        StateKind::RankRPlusNoise => {
            let basis = haar_orthonormal(dim, spec.r, spec.seed.unwrap_or(0));
            let weight = Complex64::new(1.0 / spec.r as f64, 0.0);
            let matrix = (&basis * basis.adjoint()) * weight;
            DensityMatrix::from_parts(n, matrix)
        }
    };
    Ok(signal.mixed_with_white_noise(spec.q))
}

/// `columns` orthonormal vectors obtained by Gram-Schmidt on complex
/// standard-normal columns, i.e. Haar-distributed.
pub fn haar_orthonormal(dim: usize, columns: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = DMatrix::from_fn(dim, columns, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    for j in 0..columns {
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for i in 0..j {
                let prev = basis.column(i).into_owned();
                let overlap = prev.dotc(&basis.column(j));
                let mut col = basis.column_mut(j);
                col -= prev * overlap;
            }
        }
        let norm = basis.column(j).norm();
        basis.column_mut(j).unscale_mut(norm);
    }
    basis
}

/// `tr(ρ σ_μ)`; the imaginary part vanishes for Hermitian `ρ`.
pub fn pauli_expectation(rho: &DensityMatrix, mu: &PauliString) -> Result<f64, PauliError> {
    if mu.qubits() != rho.qubits() {
        return Err(PauliError::DimensionMismatch {
            expected: rho.qubits(),
            found: mu.qubits(),
        });
    }
    let action = mu.action();
    let m = rho.matrix();
    let value: Complex64 = (0..rho.dim())
        .map(|b| {
            let (a, phase) = action.column(b);
            m[(b, a)] * phase
        })
        .sum();
    Ok(value.re)
}

/// All `4ⁿ` expectation values, indexed by [`PauliString::index`].
pub fn correlation_values(rho: &DensityMatrix) -> Vec<f64> {
    let n = rho.qubits();
    (0..4usize.pow(n as u32))
        .map(|i| pauli_expectation(rho, &PauliString::from_index(n, i)).unwrap_or(0.0))
        .collect()
}

fn basis_change(direction: u8) -> [[Complex64; 2]; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match direction {
        // rows are ⟨+|, ⟨−| of the respective eigenbasis
        1 => [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
        2 => [[c(h, 0.0), c(0.0, -h)], [c(h, 0.0), c(0.0, h)]],
        _ => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
    }
}

/// Applies `U ρ U†` with `U` acting on one qubit.
fn conjugate_local(m: &mut DMatrix<Complex64>, n: usize, qubit: usize, u: &[[Complex64; 2]; 2]) {
    let dim = m.nrows();
    let bit = 1usize << (n - 1 - qubit);
    for col in 0..dim {
        for i0 in (0..dim).filter(|i| i & bit == 0) {
            let i1 = i0 | bit;
            let (a0, a1) = (m[(i0, col)], m[(i1, col)]);
            m[(i0, col)] = u[0][0] * a0 + u[0][1] * a1;
            m[(i1, col)] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
    for row in 0..dim {
        for j0 in (0..dim).filter(|j| j & bit == 0) {
            let j1 = j0 | bit;
            let (a0, a1) = (m[(row, j0)], m[(row, j1)]);
            m[(row, j0)] = a0 * u[0][0].conj() + a1 * u[0][1].conj();
            m[(row, j1)] = a0 * u[1][0].conj() + a1 * u[1][1].conj();
        }
    }
}

/// Exact outcome distribution `p_r = tr(ρ Π_r^s)` for one setting, in outcome
/// index order. Small negative roundoff is clamped to zero and the vector
/// renormalised.
pub fn outcome_probabilities(rho: &DensityMatrix, setting: &Setting) -> Result<Vec<f64>, PauliError> {
    let n = rho.qubits();
    if setting.qubits() != n {
        return Err(PauliError::DimensionMismatch {
            expected: n,
            found: setting.qubits(),
        });
    }
    let mut rotated = rho.matrix().clone();
    for (qubit, &d) in setting.directions().iter().enumerate() {
        if d != 3 {
            conjugate_local(&mut rotated, n, qubit, &basis_change(d));
        }
    }
    clamp_and_normalise((0..rho.dim()).map(|i| rotated[(i, i)].re).collect())
}

pub(crate) fn clamp_and_normalise(mut probs: Vec<f64>) -> Result<Vec<f64>, PauliError> {
    for p in probs.iter_mut() {
        if *p < -PROBABILITY_CLAMP {
            return Err(PauliError::NegativeProbability(*p));
        }
        *p = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}
