//! Linear state estimation for the overcomplete Pauli scheme and the complete
//! four-projector scheme, plus Hermitian spectra.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{
    self, hermiticity_defect, DensityMatrix, PauliAction, PauliError, PauliString, MAX_DENSE_QUBITS,
};
use crate::sampling::{self, CountRecord, SamplingError};

/// Largest tolerated `max |A − A†|` for spectral input.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
/// Largest tolerated `max |A − VΛV†|` after diagonalisation.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("no record for setting {0}")]
    MissingSetting(usize),
    #[error("more than one record for setting {0}")]
    DuplicateSetting(usize),
    #[error("expected {expected} values, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("correlation tensor must have T_0...0 = 1, found {0}")]
    Normalisation(f64),
    #[error("input is not Hermitian (max |A - A^dag| = {0:e})")]
    NotHermitian(f64),
    #[error("eigendecomposition residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("projector flux must be positive")]
    ZeroFlux,
    #[error("transfer matrix is singular")]
    SingularFrame,
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Per-qubit-count lookup tables shared by all estimators.
pub(crate) struct Layout {
    pub qubits: usize,
    /// `pauli_of[s * 2ⁿ + m]`: Pauli index measured by setting `s` on the
    /// qubit subset `m` (bit `n-1-k` ↔ qubit `k`).
    pub pauli_of: Vec<u32>,
    /// `3^{j(μ)}` for every Pauli index.
    pub multiplicity: Vec<u32>,
    pub actions: Vec<PauliAction>,
}

impl Layout {
    fn build(n: usize) -> Self {
        let dim = 1usize << n;
        let settings = 3usize.pow(n as u32);
        let paulis = 4usize.pow(n as u32);
        let mut pauli_of = Vec::with_capacity(settings * dim);
        for s in 0..settings {
            let setting = pauli::Setting::from_index(n, s);
            for m in 0..dim {
                let idx = setting.directions().iter().enumerate().fold(0u32, |acc, (k, &d)| {
                    let label = if m >> (n - 1 - k) & 1 == 1 { d as u32 } else { 0 };
                    acc * 4 + label
                });
                pauli_of.push(idx);
            }
        }
        let multiplicity = (0..paulis)
            .map(|i| 3u32.pow(PauliString::from_index(n, i).identity_count() as u32))
            .collect();
        let actions = (0..paulis)
            .map(|i| PauliString::from_index(n, i).action())
            .collect();
        Self {
            qubits: n,
            pauli_of,
            multiplicity,
            actions,
        }
    }

    pub fn get(n: usize) -> Result<Arc<Layout>, EstimationError> {
        static CACHE: [OnceLock<Arc<Layout>>; MAX_DENSE_QUBITS + 1] =
            [const { OnceLock::new() }; MAX_DENSE_QUBITS + 1];
        if n == 0 || n > MAX_DENSE_QUBITS {
            return Err(PauliError::QubitCount(n, MAX_DENSE_QUBITS).into());
        }
        Ok(CACHE[n].get_or_init(|| Arc::new(Layout::build(n))).clone())
    }
}

/// In-place Walsh-Hadamard transform: `w[m] = Σ_r f[r] (−1)^{|r ∧ m|}`.
pub(crate) fn walsh_hadamard(values: &mut [f64]) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        for block in (0..len).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Expectation values `T_μ` for all `4ⁿ` Pauli strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTensor {
    qubits: usize,
    values: Vec<f64>,
}

impl CorrelationTensor {
    /// `T_0…0` must be one up to rounding; it is then stored as exactly one.
    pub fn new(qubits: usize, mut values: Vec<f64>) -> Result<Self, EstimationError> {
        let expected = 4usize.pow(qubits as u32);
        if values.len() != expected {
            return Err(EstimationError::WrongLength {
                expected,
                found: values.len(),
            });
        }
        if (values[0] - 1.0).abs() > 1e-9 {
            return Err(EstimationError::Normalisation(values[0]));
        }
        values[0] = 1.0;
        Ok(Self { qubits, values })
    }

    /// Exact tensor of a known state.
    pub fn of_state(rho: &DensityMatrix) -> Self {
        let mut values = pauli::correlation_values(rho);
        values[0] = 1.0;
        Self {
            qubits: rho.qubits(),
            values,
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, mu: &PauliString) -> f64 {
        self.values[mu.index()]
    }

    /// Number of settings that contribute to `T_μ`, i.e. `3^{j(μ)}`.
    pub fn multiplicity(&self, mu: &PauliString) -> usize {
        3usize.pow(mu.identity_count() as u32)
    }
}

/// Accumulates per-setting frequency vectors into correlation estimates.
pub(crate) struct CorrelationAccumulator {
    layout: Arc<Layout>,
    sums: Vec<f64>,
    scratch: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(n: usize) -> Result<Self, EstimationError> {
        let layout = Layout::get(n)?;
        Ok(Self {
            sums: vec![0.0; 4usize.pow(n as u32)],
            scratch: vec![0.0; 1 << n],
            layout,
        })
    }

    pub fn add_setting(&mut self, setting: usize, freqs: &[f64]) {
        let dim = self.scratch.len();
        self.scratch.copy_from_slice(freqs);
        walsh_hadamard(&mut self.scratch);
        let row = &self.layout.pauli_of[setting * dim..(setting + 1) * dim];
        for (&mu, &w) in row.iter().zip(&self.scratch) {
            self.sums[mu as usize] += w;
        }
    }

    pub fn add_counts(&mut self, setting: usize, counts: &[u64]) -> Result<(), SamplingError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(SamplingError::EmptySetting { setting });
        }
        let total = total as f64;
        for (dst, &c) in self.scratch.iter_mut().zip(counts) {
            *dst = c as f64 / total;
        }
        let dim = self.scratch.len();
        walsh_hadamard(&mut self.scratch);
        let row = &self.layout.pauli_of[setting * dim..(setting + 1) * dim];
        for (&mu, &w) in row.iter().zip(&self.scratch) {
            self.sums[mu as usize] += w;
        }
        Ok(())
    }

    /// Averages and resets.
    pub fn finish(&mut self) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.layout.multiplicity)
            .map(|(&s, &m)| s / m as f64)
            .collect();
        values[0] = 1.0;
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        values
    }
}

/// Correlation estimates from one record per setting: `T̃_μ` is the plain
/// mean over the `3^{j(μ)}` compatible settings of `Σ_r (∏ r_k) f_r`.
pub fn estimate_correlations(
    n: usize,
    records: &[CountRecord],
) -> Result<CorrelationTensor, EstimationError> {
    let settings = 3usize.pow(n as u32);
    let dim = 1usize << n;
    let mut seen: Vec<Option<&CountRecord>> = vec![None; settings];
    for rec in records {
        let slot = seen
            .get_mut(rec.setting_index)
            .ok_or(EstimationError::MissingSetting(rec.setting_index))?;
        if slot.is_some() {
            return Err(EstimationError::DuplicateSetting(rec.setting_index));
        }
        if rec.counts.len() != dim {
            return Err(EstimationError::WrongLength {
                expected: dim,
                found: rec.counts.len(),
            });
        }
        *slot = Some(rec);
    }
    let mut acc = CorrelationAccumulator::new(n)?;
    for (s, rec) in seen.iter().enumerate() {
        let rec = rec.ok_or(EstimationError::MissingSetting(s))?;
        acc.add_setting(s, &sampling::frequencies(rec)?);
    }
    Ok(CorrelationTensor {
        qubits: n,
        values: acc.finish(),
    })
}

pub(crate) fn reconstruct_values(layout: &Layout, values: &[f64]) -> DMatrix<Complex64> {
    let n = layout.qubits;
    let dim = 1usize << n;
    let scale = 1.0 / dim as f64;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for (action, &t) in layout.actions.iter().zip(values) {
        if t == 0.0 {
            continue;
        }
        let weight = t * scale;
        for b in 0..dim {
            let (a, phase) = action.column(b);
            m[(a, b)] += phase * weight;
        }
    }
    m
}

/// `ρ̃ = 2⁻ⁿ Σ_μ T̃_μ σ_μ`.
pub fn reconstruct_linear(t: &CorrelationTensor) -> Result<DensityMatrix, EstimationError> {
    let layout = Layout::get(t.qubits)?;
    Ok(DensityMatrix::from_parts(
        t.qubits,
        reconstruct_values(&layout, &t.values),
    ))
}

/// Real eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn into_eigenvalues(self) -> Vec<f64> {
        self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    /// The trace check value.
    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn is_physical(&self) -> bool {
        self.min() >= 0.0
    }
}

/// Eigenpairs sorted by ascending eigenvalue; `vectors` column `i` belongs
/// to `values[i]`.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub qubits: usize,
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Eigendecomposition {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            eigenvalues: self.values.clone(),
        }
    }

    /// `V diag(values) V†`.
    pub fn compose(&self, values: &[f64]) -> DMatrix<Complex64> {
        let mut scaled = self.vectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition with a reconstruction residual check.
pub fn eigh(rho: &DensityMatrix) -> Result<Eigendecomposition, EstimationError> {
    let defect = hermiticity_defect(rho.matrix());
    if defect > HERMITIAN_TOLERANCE {
        return Err(EstimationError::NotHermitian(defect));
    }
    let eig = rho.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(rho.dim(), rho.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    let decomposition = Eigendecomposition {
        qubits: rho.qubits(),
        values,
        vectors,
    };
    let residual = (decomposition.compose(&decomposition.values) - rho.matrix()).camax();
    if residual > RESIDUAL_TOLERANCE {
        return Err(EstimationError::Residual(residual));
    }
    Ok(decomposition)
}

/// Sorted spectrum of a Hermitian matrix.
pub fn spectrum_of(rho: &DensityMatrix) -> Result<Spectrum, EstimationError> {
    eigh(rho).map(|e| e.spectrum())
}

/// Eigenvalues only; skips the eigenvector residual check. Used on the
/// Monte-Carlo hot path where inputs are Hermitian by construction.
pub(crate) fn eigenvalues_fast(m: DMatrix<Complex64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

fn psd_sqrt(rho: &DensityMatrix) -> Result<DMatrix<Complex64>, EstimationError> {
    let e = eigh(rho)?;
    let roots: Vec<f64> = e.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(e.compose(&roots))
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²` with `ρ` the reference state.
/// Negative eigenvalues of `√ρ σ √ρ`, which occur when `σ` is an unphysical
/// estimate, are clamped to zero.
pub fn fidelity(reference: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, EstimationError> {
    if reference.dim() != sigma.dim() {
        return Err(PauliError::DimensionMismatch {
            expected: reference.dim(),
            found: sigma.dim(),
        }
        .into());
    }
    let root = psd_sqrt(reference)?;
    let mut inner = &root * sigma.matrix() * &root;
    // symmetrise away roundoff
    inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let values = eigenvalues_fast(inner);
    let t: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(t * t)
}

/// Single-qubit states of the complete scheme: `|0⟩, |1⟩, |+⟩, |+i⟩`.
fn complete_single_states() -> [[Complex64; 2]; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = Complex64::new;
    [
        [c(1.0, 0.0), c(0.0, 0.0)],
        [c(0.0, 0.0), c(1.0, 0.0)],
        [c(h, 0.0), c(h, 0.0)],
        [c(h, 0.0), c(0.0, h)],
    ]
}

/// Measurement frame of the complete scheme: `4ⁿ` product projectors.
///
/// The transfer matrix `B[v, μ] = tr(σ_μ P_v) / 2ⁿ` is a tensor power of a
/// 4×4 single-qubit factor, so it is stored (and inverted) factor-wise; the
/// dense matrix is only materialised on request.
#[derive(Debug, Clone)]
pub struct CompleteSchemeFrame {
    qubits: usize,
    factor: Matrix4<f64>,
    factor_inverse: Matrix4<f64>,
}

impl CompleteSchemeFrame {
    fn build(n: usize) -> Result<Self, EstimationError> {
        let states = complete_single_states();
        let paulis: [[[Complex64; 2]; 2]; 4] = {
            let c = Complex64::new;
            [
                [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
                [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
                [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
                [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
            ]
        };
        // ⟨ψ_v|σ_μ|ψ_v⟩ / 2
        let factor = Matrix4::from_fn(|v, mu| {
            let psi = states[v];
            let s = paulis[mu];
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += psi[a].conj() * s[a][b] * psi[b];
                }
            }
            acc.re / 2.0
        });
        let factor_inverse = factor.try_inverse().ok_or(EstimationError::SingularFrame)?;
        let defect = (factor * factor_inverse - Matrix4::identity()).camax();
        if defect > 1e-12 {
            return Err(EstimationError::SingularFrame);
        }
        Ok(Self {
            qubits: n,
            factor,
            factor_inverse,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn projector_count(&self) -> usize {
        4usize.pow(self.qubits as u32)
    }

    pub fn transfer_entry(&self, v: usize, mu: usize) -> f64 {
        let n = self.qubits;
        (0..n)
            .map(|k| {
                let shift = 2 * (n - 1 - k);
                self.factor[(v >> shift & 3, mu >> shift & 3)]
            })
            .product()
    }

    pub fn inverse_entry(&self, mu: usize, v: usize) -> f64 {
        let n = self.qubits;
        (0..n)
            .map(|k| {
                let shift = 2 * (n - 1 - k);
                self.factor_inverse[(mu >> shift & 3, v >> shift & 3)]
            })
            .product()
    }

    /// Dense `4ⁿ × 4ⁿ` transfer matrix.
    pub fn dense_transfer(&self) -> DMatrix<f64> {
        let d = self.projector_count();
        DMatrix::from_fn(d, d, |v, mu| self.transfer_entry(v, mu))
    }

    /// Dense `B⁻¹`.
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        let d = self.projector_count();
        DMatrix::from_fn(d, d, |mu, v| self.inverse_entry(mu, v))
    }

    /// Product state `|ψ_v⟩` onto which projector `v` projects.
    pub fn projector_state(&self, v: usize) -> DVector<Complex64> {
        let n = self.qubits;
        let states = complete_single_states();
        DVector::from_fn(1 << n, |b, _| {
            (0..n)
                .map(|k| states[v >> (2 * (n - 1 - k)) & 3][b >> (n - 1 - k) & 1])
                .product()
        })
    }

    fn apply_factorwise(&self, m: &Matrix4<f64>, input: &[f64]) -> Vec<f64> {
        let mut data = input.to_vec();
        let len = data.len();
        let mut stride = 1;
        for _ in 0..self.qubits {
            let block = stride * 4;
            for base in (0..len).step_by(block) {
                for offset in 0..stride {
                    let idx = |d: usize| base + offset + d * stride;
                    let x = [data[idx(0)], data[idx(1)], data[idx(2)], data[idx(3)]];
                    for row in 0..4 {
                        data[idx(row)] = (0..4).map(|col| m[(row, col)] * x[col]).sum();
                    }
                }
            }
            stride = block;
        }
        data
    }

    /// `p = B T`.
    pub fn apply_transfer(&self, t: &[f64]) -> Vec<f64> {
        self.apply_factorwise(&self.factor, t)
    }

    /// `T = B⁻¹ f`.
    pub fn apply_inverse(&self, f: &[f64]) -> Vec<f64> {
        self.apply_factorwise(&self.factor_inverse, f)
    }

    /// Exact `p_v = ⟨ψ_v|ρ|ψ_v⟩` for every projector.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>, EstimationError> {
        if rho.qubits() != self.qubits {
            return Err(PauliError::DimensionMismatch {
                expected: self.qubits,
                found: rho.qubits(),
            }
            .into());
        }
        Ok((0..self.projector_count())
            .map(|v| {
                let psi = self.projector_state(v);
                let value = psi.dotc(&(rho.matrix() * &psi)).re;
                value.max(0.0)
            })
            .collect())
    }
}

/// The (cached) complete-scheme frame for `n` qubits.
pub fn build_complete_frame(n: usize) -> Result<Arc<CompleteSchemeFrame>, EstimationError> {
    static CACHE: [OnceLock<Arc<CompleteSchemeFrame>>; MAX_DENSE_QUBITS + 1] =
        [const { OnceLock::new() }; MAX_DENSE_QUBITS + 1];
    if n == 0 || n > MAX_DENSE_QUBITS {
        return Err(PauliError::QubitCount(n, MAX_DENSE_QUBITS).into());
    }
    if let Some(frame) = CACHE[n].get() {
        return Ok(frame.clone());
    }
    let frame = Arc::new(CompleteSchemeFrame::build(n)?);
    Ok(CACHE[n].get_or_init(|| frame).clone())
}

/// Linear estimate from complete-scheme frequencies `f_v` (already divided
/// by the flux). The recovered `T_0…0` rescales the whole tensor.
pub fn estimate_complete_from_frequencies(
    frame: &CompleteSchemeFrame,
    freqs: &[f64],
) -> Result<DensityMatrix, EstimationError> {
    if freqs.len() != frame.projector_count() {
        return Err(EstimationError::WrongLength {
            expected: frame.projector_count(),
            found: freqs.len(),
        });
    }
    let mut t = frame.apply_inverse(freqs);
    let norm = t[0];
    if norm <= 0.0 || !norm.is_finite() {
        return Err(EstimationError::Normalisation(norm));
    }
    t.iter_mut().for_each(|x| *x /= norm);
    t[0] = 1.0;
    let layout = Layout::get(frame.qubits)?;
    Ok(DensityMatrix::from_parts(
        frame.qubits,
        reconstruct_values(&layout, &t),
    ))
}

/// Linear estimate from complete-scheme counts with `flux` events per
/// projector per unit probability.
pub fn estimate_complete(
    frame: &CompleteSchemeFrame,
    counts: &[u64],
    flux: f64,
) -> Result<DensityMatrix, EstimationError> {
    if flux <= 0.0 || !flux.is_finite() {
        return Err(EstimationError::ZeroFlux);
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / flux).collect();
    estimate_complete_from_frequencies(frame, &freqs)
}
