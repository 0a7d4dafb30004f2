//! Closed-form spectral laws for linear tomography estimates.
//!
//! For the overcomplete Pauli scheme the non-signal eigenvalues follow a
//! Wigner semicircle with
//!
//! ```text
//! c_{q,r} = (1 − q) / (2ⁿ − r)
//! R_r     = 2 √((10ⁿ − 1) / 12ⁿ) · √(1 − r·2⁻ⁿ) / √N
//! ```
//!
//! whose even central moments are Catalan numbers times `(R/2)^{2k}`.
//! The single-qubit white-noise spectrum has the closed density
//! `g(λ) ∝ exp(−(1−2λ)² N/2) (1−2λ)²`, and the complete four-projector
//! scheme produces a Laplace law with `α = √(2 N_total / 4ⁿ)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::pauli::MAX_ANALYTIC_QUBITS;
use crate::quadrature::integrate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("qubit count {0} outside 1..={MAX_ANALYTIC_QUBITS}")]
    QubitCount(usize),
    #[error("rank {rank} must be below the dimension {dim}")]
    RankTooLarge { rank: usize, dim: usize },
    #[error("q = {0} outside [0, 1]")]
    PurityOutOfRange(f64),
    #[error("the minimum count diverges for q -> 1")]
    Divergent,
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("event count must be at least 1, got {0}")]
    BadEventCount(f64),
    #[error("Catalan number C_{0} overflows 64 bits")]
    CatalanOverflow(u32),
}

fn check_qubits(n: usize) -> Result<(), SpectralError> {
    if n == 0 || n > MAX_ANALYTIC_QUBITS {
        return Err(SpectralError::QubitCount(n));
    }
    Ok(())
}

fn dimension(n: usize) -> f64 {
    (1u64 << n) as f64
}

/// Centre of the noise semicircle, `(1 − q)/(2ⁿ − r)`.
pub fn semicircle_center(n: usize, q: f64, r: usize) -> Result<f64, SpectralError> {
    check_qubits(n)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(SpectralError::PurityOutOfRange(q));
    }
    let dim = 1usize << n;
    if r >= dim {
        return Err(SpectralError::RankTooLarge { rank: r, dim });
    }
    Ok((1.0 - q) / (dim - r) as f64)
}

/// Semicircle radius with the exact `(10ⁿ − 1)/12ⁿ` prefactor and the rank
/// correction `√(1 − r·2⁻ⁿ)`. Requires `events ≥ 1` and `r < 2ⁿ`.
pub fn semicircle_radius(n: usize, events: f64, r: usize) -> f64 {
    let n_i = n as i32;
    let ratio = (10f64.powi(n_i) - 1.0) / 12f64.powi(n_i);
    2.0 * ratio.sqrt() * (1.0 - r as f64 / dimension(n)).sqrt() / events.sqrt()
}

/// The `2 (5/6)^{n/2} √(1 − r·2⁻ⁿ) / √N` large-`n` form of the radius.
pub fn approximate_radius(n: usize, events: f64, r: usize) -> f64 {
    2.0 * (5.0f64 / 6.0).powf(n as f64 / 2.0) * (1.0 - r as f64 / dimension(n)).sqrt() / events.sqrt()
}

/// Width `w_r = 2 R_r` of the interval occupied by the noise eigenvalues.
pub fn semicircle_width(n: usize, events: f64, r: usize) -> f64 {
    2.0 * semicircle_radius(n, events, r)
}

/// Wigner semicircle law with centre `c` and radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemicircleModel {
    pub center: f64,
    pub radius: f64,
}

impl SemicircleModel {
    pub fn new(center: f64, radius: f64) -> Result<Self, SpectralError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SpectralError::BadRadius(radius));
        }
        Ok(Self { center, radius })
    }

    /// White-noise model for `n` qubits and `events` counts per setting.
    pub fn white_noise(n: usize, events: f64) -> Result<Self, SpectralError> {
        check_qubits(n)?;
        if events < 1.0 {
            return Err(SpectralError::BadEventCount(events));
        }
        Self::new(1.0 / dimension(n), semicircle_radius(n, events, 0))
    }

    /// Noise part of `q ρ_r + (1 − q) I/2ⁿ`. Rank one keeps the unreduced
    /// radius, since the correction factor is negligible there.
    pub fn noise_model(n: usize, events: f64, q: f64, r: usize) -> Result<Self, SpectralError> {
        let center = semicircle_center(n, q, r)?;
        if events < 1.0 {
            return Err(SpectralError::BadEventCount(events));
        }
        let radius_rank = if r == 1 { 0 } else { r };
        Self::new(center, semicircle_radius(n, events, radius_rank))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        (lo..=hi).contains(&x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.center;
        if d.abs() >= self.radius {
            return 0.0;
        }
        2.0 / (PI * self.radius * self.radius) * (self.radius * self.radius - d * d).sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.radius;
        if u <= -1.0 {
            0.0
        } else if u >= 1.0 {
            1.0
        } else {
            0.5 + u * (1.0 - u * u).sqrt() / PI + u.asin() / PI
        }
    }

    /// Inverse CDF by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        if p <= 0.0 {
            return lo;
        }
        if p >= 1.0 {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Central moment `E[(λ − c)^k]`.
    pub fn moment(&self, k: u32) -> f64 {
        semicircle_moment(self, k)
    }
}

/// `E[(λ − c)^k]`: zero for odd `k`, `C_{k/2} (R/2)^k` for even `k`.
pub fn semicircle_moment(model: &SemicircleModel, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = k / 2;
    let catalan = catalan(half).map(|c| c as f64).unwrap_or(f64::INFINITY);
    catalan * (model.radius / 2.0).powi(k as i32)
}

/// Probability that `2ⁿ − 1` independent semicircle draws are all
/// non-negative.
pub fn physicality_probability(model: &SemicircleModel, n: usize) -> f64 {
    if model.center - model.radius >= 0.0 {
        return 1.0;
    }
    let mass = 1.0 - model.cdf(0.0);
    mass.powf(dimension(n) - 1.0)
}

/// Smallest per-setting count `N₀` with `R₀(N) ≤ (1 − q)/(2ⁿ − 1)`, i.e.
/// the ceiling of `4 (10ⁿ − 1)/12ⁿ ((2ⁿ − 1)/(1 − q))²`. For large `n` this
/// is `4 (5/6)ⁿ ((2ⁿ − 1)/(1 − q))²`.
pub fn min_counts(n: usize, q: f64) -> Result<u64, SpectralError> {
    check_qubits(n)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(SpectralError::PurityOutOfRange(q));
    }
    if q >= 1.0 {
        return Err(SpectralError::Divergent);
    }
    let n_i = n as i32;
    let prefactor = (10f64.powi(n_i) - 1.0) / 12f64.powi(n_i);
    let ratio = (dimension(n) - 1.0) / (1.0 - q);
    let value = 4.0 * prefactor * ratio * ratio;
    // `1 − q` carries decimal rounding, which must not push an exact
    // integer bound past the ceiling
    Ok((value * (1.0 - 1e-12)).ceil() as u64)
}

/// Catalan number `C_k`, computed with exact integer recursion.
pub fn catalan(k: u32) -> Result<u64, SpectralError> {
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
        if c > u64::MAX as u128 {
            return Err(SpectralError::CatalanOverflow(k));
        }
    }
    Ok(c as u64)
}

/// Normalised single-qubit white-noise eigenvalue density
/// `g(λ) ∝ exp(−(1−2λ)² N/2) (1−2λ)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitDensity {
    pub events: f64,
    pub normalisation: f64,
}

impl SingleQubitDensity {
    pub fn new(events: f64) -> Result<Self, SpectralError> {
        if events < 1.0 {
            return Err(SpectralError::BadEventCount(events));
        }
        let unnormalised = Self {
            events,
            normalisation: 1.0,
        };
        let (lo, hi) = unnormalised.window();
        let total = integrate(|x| unnormalised.pdf(x), lo, hi, 1e-10);
        Ok(Self {
            events,
            normalisation: 1.0 / total,
        })
    }

    /// Integration window `½ ± 10/√N`.
    pub fn window(&self) -> (f64, f64) {
        let half = 10.0 / self.events.sqrt();
        (0.5 - half, 0.5 + half)
    }

    pub fn pdf(&self, lambda: f64) -> f64 {
        let x = 1.0 - 2.0 * lambda;
        self.normalisation * (-x * x * self.events / 2.0).exp() * x * x
    }

    pub fn cdf(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.window();
        if lambda <= lo {
            return 0.0;
        }
        if lambda >= hi {
            return 1.0;
        }
        integrate(|x| self.pdf(x), lo, lambda, 1e-10).clamp(0.0, 1.0)
    }
}

/// Laplace law `h(λ) = (α/2) exp(−α |λ − 2⁻ⁿ|)` of the complete scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceModel {
    pub center: f64,
    pub alpha: f64,
}

impl LaplaceModel {
    pub fn pdf(&self, x: f64) -> f64 {
        0.5 * self.alpha * (-self.alpha * (x - self.center).abs()).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let d = x - self.center;
        if d < 0.0 {
            0.5 * (self.alpha * d).exp()
        } else {
            1.0 - 0.5 * (-self.alpha * d).exp()
        }
    }

    /// `2/α²`.
    pub fn second_moment(&self) -> f64 {
        2.0 / (self.alpha * self.alpha)
    }
}

/// `α = √(2 N_total / 4ⁿ)`, centre `2⁻ⁿ`.
pub fn laplace_model(n: usize, total_counts: f64) -> Result<LaplaceModel, SpectralError> {
    check_qubits(n)?;
    if total_counts < 1.0 {
        return Err(SpectralError::BadEventCount(total_counts));
    }
    let dim = dimension(n);
    Ok(LaplaceModel {
        center: 1.0 / dim,
        alpha: (2.0 * total_counts / (dim * dim)).sqrt(),
    })
}
