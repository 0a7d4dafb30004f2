//! Goodness-of-fit testing of spectra and rank estimation.
//!
//! A candidate rank `r` explains the spectrum when the `2ⁿ − r` smallest
//! eigenvalues look like a draw from the semicircle with centre
//! `(1 − Σ top r)/(2ⁿ − r)` and radius `R_r`. The support is checked
//! first (an eigenvalue outside forces `P_eff = 0`), then an
//! Anderson-Darling test against the fully specified semicircle CDF gives
//! the P-value. The accepted rank is the smallest one with
//! `P_eff ≥ significance` and a positive centre.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{Eigendecomposition, Spectrum};
use crate::pauli::{DensityMatrix, MAX_ANALYTIC_QUBITS};
use crate::spectral::{semicircle_radius, SemicircleModel};

/// Minimum sample size for the Anderson-Darling test.
pub const MIN_SAMPLE: usize = 5;
/// Probabilities are clamped into `[ε, 1 − ε]` before taking logs.
pub const LOG_CLAMP: f64 = 1e-15;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypothesisError {
    #[error("sample of size {0} is too small (need at least {MIN_SAMPLE})")]
    TooFewSamples(usize),
    #[error("spectrum has {found} eigenvalues, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("candidate rank {0} leaves too few noise eigenvalues")]
    RankTooLarge(usize),
    #[error("qubit count {0} outside 1..={MAX_ANALYTIC_QUBITS}")]
    QubitCount(usize),
    #[error("event count must be at least 1")]
    BadEventCount,
    #[error("significance {0} outside (0, 1)")]
    BadSignificance(f64),
    #[error("no candidate rank was accepted")]
    NoAcceptedRank,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    pub statistic: f64,
    pub p_value: f64,
    /// Some probability transform hit 0 or 1 and was clamped.
    pub clamped: bool,
}

/// Asymptotic CDF of the A² statistic for a fully specified null
/// (Marsaglia & Marsaglia 2004, short-form approximation).
pub fn ad_null_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012
                + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        1.0 - ad_null_upper_tail(z)
    }
}

/// `1 − ad_null_cdf(z)` without cancellation in the far tail.
pub fn ad_null_upper_tail(z: f64) -> f64 {
    if z < 2.0 {
        return 1.0 - ad_null_cdf(z);
    }
    let g = 1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z;
    -(-g.exp()).exp_m1()
}

/// A² statistic of `sample` against `cdf`, with its asymptotic P-value.
///
/// The caller is responsible for the support check; values mapped exactly
/// onto 0 or 1 are clamped and flagged.
pub fn anderson_darling<F: Fn(f64) -> f64>(
    sample: &[f64],
    cdf: F,
) -> Result<AndersonDarling, HypothesisError> {
    let n = sample.len();
    if n < MIN_SAMPLE {
        return Err(HypothesisError::TooFewSamples(n));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(HypothesisError::NonFinite);
    }
    let mut clamped = false;
    let mut u: Vec<f64> = sample
        .iter()
        .map(|&x| {
            let p = cdf(x);
            let c = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            clamped |= c != p;
            c
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let nf = n as f64;
    let sum: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (u[i].ln() + (1.0 - u[n - 1 - i]).ln()))
        .sum();
    let statistic = -nf - sum / nf;
    Ok(AndersonDarling {
        statistic,
        p_value: ad_null_upper_tail(statistic),
        clamped,
    })
}

/// Centre and radius hypothesised for one candidate rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCandidate {
    pub rank: usize,
    pub center: f64,
    pub radius: f64,
}

/// Candidate models from the largest eigenvalues alone (descending order),
/// which is all the centre/radius bookkeeping needs.
pub fn rank_candidates(
    top_descending: &[f64],
    n: usize,
    events: f64,
    max_rank: usize,
) -> Result<Vec<RankCandidate>, HypothesisError> {
    check_common(n, events)?;
    let dim = 1usize << n;
    if max_rank > top_descending.len() {
        return Err(HypothesisError::DimensionMismatch {
            expected: max_rank,
            found: top_descending.len(),
        });
    }
    if max_rank >= dim {
        return Err(HypothesisError::RankTooLarge(max_rank));
    }
    let mut signal = 0.0;
    let mut out = Vec::with_capacity(max_rank + 1);
    for rank in 0..=max_rank {
        if rank > 0 {
            signal += top_descending[rank - 1];
        }
        out.push(RankCandidate {
            rank,
            center: (1.0 - signal) / (dim - rank) as f64,
            radius: semicircle_radius(n, events, rank),
        });
    }
    Ok(out)
}

fn check_common(n: usize, events: f64) -> Result<(), HypothesisError> {
    if n == 0 || n > MAX_ANALYTIC_QUBITS {
        return Err(HypothesisError::QubitCount(n));
    }
    if events.is_nan() || events < 1.0 {
        return Err(HypothesisError::BadEventCount);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub center: f64,
    pub radius: f64,
    /// Eigenvalues above `min λ + 2 R_r`.
    pub screened_signal_count: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub p_eff: f64,
    pub support_violation: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestReport {
    pub qubits: usize,
    pub events: f64,
    pub significance: f64,
    pub rows: Vec<RankRow>,
    /// `None` when no candidate passes.
    pub chosen_rank: Option<usize>,
}

impl RankTestReport {
    pub fn chosen_row(&self) -> Option<&RankRow> {
        self.chosen_rank.and_then(|r| self.rows.iter().find(|row| row.rank == r))
    }

    /// Aligned text table, six significant digits.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:>13}  {:>12}  {:>12}  {:>12}  {:>12}  {:>7}",
            "rank", "center c", "radius R", "AD stat", "P-value", "P_eff", "signal"
        );
        for row in &self.rows {
            let marker = if Some(row.rank) == self.chosen_rank { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:>4}  {:>13.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>7}{}",
                row.rank,
                row.center,
                row.radius,
                row.statistic,
                row.p_value,
                row.p_eff,
                row.screened_signal_count,
                marker
            );
        }
        match self.chosen_rank {
            Some(r) => {
                let _ = writeln!(out, "accepted rank: {r} (significance {})", self.significance);
            }
            None => {
                let _ = writeln!(out, "no rank accepted (significance {})", self.significance);
            }
        }
        out
    }
}

/// Runs the rank-selection procedure for `r = 0..=max_rank`.
pub fn estimate_rank(
    spectrum: &Spectrum,
    n: usize,
    events: f64,
    significance: f64,
    max_rank: usize,
) -> Result<RankTestReport, HypothesisError> {
    check_common(n, events)?;
    if !(significance > 0.0 && significance < 1.0) {
        return Err(HypothesisError::BadSignificance(significance));
    }
    let dim = 1usize << n;
    let values = spectrum.eigenvalues();
    if values.len() != dim {
        return Err(HypothesisError::DimensionMismatch {
            expected: dim,
            found: values.len(),
        });
    }
    if max_rank + MIN_SAMPLE > dim {
        return Err(HypothesisError::RankTooLarge(max_rank));
    }
    let descending: Vec<f64> = values.iter().rev().copied().collect();
    let candidates = rank_candidates(&descending, n, events, max_rank)?;
    let minimum = values[0];
    let mut rows = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let noise = &values[..dim - cand.rank];
        let model = SemicircleModel {
            center: cand.center,
            radius: cand.radius,
        };
        let support_violation = noise.iter().any(|&x| !model.contains(x));
        let ad = anderson_darling(noise, |x| model.cdf(x))?;
        let threshold = minimum + 2.0 * cand.radius;
        rows.push(RankRow {
            rank: cand.rank,
            center: cand.center,
            radius: cand.radius,
            screened_signal_count: values.iter().filter(|&&x| x > threshold).count(),
            statistic: ad.statistic,
            p_value: ad.p_value,
            p_eff: if support_violation { 0.0 } else { ad.p_value },
            support_violation,
            clamped: ad.clamped,
        });
    }
    let chosen_rank = rows
        .iter()
        .find(|row| row.p_eff >= significance && row.center > 0.0)
        .map(|row| row.rank);
    Ok(RankTestReport {
        qubits: n,
        events,
        significance,
        rows,
        chosen_rank,
    })
}

/// Physical estimate from an accepted rank: the top `r` eigenpairs keep
/// their eigenvalues, all others are replaced by the fitted centre, and the
/// trace is renormalised to one.
pub fn reconstruct_physical_estimate(
    decomposition: &Eigendecomposition,
    report: &RankTestReport,
) -> Result<DensityMatrix, HypothesisError> {
    let row = report.chosen_row().ok_or(HypothesisError::NoAcceptedRank)?;
    let dim = decomposition.values.len();
    let mut values = decomposition.values.clone();
    for v in values.iter_mut().take(dim - row.rank) {
        *v = row.center;
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    let matrix = decomposition.compose(&values);
    let matrix = (&matrix + matrix.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
    Ok(DensityMatrix::from_parts(decomposition.qubits, matrix))
}

/// Fraction of spectra whose smallest eigenvalue is strictly negative.
pub fn unphysical_fraction<'a, I>(spectra: I) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (mut total, mut bad) = (0usize, 0usize);
    for s in spectra {
        total += 1;
        if s.iter().any(|&x| x < 0.0) {
            bad += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    bad as f64 / total as f64
}
