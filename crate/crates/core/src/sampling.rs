//! Synthetic count generation.
//!
//! Every `(master_seed, replica, setting)` triple owns an independent
//! ChaCha8 stream. The 256-bit key is derived by chaining SplitMix64 over the
//! three values, so a stream never depends on scheduling or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const NORMALISATION_TOLERANCE: f64 = 1e-9;
const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("probabilities sum to {0}, expected 1")]
    BadNormalisation(f64),
    #[error("probability {0} is negative")]
    NegativeProbability(f64),
    #[error("events per setting must be at least 1")]
    ZeroEvents,
    #[error("setting {setting} recorded no events")]
    EmptySetting { setting: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Exactly `events` counts per setting.
    #[default]
    Multinomial,
    /// Independent Poisson counts with `events` expected in total.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountModel {
    pub mode: CountMode,
    pub events: u64,
}

impl CountModel {
    pub fn multinomial(events: u64) -> Self {
        Self {
            mode: CountMode::Multinomial,
            events,
        }
    }

    pub fn poisson(events: u64) -> Self {
        Self {
            mode: CountMode::Poisson,
            events,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.events == 0 {
            return Err(SamplingError::ZeroEvents);
        }
        Ok(())
    }
}

/// Identifies one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    pub replica: u64,
    pub setting: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64, replica: u64, setting: u64) -> Self {
        Self {
            master_seed,
            replica,
            setting,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let k0 = splitmix64(self.master_seed);
        let k1 = splitmix64(k0 ^ self.replica);
        let k2 = splitmix64(k1 ^ self.setting);
        let k3 = splitmix64(k2 ^ 0x7a5f_3c1d_e08b_4926);
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip([k0, k1, k2, k3]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counts `c_r` observed for one setting (or one projector).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting_index: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl CountRecord {
    pub fn new(setting_index: usize, counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self {
            setting_index,
            counts,
            total,
        }
    }
}

fn check_probabilities(probs: &[f64]) -> Result<(), SamplingError> {
    if let Some(&p) = probs.iter().find(|&&p| p < -NEGATIVE_TOLERANCE) {
        return Err(SamplingError::NegativeProbability(p));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALISATION_TOLERANCE {
        return Err(SamplingError::BadNormalisation(sum));
    }
    Ok(())
}

/// Draws one count vector. Multinomial draws use sequential
/// conditional-binomial splitting; Poisson draws are independent per outcome.
pub fn sample_counts(
    probs: &[f64],
    model: CountModel,
    seed: SeedPolicy,
) -> Result<CountRecord, SamplingError> {
    model.validate()?;
    check_probabilities(probs)?;
    let mut rng = seed.rng();
    let counts = match model.mode {
        CountMode::Multinomial => multinomial(probs, model.events, &mut rng),
        CountMode::Poisson => probs
            .iter()
            .map(|&p| poisson(model.events as f64 * p.max(0.0), &mut rng))
            .collect(),
    };
    Ok(CountRecord::new(seed.setting as usize, counts))
}

pub(crate) fn multinomial<R: Rng>(probs: &[f64], events: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = events;
    let mut mass_left = 1.0f64;
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == last {
            counts[i] = remaining;
            break;
        }
        let p = p.max(0.0);
        if p == 0.0 {
            continue;
        }
        let conditional = (p / mass_left).clamp(0.0, 1.0);
        let draw = if conditional >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, conditional)
                .expect("conditional probability lies in [0, 1]")
                .sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
        mass_left -= p;
    }
    counts
}

pub(crate) fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("positive finite Poisson mean")
        .sample(rng);
    draw as u64
}

/// Relative frequencies `f_r = c_r / N_s`.
pub fn frequencies(record: &CountRecord) -> Result<Vec<f64>, SamplingError> {
    if record.total == 0 {
        return Err(SamplingError::EmptySetting {
            setting: record.setting_index,
        });
    }
    let total = record.total as f64;
    Ok(record.counts.iter().map(|&c| c as f64 / total).collect())
}
