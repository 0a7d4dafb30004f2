//! Parallel Monte-Carlo driver and the on-disk ensemble format.
//!
//! A replica is one full simulated tomography run: exact probabilities,
//! sampled counts, linear estimate, sorted spectrum. Each replica draws from
//! its own seed streams, so results do not depend on the worker count.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimation::{
    build_complete_frame, eigenvalues_fast, estimate_complete, reconstruct_values,
    CompleteSchemeFrame, CorrelationAccumulator, CorrelationTensor, EstimationError, Layout,
};
use crate::hypothesis::unphysical_fraction;
use crate::pauli::{
    build_state, outcome_probabilities, DensityMatrix, PauliError, Setting, StateSpec,
    MAX_DENSE_QUBITS,
};
use crate::sampling::{multinomial, poisson, CountMode, CountModel, CountRecord, SamplingError, SeedPolicy};

/// Version of the ensemble directory layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const CHECKSUM_FILE: &str = "checksum.txt";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("replica {replica} failed after {completed} of {total} replicas completed: {source}")]
    Partial {
        completed: u64,
        total: u64,
        replica: u64,
        #[source]
        source: Box<EnsembleError>,
    },
    #[error("cannot allocate storage for {0} replicas")]
    ResourceExhausted(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed ensemble file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("ensemble schema version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error("row {row} has {found} eigenvalues, expected {expected}")]
    Dimension { row: usize, expected: usize, found: usize },
    #[error("ensemble is empty")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EnsembleError + '_ {
    move |source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// All `3ⁿ` local Pauli settings.
    #[default]
    Overcomplete,
    /// The `4ⁿ` product projectors onto `|0⟩, |1⟩, |+⟩, |+i⟩`.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub state: StateSpec,
    pub scheme: Scheme,
    /// Events per setting for the overcomplete scheme, `N_total` for the
    /// complete scheme (which always uses Poisson counts).
    pub counts: CountModel,
    pub replicas: u64,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn overcomplete(state: StateSpec, counts: CountModel, replicas: u64, master_seed: u64) -> Self {
        Self {
            state,
            scheme: Scheme::Overcomplete,
            counts,
            replicas,
            master_seed,
        }
    }

    pub fn complete(state: StateSpec, total_counts: u64, replicas: u64, master_seed: u64) -> Self {
        Self {
            state,
            scheme: Scheme::Complete,
            counts: CountModel::poisson(total_counts),
            replicas,
            master_seed,
        }
    }

    pub fn qubits(&self) -> usize {
        self.state.n
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.replicas == 0 {
            return Err(EnsembleError::Config("replicas must be at least 1".into()));
        }
        self.state.validate()?;
        if self.state.n > MAX_DENSE_QUBITS {
            return Err(PauliError::QubitCount(self.state.n, MAX_DENSE_QUBITS).into());
        }
        self.counts.validate()?;
        if self.scheme == Scheme::Complete && self.counts.mode != CountMode::Poisson {
            return Err(EnsembleError::Config(
                "the complete scheme takes a Poisson total count".into(),
            ));
        }
        Ok(())
    }
}

enum Plan {
    Overcomplete {
        layout: Arc<Layout>,
        probabilities: Vec<Vec<f64>>,
    },
    Complete {
        frame: Arc<CompleteSchemeFrame>,
        probabilities: Vec<f64>,
        flux: f64,
    },
}

/// Precomputed per-configuration state; every replica is a pure function
/// of the configuration and its index.
pub struct Simulator {
    config: ExperimentConfig,
    state: DensityMatrix,
    plan: Plan,
}

impl Simulator {
    pub fn new(config: &ExperimentConfig) -> Result<Self, EnsembleError> {
        config.validate()?;
        let n = config.qubits();
        let state = build_state(&config.state)?;
        let plan = match config.scheme {
            Scheme::Overcomplete => {
                let probabilities = Setting::all(n)
                    .map(|s| outcome_probabilities(&state, &s))
                    .collect::<Result<Vec<_>, _>>()?;
                Plan::Overcomplete {
                    layout: Layout::get(n)?,
                    probabilities,
                }
            }
            Scheme::Complete => {
                let frame = build_complete_frame(n)?;
                let probabilities = frame.probabilities(&state)?;
                // white noise gives Σ_v p_v = 2ⁿ, so N_total events on average
                let flux = config.counts.events as f64 / (1u64 << n) as f64;
                Plan::Complete {
                    frame,
                    probabilities,
                    flux,
                }
            }
        };
        Ok(Self {
            config: config.clone(),
            state,
            plan,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// The true state being measured.
    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    /// Raw counts of one replica: one record per setting for the
    /// overcomplete scheme, a single record over all projectors otherwise.
    pub fn replica_counts(&self, replica: u64) -> Vec<CountRecord> {
        let seed = self.config.master_seed;
        match &self.plan {
            Plan::Overcomplete { probabilities, .. } => probabilities
                .iter()
                .enumerate()
                .map(|(s, probs)| {
                    let mut rng = SeedPolicy::new(seed, replica, s as u64).rng();
                    let counts = match self.config.counts.mode {
                        CountMode::Multinomial => multinomial(probs, self.config.counts.events, &mut rng),
                        CountMode::Poisson => probs
                            .iter()
                            .map(|&p| poisson(self.config.counts.events as f64 * p, &mut rng))
                            .collect(),
                    };
                    CountRecord::new(s, counts)
                })
                .collect(),
            Plan::Complete {
                probabilities, flux, ..
            } => {
                let mut rng = SeedPolicy::new(seed, replica, 0).rng();
                let counts = probabilities.iter().map(|&p| poisson(flux * p, &mut rng)).collect();
                vec![CountRecord::new(0, counts)]
            }
        }
    }

    /// Correlation estimates of one overcomplete replica.
    pub fn replica_correlations(&self, replica: u64) -> Result<CorrelationTensor, EnsembleError> {
        let records = self.replica_counts(replica);
        Ok(crate::estimation::estimate_correlations(self.config.qubits(), &records)?)
    }

    /// The linear estimate of one replica.
    pub fn replica_estimate(&self, replica: u64) -> Result<DensityMatrix, EnsembleError> {
        let n = self.config.qubits();
        let records = self.replica_counts(replica);
        match &self.plan {
            Plan::Overcomplete { layout, .. } => {
                let values = self.accumulate(&records)?;
                Ok(DensityMatrix::from_parts(n, reconstruct_values(layout, &values)))
            }
            Plan::Complete { frame, flux, .. } => Ok(estimate_complete(frame, &records[0].counts, *flux)?),
        }
    }

    /// Sorted eigenvalues of one replica's linear estimate.
    pub fn replica_spectrum(&self, replica: u64) -> Result<Vec<f64>, EnsembleError> {
        match &self.plan {
            Plan::Overcomplete { layout, .. } => {
                let values = self.accumulate(&self.replica_counts(replica))?;
                Ok(eigenvalues_fast(reconstruct_values(layout, &values)))
            }
            Plan::Complete { .. } => Ok(eigenvalues_fast(self.replica_estimate(replica)?.into_matrix())),
        }
    }

    fn accumulate(&self, records: &[CountRecord]) -> Result<Vec<f64>, EnsembleError> {
        let mut acc = CorrelationAccumulator::new(self.config.qubits())?;
        for rec in records {
            acc.add_counts(rec.setting_index, &rec.counts)?;
        }
        Ok(acc.finish())
    }
}

/// Pooled summary statistics of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replicas: u64,
    pub qubits: usize,
    pub unphysical_fraction: f64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m6: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub mean_largest_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEnsemble {
    pub config: ExperimentConfig,
    /// One ascending eigenvalue row per replica.
    pub rows: Vec<Vec<f64>>,
}

impl SpectrumEnsemble {
    pub fn new(config: ExperimentConfig, rows: Vec<Vec<f64>>) -> Result<Self, EnsembleError> {
        let dim = 1usize << config.qubits();
        for (row, values) in rows.iter().enumerate() {
            if values.len() != dim {
                return Err(EnsembleError::Dimension {
                    row,
                    expected: dim,
                    found: values.len(),
                });
            }
        }
        Ok(Self { config, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn pooled(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().flatten().copied()
    }

    pub fn summary(&self) -> Result<EnsembleSummary, EnsembleError> {
        let moments = empirical_moments(self, 6)?;
        let (lo, hi) = self
            .pooled()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let largest = self.rows.iter().map(|r| r[r.len() - 1]).sum::<f64>() / self.rows.len() as f64;
        Ok(EnsembleSummary {
            replicas: self.rows.len() as u64,
            qubits: self.config.qubits(),
            unphysical_fraction: unphysical_fraction(self.rows.iter().map(Vec::as_slice)),
            mean: moments.mean,
            m2: moments.central[2],
            m3: moments.central[3],
            m4: moments.central[4],
            m6: moments.central[6],
            min_eigenvalue: lo,
            max_eigenvalue: hi,
            mean_largest_eigenvalue: largest,
        })
    }
}

/// Mean and central moments `m_0 … m_kmax` of the pooled eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub central: Vec<f64>,
}

pub fn empirical_moments(ensemble: &SpectrumEnsemble, k_max: usize) -> Result<Moments, EnsembleError> {
    let count = ensemble.rows.iter().map(Vec::len).sum::<usize>();
    if count == 0 {
        return Err(EnsembleError::Empty);
    }
    let mean = ensemble.pooled().sum::<f64>() / count as f64;
    let mut central = vec![0.0; k_max + 1];
    for x in ensemble.pooled() {
        let d = x - mean;
        let mut p = 1.0;
        for m in central.iter_mut() {
            *m += p;
            p *= d;
        }
    }
    central.iter_mut().for_each(|m| *m /= count as f64);
    if k_max >= 1 {
        central[1] = 0.0;
    }
    Ok(Moments { mean, central })
}

/// Runs every replica of `config` in parallel on the current rayon pool.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<SpectrumEnsemble, EnsembleError> {
    run_ensemble_with_progress(config, |_, _| {})
}

/// As [`run_ensemble`], calling `progress(done, total)` after each replica.
pub fn run_ensemble_with_progress<P>(config: &ExperimentConfig, progress: P) -> Result<SpectrumEnsemble, EnsembleError>
where
    P: Fn(u64, u64) + Sync,
{
    let sim = Simulator::new(config)?;
    let total = config.replicas;
    let dim = 1usize << config.qubits();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    rows.try_reserve_exact(total as usize)
        .map_err(|_| EnsembleError::ResourceExhausted(total))?;
    (total as usize)
        .checked_mul(dim * std::mem::size_of::<f64>())
        .ok_or(EnsembleError::ResourceExhausted(total))?;
    let done = AtomicU64::new(0);
    let results: Vec<Result<Vec<f64>, EnsembleError>> = (0..total)
        .into_par_iter()
        .map(|replica| {
            let row = sim.replica_spectrum(replica);
            if row.is_ok() {
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            }
            row
        })
        .collect();
    let completed = results.iter().filter(|r| r.is_ok()).count() as u64;
    for (replica, result) in results.into_iter().enumerate() {
        match result {
            Ok(row) => rows.push(row),
            Err(source) => {
                return Err(EnsembleError::Partial {
                    completed,
                    total,
                    replica: replica as u64,
                    source: Box::new(source),
                })
            }
        }
    }
    SpectrumEnsemble::new(config.clone(), rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    schema_version: u32,
    code_version: String,
    master_seed: u64,
    config: ExperimentConfig,
}

/// The `spectra.csv` body for `ensemble`.
pub fn spectra_csv(ensemble: &SpectrumEnsemble) -> String {
    let dim = 1usize << ensemble.config.qubits();
    let mut out = String::with_capacity(ensemble.rows.len() * dim * 24 + 64);
    out.push_str("replica");
    for i in 1..=dim {
        let _ = write!(out, ",l_{i}");
    }
    out.push('\n');
    for (i, row) in ensemble.rows.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `config.json`, `spectra.csv` and `checksum.txt` into `dir`.
pub fn save_ensemble(ensemble: &SpectrumEnsemble, dir: &Path) -> Result<(), EnsembleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config = ConfigFile {
        schema_version: SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: ensemble.config.master_seed,
        config: ensemble.config.clone(),
    };
    let json = serde_json::to_string_pretty(&config).expect("config serialises");
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let csv = spectra_csv(ensemble);
    let path = dir.join(SPECTRA_FILE);
    fs::write(&path, &csv).map_err(io_err(&path))?;
    let path = dir.join(CHECKSUM_FILE);
    fs::write(&path, sha256_hex(csv.as_bytes()) + "\n").map_err(io_err(&path))?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<SpectrumEnsemble, EnsembleError> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| EnsembleError::Malformed {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| EnsembleError::Malformed {
            path: path.clone(),
            reason: "missing schema_version".into(),
        })?;
    if version > SCHEMA_VERSION as u64 {
        return Err(EnsembleError::Version {
            found: version.min(u32::MAX as u64) as u32,
            supported: SCHEMA_VERSION,
        });
    }
    let file: ConfigFile = serde_json::from_value(raw).map_err(|e| EnsembleError::Malformed {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let config = file.config;

    let spectra_path = dir.join(SPECTRA_FILE);
    let csv = fs::read(&spectra_path).map_err(io_err(&spectra_path))?;
    let checksum_path = dir.join(CHECKSUM_FILE);
    let expected = fs::read_to_string(&checksum_path).map_err(io_err(&checksum_path))?;
    let expected = expected.trim().to_ascii_lowercase();
    let found = sha256_hex(&csv);
    if expected != found {
        return Err(EnsembleError::Checksum { expected, found });
    }
    let csv = String::from_utf8(csv).map_err(|_| EnsembleError::Malformed {
        path: spectra_path.clone(),
        reason: "not UTF-8".into(),
    })?;
    let rows = parse_spectra(&csv, &spectra_path, 1usize << config.qubits())?;
    SpectrumEnsemble::new(config, rows)
}

fn parse_spectra(csv: &str, path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, EnsembleError> {
    let malformed = |reason: String| EnsembleError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"replica") {
        return Err(malformed("header must start with `replica`".into()));
    }
    if columns.len() - 1 != dim {
        return Err(EnsembleError::Dimension {
            row: 0,
            expected: dim,
            found: columns.len() - 1,
        });
    }
    if !csv.ends_with('\n') {
        return Err(malformed("truncated final line".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let index: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| malformed(format!("bad replica index on row {i}")))?;
        if index != i {
            return Err(malformed(format!("replica index {index} on row {i}")));
        }
        let values = fields
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(format!("row {i}: {e}")))?;
        if values.len() != dim {
            return Err(EnsembleError::Dimension {
                row: i,
                expected: dim,
                found: values.len(),
            });
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(malformed("no replica rows".into()));
    }
    Ok(rows)
}

/// Counts of one replica as CSV (`setting,outcome,count`).
pub fn counts_csv(sim: &Simulator, replica: u64) -> String {
    let mut out = String::from("setting,outcome,count\n");
    for rec in sim.replica_counts(replica) {
        for (outcome, c) in rec.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{outcome},{c}", rec.setting_index);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wn(n: usize, events: u64, replicas: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig::overcomplete(StateSpec::white_noise(n), CountModel::multinomial(events), replicas, seed)
    }

    #[test]
    fn rows_are_sorted_and_unit_trace() {
        let ens = run_ensemble(&wn(3, 50, 20, 1)).unwrap();
        assert_eq!(ens.len(), 20);
        for row in &ens.rows {
            assert_eq!(row.len(), 8);
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_replica_is_reproducible() {
        let cfg = wn(2, 100, 1, 99);
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.rows.len(), 1);
        let bits = |e: &SpectrumEnsemble| e.rows[0].iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = ExperimentConfig::overcomplete(StateSpec::ghz(3, 0.7), CountModel::poisson(80), 40, 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&cfg).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(spectra_csv(&one), spectra_csv(&run(3)));
    }

    #[test]
    fn degenerate_ensemble_has_zero_central_moments() {
        let ens = SpectrumEnsemble::new(wn(1, 10, 3, 0), vec![vec![0.5, 0.5]; 3]).unwrap();
        let m = empirical_moments(&ens, 6).unwrap();
        assert_eq!(m.mean, 0.5);
        assert!(m.central[2..].iter().all(|&x| x == 0.0));
        assert_eq!(m.central[0], 1.0);
    }

    #[test]
    fn moments_match_direct_computation() {
        let ens = SpectrumEnsemble::new(wn(1, 10, 2, 0), vec![vec![0.2, 0.8], vec![-0.1, 1.1]]).unwrap();
        let m = empirical_moments(&ens, 4).unwrap();
        let xs = [0.2, 0.8, -0.1, 1.1];
        let mean = xs.iter().sum::<f64>() / 4.0;
        let direct = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(m.central[2], direct(2), epsilon = 1e-15);
        assert_abs_diff_eq!(m.central[3], direct(3), epsilon = 1e-15);
        assert_abs_diff_eq!(m.central[4], direct(4), epsilon = 1e-15);
        let s = ens.summary().unwrap();
        assert_eq!(s.unphysical_fraction, 0.5);
        assert_abs_diff_eq!(s.mean_largest_eigenvalue, 0.95, epsilon = 1e-15);
    }

    #[test]
    fn pooled_mean_is_two_to_minus_n() {
        let ens = run_ensemble(&wn(3, 100, 200, 2)).unwrap();
        let m = empirical_moments(&ens, 2).unwrap();
        // every row has trace one, so the pooled mean is exact
        assert_abs_diff_eq!(m.mean, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(run_ensemble(&wn(2, 10, 0, 0)), Err(EnsembleError::Config(_))));
        assert!(matches!(
            run_ensemble(&wn(2, 0, 1, 0)),
            Err(EnsembleError::Sampling(SamplingError::ZeroEvents))
        ));
        let mut cfg = ExperimentConfig::complete(StateSpec::white_noise(2), 1000, 1, 0);
        cfg.counts.mode = CountMode::Multinomial;
        assert!(matches!(run_ensemble(&cfg), Err(EnsembleError::Config(_))));
        assert!(matches!(run_ensemble(&wn(7, 10, 1, 0)), Err(EnsembleError::Pauli(_))));
    }

    #[test]
    fn starved_poisson_run_reports_partial_failure() {
        let cfg = ExperimentConfig::overcomplete(StateSpec::white_noise(2), CountModel::poisson(1), 30, 4);
        match run_ensemble(&cfg) {
            Err(EnsembleError::Partial { completed, total, .. }) => {
                assert_eq!(total, 30);
                assert!(completed < 30);
            }
            other => panic!("expected partial failure, got {other:?}"),
        }
    }

    #[test]
    fn complete_scheme_runs_and_has_unit_trace() {
        let cfg = ExperimentConfig::complete(StateSpec::ghz(2, 0.5), 100_000, 5, 8);
        let ens = run_ensemble(&cfg).unwrap();
        for row in &ens.rows {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        let sim = Simulator::new(&cfg).unwrap();
        let recs = sim.replica_counts(0);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].counts.len(), 16);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ens = run_ensemble(&ExperimentConfig::overcomplete(
            StateSpec::ghz(2, 0.3),
            CountModel::multinomial(40),
            7,
            11,
        ))
        .unwrap();
        save_ensemble(&ens, dir.path()).unwrap();
        let back = load_ensemble(dir.path()).unwrap();
        assert_eq!(back.config, ens.config);
        for (a, b) in back.rows.iter().zip(&ens.rows) {
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
        let header = fs::read_to_string(dir.path().join(SPECTRA_FILE)).unwrap();
        assert!(header.starts_with("replica,l_1,l_2,l_3,l_4\n"));
    }

    fn rewrite_spectra(dir: &Path, body: &str) {
        fs::write(dir.join(SPECTRA_FILE), body).unwrap();
        fs::write(dir.join(CHECKSUM_FILE), sha256_hex(body.as_bytes())).unwrap();
    }

    #[test]
    fn load_failures_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let ens = run_ensemble(&wn(1, 10, 3, 0)).unwrap();
        save_ensemble(&ens, dir.path()).unwrap();
        let body = fs::read_to_string(dir.path().join(SPECTRA_FILE)).unwrap();

        fs::write(dir.path().join(SPECTRA_FILE), body.replace('5', "6")).unwrap();
        assert!(matches!(load_ensemble(dir.path()), Err(EnsembleError::Checksum { .. })));

        rewrite_spectra(dir.path(), &body[..body.len() - 3]);
        assert!(matches!(load_ensemble(dir.path()), Err(EnsembleError::Malformed { .. })));

        let short = "replica,l_1,l_2\n0,0.5\n";
        rewrite_spectra(dir.path(), short);
        assert!(matches!(
            load_ensemble(dir.path()),
            Err(EnsembleError::Dimension { row: 0, expected: 2, found: 1 })
        ));

        rewrite_spectra(dir.path(), &body);
        let cfg_path = dir.path().join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).unwrap();
        fs::write(&cfg_path, text.replace("\"schema_version\": 1", "\"schema_version\": 99")).unwrap();
        assert!(matches!(
            load_ensemble(dir.path()),
            Err(EnsembleError::Version { found: 99, .. })
        ));
        fs::write(&cfg_path, "{").unwrap();
        assert!(matches!(load_ensemble(dir.path()), Err(EnsembleError::Malformed { .. })));
    }

    #[test]
    fn counts_dump_lists_every_outcome() {
        let sim = Simulator::new(&wn(2, 10, 1, 3)).unwrap();
        let csv = counts_csv(&sim, 0);
        assert_eq!(csv.lines().count(), 1 + 9 * 4);
    }
}
