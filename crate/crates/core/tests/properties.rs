use proptest::prelude::*;

use tomospec::ensemble::{run_ensemble, spectra_csv, ExperimentConfig};
use tomospec::estimation::{
    build_complete_frame, eigh, estimate_complete_from_frequencies, estimate_correlations, reconstruct_linear,
    spectrum_of, CorrelationTensor, Spectrum,
};
use tomospec::hypothesis::{anderson_darling, estimate_rank, reconstruct_physical_estimate};
use tomospec::pauli::{build_state, correlation_values, StateSpec};
use tomospec::sampling::{sample_counts, CountModel, SeedPolicy};
use tomospec::spectral::{min_counts, physicality_probability, SemicircleModel};
use tomospec::quadrature::integrate;

fn state_strategy(max_qubits: usize) -> impl Strategy<Value = StateSpec> {
    (1..=max_qubits, 0.0f64..=1.0, any::<u64>(), 0usize..4).prop_flat_map(|(n, q, seed, kind)| {
        let dim = 1usize << n;
        (1..=dim.min(4)).prop_map(move |r| match kind {
            0 => StateSpec::ghz(n, q),
            1 => StateSpec::pure_random(n, q, seed),
            2 => StateSpec::rank_random(n, r, q, seed),
            _ => StateSpec::dicke(n, (seed as usize) % (n + 1), q),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn built_states_are_positive(spec in state_strategy(4)) {
        let rho = build_state(&spec).unwrap();
        let s = spectrum_of(&rho).unwrap();
        prop_assert!(s.min() >= -1e-12);
        prop_assert!((s.sum() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_seed(
        weights in prop::collection::vec(0.01f64..1.0, 2..9),
        events in 1u64..5000,
        master in any::<u64>(), replica in any::<u64>(), setting in 0u64..1000,
        poisson in any::<bool>(),
    ) {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let model = if poisson { CountModel::poisson(events) } else { CountModel::multinomial(events) };
        let seed = SeedPolicy::new(master, replica, setting);
        let a = sample_counts(&probs, model, seed).unwrap();
        let b = sample_counts(&probs, model, seed).unwrap();
        prop_assert_eq!(&a, &b);
        if !poisson {
            prop_assert_eq!(a.total, events);
        }
    }

    #[test]
    fn linear_estimates_have_unit_trace(spec in state_strategy(3), events in 1u64..400, seed in any::<u64>()) {
        let cfg = ExperimentConfig::overcomplete(spec, CountModel::multinomial(events), 1, seed);
        let sim = tomospec::ensemble::Simulator::new(&cfg).unwrap();
        let records = sim.replica_counts(0);
        let t = estimate_correlations(cfg.qubits(), &records).unwrap();
        prop_assert_eq!(t.values()[0], 1.0);
        let rho = reconstruct_linear(&t).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() <= 1e-12);
        let s = spectrum_of(&rho).unwrap();
        prop_assert!((s.sum() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn schemes_agree_on_exact_data(spec in state_strategy(3)) {
        let rho = build_state(&spec).unwrap();
        let frame = build_complete_frame(spec.n).unwrap();
        let probs = frame.probabilities(&rho).unwrap();
        let complete = estimate_complete_from_frequencies(&frame, &probs).unwrap();
        let t = CorrelationTensor::new(spec.n, correlation_values(&rho)).unwrap();
        let linear = reconstruct_linear(&t).unwrap();
        prop_assert!((complete.matrix() - linear.matrix()).camax() <= 1e-9);
    }

    #[test]
    fn semicircle_moments_match_quadrature(c in -1.0f64..1.0, r in 0.01f64..2.0, k in 1u32..=4) {
        let m = SemicircleModel::new(c, r).unwrap();
        let numeric = integrate(|x| m.pdf(x) * (x - c).powi(2 * k as i32), c - r, c + r, 1e-12);
        let exact = m.moment(2 * k);
        prop_assert!((numeric / exact - 1.0).abs() <= 1e-6, "{} vs {}", numeric, exact);
        prop_assert!((m.cdf(c) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn physicality_is_monotone_in_counts(n in 1usize..=8, q in 0.0f64..0.95) {
        let n0 = min_counts(n, q).unwrap() as f64;
        let mut previous = 0.0;
        for i in 1..=30 {
            let events = n0 * i as f64 / 20.0;
            let m = SemicircleModel::noise_model(n, events.max(1.0), q, 1).unwrap();
            let p = physicality_probability(&m, n);
            prop_assert!(p >= previous);
            if events >= n0 {
                prop_assert_eq!(p, 1.0);
            }
            previous = p;
        }
    }

    #[test]
    fn anderson_darling_is_invariant_under_increasing_maps(
        sample in prop::collection::vec(-0.99f64..0.99, 5..60),
        a in 0.01f64..100.0, b in -10.0f64..10.0,
    ) {
        let m = SemicircleModel::new(0.0, 1.0).unwrap();
        let base = anderson_darling(&sample, |x| m.cdf(x)).unwrap();
        let mapped: Vec<f64> = sample.iter().map(|x| a * x + b).collect();
        let other = anderson_darling(&mapped, |y| m.cdf((y - b) / a)).unwrap();
        prop_assert!((base.statistic - other.statistic).abs() <= 1e-8 * base.statistic.abs().max(1.0));
        let cubed: Vec<f64> = sample.iter().map(|x| x * x * x).collect();
        let other = anderson_darling(&cubed, |y| m.cdf(y.cbrt())).unwrap();
        prop_assert!((base.statistic - other.statistic).abs() <= 1e-8 * base.statistic.abs().max(1.0));
    }

    #[test]
    fn rank_reports_are_consistent(spec in state_strategy(4), events in 50u64..5000, seed in any::<u64>()) {
        prop_assume!(spec.n >= 3);
        let cfg = ExperimentConfig::overcomplete(spec, CountModel::multinomial(events), 1, seed);
        let sim = tomospec::ensemble::Simulator::new(&cfg).unwrap();
        let estimate = sim.replica_estimate(0).unwrap();
        let decomposition = eigh(&estimate).unwrap();
        let spectrum: Spectrum = decomposition.spectrum();
        let dim = spectrum.len();
        let report = estimate_rank(&spectrum, cfg.qubits(), events as f64, 0.05, dim - 5).unwrap();
        let desc: Vec<f64> = spectrum.eigenvalues().iter().rev().copied().collect();
        for row in &report.rows {
            let top: f64 = desc[..row.rank].iter().sum();
            prop_assert!((row.center * (dim - row.rank) as f64 + top - 1.0).abs() <= 1e-12);
            prop_assert!(row.p_eff <= row.p_value);
            if !row.support_violation {
                prop_assert_eq!(row.p_eff, row.p_value);
            }
        }
        if let Some(row) = report.chosen_row() {
            prop_assert!(row.center > 0.0);
            let physical = reconstruct_physical_estimate(&decomposition, &report).unwrap();
            let s = spectrum_of(&physical).unwrap();
            prop_assert!(s.min() >= -1e-12);
            prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensembles_do_not_depend_on_worker_count(spec in state_strategy(3), events in 1u64..300, seed in any::<u64>(), poisson in any::<bool>()) {
        let counts = if poisson { CountModel::poisson(events.max(30)) } else { CountModel::multinomial(events) };
        let cfg = ExperimentConfig::overcomplete(spec, counts, 12, seed);
        let run = |threads| rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&cfg).unwrap());
        prop_assert_eq!(spectra_csv(&run(1)), spectra_csv(&run(5)));
    }
}
