mod common;

use gaitroc::cohort::{parse_cohort_csv, write_cohort_csv, GAIT_VARIABLES};
use gaitroc::features::build_feature_matrix;
use gaitroc::synth::{generate, generate_with, SynthParams};
use gaitroc::Execution;

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per variable, the rates of the patients whose w1 falls in `[lo, hi)`,
/// recomputed from the written CSV.
fn binned_rates(params: &SynthParams, bins: &[(f64, f64)]) -> Vec<Vec<Vec<f64>>> {
    let csv = write_cohort_csv(&generate(params).unwrap().cohort);
    let fm = build_feature_matrix(&parse_cohort_csv(&csv, "synth").unwrap()).unwrap();
    (1..=GAIT_VARIABLES.len())
        .map(|j| {
            bins.iter()
                .map(|&(lo, hi)| {
                    (0..fm.n_rows()).filter(|&i| fm.x[[i, 0]] >= lo && fm.x[[i, 0]] < hi).map(|i| fm.x[[i, j]]).collect()
                })
                .collect()
        })
        .collect()
}

#[test]
fn early_first_visits_spread_wider() {
    let params = SynthParams { n_patients: 200, seed: 7, ..SynthParams::default() };
    for (j, bins) in binned_rates(&params, &[(0.0, 8.0), (18f64.next_up(), f64::INFINITY)]).iter().enumerate() {
        assert!(bins[0].len() >= 2 && bins[1].len() >= 2);
        assert!(sd(&bins[0]) > sd(&bins[1]), "{}: {} vs {}", GAIT_VARIABLES[j], sd(&bins[0]), sd(&bins[1]));
    }
}

#[test]
fn binned_spread_is_non_increasing() {
    let params = SynthParams { n_patients: 200, seed: 7, ..SynthParams::default() };
    for (j, bins) in binned_rates(&params, &[(1.0, 8.0), (8.0, 16.0), (16.0, 26.0 + 1e-9)]).iter().enumerate() {
        let s: Vec<f64> = bins.iter().map(|b| sd(b)).collect();
        let inversions = s.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(inversions <= 1, "{}: {s:?}", GAIT_VARIABLES[j]);
        assert!(s.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{}: {s:?}", GAIT_VARIABLES[j]);
    }
}

#[test]
fn label_rate_within_three_standard_errors() {
    for (n, rate) in [(100, 0.3), (200, 0.3), (500, 0.1), (300, 0.5)] {
        for seed in 0..5 {
            let c = generate(&SynthParams { n_patients: n, complication_rate: rate, seed, ..SynthParams::default() })
                .unwrap()
                .cohort;
            let observed = c.patients.iter().filter(|p| p.complication).count() as f64 / n as f64;
            let se = (rate * (1.0 - rate) / n as f64).sqrt();
            assert!((observed - rate).abs() <= 3.0 * se, "n={n} seed={seed}: {observed}");
        }
    }
}

#[test]
fn every_patient_has_two_ordered_visits() {
    let out = generate(&SynthParams { n_patients: 300, seed: 3, ..SynthParams::default() }).unwrap();
    for (p, t) in out.cohort.patients.iter().zip(&out.truth.patients) {
        assert_eq!(p.visits.len(), 2);
        assert!(p.visits[1].weeks_since_injury > p.visits[0].weeks_since_injury);
        assert_eq!(p.visits[0].weeks_since_injury, t.w1);
        assert_eq!(p.visits[1].weeks_since_injury, t.w2);
        assert_eq!(p.complication, t.complication);
    }
}

#[test]
fn output_is_byte_deterministic() {
    let params = SynthParams { n_patients: 150, seed: 99, ..SynthParams::default() };
    let a = generate_with(&params, Execution::Sequential).unwrap();
    let b = generate_with(&params, Execution::Parallel).unwrap();
    let c = generate(&params).unwrap();
    assert_eq!(write_cohort_csv(&a.cohort), write_cohort_csv(&b.cohort));
    assert_eq!(write_cohort_csv(&a.cohort), write_cohort_csv(&c.cohort));
    assert_eq!(serde_json::to_string(&a.truth).unwrap(), serde_json::to_string(&c.truth).unwrap());
    let other = generate(&SynthParams { seed: 100, ..params }).unwrap();
    assert_ne!(write_cohort_csv(&a.cohort), write_cohort_csv(&other.cohort));
}

#[test]
fn null_signal_flattens_every_rate() {
    let out = generate(&SynthParams {
        signal_strength: 0.0,
        noise_floor: 0.0,
        funnel_decay_tau: None,
        seed: 5,
        ..SynthParams::default()
    })
    .unwrap();
    let fm = build_feature_matrix(&out.cohort).unwrap();
    assert!(fm.x.columns().into_iter().skip(1).all(|c| c.iter().all(|&v| v == 0.0)));
}

#[test]
fn invalid_parameters_are_rejected() {
    let base = SynthParams::default();
    for bad in [
        SynthParams { n_patients: 0, ..base.clone() },
        SynthParams { complication_rate: 1.5, ..base.clone() },
        SynthParams { funnel_decay_tau: Some(0.0), ..base.clone() },
        SynthParams { noise_floor: -1.0, ..base.clone() },
        SynthParams { gap_range: (3.0, 2.0), ..base.clone() },
        SynthParams { p_readmission_with_condition: -0.1, ..base.clone() },
    ] {
        assert!(generate(&bad).is_err(), "{bad:?}");
    }
}
