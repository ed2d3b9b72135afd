mod common;

use proptest::prelude::*;

use drfcuc::drcc::{
    cantelli_factor, estimate_moments, generate_scenarios, individual_factor, moment_min_factor, unimodal_min_factor, vp_factor,
    AmbiguitySpec, DrccError, Provenance, ScenarioSet, ScenarioSource, UNIMODAL_EPS_MAX,
};
use drfcuc::eval::paired_scenarios;

#[test]
fn same_seed_same_draws() {
    let inst = common::five_bus();
    let src = ScenarioSource::from_instance(&inst);
    let a = generate_scenarios(&src, 50, 7, Provenance::InSample);
    let b = generate_scenarios(&src, 50, 7, Provenance::InSample);
    let c = generate_scenarios(&src, 50, 8, Provenance::InSample);
    assert_eq!(a, b);
    assert_ne!(a.values, c.values);
}

#[test]
fn draws_stay_within_capacity() {
    let inst = common::five_bus();
    let set = generate_scenarios(&ScenarioSource::from_instance(&inst), 500, 1, Provenance::InSample);
    for s in 0..set.samples {
        for (w, farm) in inst.wind_farms.iter().enumerate() {
            for t in 0..set.horizon {
                let v = set.get(s, w, t);
                assert!((0.0..=farm.capacity).contains(&v));
            }
        }
    }
}

#[test]
fn paired_sets_are_disjoint_blocks_of_one_stream() {
    let inst = common::five_bus();
    let (inn, out) = paired_scenarios(&inst, 42, 30, 70);
    let whole = generate_scenarios(&ScenarioSource::from_instance(&inst), 100, 42, Provenance::InSample);
    assert_eq!(inn.provenance, Provenance::InSample);
    assert_eq!(out.provenance, Provenance::OutOfSample);
    assert_eq!((inn.samples, out.samples), (30, 70));
    assert_eq!(inn.sample(0), whole.sample(0));
    assert_eq!(out.sample(0), whole.sample(30));
}

#[test]
fn csv_round_trip_keeps_values_and_sidecar() {
    let inst = common::toy();
    let set = generate_scenarios(&ScenarioSource::from_instance(&inst), 25, 3, Provenance::OutOfSample);
    let dir = tempfile::tempdir().unwrap();
    set.write(dir.path(), "draws").unwrap();
    let back = ScenarioSet::read(dir.path(), "draws").unwrap();
    assert_eq!(back, set);
}

#[test]
fn estimated_moments_approach_the_forecast() {
    let inst = common::five_bus();
    let n = 20_000;
    let set = generate_scenarios(&ScenarioSource::from_instance(&inst), n, 11, Provenance::InSample);
    let est = estimate_moments(&set, n, 0.05, false).unwrap();
    let truth = AmbiguitySpec::from_forecast(&inst);
    for w in 0..inst.num_wind() {
        for t in 0..inst.horizon {
            let sd = truth.std_dev(w, t);
            assert!((est.mean[w][t] - truth.mean[w][t]).abs() <= 5.0 * sd / (n as f64).sqrt() + 1e-9);
        }
    }
}

#[test]
fn too_few_samples_for_moments() {
    let inst = common::toy();
    let set = generate_scenarios(&ScenarioSource::from_instance(&inst), 1, 3, Provenance::InSample);
    assert!(matches!(estimate_moments(&set, 1, 0.05, false), Err(DrccError::TooFewSamples { .. })));
}

#[test]
fn unimodal_individual_factor_needs_small_epsilon() {
    assert!(individual_factor(0.2, true).is_err());
    assert_eq!(individual_factor(0.1, false).unwrap(), cantelli_factor(0.1));
}

proptest! {
    #[test]
    fn moment_factor_dominates_cantelli(eps in 1e-4f64..0.999) {
        prop_assert!(moment_min_factor(eps) >= cantelli_factor(eps));
    }

    #[test]
    fn unimodal_factor_dominates_vp(eps in 1e-4f64..UNIMODAL_EPS_MAX) {
        prop_assert!(unimodal_min_factor(eps) >= vp_factor(eps));
        prop_assert!(unimodal_min_factor(eps) <= moment_min_factor(eps));
    }

    #[test]
    fn factors_fall_as_risk_grows(eps in 1e-3f64..0.15, step in 1e-3f64..0.01) {
        prop_assert!(moment_min_factor(eps + step) < moment_min_factor(eps));
        prop_assert!(unimodal_min_factor(eps + step) < unimodal_min_factor(eps));
    }
}
