mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use drfcuc::instance::{compute_shift_factors, line_flows, IegsInstance, InstanceError};

/// Flows from a DC solve anchored at the last bus instead of the reference bus.
fn dc_flows(inst: &IegsInstance, injection: &[f64]) -> Vec<f64> {
    let net = &inst.power_network;
    let nb = net.buses.len();
    let idx = |id: &str| inst.bus_index(id).unwrap();
    let mut b = DMatrix::<f64>::zeros(nb, nb);
    for l in &net.lines {
        let (i, j, y) = (idx(&l.from), idx(&l.to), 1.0 / l.reactance.unwrap());
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    let n = nb - 1;
    let reduced = b.view((0, 0), (n, n)).into_owned();
    let theta = reduced.lu().solve(&DVector::from_column_slice(&injection[..n])).unwrap();
    let angle = |k: usize| if k < n { theta[k] } else { 0.0 };
    net.lines.iter().map(|l| (angle(idx(&l.from)) - angle(idx(&l.to))) / l.reactance.unwrap()).collect()
}

#[test]
fn bundled_instances_validate_and_round_trip() {
    for inst in [common::five_bus(), common::toy()] {
        inst.validate().unwrap();
        let back = IegsInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
    }
}

#[test]
fn five_bus_has_gas_fired_units_on_gas_nodes() {
    let inst = common::five_bus();
    let gfus = inst.gfu_indices();
    assert_eq!(gfus.len(), 2);
    for g in gfus {
        let node = inst.generators[g].gas_node.as_deref().unwrap();
        assert!(inst.gas_node_index(node).is_some());
    }
}

#[test]
fn short_series_is_rejected() {
    let mut inst = common::toy();
    inst.power_network.loads[0].demand.pop();
    assert!(matches!(inst.validate(), Err(InstanceError::Validation { .. })));
}

#[test]
fn duplicate_unit_ids_are_rejected() {
    let mut inst = common::toy();
    inst.generators[1].id = inst.generators[0].id.clone();
    assert!(inst.validate().is_err());
}

#[test]
fn unknown_gas_node_is_rejected() {
    let mut inst = common::five_bus();
    inst.gas_network.pipelines[0].to = "N99".into();
    assert!(inst.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_factors_match_direct_dc_solve(raw in prop::collection::vec(-200.0f64..200.0, 5)) {
        let inst = common::five_bus();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let injection: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let psi = compute_shift_factors(&inst.power_network).unwrap();
        let got = line_flows(&psi, &injection);
        let want = dc_flows(&inst, &injection);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
