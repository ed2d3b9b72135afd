mod common;

use proptest::prelude::*;

use drfcuc::gasnet::{
    add_weymouth_rows, allocate_gas_vars, build_gas_block, concave_rhs, next_penalty, pccp_step, trace_csv, GasError, GasState,
    GasVarOptions, GasVarSet, PccpObservation, PccpParams, PccpStage, PccpState, PccpStatus,
};
use drfcuc::instance::{Compressor, GasLoad, GasNetwork, GasNode, GasSource, IegsInstance, Pipeline};
use drfcuc::optmodel::{backend_by_name, solve_misocp, OptModel, SolveOptions, SolveStatus};

/// Toy power system with a single pipeline `N1 → N2` serving a constant load.
fn one_pipe() -> IegsInstance {
    let mut inst = common::toy();
    let node = |id: &str, lo: f64, hi: f64| GasNode { id: id.into(), pressure_min: lo, pressure_max: hi };
    inst.gas_network = GasNetwork {
        nodes: vec![node("N1", 50.0, 60.0), node("N2", 10.0, 60.0)],
        pipelines: vec![Pipeline {
            id: "P12".into(),
            from: "N1".into(),
            to: "N2".into(),
            weymouth: 1.5,
            linepack: 0.015,
            initial_linepack: Some(0.825),
        }],
        compressors: vec![],
        sources: vec![GasSource { id: "S1".into(), node: "N1".into(), flow_min: 0.0, flow_max: 100.0 }],
        loads: vec![GasLoad { id: "L2".into(), node: "N2".into(), demand: vec![30.0; inst.horizon] }],
    };
    inst.validate().expect("valid one-pipe instance");
    inst
}

/// Gas-only model that rewards low receiving pressure, so the cone relaxation is loose.
fn gas_model(inst: &IegsInstance, stage: PccpStage<'_>) -> (OptModel, GasVarSet) {
    let mut model = OptModel::new();
    let slack = matches!(stage, PccpStage::Penalized { .. });
    let mut vars = allocate_gas_vars(&mut model, inst, GasVarOptions { pccp_slack: slack, elastic: false });
    for t in 0..inst.horizon {
        build_gas_block(&mut model, inst, &vars, t, None).unwrap();
        model.add_objective(vars.pressure[1][t], 1.0);
        model.add_objective(vars.source[0][t], 1e-3);
    }
    add_weymouth_rows(&mut model, inst, &mut vars, stage).unwrap();
    (model, vars)
}

fn solve(model: &OptModel) -> (Vec<f64>, f64) {
    let backend = backend_by_name(None).unwrap();
    let res = solve_misocp(model, backend.as_ref(), &SolveOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    (res.values.unwrap(), res.objective.unwrap())
}

#[test]
fn pccp_closes_a_loose_relaxation() {
    let inst = one_pipe();
    let params = PccpParams::default();
    let (model, vars) = gas_model(&inst, PccpStage::Relaxed);
    let (values, relaxed_obj) = solve(&model);
    let mut state = PccpState::start(&PccpObservation::new(&inst, &vars, &values, relaxed_obj), &params).unwrap();
    assert!(state.max_gap > params.eps_gap, "relaxation should be loose, gap {}", state.max_gap);

    let mut last = None;
    while state.status == PccpStatus::Running {
        let (model, vars) = gas_model(&inst, PccpStage::Penalized { points: &state.points, penalty: state.penalty });
        let (values, obj) = solve(&model);
        state = pccp_step(&state, &PccpObservation::new(&inst, &vars, &values, obj), &params).unwrap();
        last = Some((vars, values));
    }
    assert_eq!(state.status, PccpStatus::Converged);
    assert!(state.max_gap <= params.eps_gap);
    assert_eq!(state.history.len(), state.iteration + 1);

    let (vars, values) = last.unwrap();
    let gas = GasState::from_values(&vars, &values);
    for row in gas.balance_residuals(&inst) {
        for r in row {
            assert!(r.abs() <= 1e-6, "balance residual {r}");
        }
    }
    for t in 0..inst.horizon {
        let prev = if t == 0 { 0.825 } else { gas.linepack[0][t - 1] };
        let change = gas.flow_in[0][t] - gas.flow_out[0][t];
        assert!((gas.linepack[0][t] - prev - change).abs() <= 1e-6);
    }
    let obj_without_penalty: f64 = gas.pressure[1].iter().sum::<f64>() + 1e-3 * gas.source[0].iter().sum::<f64>();
    assert!(obj_without_penalty >= relaxed_obj - 1e-6);
}

#[test]
fn penalty_grows_geometrically_up_to_the_cap() {
    let params = PccpParams::default();
    assert!((next_penalty(params.rho0, &params) - 0.03).abs() < 1e-15);
    let mut rho = params.rho0;
    for _ in 0..100 {
        rho = next_penalty(rho, &params);
    }
    assert_eq!(rho, params.rho_max);
}

#[test]
fn trace_has_fixed_header() {
    let inst = one_pipe();
    let (model, vars) = gas_model(&inst, PccpStage::Relaxed);
    let (values, obj) = solve(&model);
    let state = PccpState::start(&PccpObservation::new(&inst, &vars, &values, obj), &PccpParams::default()).unwrap();
    let csv = trace_csv(&state.history);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,m_gap,penalty,objective,slack_sum"));
    assert!(lines.next().unwrap().starts_with("0,"));
}

#[test]
fn missing_initial_linepack_is_rejected() {
    let mut inst = one_pipe();
    inst.gas_network.pipelines[0].initial_linepack = None;
    let mut model = OptModel::new();
    let vars = allocate_gas_vars(&mut model, &inst, GasVarOptions::default());
    assert_eq!(build_gas_block(&mut model, &inst, &vars, 0, None), Err(GasError::MissingInitialLinepack("P12".into())));
}

#[test]
fn compressor_with_one_node_is_rejected() {
    let mut inst = one_pipe();
    inst.gas_network.compressors.push(Compressor {
        id: "K11".into(),
        inlet: "N1".into(),
        outlet: "N1".into(),
        flow_max: 10.0,
        consumption: 0.02,
        ratio_min: 1.0,
        ratio_max: 1.5,
    });
    let mut model = OptModel::new();
    let vars = allocate_gas_vars(&mut model, &inst, GasVarOptions::default());
    assert_eq!(build_gas_block(&mut model, &inst, &vars, 0, None), Err(GasError::DegenerateCompressor("K11".into())));
}

#[test]
fn penalized_point_must_be_finite() {
    let inst = one_pipe();
    let points = vec![vec![(f64::NAN, 20.0); inst.horizon]];
    let mut model = OptModel::new();
    let mut vars = allocate_gas_vars(&mut model, &inst, GasVarOptions { pccp_slack: true, elastic: false });
    let err = add_weymouth_rows(&mut model, &inst, &mut vars, PccpStage::Penalized { points: &points, penalty: 1.0 });
    assert_eq!(err, Err(GasError::BadPoint { pipeline: 0, hour: 0 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // The linearization is a tangent plane of a convex function, so it never
    // exceeds F²/C² + π_n², with equality at the point.
    #[test]
    fn tangent_plane_underestimates(
        pipe in 0usize..5,
        hour in 0usize..24,
        fr in 0.0f64..80.0,
        pr in 20.0f64..75.0,
        f in 0.0f64..80.0,
        p in 20.0f64..75.0,
    ) {
        let inst = common::five_bus();
        let mut model = OptModel::new();
        let vars = allocate_gas_vars(&mut model, &inst, GasVarOptions::default());
        let c2 = inst.gas_network.pipelines[pipe].weymouth.powi(2);
        let to = inst.gas_node_index(&inst.gas_network.pipelines[pipe].to).unwrap();
        let q = concave_rhs(&inst, &vars, pipe, hour, (fr, pr), None);

        let mut x = vec![0.0; model.num_vars()];
        x[vars.flow[pipe][hour].0] = f;
        x[vars.pressure[to][hour].0] = p;
        let exact = f * f / c2 + p * p;
        prop_assert!(q.eval(&x) <= exact + 1e-9 * exact.max(1.0));

        x[vars.flow[pipe][hour].0] = fr;
        x[vars.pressure[to][hour].0] = pr;
        let at_point = fr * fr / c2 + pr * pr;
        prop_assert!((q.eval(&x) - at_point).abs() <= 1e-9 * at_point.max(1.0));
    }
}
