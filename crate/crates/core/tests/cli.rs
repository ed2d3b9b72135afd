mod common;

use drfcuc::cli::{run_from, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use drfcuc::instance::save_instance;
use drfcuc::optmodel::conic::import_conic;
use drfcuc::scheduler::ScheduleSolution;

fn run(args: &[&str]) -> i32 {
    run_from(std::iter::once("drfcuc").chain(args.iter().copied()))
}

#[test]
fn solve_then_evaluate_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let toy = common::data_path("toy_2g1w.json");
    let toy = toy.to_str().unwrap();

    assert_eq!(run(&["solve", "--instance", toy, "--variant", "dr-m", "--out", out]), EXIT_OK);
    let sol_path = dir.path().join("solution.json");
    let sol = ScheduleSolution::from_json(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
    assert_eq!(sol.horizon(), 4);
    let trace = std::fs::read_to_string(dir.path().join("pccp_trace.csv")).unwrap();
    assert!(trace.starts_with("r,m_gap,penalty,objective,slack_sum"));

    let sol_arg = sol_path.to_str().unwrap();
    let eval = ["evaluate", "--instance", toy, "--solution", sol_arg, "--out-samples", "500", "--no-gas-audit", "--out", out];
    assert_eq!(run(&eval), EXIT_OK);
    assert!(dir.path().join("evaluation.json").is_file());

    assert_eq!(run(&["simulate-frequency", "--instance", toy, "--solution", sol_arg, "--hour", "2", "--out", out]), EXIT_OK);
    assert!(dir.path().join("frequency_by_hour.csv").is_file());
    assert!(dir.path().join("trajectory_h2.csv").is_file());
    assert_eq!(run(&["simulate-frequency", "--instance", toy, "--solution", sol_arg, "--hour", "9", "--out", out]), EXIT_ERROR);
}

#[test]
fn export_conic_writes_a_readable_model() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.conic");
    let toy = common::data_path("toy_2g1w.json");
    let code = run(&["export-conic", "--instance", toy.to_str().unwrap(), "--variant", "saa:5", "--file", file.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let model = import_conic(&file).unwrap();
    assert!(model.num_binaries() > 0);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let toy = common::data_path("toy_2g1w.json");
    let text = serde_json::json!({ "instance": toy, "variant": "no-fc", "output": dir.path() }).to_string();
    std::fs::write(&config, text).unwrap();
    assert_eq!(run(&["solve", "--config", config.to_str().unwrap()]), EXIT_OK);
    let sol = ScheduleSolution::from_json(&std::fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol.variant.label(), "no-fc");
}

#[test]
fn error_exit_codes() {
    assert_eq!(run(&["solve", "--instance", "/nonexistent/instance.json"]), EXIT_ERROR);
    let toy = common::data_path("toy_2g1w.json");
    assert_eq!(run(&["solve", "--instance", toy.to_str().unwrap(), "--variant", "bogus"]), EXIT_ERROR);
    assert_eq!(run(&["no-such-command"]), EXIT_ERROR);

    let dir = tempfile::tempdir().unwrap();
    let mut inst = common::toy();
    for l in &mut inst.power_network.loads {
        for d in &mut l.demand {
            *d *= 3.0;
        }
    }
    let path = dir.path().join("overloaded.json");
    save_instance(&inst, &path).unwrap();
    let code = run(&["solve", "--instance", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_INFEASIBLE);
}
