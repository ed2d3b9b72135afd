use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drfcuc::optmodel::conic::{parse, to_string};
use drfcuc::optmodel::{
    separate_cut, solve_misocp, AffineExpr, HighsBackend, ModelError, OptModel, RowSense, SolveError, SolveOptions, SolveStatus, VarId,
    VarKind,
};

fn affine(coeffs: &[f64], constant: f64) -> AffineExpr {
    coeffs.iter().enumerate().fold(AffineExpr::constant(constant), |e, (i, &c)| e.term(VarId(i), c))
}

fn disk() -> OptModel {
    let mut m = OptModel::new();
    let x = m.continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    m.add_soc("disk", vec![AffineExpr::constant(1.0), AffineExpr::var(x)], AffineExpr::constant(2.0));
    m.add_objective(x, 1.0);
    m
}

#[test]
fn free_linear_objective_is_unbounded() {
    let mut m = OptModel::new();
    let x = m.continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    m.add_objective(x, 1.0);
    assert!(matches!(solve_misocp(&m, &HighsBackend::default(), &SolveOptions::default()), Err(SolveError::Unbounded)));
}

#[test]
fn cone_excluding_the_box_is_infeasible() {
    let mut m = disk();
    m.vars[0].lower = 3.0;
    let r = solve_misocp(&m, &HighsBackend::default(), &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(!r.has_values());
}

#[test]
fn malformed_models_are_rejected_before_solving() {
    let mut m = disk();
    m.vars.push(drfcuc::optmodel::Variable { name: "b".into(), kind: VarKind::Binary, lower: 0.0, upper: 2.0 });
    assert!(matches!(
        solve_misocp(&m, &HighsBackend::default(), &SolveOptions::default()),
        Err(SolveError::Model(ModelError::BinaryBounds(_)))
    ));

    let mut m = disk();
    m.add_soc("empty", vec![], AffineExpr::constant(1.0));
    assert_eq!(m.validate(), Err(ModelError::EmptyCone("empty".into())));

    let mut m = disk();
    m.add_row("nan", [(VarId(0), f64::NAN)], RowSense::Le, 1.0);
    assert_eq!(m.validate(), Err(ModelError::NonFinite("nan".into())));
}

#[test]
fn repeated_solves_are_identical() {
    let mut m = OptModel::new();
    let x = m.continuous("x", -10.0, 10.0);
    let y = m.continuous("y", -10.0, 10.0);
    let b = m.binary("b");
    m.add_soc("ball", vec![AffineExpr::var(x), AffineExpr::var(y)], AffineExpr::constant(1.0).term(b, 2.0));
    m.add_objective(x, 1.0);
    m.add_objective(y, 2.0);
    m.add_objective(b, 1.5);
    let opts = SolveOptions { mip_gap: 0.0, ..SolveOptions::default() };
    let a = solve_misocp(&m, &HighsBackend::default(), &opts).unwrap();
    let c = solve_misocp(&m, &HighsBackend::default(), &opts).unwrap();
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_eq!(a.values, c.values);
    assert_eq!(a.cuts, c.cuts);
    assert_eq!(a.violation_history, c.violation_history);

    // Radius 3 costs 1.5 and lowers x + 2y from -√5 to -3√5.
    let expected = 1.5 - 3.0 * 5f64.sqrt();
    assert!((a.objective.unwrap() - expected).abs() <= 1e-5, "{:?}", a.objective);
}

#[test]
fn disk_converges_with_shrinking_violation() {
    let r = solve_misocp(&disk(), &HighsBackend::default(), &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.max_soc_violation <= 1e-6);
    let hist = &r.violation_history;
    assert!(!hist.is_empty());
    assert!(hist.last().unwrap() <= hist.first().unwrap());
    assert!(r.cut_count >= 2);
}

#[test]
fn exported_disk_matches_documented_text() {
    let text = to_string(&disk());
    let expected =
        "DRFCUC-CONIC 1\nVARS 1\n0 C -inf inf x\nOBJ 1 0.0\n0 1.0\nLIN 0\nSOC 1\ndisk 2\nBOUND 2.0 0\nVEC 1.0 0\nVEC 0.0 1 0:1.0\nEND\n";
    assert_eq!(text, expected);
    assert_eq!(parse(&text).unwrap(), disk());
}

fn random_model(seed: u64, nvars: usize, nrows: usize, ncones: usize) -> OptModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = OptModel::new();
    for i in 0..nvars {
        if rng.random_bool(0.3) {
            m.binary(format!("b{i}"));
        } else {
            let lo = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { rng.random_range(-10.0..0.0) };
            m.continuous(format!("x{i}"), lo, rng.random_range(0.0..10.0));
        }
    }
    let coeffs = |rng: &mut ChaCha8Rng| -> Vec<(VarId, f64)> {
        let mut out = Vec::new();
        for i in 0..nvars {
            if rng.random_bool(0.5) {
                out.push((VarId(i), rng.random_range(-1e3..1e3) / 7.0));
            }
        }
        out
    };
    for r in 0..nrows {
        let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][rng.random_range(0..3)];
        let terms = coeffs(&mut rng);
        m.add_row(format!("row{}", r % 3), terms, sense, rng.random_range(-1.0..1.0) / 3.0);
    }
    for _ in 0..ncones {
        let dim = rng.random_range(1..4);
        let expr = |rng: &mut ChaCha8Rng| {
            coeffs(rng).into_iter().fold(AffineExpr::constant(rng.random_range(-5.0..5.0) / 3.0), |e, (v, c)| e.term(v, c))
        };
        let vector = (0..dim).map(|_| expr(&mut rng)).collect();
        let bound = expr(&mut rng);
        m.add_soc("cone", vector, bound);
    }
    for (v, c) in coeffs(&mut rng) {
        m.add_objective(v, c);
    }
    m.normalize_objective();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conic_text_round_trips(seed in any::<u64>(), nvars in 1usize..12, nrows in 0usize..10, ncones in 0usize..5) {
        let m = random_model(seed, nvars, nrows, ncones);
        let back = parse(&to_string(&m)).unwrap();
        prop_assert_eq!(back.checksum(), m.checksum());
        prop_assert_eq!(back, m);
    }

    // A separating cut never removes a point that satisfies the cone.
    #[test]
    fn cuts_keep_every_feasible_point(seed in any::<u64>(), dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let mut m = OptModel::new();
        for i in 0..n {
            m.continuous(format!("x{i}"), -10.0, 10.0);
        }
        let random_affine = |rng: &mut ChaCha8Rng| {
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            affine(&c, rng.random_range(-1.0..1.0))
        };
        let vector = (0..dim).map(|_| random_affine(&mut rng)).collect();
        let bound = random_affine(&mut rng).plus(3.0);
        m.add_soc("c", vector, bound);
        let row = &m.socs[0];

        let point: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let Some(cut) = separate_cut(row, &point, 1e-9) else {
            prop_assert!(row.violation(&point) <= 1e-9);
            return Ok(());
        };
        prop_assert!(cut.violation(&point) > 0.0);
        prop_assert_eq!(cut.sense, RowSense::Le);

        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            if row.violation(&x) <= 0.0 {
                prop_assert!(cut.violation(&x) <= 1e-9, "cut removes a feasible point");
            }
        }
    }
}
