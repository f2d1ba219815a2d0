//! Driver tests against a real solver process, plus whole-machine verdicts
//! for the example corpus.

use dafsm_core::solver::{
    check_machine, run_script, CheckKind, CheckOutcome, Overall, SolverConfig, SolverMode,
    SolverResponse,
};
use dafsm_core::{dsl, Dafsm};
use std::path::PathBuf;

const SMP: &str = include_str!("../../../samples/smp.daf");
const D1: &str = include_str!("../../../samples/d1.daf");
const D2: &str = include_str!("../../../samples/d2.daf");
const D3: &str = include_str!("../../../samples/d3.daf");
const D4: &str = include_str!("../../../samples/d4.daf");

/// The workspace builds the `minilia` SMT solver next to the test binaries.
fn solver_path() -> PathBuf {
    if let Ok(path) = std::env::var("DAFSM_SOLVER") {
        return PathBuf::from(path);
    }
    let mut dir = std::env::current_exe().expect("test binary path");
    dir.pop();
    if dir.ends_with("deps") {
        dir.pop();
    }
    dir.join("minilia")
}

fn config() -> SolverConfig {
    SolverConfig::new(solver_path())
}

fn parse(text: &str) -> Dafsm {
    dsl::parse(text).expect("sample parses")
}

#[test]
fn sat_script_returns_a_model() {
    let script = "(set-logic QF_LIA)\n(declare-const x Int)\n(assert (and (= x 0) (not (> x 0))))\n(check-sat)\n";
    match run_script(&config(), script).unwrap() {
        SolverResponse::Sat(model) => {
            assert!(model.contains("(define-fun x () Int 0)"), "model: {model}");
        }
        other => panic!("expected sat, got {other:?}"),
    }
}

#[test]
fn false_assertion_is_unsat() {
    let script = "(assert false)\n(check-sat)\n";
    assert_eq!(run_script(&config(), script).unwrap(), SolverResponse::Unsat);
}

#[test]
fn timeout_maps_to_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sleepy.sh");
    std::fs::write(&path, "#!/bin/sh\nsleep 5\n").unwrap();
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    use std::os::unix::fs::PermissionsExt;
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();

    let config = SolverConfig::new(path).with_timeout_ms(50);
    match run_script(&config, "(check-sat)\n").unwrap() {
        SolverResponse::Unknown(reason) => assert!(reason.contains("timeout")),
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn garbage_output_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("banana.sh");
    std::fs::write(&path, "#!/bin/sh\necho banana\n").unwrap();
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    use std::os::unix::fs::PermissionsExt;
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();

    let config = SolverConfig::new(path);
    let err = run_script(&config, "(check-sat)\n").unwrap_err();
    assert!(err.to_string().contains("banana"), "got: {err}");
}

#[test]
fn missing_solver_is_unavailable() {
    let config = SolverConfig::new("/definitely/not/here");
    let err = run_script(&config, "(check-sat)\n").unwrap_err();
    assert!(err.to_string().contains("cannot run solver"), "got: {err}");
}

#[test]
fn smp_is_well_formed() {
    let verdict = check_machine(&parse(SMP), &config()).unwrap();
    assert_eq!(verdict.overall, Overall::WellFormed, "verdict: {verdict:?}");
}

#[test]
fn d1_fails_closedness() {
    let verdict = check_machine(&parse(D1), &config()).unwrap();
    assert_eq!(verdict.overall, Overall::NotWellFormed);
    let fails: Vec<_> = verdict
        .checks
        .iter()
        .filter(|c| c.outcome == CheckOutcome::Fail)
        .collect();
    assert_eq!(fails.len(), 1);
    assert_eq!(fails[0].kind, CheckKind::Closed);
}

#[test]
fn d2_fails_empty_role_freedom() {
    let verdict = check_machine(&parse(D2), &config()).unwrap();
    assert_eq!(verdict.overall, Overall::NotWellFormed);
    let fails: Vec<_> = verdict
        .checks
        .iter()
        .filter(|c| c.outcome == CheckOutcome::Fail)
        .collect();
    assert_eq!(fails.len(), 1);
    assert_eq!(fails[0].kind, CheckKind::EmptyRoleFree);
}

#[test]
fn d3_fails_consistency_with_x_zero() {
    let verdict = check_machine(&parse(D3), &config()).unwrap();
    assert_eq!(verdict.overall, Overall::NotWellFormed);
    let fail = verdict
        .checks
        .iter()
        .find(|c| c.outcome == CheckOutcome::Fail)
        .expect("one failing record");
    assert_eq!(fail.kind, CheckKind::Consistent);
    assert_eq!(fail.site, "constructor");
    let witness = fail.witness.as_deref().expect("witness model");
    assert!(witness.contains("(define-fun x () Int 0)"), "witness: {witness}");
}

#[test]
fn d4_is_consistent_on_f1() {
    let m = parse(D4);
    let verdict = check_machine(&m, &config()).unwrap();
    let f1 = verdict
        .checks
        .iter()
        .find(|c| c.site == "t0" && c.kind == CheckKind::Consistent)
        .expect("t0 consistency record");
    assert_eq!(f1.outcome, CheckOutcome::Pass);
    assert_eq!(verdict.overall, Overall::WellFormed);
}

#[test]
fn stop_and_nonstop_agree_on_overall() {
    for text in [SMP, D1, D2, D3, D4] {
        let m = parse(text);
        let nonstop = check_machine(&m, &config()).unwrap();
        let stop = check_machine(&m, &config().with_mode(SolverMode::Stop)).unwrap();
        assert_eq!(nonstop.overall, stop.overall);
        assert!(stop.checks.len() <= nonstop.checks.len());
    }
}

#[test]
fn verdicts_are_deterministic() {
    let m = parse(D3);
    let a = check_machine(&m, &config()).unwrap();
    let b = check_machine(&m, &config()).unwrap();
    assert_eq!(a.overall, b.overall);
    let outcomes =
        |v: &dafsm_core::Verdict| -> Vec<(String, CheckOutcome)> {
            v.checks.iter().map(|c| (c.site.clone(), c.outcome)).collect()
        };
    assert_eq!(outcomes(&a), outcomes(&b));
}

#[test]
fn machine_with_no_scripts_and_no_path_checks_is_well_formed() {
    // Single accepting initial state: no transitions, no formulas.
    let m = parse("_ o:O > starts c() s0\naccept s0\n");
    let verdict = check_machine(&m, &config()).unwrap();
    assert_eq!(verdict.overall, Overall::WellFormed);
    assert!(verdict.checks.is_empty());
}

#[test]
fn entering_a_dead_end_is_inconsistent() {
    // s1 is neither accepting nor has outgoing transitions: its progress
    // constraint is false, so the transition into it fails consistency.
    let m = parse("_ o:O > starts c() s0\ns0 o > c.f() s1\naccept s0\n");
    let verdict = check_machine(&m, &config()).unwrap();
    assert_eq!(verdict.overall, Overall::NotWellFormed);
    let fail = verdict
        .checks
        .iter()
        .find(|c| c.outcome == CheckOutcome::Fail)
        .unwrap();
    assert_eq!(fail.kind, CheckKind::Consistent);
    assert_eq!(fail.site, "t0");
}

#[test]
fn parallel_workers_match_sequential_results() {
    let m = parse(SMP);
    let sequential = check_machine(&m, &config()).unwrap();
    let mut parallel_config = config();
    parallel_config.workers = 3;
    let parallel = check_machine(&m, &parallel_config).unwrap();
    assert_eq!(sequential.overall, parallel.overall);
    let sites = |v: &dafsm_core::Verdict| -> Vec<String> {
        v.checks.iter().map(|c| c.site.clone()).collect()
    };
    assert_eq!(sites(&sequential), sites(&parallel));
}

#[test]
fn unreachable_transition_is_warned_not_failed() {
    let m = parse(
        "_ o:O > starts c() q0\nq0 o > c.a() q1\nq9 p > c.b() q1\naccept q1\n",
    );
    let verdict = check_machine(&m, &config()).unwrap();
    assert_eq!(verdict.warnings.len(), 1);
    assert!(verdict.warnings[0].contains("unreachable"));
    // The bound caller p at the unreachable q9 passes vacuously.
    assert_eq!(verdict.overall, Overall::WellFormed);
}
