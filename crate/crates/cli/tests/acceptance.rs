//! Acceptance suite: runs every criterion end to end and prints one
//! pass/fail line per criterion (visible with `-- --nocapture`). All
//! criteria execute even if an earlier one fails; the test panics at the
//! end when any failed.
//!
//! Criteria:
//!   1. Example verdicts (smp, d1..d4) with exact outcomes, < 5 s total.
//!   2. Determinism case table with exact outcomes and the x = 10 witness.
//!   3. Path enumeration matches a brute-force oracle on 200 machines.
//!   4. Solver answers match finite-domain evaluation on 100 machines.
//!   5. Timing suite: 135 rows, caller-check bound, monotone decile trend.
//!   6. Round-trip, generator determinism and stop/non-stop agreement.
//!   7. Ten malformed inputs exit 3 with a span on the corrupted line.

use dafsm_core::bench::{
    generate, generate_with_templates, run_suite, GenParams, TemplateFamily,
};
use dafsm_core::expr::{eval_bounded, Value};
use dafsm_core::paths::acyclic_paths_to;
use dafsm_core::smtgen::{assemble_model, collect_formulas};
use dafsm_core::solver::{
    check_machine, run_script, CheckKind, CheckOutcome, Overall, SolverConfig, SolverMode,
    SolverResponse,
};
use dafsm_core::{dsl, Dafsm, StateId, VarRef};
use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

const SMP: &str = include_str!("../../../samples/smp.daf");
const D1: &str = include_str!("../../../samples/d1.daf");
const D2: &str = include_str!("../../../samples/d2.daf");
const D3: &str = include_str!("../../../samples/d3.daf");
const D4: &str = include_str!("../../../samples/d4.daf");

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
    dsl::parse(text).expect("machine parses")
}

struct Outcomes {
    failures: Vec<String>,
}

impl Outcomes {
    fn report(&mut self, number: usize, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("criterion {number}: PASS - {name} ({detail})"),
            Err(why) => {
                println!("criterion {number}: FAIL - {name}: {why}");
                self.failures.push(format!("criterion {number}: {why}"));
            }
        }
    }
}

#[test]
fn acceptance() {
    let mut outcomes = Outcomes { failures: Vec::new() };
    outcomes.report(1, "paper-example verdict suite", criterion_1());
    outcomes.report(2, "determinism case table", criterion_2());
    outcomes.report(3, "path enumeration oracle", criterion_3());
    outcomes.report(4, "solver answer oracle", criterion_4());
    outcomes.report(5, "benchmark reproduction", criterion_5());
    outcomes.report(6, "round-trip and mode agreement", criterion_6());
    outcomes.report(7, "negative structural suite", criterion_7());
    assert!(
        outcomes.failures.is_empty(),
        "failed criteria:\n{}",
        outcomes.failures.join("\n")
    );
}

// -- criterion 1 -----------------------------------------------------------

fn criterion_1() -> Result<String, String> {
    let started = Instant::now();
    let cfg = config();

    let smp = check_machine(&parse(SMP), &cfg).map_err(|e| e.to_string())?;
    if smp.overall != Overall::WellFormed {
        return Err(format!("smp expected WellFormed, got {:?}", smp.overall));
    }

    let expect_single_fail = |text: &str, kind: CheckKind, name: &str| -> Result<String, String> {
        let verdict = check_machine(&parse(text), &config()).map_err(|e| e.to_string())?;
        if verdict.overall != Overall::NotWellFormed {
            return Err(format!("{name} expected NotWellFormed, got {:?}", verdict.overall));
        }
        let fails: Vec<_> = verdict
            .checks
            .iter()
            .filter(|c| c.outcome == CheckOutcome::Fail)
            .collect();
        if fails.len() != 1 || fails[0].kind != kind {
            return Err(format!("{name} expected one {kind:?} failure, got {fails:?}"));
        }
        Ok(fails[0].witness.clone().unwrap_or_default())
    };

    expect_single_fail(D1, CheckKind::Closed, "d1")?;
    expect_single_fail(D2, CheckKind::EmptyRoleFree, "d2")?;
    let witness = expect_single_fail(D3, CheckKind::Consistent, "d3")?;
    if !witness.contains("(define-fun x () Int 0)") {
        return Err(format!("d3 witness should set x = 0, got: {witness}"));
    }

    let d4 = check_machine(&parse(D4), &cfg).map_err(|e| e.to_string())?;
    let f1 = d4
        .checks
        .iter()
        .find(|c| c.site == "t0" && c.kind == CheckKind::Consistent)
        .ok_or("d4 has no consistency record for the first transition")?;
    if f1.outcome != CheckOutcome::Pass {
        return Err(format!("d4 first transition expected Consistent, got {:?}", f1.outcome));
    }

    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 5.0 {
        return Err(format!("took {:.2} s, budget is 5 s", elapsed.as_secs_f64()));
    }
    Ok(format!("{:.2} s", elapsed.as_secs_f64()))
}

// -- criterion 2 -----------------------------------------------------------

fn criterion_2() -> Result<String, String> {
    let det_records = |text: &str| -> Result<Vec<(CheckOutcome, Option<String>)>, String> {
        let verdict = check_machine(&parse(text), &config()).map_err(|e| e.to_string())?;
        Ok(verdict
            .checks
            .iter()
            .filter(|c| c.kind == CheckKind::Deterministic)
            .map(|c| (c.outcome, c.witness.clone()))
            .collect())
    };

    // Identical labels: one group, non-deterministic.
    let identical = "_ o:O > starts c() S0\n\
                     S0 o > c.g() S1\n\
                     S1 o > c.h() S0\n\
                     S0 o > c.g() S2\n\
                     accept S2\n";
    let records = det_records(identical)?;
    if records.len() != 1 || records[0].0 != CheckOutcome::Fail {
        return Err(format!("identical labels expected one Fail, got {records:?}"));
    }

    // Fresh vs existing callers are necessarily different: no formula.
    let callers = "_ o:O > starts c() S0\n\
                   S0 p:R > c.g() S1\n\
                   S1 o > c.h() S0\n\
                   S0 @p:R > c.g() S2\n\
                   accept S2\n";
    let records = det_records(callers)?;
    if records.iter().any(|(o, _)| *o == CheckOutcome::Fail) {
        return Err(format!("distinct callers expected no determinism failure, got {records:?}"));
    }

    // Disjoint guards pass.
    let disjoint = "_ o:O > starts c() S0\n\
                    S0 {_x <= 10} o > c.g(int _x) S1\n\
                    S1 o > c.h() S0\n\
                    S0 {_x > 10} o > c.g(int _x) S2\n\
                    accept S2\n";
    let records = det_records(disjoint)?;
    if records.len() != 1 || records[0].0 != CheckOutcome::Pass {
        return Err(format!("disjoint guards expected one Pass, got {records:?}"));
    }

    // Overlapping guards meet exactly at 10.
    let overlapping = "_ o:O > starts c() S0\n\
                       S0 {_x <= 10} o > c.g(int _x) S1\n\
                       S1 o > c.h() S0\n\
                       S0 {_x >= 10} o > c.g(int _x) S2\n\
                       accept S2\n";
    let records = det_records(overlapping)?;
    if records.len() != 1 || records[0].0 != CheckOutcome::Fail {
        return Err(format!("overlapping guards expected one Fail, got {records:?}"));
    }
    let witness = records[0].1.clone().unwrap_or_default();
    if !witness.contains("(define-fun _x () Int 10)") {
        return Err(format!("overlap witness should force _x = 10, got: {witness}"));
    }

    Ok("4 cases".to_string())
}

// -- criterion 3 -----------------------------------------------------------

fn oracle_paths_to(machine: &Dafsm, target: StateId) -> BTreeSet<Vec<usize>> {
    let mut layers: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new()]];
    for _ in 0..machine.states.len() {
        let mut next = Vec::new();
        for seq in layers.last().unwrap() {
            let end = seq
                .last()
                .map(|&i| machine.transitions[i].target)
                .unwrap_or(machine.initial);
            for (i, t) in machine.transitions.iter().enumerate() {
                if t.source == end {
                    let mut extended = seq.clone();
                    extended.push(i);
                    next.push(extended);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layers.push(next);
    }
    let mut out = BTreeSet::new();
    for seq in layers.into_iter().flatten() {
        let mut states = vec![machine.initial];
        for &i in &seq {
            states.push(machine.transitions[i].target);
        }
        let distinct: BTreeSet<StateId> = states.iter().copied().collect();
        if distinct.len() == states.len() && *states.last().unwrap() == target {
            out.insert(seq);
        }
    }
    out
}

fn criterion_3() -> Result<String, String> {
    let mut mismatches = 0usize;
    for k in 0..200u64 {
        let seed = 40_000 + k;
        let states = 2 + (seed as usize % 7);
        let transitions = (states - 1) + (seed as usize % 6);
        let machine = generate(&GenParams {
            seed,
            max_participants: 4,
            max_functions: 6,
            max_data_vars: 3,
            states,
            transitions,
        })
        .map_err(|e| e.to_string())?;
        for s in 0..machine.states.len() {
            let target = StateId(s);
            let got: BTreeSet<Vec<usize>> = acyclic_paths_to(&machine, target)
                .unwrap()
                .into_iter()
                .map(|p| p.transition_indices())
                .collect();
            if got != oracle_paths_to(&machine, target) {
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} path-set mismatches"));
    }
    Ok("200 machines, zero mismatches".to_string())
}

// -- criterion 4 -----------------------------------------------------------

/// Exhaustive evaluation of a check formula over ints in [-3, 3] and both
/// booleans. The test generator keeps literals within [-1, 1] and
/// increments at 1, for which this window is an exact satisfiability
/// oracle.
fn bounded_sat(formula: &dafsm_core::smtgen::CheckFormula) -> bool {
    let domain: Vec<i64> = (-3..=3).collect();
    let vars = &formula.free_vars;

    fn var_key(name: &str) -> VarRef {
        if let Some(base) = name.strip_suffix("_old") {
            VarRef::Old(base.to_string())
        } else if name.starts_with('_') {
            VarRef::Param(name.to_string())
        } else {
            VarRef::State(name.to_string())
        }
    }

    fn go(
        vars: &[(String, dafsm_core::DataType)],
        env: &mut HashMap<VarRef, Value>,
        formula: &dafsm_core::smtgen::CheckFormula,
        domain: &[i64],
    ) -> bool {
        match vars.split_first() {
            None => matches!(
                eval_bounded(&formula.assertion, env, domain),
                Some(Value::Bool(true))
            ),
            Some(((name, ty), rest)) => {
                let key = var_key(name);
                let candidates: Vec<Value> = match ty {
                    dafsm_core::DataType::Int => domain.iter().map(|&n| Value::Int(n)).collect(),
                    dafsm_core::DataType::Bool => vec![Value::Bool(false), Value::Bool(true)],
                };
                for c in candidates {
                    env.insert(key.clone(), c);
                    if go(rest, env, formula, domain) {
                        return true;
                    }
                }
                env.remove(&key);
                false
            }
        }
    }

    go(vars, &mut HashMap::new(), formula, &domain)
}

fn criterion_4() -> Result<String, String> {
    let cfg = config();
    let templates = TemplateFamily {
        literal_bound: 1,
        step_bound: 1,
        true_guard_percent: 40,
        max_assignments: 2,
    };
    let mut mismatches = Vec::new();
    let mut unknowns = 0usize;
    let mut total = 0usize;

    for k in 0..100u64 {
        let seed = 70_000 + k;
        let states = 2 + (seed as usize % 4); // 2..=5
        let transitions = (states - 1) + (seed as usize % 5);
        let machine = generate_with_templates(
            &GenParams {
                seed,
                max_participants: 3,
                max_functions: 4,
                max_data_vars: 2,
                states,
                transitions,
            },
            templates,
        )
        .map_err(|e| e.to_string())?;

        let formulas = collect_formulas(&machine);
        let model = assemble_model(&formulas).map_err(|e| e.to_string())?;
        for (formula, script) in formulas.iter().zip(&model.scripts) {
            total += 1;
            let response = run_script(&cfg, &script.text).map_err(|e| e.to_string())?;
            let solver_sat = match response {
                SolverResponse::Sat(_) => true,
                SolverResponse::Unsat => false,
                SolverResponse::Unknown(_) => {
                    unknowns += 1;
                    continue;
                }
            };
            let oracle_sat = bounded_sat(formula);
            if solver_sat != oracle_sat {
                mismatches.push(format!(
                    "seed {seed} {:?}: solver {solver_sat}, oracle {oracle_sat}",
                    formula.kind
                ));
            }
        }
    }

    if !mismatches.is_empty() {
        return Err(format!(
            "{} of {total} formulas disagree, {unknowns} unknown: {}",
            mismatches.len(),
            mismatches.join("; ")
        ));
    }
    Ok(format!("100 machines, {total} formulas, zero mismatches, {unknowns} unknown"))
}

// -- criterion 5 -----------------------------------------------------------

fn criterion_5() -> Result<String, String> {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("suite.csv");
    let seed = std::env::var("DAFSM_BENCH_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0xDAF5);
    let rows = run_suite(&out, seed, &config()).map_err(|e| e.to_string())?;

    if rows.len() != 135 {
        return Err(format!("expected 135 rows, got {}", rows.len()));
    }
    let csv = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    if !csv.starts_with(dafsm_core::bench::CSV_HEADER) {
        return Err("CSV header mismatch".into());
    }
    if rows.iter().any(|r| r.verdict == "Error") {
        return Err("solver errors in the suite".into());
    }
    if rows.iter().any(|r| r.paths == 0) {
        return Err("a machine reported zero paths; the constructor path always exists".into());
    }
    // Rows follow the grid order: (states, transitions, replica).
    let expected_ids: Vec<String> = dafsm_core::bench::measurement_grid()
        .into_iter()
        .flat_map(|(s, t)| (0..5).map(move |r| format!("s{s}_t{t}_r{r}")))
        .collect();
    let actual_ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    if actual_ids != expected_ids {
        return Err("rows are not sorted by (states, transitions, replica)".into());
    }

    // Every machine finishes the caller check well inside the budget.
    if let Some(worst) = rows
        .iter()
        .map(|r| r.callercheck_ms)
        .max_by(|a, b| a.partial_cmp(b).unwrap())
    {
        if worst > 60_000.0 {
            return Err(format!("caller check took {worst:.0} ms on one machine"));
        }
    }

    // Trend: mean caller-check time per path-count decile is non-decreasing.
    let mut sorted = rows.clone();
    sorted.sort_by_key(|r| r.paths);
    let n = sorted.len();
    let mut decile_means = Vec::new();
    for d in 0..10 {
        let lo = d * n / 10;
        let hi = (d + 1) * n / 10;
        let slice = &sorted[lo..hi];
        let mean = slice.iter().map(|r| r.callercheck_ms).sum::<f64>() / slice.len() as f64;
        decile_means.push(mean);
    }
    for pair in decile_means.windows(2) {
        if pair[1] < pair[0] {
            return Err(format!(
                "caller-check decile means are not non-decreasing: {decile_means:?}"
            ));
        }
    }

    Ok(format!(
        "135 rows, max caller check {:.1} ms, {:.1} s total",
        rows.iter().map(|r| r.callercheck_ms).fold(0.0, f64::max),
        started.elapsed().as_secs_f64()
    ))
}

// -- criterion 6 -----------------------------------------------------------

fn criterion_6() -> Result<String, String> {
    // Round trip on the examples.
    for text in [SMP, D1, D2, D3, D4] {
        let machine = parse(text);
        let printed = dsl::print(&machine);
        let reparsed = dsl::parse(&printed).map_err(|e| format!("{e:?}"))?;
        if !reparsed.structurally_eq(&machine) {
            return Err(format!("example round trip failed:\n{printed}"));
        }
    }

    // Round trip, byte determinism and mode agreement on generated machines.
    let cfg = config();
    let stop = cfg.clone().with_mode(SolverMode::Stop);
    for k in 0..16u64 {
        let seed = 90_000 + k;
        let states = 3 + (k as usize % 5);
        let params = GenParams {
            seed,
            max_participants: 4,
            max_functions: 8,
            max_data_vars: 4,
            states,
            transitions: (states - 1) + (k as usize % 5),
        };
        let machine = generate(&params).map_err(|e| e.to_string())?;
        let printed = dsl::print(&machine);

        let again = generate(&params).map_err(|e| e.to_string())?;
        if dsl::print(&again) != printed {
            return Err(format!("seed {seed} is not byte-deterministic"));
        }

        let reparsed = dsl::parse(&printed).map_err(|e| format!("{e:?}"))?;
        if !reparsed.structurally_eq(&machine) {
            return Err(format!("seed {seed} round trip failed"));
        }

        let nonstop = check_machine(&machine, &cfg).map_err(|e| e.to_string())?;
        let stopped = check_machine(&machine, &stop).map_err(|e| e.to_string())?;
        if nonstop.overall != stopped.overall {
            return Err(format!(
                "seed {seed}: non-stop {:?} vs stop {:?}",
                nonstop.overall, stopped.overall
            ));
        }
    }
    for text in [SMP, D1, D2, D3, D4] {
        let machine = parse(text);
        let nonstop = check_machine(&machine, &cfg).map_err(|e| e.to_string())?;
        let stopped = check_machine(&machine, &stop).map_err(|e| e.to_string())?;
        if nonstop.overall != stopped.overall {
            return Err("example machines disagree across modes".into());
        }
    }

    Ok("5 examples + 16 generated machines".to_string())
}

// -- criterion 7 -----------------------------------------------------------

fn criterion_7() -> Result<String, String> {
    let samples = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples/bad");
    // File and the line carrying the defect.
    let cases: [(&str, usize); 10] = [
        ("undeclared_param.daf", 2),
        ("duplicate_decl.daf", 2),
        ("type_error.daf", 2),
        ("missing_constructor.daf", 1),
        ("unknown_state.daf", 3),
        ("duplicate_constructor.daf", 2),
        ("bad_qualifier.daf", 2),
        ("malformed_expr.daf", 2),
        ("duplicate_assignment.daf", 2),
        ("role_conflict.daf", 2),
    ];

    for (file, line) in cases {
        let path = samples.join(file);
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_dafsm"))
            .arg("check")
            .arg(&path)
            .env("DAFSM_SOLVER", solver_path())
            .output()
            .map_err(|e| e.to_string())?;
        if output.status.code() != Some(3) {
            return Err(format!("{file}: expected exit 3, got {:?}", output.status.code()));
        }
        let stderr = String::from_utf8_lossy(&output.stderr);
        let marker = format!("line {line},");
        if !stderr.contains(&marker) {
            return Err(format!("{file}: no span on line {line}; stderr: {stderr}"));
        }
    }
    Ok("10 malformed files".to_string())
}
