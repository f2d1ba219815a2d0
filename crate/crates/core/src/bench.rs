//! Random machine generation and the timing harness.
//!
//! Machines are grown from the initial state: each round adds a few
//! transitions from the current state, preferring targets that are not yet
//! reachable so the whole state set ends up connected, then fills the
//! remaining transition budget with uniformly random targets. Guards and
//! assignments come from a small linear-arithmetic template family; they are
//! immaterial for timing but keep generated machines structurally valid.
//!
//! The suite reproduces the measurement grid: for each state count in
//! {10, 20, 30} and each transition count t with s <= t <= 3s and t a
//! multiple of 5, five machines are generated and each analysis component
//! is timed over ten runs. Results land in a CSV; the drawn per-machine
//! parameters go to a sidecar manifest.

use crate::expr::{BinOp, DataType, Expr};
use crate::model::{
    validate_structure, Assignment, ConstructorLabel, Dafsm, Declaration, DeclSort,
    QualifiedParticipant, StateId, Transition, TransitionLabel,
};
use crate::paths::{check_closed, check_empty_role_free, total_acyclic_paths, CallerCache};
use crate::smtgen::{build_consistency, build_determinism, ConsistencySite};
use crate::solver::{check_machine, SolverConfig, SolverError};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generation parameters. The suite draws `max_participants` from 2..=10,
/// `max_functions` from 10..=20 and `max_data_vars` from 1..=50 per machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub seed: u64,
    pub max_participants: u32,
    pub max_functions: u32,
    pub max_data_vars: u32,
    pub states: usize,
    pub transitions: usize,
}

/// Guard and assignment templates. Defaults match the suite; tests narrow
/// the bounds when comparing against finite-domain oracles.
#[derive(Debug, Clone, Copy)]
pub struct TemplateFamily {
    /// Comparison constants are drawn from `-literal_bound..=literal_bound`.
    pub literal_bound: i64,
    /// Increments in `x := x + k` are drawn from `1..=step_bound`.
    pub step_bound: i64,
    /// Percentage of transitions with a `true` guard.
    pub true_guard_percent: u32,
    /// Upper bound on assignments per transition.
    pub max_assignments: usize,
}

impl Default for TemplateFamily {
    fn default() -> Self {
        TemplateFamily {
            literal_bound: 3,
            step_bound: 2,
            true_guard_percent: 30,
            max_assignments: 2,
        }
    }
}

/// Generate a random machine, deterministically in the seed.
pub fn generate(params: &GenParams) -> Result<Dafsm, BenchError> {
    generate_with_templates(params, TemplateFamily::default())
}

pub fn generate_with_templates(
    params: &GenParams,
    templates: TemplateFamily,
) -> Result<Dafsm, BenchError> {
    let s = params.states;
    let t = params.transitions;
    if s == 0 {
        return Err(BenchError::InfeasibleParams("at least one state required".into()));
    }
    if t + 1 < s {
        return Err(BenchError::InfeasibleParams(format!(
            "{t} transitions cannot connect {s} states"
        )));
    }
    let p = params.max_participants.max(1) as usize;
    let v = params.max_data_vars as usize;
    let f = params.max_functions as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let states: Vec<String> = (0..s).map(|i| format!("S{i}")).collect();
    let var_names: Vec<String> = (0..v).map(|i| format!("x{i}")).collect();

    // The constructor declares every participant, so existing and bound
    // callers are justified on every path and the caller checks scan all
    // of them in full.
    let ctor_params: Vec<Declaration> = (2..=p)
        .map(|i| Declaration { name: format!("p{i}"), sort: DeclSort::Role(format!("R{i}")) })
        .collect();
    let init_assignments: Vec<Assignment> = var_names
        .iter()
        .map(|name| Assignment {
            lhs: name.clone(),
            rhs: Expr::Int(rng.gen_range(-templates.literal_bound..=templates.literal_bound)),
        })
        .collect();
    let constructor = ConstructorLabel {
        creator: "p1".into(),
        creator_role: "R1".into(),
        params: ctor_params,
        init_assignments,
    };

    let accepting_count = rng.gen_range(1..=(s / 4).max(1));
    let mut accepting = BTreeSet::new();
    while accepting.len() < accepting_count {
        accepting.insert(StateId(rng.gen_range(0..s)));
    }

    let guard = |rng: &mut ChaCha8Rng, own_param: Option<&str>| -> Expr {
        if v == 0 || rng.gen_range(0..100) < templates.true_guard_percent {
            return Expr::Bool(true);
        }
        let op = match rng.gen_range(0..4) {
            0 => BinOp::Lt,
            1 => BinOp::Le,
            2 => BinOp::Gt,
            _ => BinOp::Ge,
        };
        let constant = rng.gen_range(-templates.literal_bound..=templates.literal_bound);
        let subject = match own_param {
            Some(param) if rng.gen_range(0..100) < 30 => Expr::var(param),
            _ => Expr::var(&var_names[rng.gen_range(0..v)]),
        };
        Expr::binary(op, subject, Expr::Int(constant))
    };

    let assignments = |rng: &mut ChaCha8Rng| -> Vec<Assignment> {
        if v == 0 {
            return Vec::new();
        }
        let count = rng.gen_range(0..=templates.max_assignments.min(v));
        let mut chosen = BTreeSet::new();
        while chosen.len() < count {
            chosen.insert(rng.gen_range(0..v));
        }
        chosen
            .into_iter()
            .map(|j| {
                let lhs = var_names[j].clone();
                let rhs = if rng.gen_bool(0.5) {
                    let op = if rng.gen_bool(0.5) { BinOp::Add } else { BinOp::Sub };
                    Expr::binary(
                        op,
                        Expr::var(&lhs),
                        Expr::Int(rng.gen_range(1..=templates.step_bound)),
                    )
                } else {
                    Expr::Int(rng.gen_range(-templates.literal_bound..=templates.literal_bound))
                };
                Assignment { lhs, rhs }
            })
            .collect()
    };

    let mut transitions: Vec<Transition> = Vec::new();
    let mut reachable = vec![false; s];
    reachable[0] = true;
    let mut cursor = 0usize;

    while transitions.len() < t {
        // Round-robin over the states created so far, skipping sources that
        // are still unreachable (edges from them could strand whole regions).
        while !reachable[cursor % s] {
            cursor += 1;
        }
        let source = StateId(cursor % s);
        cursor += 1;

        let batch = (rng.gen_range(2..=5)).min(t - transitions.len());
        for _ in 0..batch {
            let unreachable: Vec<usize> =
                (0..s).filter(|&i| !reachable[i]).collect();
            let target = if unreachable.is_empty() {
                StateId(rng.gen_range(0..s))
            } else {
                StateId(unreachable[rng.gen_range(0..unreachable.len())])
            };
            reachable[target.0] = true;

            let caller_idx = rng.gen_range(1..=p);
            let caller_var = format!("p{caller_idx}");
            let caller_role = format!("R{caller_idx}");
            let participant = match rng.gen_range(0..3) {
                0 => QualifiedParticipant::Fresh { var: caller_var, role: caller_role },
                1 => QualifiedParticipant::Existing { var: caller_var, role: caller_role },
                _ => QualifiedParticipant::Bound { var: caller_var },
            };
            let function = format!("f{}", rng.gen_range(0..=f));
            let param_count = rng.gen_range(0..=v);
            let decls: Vec<Declaration> = (0..param_count)
                .map(|j| Declaration {
                    name: format!("_a{j}"),
                    sort: DeclSort::Data(DataType::Int),
                })
                .collect();
            let own_param = decls.first().map(|d| d.name.clone());
            let label = TransitionLabel {
                guard: guard(&mut rng, own_param.as_deref()),
                participant,
                function,
                decls,
                assignments: assignments(&mut rng),
            };
            transitions.push(Transition { source, label, target });
        }
    }

    let machine = Dafsm {
        states,
        initial: StateId(0),
        accepting,
        coordinator: "c".into(),
        constructor,
        transitions,
        state_vars: var_names.iter().map(|n| (n.clone(), DataType::Int)).collect(),
    };
    debug_assert_eq!(validate_structure(&machine), vec![]);
    Ok(machine)
}

/// Wall-clock samples of repeated runs, in milliseconds.
#[derive(Debug, Clone)]
pub struct TimingSamples {
    pub samples: Vec<f64>,
}

impl TimingSamples {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

pub fn time_runs(runs: usize, mut work: impl FnMut()) -> TimingSamples {
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let started = Instant::now();
        work();
        samples.push(started.elapsed().as_secs_f64() * 1e3);
    }
    TimingSamples { samples }
}

/// One CSV row of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub id: String,
    pub states: usize,
    pub transitions: usize,
    pub paths: u64,
    pub callercheck_ms: f64,
    pub detcheck_ms: f64,
    pub aconsistency_ms: f64,
    pub verdict: String,
}

pub const CSV_HEADER: &str =
    "id,states,transitions,paths,callercheck_ms,detcheck_ms,aconsistency_ms,verdict";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{}",
            self.id,
            self.states,
            self.transitions,
            self.paths,
            self.callercheck_ms,
            self.detcheck_ms,
            self.aconsistency_ms,
            self.verdict
        )
    }
}

/// The (states, transitions) measurement grid; with five machines per pair
/// it yields the 135-machine data set.
pub fn measurement_grid() -> Vec<(usize, usize)> {
    let mut grid = Vec::new();
    for s in [10usize, 20, 30] {
        let mut t = s;
        while t <= 3 * s {
            grid.push((s, t));
            t += 5;
        }
    }
    grid
}

pub const REPLICAS_PER_CELL: usize = 5;
const TIMING_RUNS: usize = 10;

fn time_caller_check(machine: &Dafsm) -> TimingSamples {
    time_runs(TIMING_RUNS, || {
        let mut cache = CallerCache::new();
        let _ = check_closed(machine, Some(&mut cache));
        let _ = check_empty_role_free(machine, Some(&mut cache));
    })
}

fn time_det_check(machine: &Dafsm) -> TimingSamples {
    time_runs(TIMING_RUNS, || {
        for s in 0..machine.states.len() {
            let _ = build_determinism(machine, StateId(s)).expect("state in range");
        }
    })
}

fn time_consistency(machine: &Dafsm) -> TimingSamples {
    time_runs(TIMING_RUNS, || {
        if !machine.is_accepting(machine.initial) {
            let _ = build_consistency(machine, ConsistencySite::Constructor);
        }
        for (i, t) in machine.transitions.iter().enumerate() {
            if !machine.is_accepting(t.target) {
                let _ = build_consistency(machine, ConsistencySite::Transition(i));
            }
        }
    })
}

/// Run the full suite: generate the grid, time each analysis component ten
/// times per machine, decide well-formedness once with the solver, and
/// write `out` (CSV) plus `<out>.manifest.csv` recording the per-machine
/// parameter draws. Solver failures mark the row's verdict as `Error`
/// without aborting the suite.
pub fn run_suite(
    out: &Path,
    seed: u64,
    config: &SolverConfig,
) -> Result<Vec<BenchRow>, BenchError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut manifest = String::from("id,seed,p,f,v,states,transitions\n");

    for (s, t) in measurement_grid() {
        for replica in 0..REPLICAS_PER_CELL {
            let p = master.gen_range(2..=10u32);
            let f = master.gen_range(10..=20u32);
            let v = master.gen_range(1..=50u32);
            let machine_seed = master.next_u64();
            let id = format!("s{s}_t{t}_r{replica}");
            manifest.push_str(&format!("{id},{machine_seed},{p},{f},{v},{s},{t}\n"));

            let params = GenParams {
                seed: machine_seed,
                max_participants: p,
                max_functions: f,
                max_data_vars: v,
                states: s,
                transitions: t,
            };
            let machine = generate(&params)?;
            let paths = total_acyclic_paths(&machine);

            let caller = time_caller_check(&machine);
            let det = time_det_check(&machine);
            let cons = time_consistency(&machine);

            let verdict = match check_machine(&machine, config) {
                Ok(v) => format!("{:?}", v.overall),
                Err(SolverError::Unavailable { .. }) | Err(SolverError::Protocol { .. }) => {
                    "Error".to_string()
                }
                Err(SolverError::Internal(e)) => return Err(BenchError::Io(
                    std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
                )),
            };

            rows.push(BenchRow {
                id,
                states: s,
                transitions: t,
                paths,
                callercheck_ms: caller.mean(),
                detcheck_ms: det.mean(),
                aconsistency_ms: cons.mean(),
                verdict,
            });
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    let mut file = std::fs::File::create(out)?;
    file.write_all(csv.as_bytes())?;

    let manifest_path = out.with_extension("manifest.csv");
    std::fs::write(manifest_path, manifest)?;

    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl;

    fn small_params(seed: u64) -> GenParams {
        GenParams {
            seed,
            max_participants: 5,
            max_functions: 12,
            max_data_vars: 8,
            states: 10,
            transitions: 10,
        }
    }

    #[test]
    fn generator_meets_cardinalities() {
        let m = generate(&small_params(42)).unwrap();
        assert_eq!(m.states.len(), 10);
        assert_eq!(m.transitions.len(), 10);
        assert_eq!(validate_structure(&m), vec![]);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let a = dsl::print(&generate(&small_params(42)).unwrap());
        let b = dsl::print(&generate(&small_params(42)).unwrap());
        assert_eq!(a, b);
        let c = dsl::print(&generate(&small_params(43)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_transition_budget_is_rejected() {
        let mut params = small_params(1);
        params.transitions = 8;
        assert!(matches!(
            generate(&params),
            Err(BenchError::InfeasibleParams(_))
        ));
    }

    #[test]
    fn every_state_is_reachable() {
        for seed in 0..20 {
            let mut params = small_params(seed);
            params.states = 7;
            params.transitions = 9;
            let m = generate(&params).unwrap();
            let mut reachable = vec![false; m.states.len()];
            reachable[m.initial.0] = true;
            let mut queue = vec![m.initial];
            while let Some(s) = queue.pop() {
                for t in &m.transitions {
                    if t.source == s && !reachable[t.target.0] {
                        reachable[t.target.0] = true;
                        queue.push(t.target);
                    }
                }
            }
            assert!(reachable.iter().all(|&r| r), "seed {seed} left states unreachable");
        }
    }

    #[test]
    fn generated_machines_round_trip() {
        for seed in [7, 99, 1234] {
            let m = generate(&small_params(seed)).unwrap();
            let printed = dsl::print(&m);
            let again = dsl::parse(&printed).expect("generated machine parses");
            assert!(again.structurally_eq(&m));
        }
    }

    #[test]
    fn grid_yields_135_machines() {
        let cells = measurement_grid();
        assert_eq!(cells.len(), 27);
        assert_eq!(cells.len() * REPLICAS_PER_CELL, 135);
        assert!(cells.iter().all(|&(s, t)| s <= t && t <= 3 * s && t % 5 == 0));
    }

    #[test]
    fn mean_matches_samples() {
        let samples = time_runs(10, || {
            std::hint::black_box(1 + 1);
        });
        let mean = samples.mean();
        let expected = samples.samples.iter().sum::<f64>() / samples.samples.len() as f64;
        assert!((mean - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn csv_row_format() {
        let row = BenchRow {
            id: "s10_t10_r0".into(),
            states: 10,
            transitions: 10,
            paths: 12,
            callercheck_ms: 0.25,
            detcheck_ms: 0.5,
            aconsistency_ms: 0.125,
            verdict: "WellFormed".into(),
        };
        assert_eq!(
            row.to_csv(),
            "s10_t10_r0,10,10,12,0.250000,0.500000,0.125000,WellFormed"
        );
    }
}
