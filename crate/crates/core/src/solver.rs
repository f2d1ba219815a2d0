//! External SMT solver driver and the structured verdict.
//!
//! Every check runs as one solver process speaking SMT-LIB 2 on standard
//! input/output, which isolates timeouts per check and keeps the per-check
//! attribution the verdict needs. Remember the sign convention: scripts are
//! negated checks, so a `sat` answer means the check *fails* and the model
//! is the counterexample.

use crate::model::{Dafsm, QualifiedParticipant};
use crate::paths::{
    closed_violation_for, erf_violation_for, unreachable_warnings, CallerCache,
};
use crate::smtgen::{self, ConsistencySite, FormulaKind, SolverScript};
use serde::Serialize;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Evaluate every check.
    NonStop,
    /// Halt at the first violation.
    Stop,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub executable: PathBuf,
    /// Extra arguments; `z3` needs `-in` to read from stdin.
    pub args: Vec<String>,
    /// Per-query timeout in milliseconds.
    pub timeout_ms: u64,
    pub mode: SolverMode,
    /// Worker processes for non-stop solving.
    pub workers: usize,
}

impl SolverConfig {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        let executable: PathBuf = executable.into();
        let args = match executable.file_stem().and_then(|s| s.to_str()) {
            Some("z3") => vec!["-in".to_string()],
            _ => Vec::new(),
        };
        SolverConfig {
            executable,
            args,
            timeout_ms: 10_000,
            mode: SolverMode::NonStop,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }

    pub fn with_mode(mut self, mode: SolverMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_timeout_ms(mut self, ms: u64) -> Self {
        self.timeout_ms = ms;
        self
    }
}

/// Raw answer of one solver query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverResponse {
    /// Satisfiable; carries the `(get-model)` dump.
    Sat(String),
    Unsat,
    /// Timeout or a solver-reported `unknown`.
    Unknown(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cannot run solver `{path}`: {source}")]
    Unavailable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unexpected solver output: {raw:?}")]
    Protocol { raw: String },
    #[error(transparent)]
    Internal(#[from] smtgen::InternalError),
}

fn kill_and_reap(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Run one script in a fresh solver process. After `sat`, `(get-model)` is
/// issued and the dump returned verbatim.
pub fn run_script(config: &SolverConfig, script: &str) -> Result<SolverResponse, SolverError> {
    let mut child = Command::new(&config.executable)
        .args(&config.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| SolverError::Unavailable {
            path: config.executable.display().to_string(),
            source,
        })?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let stdout = child.stdout.take().expect("stdout is piped");

    let (tx, rx) = mpsc::channel::<String>();
    let reader = std::thread::spawn(move || {
        let mut lines = BufReader::new(stdout).lines();
        while let Some(Ok(line)) = lines.next() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    if stdin.write_all(script.as_bytes()).and_then(|_| stdin.flush()).is_err() {
        // The process died before reading the script; report what it said.
        kill_and_reap(&mut child);
        let _ = reader.join();
        let raw: Vec<String> = rx.try_iter().collect();
        return Err(SolverError::Protocol { raw: raw.join("\n") });
    }

    let deadline = Instant::now() + Duration::from_millis(config.timeout_ms);
    let first = loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            kill_and_reap(&mut child);
            let _ = reader.join();
            return Ok(SolverResponse::Unknown(format!(
                "timeout after {} ms",
                config.timeout_ms
            )));
        }
        match rx.recv_timeout(remaining) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => break line,
            Err(mpsc::RecvTimeoutError::Timeout) => continue,
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                kill_and_reap(&mut child);
                let _ = reader.join();
                return Err(SolverError::Protocol { raw: "<eof>".into() });
            }
        }
    };

    let response = match first.trim() {
        "sat" => {
            let _ = stdin.write_all(b"(get-model)\n(exit)\n").and_then(|_| stdin.flush());
            drop(stdin);
            let mut model = String::new();
            loop {
                let remaining = deadline.saturating_duration_since(Instant::now());
                if remaining.is_zero() {
                    break;
                }
                match rx.recv_timeout(remaining) {
                    Ok(line) => {
                        model.push_str(&line);
                        model.push('\n');
                    }
                    Err(_) => break,
                }
            }
            Ok(SolverResponse::Sat(model))
        }
        "unsat" => {
            let _ = stdin.write_all(b"(exit)\n").and_then(|_| stdin.flush());
            drop(stdin);
            Ok(SolverResponse::Unsat)
        }
        "unknown" => {
            let _ = stdin.write_all(b"(exit)\n").and_then(|_| stdin.flush());
            drop(stdin);
            Ok(SolverResponse::Unknown("solver reported unknown".into()))
        }
        other => {
            kill_and_reap(&mut child);
            let _ = reader.join();
            return Err(SolverError::Protocol { raw: other.to_string() });
        }
    };

    // Kill before reaping: a cooperative solver has already exited on
    // `(exit)`, and one that ignores it must not hang the driver.
    kill_and_reap(&mut child);
    let _ = reader.join();
    response
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Overall {
    WellFormed,
    NotWellFormed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    Closed,
    EmptyRoleFree,
    Consistent,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckOutcome {
    Pass,
    Fail,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub site: String,
    pub kind: CheckKind,
    pub outcome: CheckOutcome,
    /// Counterexample model text on `Fail`.
    pub witness: Option<String>,
    pub ms: f64,
    /// Diagnostic for `Unknown` outcomes; not part of the wire format.
    #[serde(skip)]
    pub note: Option<String>,
}

/// Per-check results plus the overall well-formedness outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub overall: Overall,
    pub checks: Vec<CheckRecord>,
    pub warnings: Vec<String>,
}

impl Verdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }

    fn overall_of(checks: &[CheckRecord]) -> Overall {
        if checks.iter().any(|c| c.outcome == CheckOutcome::Fail) {
            Overall::NotWellFormed
        } else if checks.iter().any(|c| c.outcome == CheckOutcome::Unknown) {
            Overall::Inconclusive
        } else {
            Overall::WellFormed
        }
    }
}

fn script_site(machine: &Dafsm, kind: &FormulaKind) -> (String, CheckKind) {
    match kind {
        FormulaKind::Consistency { site: ConsistencySite::Constructor } => {
            ("constructor".to_string(), CheckKind::Consistent)
        }
        FormulaKind::Consistency { site: ConsistencySite::Transition(i) } => {
            (format!("t{i}"), CheckKind::Consistent)
        }
        FormulaKind::Determinism { state, function, .. } => (
            format!("{}:{function}", machine.state_name(*state)),
            CheckKind::Deterministic,
        ),
    }
}

fn response_record(
    machine: &Dafsm,
    script: &SolverScript,
    response: SolverResponse,
    ms: f64,
) -> CheckRecord {
    let (site, kind) = script_site(machine, &script.kind);
    match response {
        SolverResponse::Sat(model) => CheckRecord {
            site,
            kind,
            outcome: CheckOutcome::Fail,
            witness: Some(model),
            ms,
            note: None,
        },
        SolverResponse::Unsat => CheckRecord {
            site,
            kind,
            outcome: CheckOutcome::Pass,
            witness: None,
            ms,
            note: None,
        },
        SolverResponse::Unknown(reason) => CheckRecord {
            site,
            kind,
            outcome: CheckOutcome::Unknown,
            witness: None,
            ms,
            note: Some(reason),
        },
    }
}

/// Run the path checks for one transition, if its caller needs any.
fn caller_record(
    machine: &Dafsm,
    cache: &mut CallerCache,
    index: usize,
) -> Option<CheckRecord> {
    let t = &machine.transitions[index];
    let started = Instant::now();
    let record = match &t.label.participant {
        QualifiedParticipant::Bound { .. } => {
            let violation = closed_violation_for(machine, Some(cache), index);
            Some((CheckKind::Closed, violation.map(|v| v.witness.render(machine))))
        }
        QualifiedParticipant::Existing { .. } => {
            let violation = erf_violation_for(machine, Some(cache), index);
            Some((CheckKind::EmptyRoleFree, violation.map(|v| v.witness.render(machine))))
        }
        QualifiedParticipant::Fresh { .. } => None,
    };
    record.map(|(kind, witness)| CheckRecord {
        site: format!("t{index}"),
        kind,
        outcome: if witness.is_some() { CheckOutcome::Fail } else { CheckOutcome::Pass },
        witness,
        ms: started.elapsed().as_secs_f64() * 1e3,
        note: None,
    })
}

/// Check the whole machine: path checks first (no solver), then the solver
/// scripts in manifest order. Well-formed means closed, empty-role free,
/// consistent and strongly deterministic. In stop mode the first violation
/// ends the run with the records gathered so far.
pub fn check_machine(machine: &Dafsm, config: &SolverConfig) -> Result<Verdict, SolverError> {
    let warnings: Vec<String> = unreachable_warnings(machine)
        .iter()
        .map(|w| w.to_string())
        .collect();

    let mut checks: Vec<CheckRecord> = Vec::new();
    let mut cache = CallerCache::new();
    for index in 0..machine.transitions.len() {
        if let Some(record) = caller_record(machine, &mut cache, index) {
            let failed = record.outcome == CheckOutcome::Fail;
            checks.push(record);
            if failed && config.mode == SolverMode::Stop {
                return Ok(Verdict {
                    overall: Overall::NotWellFormed,
                    checks,
                    warnings,
                });
            }
        }
    }

    let formulas = smtgen::collect_formulas(machine);
    let model = smtgen::assemble_model(&formulas)?;

    match config.mode {
        SolverMode::Stop => {
            for script in &model.scripts {
                let started = Instant::now();
                let response = run_script(config, &script.text)?;
                let ms = started.elapsed().as_secs_f64() * 1e3;
                let record = response_record(machine, script, response, ms);
                let failed = record.outcome == CheckOutcome::Fail;
                checks.push(record);
                if failed {
                    return Ok(Verdict {
                        overall: Overall::NotWellFormed,
                        checks,
                        warnings,
                    });
                }
            }
        }
        SolverMode::NonStop => {
            let workers = config.workers.clamp(1, model.scripts.len().max(1));
            let next = AtomicUsize::new(0);
            let results: Vec<Mutex<Option<Result<CheckRecord, SolverError>>>> =
                model.scripts.iter().map(|_| Mutex::new(None)).collect();
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(script) = model.scripts.get(i) else { break };
                        let started = Instant::now();
                        let outcome = run_script(config, &script.text).map(|response| {
                            let ms = started.elapsed().as_secs_f64() * 1e3;
                            response_record(machine, script, response, ms)
                        });
                        *results[i].lock().unwrap() = Some(outcome);
                    });
                }
            });
            for cell in results {
                let outcome = cell.into_inner().unwrap().expect("every script was run");
                checks.push(outcome?);
            }
        }
    }

    Ok(Verdict {
        overall: Verdict::overall_of(&checks),
        checks,
        warnings,
    })
}
