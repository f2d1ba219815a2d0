//! Solver formula construction for the two SMT-backed well-formedness
//! checks: consistency (after a transition fires, its target can progress)
//! and strong determinism (same-source, same-function transitions are
//! separated by guards or by necessarily-distinct callers).
//!
//! All formulas follow one negated-form convention: quantifiers over state
//! variables are dropped, the check is negated, and a *satisfiable* script
//! means the check *fails*. Consistency keeps the target's own parameters
//! existentially quantified inside the progress disjunction - a state can
//! progress when some call values enable some outgoing transition.

use crate::expr::{BinOp, DataType, Expr, UnOp, VarRef};
use crate::model::{Dafsm, QualifiedParticipant, StateId, Transition, UnknownState};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// One disjunct of a progress constraint: an outgoing transition's guard
/// with its data parameters renamed `name__index` to avoid capture between
/// outgoing transitions reusing a parameter name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressPart {
    pub transition: usize,
    pub guard: Expr,
    /// Renamed data parameters of the transition, with sorts.
    pub params: Vec<(String, DataType)>,
}

/// Progress constraint of a state: `true` for accepting states, otherwise
/// the disjunction of outgoing guards (`false` when there are none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressConstraint {
    pub state: StateId,
    pub formula: Expr,
    pub parts: Vec<ProgressPart>,
}

impl ProgressConstraint {
    /// The progress formula with each disjunct's parameters bound by an
    /// existential: progress means some call values enable some transition.
    /// Parameters that do not occur in their guard are not quantified.
    pub fn quantified(&self) -> Expr {
        if self.formula == Expr::Bool(true) {
            return Expr::Bool(true);
        }
        Expr::or_all(self.parts.iter().map(|part| {
            let mut occurring = BTreeSet::new();
            part.guard.visit_vars(&mut |v| {
                if let VarRef::Param(p) = v {
                    occurring.insert(p.clone());
                }
            });
            let bound: Vec<(String, DataType)> = part
                .params
                .iter()
                .filter(|(n, _)| occurring.contains(n))
                .cloned()
                .collect();
            if bound.is_empty() {
                part.guard.clone()
            } else {
                Expr::Exists(bound, Box::new(part.guard.clone()))
            }
        }))
    }
}

/// Compute the progress constraint of `state`.
pub fn progress_constraint(
    machine: &Dafsm,
    state: StateId,
) -> Result<ProgressConstraint, UnknownState> {
    if state.0 >= machine.states.len() {
        return Err(UnknownState(state.0));
    }
    if machine.is_accepting(state) {
        return Ok(ProgressConstraint {
            state,
            formula: Expr::Bool(true),
            parts: Vec::new(),
        });
    }
    let mut parts = Vec::new();
    for (i, t) in machine.outgoing_indexed(state)? {
        let rename: HashMap<String, String> = t
            .label
            .data_params()
            .map(|(n, _)| (n.to_string(), format!("{n}__{i}")))
            .collect();
        let guard = t.label.guard.map_vars(&|v| match v {
            VarRef::Param(p) => VarRef::Param(rename.get(p).cloned().unwrap_or_else(|| p.clone())),
            other => other.clone(),
        });
        let params = t
            .label
            .data_params()
            .map(|(n, ty)| (rename[n].clone(), ty))
            .collect();
        parts.push(ProgressPart { transition: i, guard, params });
    }
    let formula = Expr::or_all(parts.iter().map(|p| p.guard.clone()));
    Ok(ProgressConstraint { state, formula, parts })
}

/// Site of a consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConsistencySite {
    Constructor,
    Transition(usize),
}

impl fmt::Display for ConsistencySite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencySite::Constructor => write!(f, "constructor"),
            ConsistencySite::Transition(i) => write!(f, "t{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormulaKind {
    Consistency {
        site: ConsistencySite,
    },
    Determinism {
        state: StateId,
        function: String,
        /// Transition indices of the group, in input order.
        members: Vec<usize>,
    },
}

/// A solver check in negated form: the assertion is satisfiable exactly
/// when the check fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckFormula {
    pub kind: FormulaKind,
    pub assertion: Expr,
    /// Free variables with sorts, sorted by name.
    pub free_vars: Vec<(String, DataType)>,
}

impl CheckFormula {
    /// Manifest position: constructor first, then by transition index;
    /// determinism before consistency at the same index.
    fn sort_key(&self) -> (i64, u8) {
        match &self.kind {
            FormulaKind::Consistency { site: ConsistencySite::Constructor } => (-1, 1),
            FormulaKind::Consistency { site: ConsistencySite::Transition(i) } => (*i as i64, 1),
            FormulaKind::Determinism { members, .. } => {
                (members.first().copied().unwrap_or(0) as i64, 0)
            }
        }
    }
}

fn rename_assigned_to_old(e: &Expr, assigned: &BTreeSet<String>) -> Expr {
    e.map_vars(&|v| match v {
        VarRef::State(n) if assigned.contains(n) => VarRef::Old(n.clone()),
        other => other.clone(),
    })
}

/// The assignment constraint of a transition: one equality `x = e` per
/// assignment, with state variables that are themselves assigned renamed to
/// their `_old` copies in the right-hand sides. Frame equalities for
/// untouched variables are omitted; they would tie the same symbol to
/// itself.
pub fn assignment_constraint(assignments: &[crate::model::Assignment]) -> Vec<Expr> {
    let assigned: BTreeSet<String> = assignments.iter().map(|a| a.lhs.clone()).collect();
    assignments
        .iter()
        .map(|a| {
            Expr::binary(
                BinOp::Eq,
                Expr::Var(VarRef::State(a.lhs.clone())),
                rename_assigned_to_old(&a.rhs, &assigned),
            )
        })
        .collect()
}

fn collect_free_vars(
    assertion: &Expr,
    machine: &Dafsm,
    own_params: &HashMap<String, DataType>,
) -> Vec<(String, DataType)> {
    fn walk(
        e: &Expr,
        bound: &mut Vec<String>,
        machine: &Dafsm,
        own_params: &HashMap<String, DataType>,
        out: &mut BTreeMap<String, BTreeSet<DataType>>,
    ) {
        match e {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(VarRef::State(n)) => {
                let ty = machine.state_vars.get(n).copied().unwrap_or(DataType::Int);
                out.entry(n.clone()).or_default().insert(ty);
            }
            Expr::Var(VarRef::Old(n)) => {
                let ty = machine.state_vars.get(n).copied().unwrap_or(DataType::Int);
                out.entry(format!("{n}_old")).or_default().insert(ty);
            }
            Expr::Var(VarRef::Param(p)) => {
                if !bound.contains(p) {
                    let ty = own_params.get(p).copied().unwrap_or(DataType::Int);
                    out.entry(p.clone()).or_default().insert(ty);
                }
            }
            Expr::Unary(_, inner) => walk(inner, bound, machine, own_params, out),
            Expr::Binary(_, a, b) => {
                walk(a, bound, machine, own_params, out);
                walk(b, bound, machine, own_params, out);
            }
            Expr::Exists(vars, body) => {
                let n = vars.len();
                bound.extend(vars.iter().map(|(name, _)| name.clone()));
                walk(body, bound, machine, own_params, out);
                bound.truncate(bound.len() - n);
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(assertion, &mut Vec::new(), machine, own_params, &mut map);
    map.into_iter()
        .flat_map(|(name, sorts)| sorts.into_iter().map(move |s| (name.clone(), s)))
        .collect()
}

/// Build the consistency check for a transition or the constructor.
///
/// The assertion is `G' && g_A && !g_target` where `G'` is the guard with
/// assigned state variables renamed to their `_old` copies, `g_A` conjoins
/// one equality per assignment (right-hand sides renamed likewise, frame
/// equalities omitted), and `g_target` is the target's progress constraint
/// with its parameters existentially quantified. Satisfiable means
/// inconsistent.
pub fn build_consistency(machine: &Dafsm, site: ConsistencySite) -> CheckFormula {
    let (guard, assignments, params, target): (Expr, _, Vec<(String, DataType)>, StateId) =
        match site {
            ConsistencySite::Constructor => (
                Expr::Bool(true),
                &machine.constructor.init_assignments,
                machine
                    .constructor
                    .data_params()
                    .map(|(n, t)| (n.to_string(), t))
                    .collect(),
                machine.initial,
            ),
            ConsistencySite::Transition(i) => {
                let t = &machine.transitions[i];
                (
                    t.label.guard.clone(),
                    &t.label.assignments,
                    t.label.data_params().map(|(n, ty)| (n.to_string(), ty)).collect(),
                    t.target,
                )
            }
        };

    let assigned: BTreeSet<String> = assignments.iter().map(|a| a.lhs.clone()).collect();
    let guard_pre = rename_assigned_to_old(&guard, &assigned);
    let equalities = assignment_constraint(assignments);
    let target_progress = progress_constraint(machine, target)
        .expect("target state exists")
        .quantified();

    let assertion = Expr::and_all(
        std::iter::once(guard_pre)
            .chain(equalities)
            .chain(std::iter::once(Expr::not(target_progress))),
    );

    let own_params: HashMap<String, DataType> = params.into_iter().collect();
    let free_vars = collect_free_vars(&assertion, machine, &own_params);
    CheckFormula {
        kind: FormulaKind::Consistency { site },
        assertion,
        free_vars,
    }
}

/// The caller-distinctness relation: related callers are necessarily
/// different participants. A fresh participant differs from any bound or
/// existing one, and existing participants of different roles differ
/// (a participant holds at most one role).
pub fn conflict(a: &QualifiedParticipant, b: &QualifiedParticipant) -> bool {
    use QualifiedParticipant::*;
    match (a, b) {
        (Fresh { .. }, Bound { .. }) | (Bound { .. }, Fresh { .. }) => true,
        (Fresh { .. }, Existing { .. }) | (Existing { .. }, Fresh { .. }) => true,
        (Existing { role: r1, .. }, Existing { role: r2, .. }) => r1 != r2,
        _ => false,
    }
}

/// Positional sort signature used to decide whether two same-function
/// transitions can be unified parameter-wise.
fn signature(t: &Transition) -> Vec<Option<DataType>> {
    t.label
        .decls
        .iter()
        .map(|d| match d.sort {
            crate::model::DeclSort::Data(ty) => Some(ty),
            crate::model::DeclSort::Role(_) => None,
        })
        .collect()
}

/// Build the determinism checks for one state.
///
/// Outgoing transitions are clustered by function name, then greedily
/// partitioned so that no group contains two callers related by the
/// distinctness relation - such callers already separate the transitions.
/// Each non-singleton group yields one formula asserting the negation of
/// pairwise guard exclusivity (parameters unified positionally onto the
/// first member's names); a group mixing arities or parameter sorts cannot
/// be unified and is reported as an always-failing candidate instead.
pub fn build_determinism(machine: &Dafsm, state: StateId) -> Result<Vec<CheckFormula>, UnknownState> {
    let outgoing = machine.outgoing_indexed(state)?;

    let mut clusters: Vec<(&str, Vec<(usize, &Transition)>)> = Vec::new();
    for (i, t) in outgoing {
        match clusters.iter_mut().find(|(f, _)| *f == t.label.function) {
            Some((_, members)) => members.push((i, t)),
            None => clusters.push((&t.label.function, vec![(i, t)])),
        }
    }

    let mut formulas = Vec::new();
    for (function, members) in clusters {
        // First-fit clique partition under the non-conflict relation.
        let mut groups: Vec<Vec<(usize, &Transition)>> = Vec::new();
        for (i, t) in members {
            match groups.iter_mut().find(|g| {
                g.iter().all(|(_, other)| !conflict(&t.label.participant, &other.label.participant))
            }) {
                Some(g) => g.push((i, t)),
                None => groups.push(vec![(i, t)]),
            }
        }

        for group in groups.into_iter().filter(|g| g.len() > 1) {
            let indices: Vec<usize> = group.iter().map(|(i, _)| *i).collect();
            let kind = FormulaKind::Determinism {
                state,
                function: function.to_string(),
                members: indices,
            };

            let sig = signature(group[0].1);
            if group.iter().any(|(_, t)| signature(t) != sig) {
                // Same function, callers that may coincide, but the calls
                // cannot be unified: flag it rather than silently split.
                formulas.push(CheckFormula {
                    kind,
                    assertion: Expr::Bool(true),
                    free_vars: Vec::new(),
                });
                continue;
            }

            let first_params: Vec<(String, DataType)> = group[0]
                .1
                .label
                .data_params()
                .map(|(n, ty)| (n.to_string(), ty))
                .collect();
            let guards: Vec<Expr> = group
                .iter()
                .map(|(_, t)| {
                    let theirs: Vec<&str> = t.label.data_params().map(|(n, _)| n).collect();
                    let rename: HashMap<String, String> = theirs
                        .iter()
                        .zip(&first_params)
                        .map(|(from, (to, _))| (from.to_string(), to.clone()))
                        .collect();
                    t.label.guard.map_vars(&|v| match v {
                        VarRef::Param(p) => VarRef::Param(
                            rename.get(p).cloned().unwrap_or_else(|| p.clone()),
                        ),
                        other => other.clone(),
                    })
                })
                .collect();

            // Phi(F): whenever one guard holds, all others are false.
            let phi = Expr::and_all(guards.iter().enumerate().map(|(j, g)| {
                let others = Expr::and_all(
                    guards
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != j)
                        .map(|(_, other)| Expr::not(other.clone())),
                );
                Expr::binary(BinOp::Implies, g.clone(), others)
            }));
            let assertion = Expr::not(phi);

            let own_params: HashMap<String, DataType> = first_params.into_iter().collect();
            let free_vars = collect_free_vars(&assertion, machine, &own_params);
            formulas.push(CheckFormula { kind, assertion, free_vars });
        }
    }
    Ok(formulas)
}

/// Every solver check of the machine in manifest order: determinism groups
/// and consistency sites. Consistency of a step into an accepting state is
/// trivially satisfied (progress is `true`) and gets no formula.
pub fn collect_formulas(machine: &Dafsm) -> Vec<CheckFormula> {
    let mut formulas = Vec::new();
    if !machine.is_accepting(machine.initial) {
        formulas.push(build_consistency(machine, ConsistencySite::Constructor));
    }
    for s in 0..machine.states.len() {
        formulas.extend(
            build_determinism(machine, StateId(s)).expect("state index is in range"),
        );
    }
    for (i, t) in machine.transitions.iter().enumerate() {
        if !machine.is_accepting(t.target) {
            formulas.push(build_consistency(machine, ConsistencySite::Transition(i)));
        }
    }
    formulas.sort_by_key(|f| f.sort_key());
    formulas
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("internal error: free variable `{name}` declared with conflicting sorts")]
pub struct InternalError {
    pub name: String,
}

/// A ready-to-run SMT-LIB 2 script for one check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverScript {
    pub kind: FormulaKind,
    pub text: String,
}

/// The machine's checks as solver scripts, ordered by the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SolverModel {
    pub scripts: Vec<SolverScript>,
}

/// Render each formula as an SMT-LIB 2 script: logic line, `declare-const`
/// for exactly the free variables, one `assert`, `(check-sat)`. The logic
/// is `QF_LIA` for linear quantifier-free scripts; multiplication of two
/// variables upgrades to `NIA`, quantifiers drop the `QF_` prefix.
pub fn assemble_model(formulas: &[CheckFormula]) -> Result<SolverModel, InternalError> {
    let mut scripts = Vec::new();
    for f in formulas {
        for pair in f.free_vars.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 != pair[1].1 {
                return Err(InternalError { name: pair[0].0.clone() });
            }
        }
        let base = if f.assertion.has_nonlinear_mul() { "NIA" } else { "LIA" };
        let logic = if f.assertion.contains_exists() {
            base.to_string()
        } else {
            format!("QF_{base}")
        };
        let mut text = format!("(set-logic {logic})\n");
        for (name, ty) in &f.free_vars {
            let sort = match ty {
                DataType::Int => "Int",
                DataType::Bool => "Bool",
            };
            text.push_str(&format!("(declare-const {name} {sort})\n"));
        }
        text.push_str(&format!("(assert {})\n(check-sat)\n", smt_term(&f.assertion)));
        scripts.push(SolverScript { kind: f.kind.clone(), text });
    }
    Ok(SolverModel { scripts })
}

/// S-expression rendering of an expression.
pub fn smt_term(e: &Expr) -> String {
    match e {
        Expr::Int(n) => {
            if *n >= 0 {
                n.to_string()
            } else {
                format!("(- {})", (*n as i128).unsigned_abs())
            }
        }
        Expr::Bool(b) => b.to_string(),
        Expr::Var(VarRef::State(n)) | Expr::Var(VarRef::Param(n)) => n.clone(),
        Expr::Var(VarRef::Old(n)) => format!("{n}_old"),
        Expr::Unary(UnOp::Neg, inner) => format!("(- {})", smt_term(inner)),
        Expr::Unary(UnOp::Not, inner) => format!("(not {})", smt_term(inner)),
        Expr::Binary(BinOp::Ne, a, b) => {
            format!("(not (= {} {}))", smt_term(a), smt_term(b))
        }
        Expr::Binary(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Lt => "<",
                BinOp::Le => "<=",
                BinOp::Gt => ">",
                BinOp::Ge => ">=",
                BinOp::Eq => "=",
                BinOp::And => "and",
                BinOp::Or => "or",
                BinOp::Implies => "=>",
                BinOp::Ne => unreachable!(),
            };
            format!("({sym} {} {})", smt_term(a), smt_term(b))
        }
        Expr::Exists(vars, body) => {
            let binders: Vec<String> = vars
                .iter()
                .map(|(n, ty)| {
                    let sort = match ty {
                        DataType::Int => "Int",
                        DataType::Bool => "Bool",
                    };
                    format!("({n} {sort})")
                })
                .collect();
            format!("(exists ({}) {})", binders.join(" "), smt_term(body))
        }
    }
}
