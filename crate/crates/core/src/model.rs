//! Domain model of data-aware finite state machines and the structural
//! validity rules every parsed machine must satisfy before analysis.
//!
//! A machine couples a plain FSM with a coordinator: transition labels carry
//! a guard, a qualified participant (the caller), a function with typed
//! parameter declarations, and a set of simultaneous assignments to the
//! coordinator's state variables.

use crate::expr::{DataType, Expr, UnOp, VarRef};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// Index into [`Dafsm::states`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The caller annotation on a transition.
///
/// `Fresh` introduces a new participant of the given role, `Existing`
/// refers to a participant already holding the role, and `Bound` is a bare
/// occurrence that must be justified by an earlier binder on every path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QualifiedParticipant {
    Fresh { var: String, role: String },
    Existing { var: String, role: String },
    Bound { var: String },
}

impl QualifiedParticipant {
    pub fn var(&self) -> &str {
        match self {
            QualifiedParticipant::Fresh { var, .. }
            | QualifiedParticipant::Existing { var, .. }
            | QualifiedParticipant::Bound { var } => var,
        }
    }

    pub fn role(&self) -> Option<&str> {
        match self {
            QualifiedParticipant::Fresh { role, .. }
            | QualifiedParticipant::Existing { role, .. } => Some(role),
            QualifiedParticipant::Bound { .. } => None,
        }
    }
}

impl fmt::Display for QualifiedParticipant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualifiedParticipant::Fresh { var, role } => write!(f, "{var}:{role}"),
            QualifiedParticipant::Existing { var, role } => write!(f, "@{var}:{role}"),
            QualifiedParticipant::Bound { var } => write!(f, "{var}"),
        }
    }
}

/// A declared parameter: either a data parameter (`int _x`) or a
/// participant parameter (`p:R`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Declaration {
    pub name: String,
    pub sort: DeclSort,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DeclSort {
    Data(DataType),
    Role(String),
}

impl fmt::Display for Declaration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sort {
            DeclSort::Data(ty) => write!(f, "{ty} {}", self.name),
            DeclSort::Role(role) => write!(f, "{}:{role}", self.name),
        }
    }
}

/// `lhs := rhs` over a coordinator state variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub lhs: String,
    pub rhs: Expr,
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.lhs, self.rhs)
    }
}

/// Label of an ordinary transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionLabel {
    pub guard: Expr,
    pub participant: QualifiedParticipant,
    pub function: String,
    pub decls: Vec<Declaration>,
    /// Simultaneous assignments; each variable at most once (checked by
    /// [`validate_structure`]). Input order is preserved for printing.
    pub assignments: Vec<Assignment>,
}

impl TransitionLabel {
    /// Data parameter declarations, in order.
    pub fn data_params(&self) -> impl Iterator<Item = (&str, DataType)> {
        self.decls.iter().filter_map(|d| match d.sort {
            DeclSort::Data(ty) => Some((d.name.as_str(), ty)),
            DeclSort::Role(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub source: StateId,
    pub label: TransitionLabel,
    pub target: StateId,
}

/// The constructor step creating the coordinator: binds the creator to its
/// role, declares the coordinator's parameters and sets initial values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructorLabel {
    pub creator: String,
    pub creator_role: String,
    pub params: Vec<Declaration>,
    pub init_assignments: Vec<Assignment>,
}

impl ConstructorLabel {
    pub fn data_params(&self) -> impl Iterator<Item = (&str, DataType)> {
        self.params.iter().filter_map(|d| match d.sort {
            DeclSort::Data(ty) => Some((d.name.as_str(), ty)),
            DeclSort::Role(_) => None,
        })
    }
}

/// A data-aware finite state machine.
///
/// Immutable after construction; analyses share it read-only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dafsm {
    pub states: Vec<String>,
    pub initial: StateId,
    pub accepting: BTreeSet<StateId>,
    pub coordinator: String,
    pub constructor: ConstructorLabel,
    /// Transition list in input-file order; analyses and output depend on
    /// this order being stable.
    pub transitions: Vec<Transition>,
    pub state_vars: BTreeMap<String, DataType>,
}

impl Dafsm {
    pub fn state_name(&self, id: StateId) -> &str {
        &self.states[id.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn is_accepting(&self, id: StateId) -> bool {
        self.accepting.contains(&id)
    }

    /// All transitions with the given source, in input order.
    pub fn outgoing(&self, state: StateId) -> Result<Vec<&Transition>, UnknownState> {
        Ok(self
            .outgoing_indexed(state)?
            .into_iter()
            .map(|(_, t)| t)
            .collect())
    }

    /// Like [`Self::outgoing`] but paired with each transition's index into
    /// [`Self::transitions`].
    pub fn outgoing_indexed(
        &self,
        state: StateId,
    ) -> Result<Vec<(usize, &Transition)>, UnknownState> {
        if state.0 >= self.states.len() {
            return Err(UnknownState(state.0));
        }
        Ok(self
            .transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.source == state)
            .collect())
    }

    /// Structural equality after interning: compares by state names rather
    /// than by state numbering, so two machines built with different
    /// interning orders still compare equal.
    pub fn structurally_eq(&self, other: &Dafsm) -> bool {
        let names = |m: &Dafsm, id: StateId| m.states[id.0].clone();
        if self.coordinator != other.coordinator
            || self.constructor != other.constructor
            || self.state_vars != other.state_vars
            || names(self, self.initial) != names(other, other.initial)
        {
            return false;
        }
        let accept = |m: &Dafsm| -> BTreeSet<String> {
            m.accepting.iter().map(|&s| names(m, s)).collect()
        };
        if accept(self) != accept(other) {
            return false;
        }
        fn state_set(m: &Dafsm) -> BTreeSet<&String> {
            m.states.iter().collect()
        }
        if state_set(self) != state_set(other) {
            return false;
        }
        if self.transitions.len() != other.transitions.len() {
            return false;
        }
        self.transitions
            .iter()
            .zip(&other.transitions)
            .all(|(a, b)| {
                names(self, a.source) == names(other, b.source)
                    && names(self, a.target) == names(other, b.target)
                    && a.label == b.label
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown state index {0}")]
pub struct UnknownState(pub usize);

/// Where a structural error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Site {
    Machine,
    Constructor,
    Transition(usize),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Machine => write!(f, "machine"),
            Site::Constructor => write!(f, "constructor"),
            Site::Transition(i) => write!(f, "transition {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuralError {
    #[error("{site}: state `{name}` is not in the state set")]
    UnknownStateName { site: Site, name: String },
    #[error("{site}: duplicate parameter declaration `{name}`")]
    DuplicateDeclaration { site: Site, name: String },
    #[error("{site}: variable `{var}` assigned more than once")]
    DuplicateAssignment { site: Site, var: String },
    #[error("{site}: data parameter `{param}` is not declared")]
    UndeclaredParam { site: Site, param: String },
    #[error("{site}: unknown state variable `{var}`")]
    UnknownVariable { site: Site, var: String },
    #[error("{site}: type error at `{symbol}`: {detail}")]
    TypeError {
        site: Site,
        symbol: String,
        detail: String,
    },
    #[error("{site}: invalid name `{name}`: {reason}")]
    InvalidName {
        site: Site,
        name: String,
        reason: String,
    },
    #[error(
        "participant `{var}` is bound under role `{role_a}` ({site_a}) and role `{role_b}` ({site_b})"
    )]
    RoleConflict {
        var: String,
        role_a: String,
        site_a: Site,
        role_b: String,
        site_b: Site,
    },
    #[error("{site}: `old` qualifier is not allowed in source expressions")]
    OldInSource { site: Site },
    #[error("{site}: quantifiers are not allowed in source expressions")]
    QuantifierInSource { site: Site },
}

impl StructuralError {
    /// The site the error is attached to; role conflicts report the later
    /// of their two sites.
    pub fn site(&self) -> Site {
        match self {
            StructuralError::UnknownStateName { site, .. }
            | StructuralError::DuplicateDeclaration { site, .. }
            | StructuralError::DuplicateAssignment { site, .. }
            | StructuralError::UndeclaredParam { site, .. }
            | StructuralError::UnknownVariable { site, .. }
            | StructuralError::TypeError { site, .. }
            | StructuralError::InvalidName { site, .. }
            | StructuralError::OldInSource { site }
            | StructuralError::QuantifierInSource { site } => *site,
            StructuralError::RoleConflict { site_a, site_b, .. } => (*site_a).max(*site_b),
        }
    }
}

/// Checks every structural invariant; returns the empty list iff the machine
/// is fit for analysis. Pure: identical machines yield identical error lists.
pub fn validate_structure(machine: &Dafsm) -> Vec<StructuralError> {
    let mut errors = Vec::new();

    if machine.initial.0 >= machine.states.len() {
        errors.push(StructuralError::UnknownStateName {
            site: Site::Machine,
            name: format!("{}", machine.initial),
        });
    }
    for &acc in &machine.accepting {
        if acc.0 >= machine.states.len() {
            errors.push(StructuralError::UnknownStateName {
                site: Site::Machine,
                name: format!("{acc}"),
            });
        }
    }
    for (i, t) in machine.transitions.iter().enumerate() {
        for endpoint in [t.source, t.target] {
            if endpoint.0 >= machine.states.len() {
                errors.push(StructuralError::UnknownStateName {
                    site: Site::Transition(i),
                    name: format!("{endpoint}"),
                });
            }
        }
    }

    validate_names(machine, &mut errors);
    validate_constructor(machine, &mut errors);
    for (i, t) in machine.transitions.iter().enumerate() {
        validate_label(machine, Site::Transition(i), &t.label, &mut errors);
    }
    validate_roles(machine, &mut errors);

    errors
}

/// Reserved suffixes keep solver-side renaming collision-free: `x_old` is
/// the pre-state copy of `x` and `p__3` a per-transition parameter copy.
fn check_reserved(site: Site, name: &str, errors: &mut Vec<StructuralError>) {
    if name.ends_with("_old") {
        errors.push(StructuralError::InvalidName {
            site,
            name: name.to_string(),
            reason: "names ending in `_old` are reserved".into(),
        });
    } else if name.contains("__") {
        errors.push(StructuralError::InvalidName {
            site,
            name: name.to_string(),
            reason: "names containing `__` are reserved".into(),
        });
    }
}

fn validate_names(machine: &Dafsm, errors: &mut Vec<StructuralError>) {
    for name in machine.state_vars.keys() {
        if name.starts_with('_') {
            errors.push(StructuralError::InvalidName {
                site: Site::Machine,
                name: name.clone(),
                reason: "state variables must not start with `_`".into(),
            });
        }
        check_reserved(Site::Machine, name, errors);
    }
}

fn decls_ok(
    site: Site,
    decls: &[Declaration],
    errors: &mut Vec<StructuralError>,
) -> HashMap<String, DataType> {
    let mut seen = BTreeSet::new();
    let mut data = HashMap::new();
    for d in decls {
        if !seen.insert(d.name.clone()) {
            errors.push(StructuralError::DuplicateDeclaration {
                site,
                name: d.name.clone(),
            });
        }
        check_reserved(site, &d.name, errors);
        match &d.sort {
            DeclSort::Data(ty) => {
                if !d.name.starts_with('_') {
                    errors.push(StructuralError::InvalidName {
                        site,
                        name: d.name.clone(),
                        reason: "data parameters must start with `_`".into(),
                    });
                }
                data.insert(d.name.clone(), *ty);
            }
            DeclSort::Role(_) => {
                if d.name.starts_with('_') {
                    errors.push(StructuralError::InvalidName {
                        site,
                        name: d.name.clone(),
                        reason: "participant parameters must not start with `_`".into(),
                    });
                }
            }
        }
    }
    data
}

fn assignments_ok(
    site: Site,
    assignments: &[Assignment],
    params: &HashMap<String, DataType>,
    machine: &Dafsm,
    errors: &mut Vec<StructuralError>,
) {
    let mut assigned = BTreeSet::new();
    for a in assignments {
        if !assigned.insert(a.lhs.clone()) {
            errors.push(StructuralError::DuplicateAssignment {
                site,
                var: a.lhs.clone(),
            });
        }
        if a.lhs.starts_with('_') {
            errors.push(StructuralError::InvalidName {
                site,
                name: a.lhs.clone(),
                reason: "assignment targets must be state variables".into(),
            });
            continue;
        }
        let lhs_ty = match machine.state_vars.get(&a.lhs) {
            Some(ty) => *ty,
            None => {
                errors.push(StructuralError::UnknownVariable {
                    site,
                    var: a.lhs.clone(),
                });
                continue;
            }
        };
        if let Some(rhs_ty) = check_expr(site, &a.rhs, params, machine, errors) {
            if rhs_ty != lhs_ty {
                errors.push(StructuralError::TypeError {
                    site,
                    symbol: a.lhs.clone(),
                    detail: format!("assigned {rhs_ty} to {lhs_ty} variable"),
                });
            }
        }
    }
}

fn validate_constructor(machine: &Dafsm, errors: &mut Vec<StructuralError>) {
    let site = Site::Constructor;
    let ctor = &machine.constructor;
    if ctor.creator.starts_with('_') {
        errors.push(StructuralError::InvalidName {
            site,
            name: ctor.creator.clone(),
            reason: "participant variables must not start with `_`".into(),
        });
    }
    let params = decls_ok(site, &ctor.params, errors);
    assignments_ok(site, &ctor.init_assignments, &params, machine, errors);
}

fn validate_label(
    machine: &Dafsm,
    site: Site,
    label: &TransitionLabel,
    errors: &mut Vec<StructuralError>,
) {
    let params = decls_ok(site, &label.decls, errors);
    if let Some(ty) = check_expr(site, &label.guard, &params, machine, errors) {
        if ty != DataType::Bool {
            errors.push(StructuralError::TypeError {
                site,
                symbol: label.guard.to_string(),
                detail: format!("guard must be bool, found {ty}"),
            });
        }
    }
    assignments_ok(site, &label.assignments, &params, machine, errors);
}

/// Bottom-up type check of an expression in a transition's scope. Pushes an
/// error and returns `None` on the first problem within a subtree.
fn check_expr(
    site: Site,
    e: &Expr,
    params: &HashMap<String, DataType>,
    machine: &Dafsm,
    errors: &mut Vec<StructuralError>,
) -> Option<DataType> {
    match e {
        Expr::Int(_) => Some(DataType::Int),
        Expr::Bool(_) => Some(DataType::Bool),
        Expr::Var(VarRef::Param(name)) => match params.get(name) {
            Some(ty) => Some(*ty),
            None => {
                errors.push(StructuralError::UndeclaredParam {
                    site,
                    param: name.clone(),
                });
                None
            }
        },
        Expr::Var(VarRef::State(name)) => match machine.state_vars.get(name) {
            Some(ty) => Some(*ty),
            None => {
                errors.push(StructuralError::UnknownVariable {
                    site,
                    var: name.clone(),
                });
                None
            }
        },
        Expr::Var(VarRef::Old(_)) => {
            errors.push(StructuralError::OldInSource { site });
            None
        }
        Expr::Unary(op, inner) => {
            let ty = check_expr(site, inner, params, machine, errors)?;
            let want = match op {
                UnOp::Neg => DataType::Int,
                UnOp::Not => DataType::Bool,
            };
            if ty != want {
                errors.push(StructuralError::TypeError {
                    site,
                    symbol: e.to_string(),
                    detail: format!("operand must be {want}, found {ty}"),
                });
                return None;
            }
            Some(want)
        }
        Expr::Binary(op, a, b) => {
            let ta = check_expr(site, a, params, machine, errors)?;
            let tb = check_expr(site, b, params, machine, errors)?;
            let mismatch = |errors: &mut Vec<StructuralError>, want: DataType| {
                errors.push(StructuralError::TypeError {
                    site,
                    symbol: e.to_string(),
                    detail: format!("operands must be {want}, found {ta} and {tb}"),
                });
            };
            if op.is_arith() {
                if ta != DataType::Int || tb != DataType::Int {
                    mismatch(errors, DataType::Int);
                    return None;
                }
                Some(DataType::Int)
            } else if op.is_comparison() {
                if ta != DataType::Int || tb != DataType::Int {
                    mismatch(errors, DataType::Int);
                    return None;
                }
                Some(DataType::Bool)
            } else if op.is_equality() {
                if ta != tb {
                    errors.push(StructuralError::TypeError {
                        site,
                        symbol: e.to_string(),
                        detail: format!("cannot compare {ta} with {tb}"),
                    });
                    return None;
                }
                Some(DataType::Bool)
            } else {
                if ta != DataType::Bool || tb != DataType::Bool {
                    mismatch(errors, DataType::Bool);
                    return None;
                }
                Some(DataType::Bool)
            }
        }
        Expr::Exists(..) => {
            errors.push(StructuralError::QuantifierInSource { site });
            None
        }
    }
}

/// A participant plays at most one role: any two binders (constructor
/// creator, fresh/existing callers, participant parameter declarations)
/// sharing a variable name must agree on the role.
fn validate_roles(machine: &Dafsm, errors: &mut Vec<StructuralError>) {
    let mut bindings: HashMap<String, (String, Site)> = HashMap::new();
    let mut occurrences: Vec<(&str, &str, Site)> = Vec::new();

    let ctor = &machine.constructor;
    occurrences.push((&ctor.creator, &ctor.creator_role, Site::Constructor));
    for d in &ctor.params {
        if let DeclSort::Role(r) = &d.sort {
            occurrences.push((&d.name, r, Site::Constructor));
        }
    }
    for (i, t) in machine.transitions.iter().enumerate() {
        let site = Site::Transition(i);
        if let Some(role) = t.label.participant.role() {
            occurrences.push((t.label.participant.var(), role, site));
        }
        for d in &t.label.decls {
            if let DeclSort::Role(r) = &d.sort {
                occurrences.push((&d.name, r, site));
            }
        }
    }

    for (var, role, site) in occurrences {
        match bindings.get(var) {
            Some((known, known_site)) if known != role => {
                errors.push(StructuralError::RoleConflict {
                    var: var.to_string(),
                    role_a: known.clone(),
                    site_a: *known_site,
                    role_b: role.to_string(),
                    site_b: site,
                });
            }
            Some(_) => {}
            None => {
                bindings.insert(var.to_string(), (role.to_string(), site));
            }
        }
    }
}
