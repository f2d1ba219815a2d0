//! Acyclic path enumeration and the path-based caller checks: closedness
//! (every bare caller occurrence is preceded by a binder on every path) and
//! strong empty-role freedom (every `@p:R` caller is preceded by a step
//! expanding `R` on every path).
//!
//! Both properties quantify over all paths but are decided on acyclic paths
//! only: cutting a cycle out of a path removes steps, so a binder found on
//! every acyclic prefix is on every prefix. Enumeration is a DFS with a
//! visited-state set, lazy so a violating path short-circuits the scan, and
//! the per-(state, caller) outcome is memoized.

use crate::model::{
    ConstructorLabel, Dafsm, DeclSort, QualifiedParticipant, StateId, Transition, UnknownState,
};
use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;

/// One step of a path: the constructor (always step zero) or a transition
/// identified by its index in [`Dafsm::transitions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathStep {
    Constructor,
    Transition(usize),
}

/// An acyclic path from the initial state, starting with the constructor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Path {
    pub steps: Vec<PathStep>,
}

impl Path {
    /// Transition indices, without the leading constructor step.
    pub fn transition_indices(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                PathStep::Transition(i) => Some(*i),
                PathStep::Constructor => None,
            })
            .collect()
    }

    pub fn render(&self, machine: &Dafsm) -> String {
        let mut parts = Vec::new();
        for step in &self.steps {
            match step {
                PathStep::Constructor => parts.push(format!(
                    "{}:{} > starts {}",
                    machine.constructor.creator,
                    machine.constructor.creator_role,
                    machine.coordinator
                )),
                PathStep::Transition(i) => {
                    let t = &machine.transitions[*i];
                    parts.push(format!(
                        "{} -{}.{}-> {}",
                        machine.state_name(t.source),
                        t.label.participant,
                        t.label.function,
                        machine.state_name(t.target)
                    ));
                }
            }
        }
        parts.join("; ")
    }
}

/// A step under inspection: the constructor or an ordinary transition.
#[derive(Debug, Clone, Copy)]
pub enum StepRef<'a> {
    Constructor(&'a ConstructorLabel),
    Transition(&'a Transition),
}

impl<'a> StepRef<'a> {
    pub fn of(machine: &'a Dafsm, step: PathStep) -> StepRef<'a> {
        match step {
            PathStep::Constructor => StepRef::Constructor(&machine.constructor),
            PathStep::Transition(i) => StepRef::Transition(&machine.transitions[i]),
        }
    }
}

/// Does this step bind participant variable `p`? A step binds `p` when its
/// caller is `νp:R` or `@p:R` for some role, or `p:R` occurs among its
/// parameter declarations. The constructor binds its creator and its
/// participant parameters.
pub fn binds(step: StepRef<'_>, p: &str) -> bool {
    match step {
        StepRef::Constructor(ctor) => {
            ctor.creator == p
                || ctor
                    .params
                    .iter()
                    .any(|d| matches!(d.sort, DeclSort::Role(_)) && d.name == p)
        }
        StepRef::Transition(t) => {
            let caller_binds = match &t.label.participant {
                QualifiedParticipant::Fresh { var, .. }
                | QualifiedParticipant::Existing { var, .. } => var == p,
                QualifiedParticipant::Bound { .. } => false,
            };
            caller_binds
                || t.label
                    .decls
                    .iter()
                    .any(|d| matches!(d.sort, DeclSort::Role(_)) && d.name == p)
        }
    }
}

/// Does this step expand role `R`? Only fresh binders and participant
/// parameter declarations expand a role; an `@p:R` caller does not (it
/// requires the role to be inhabited already). The constructor's creator
/// counts as a fresh binder.
pub fn expands(step: StepRef<'_>, role: &str) -> bool {
    match step {
        StepRef::Constructor(ctor) => {
            ctor.creator_role == role
                || ctor
                    .params
                    .iter()
                    .any(|d| matches!(&d.sort, DeclSort::Role(r) if r == role))
        }
        StepRef::Transition(t) => {
            let caller_expands = matches!(
                &t.label.participant,
                QualifiedParticipant::Fresh { role: r, .. } if r == role
            );
            caller_expands
                || t.label
                    .decls
                    .iter()
                    .any(|d| matches!(&d.sort, DeclSort::Role(r) if r == role))
        }
    }
}

/// Depth-first enumeration of every acyclic path from the initial state to
/// `target`. Paths start with the constructor step; each state occurs at
/// most once. The callback may break to stop early.
pub fn for_each_acyclic_path_to<B>(
    machine: &Dafsm,
    target: StateId,
    mut f: impl FnMut(&[PathStep]) -> ControlFlow<B>,
) -> Result<Option<B>, UnknownState> {
    if target.0 >= machine.states.len() {
        return Err(UnknownState(target.0));
    }

    struct Dfs<'a, B, F: FnMut(&[PathStep]) -> ControlFlow<B>> {
        machine: &'a Dafsm,
        target: StateId,
        visited: Vec<bool>,
        path: Vec<PathStep>,
        f: F,
    }

    impl<B, F: FnMut(&[PathStep]) -> ControlFlow<B>> Dfs<'_, B, F> {
        fn go(&mut self, current: StateId) -> ControlFlow<B> {
            if current == self.target {
                (self.f)(&self.path)?;
            }
            self.visited[current.0] = true;
            for (i, t) in self.machine.transitions.iter().enumerate() {
                if t.source == current && !self.visited[t.target.0] {
                    self.path.push(PathStep::Transition(i));
                    let r = self.go(t.target);
                    self.path.pop();
                    r?;
                }
            }
            self.visited[current.0] = false;
            ControlFlow::Continue(())
        }
    }

    let mut dfs = Dfs {
        machine,
        target,
        visited: vec![false; machine.states.len()],
        path: vec![PathStep::Constructor],
        f: &mut f,
    };
    match dfs.go(machine.initial) {
        ControlFlow::Continue(()) => Ok(None),
        ControlFlow::Break(b) => Ok(Some(b)),
    }
}

/// All acyclic paths from the initial state to `target`, in DFS order.
pub fn acyclic_paths_to(machine: &Dafsm, target: StateId) -> Result<Vec<Path>, UnknownState> {
    let mut out = Vec::new();
    for_each_acyclic_path_to(machine, target, |steps| {
        out.push(Path { steps: steps.to_vec() });
        ControlFlow::<()>::Continue(())
    })?;
    Ok(out)
}

/// Total number of acyclic paths from the initial state to any state
/// (each DFS node is one path; the trivial constructor-only path counts).
pub fn total_acyclic_paths(machine: &Dafsm) -> u64 {
    let mut count = 0u64;
    let mut visited = vec![false; machine.states.len()];
    fn go(machine: &Dafsm, current: StateId, visited: &mut [bool], count: &mut u64) {
        *count += 1;
        visited[current.0] = true;
        for t in &machine.transitions {
            if t.source == current && !visited[t.target.0] {
                go(machine, t.target, visited, count);
            }
        }
        visited[current.0] = false;
    }
    go(machine, machine.initial, &mut visited, &mut count);
    count
}

/// What a caller occurrence needs from the path prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CallerKind {
    Bound,
    Existing,
}

/// Memoization key: outcomes are reused across transitions with the same
/// source state and caller.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallerCacheKey {
    pub source: StateId,
    pub var: String,
    pub kind: CallerKind,
}

/// Cache of per-(state, caller) justification outcomes: `None` means every
/// acyclic path justifies the caller; `Some(path)` is the first witness
/// path that does not.
#[derive(Debug, Default)]
pub struct CallerCache {
    entries: HashMap<CallerCacheKey, Option<Path>>,
}

impl CallerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosednessViolation {
    /// Index of the transition whose bare caller is unjustified.
    pub transition: usize,
    pub var: String,
    /// An acyclic path to the transition's source with no step binding the
    /// variable.
    pub witness: Path,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyRoleViolation {
    /// Index of the transition whose `@p:R` caller finds `R` unexpanded.
    pub transition: usize,
    pub var: String,
    pub role: String,
    pub witness: Path,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// The transition's source is unreachable from the initial state, so
    /// the path checks hold vacuously for it.
    UnreachableTransition(usize),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnreachableTransition(i) => {
                write!(f, "transition {i} is unreachable from the initial state")
            }
        }
    }
}

/// First acyclic path to `source` whose prefix fails `justified`, if any.
/// The occurrence itself is not part of the prefix: a transition does not
/// justify its own caller.
fn first_unjustified_path(
    machine: &Dafsm,
    source: StateId,
    justified: impl Fn(StepRef<'_>) -> bool,
) -> Option<Path> {
    let hit = for_each_acyclic_path_to(machine, source, |steps| {
        let ok = steps
            .iter()
            .any(|&s| justified(StepRef::of(machine, s)));
        if ok {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(Path { steps: steps.to_vec() })
        }
    })
    .expect("source state comes from the machine itself");
    hit
}

fn lookup(
    machine: &Dafsm,
    cache: Option<&mut CallerCache>,
    key: CallerCacheKey,
    role: Option<&str>,
) -> Option<Path> {
    fn compute(machine: &Dafsm, key: &CallerCacheKey, role: Option<&str>) -> Option<Path> {
        match key.kind {
            CallerKind::Bound => {
                first_unjustified_path(machine, key.source, |step| binds(step, &key.var))
            }
            CallerKind::Existing => {
                let role = role.expect("existing callers carry a role");
                first_unjustified_path(machine, key.source, |step| expands(step, role))
            }
        }
    }
    match cache {
        Some(cache) => {
            if let Some(hit) = cache.entries.get(&key) {
                return hit.clone();
            }
            let outcome = compute(machine, &key, role);
            cache.entries.insert(key, outcome.clone());
            outcome
        }
        None => compute(machine, &key, role),
    }
}

/// Closedness of one transition: `Some(violation)` when the transition has
/// a bare caller and some acyclic path to its source binds nothing, `None`
/// when it passes or does not apply.
pub fn closed_violation_for(
    machine: &Dafsm,
    cache: Option<&mut CallerCache>,
    transition: usize,
) -> Option<ClosednessViolation> {
    let t = &machine.transitions[transition];
    let QualifiedParticipant::Bound { var } = &t.label.participant else {
        return None;
    };
    let key = CallerCacheKey {
        source: t.source,
        var: var.clone(),
        kind: CallerKind::Bound,
    };
    lookup(machine, cache, key, None).map(|witness| ClosednessViolation {
        transition,
        var: var.clone(),
        witness,
    })
}

/// Empty-role freedom of one transition: applies to `@p:R` callers only.
pub fn erf_violation_for(
    machine: &Dafsm,
    cache: Option<&mut CallerCache>,
    transition: usize,
) -> Option<EmptyRoleViolation> {
    let t = &machine.transitions[transition];
    let QualifiedParticipant::Existing { var, role } = &t.label.participant else {
        return None;
    };
    let key = CallerCacheKey {
        source: t.source,
        var: var.clone(),
        kind: CallerKind::Existing,
    };
    lookup(machine, cache, key, Some(role)).map(|witness| EmptyRoleViolation {
        transition,
        var: var.clone(),
        role: role.clone(),
        witness,
    })
}

/// Closedness: every transition with a bare caller `p` must see a binder of
/// `p` on every acyclic path reaching its source. One violation per
/// offending transition, carrying the first binder-free path found.
pub fn check_closed(machine: &Dafsm, mut cache: Option<&mut CallerCache>) -> Vec<ClosednessViolation> {
    (0..machine.transitions.len())
        .filter_map(|i| closed_violation_for(machine, cache.as_deref_mut(), i))
        .collect()
}

/// Strong empty-role freedom: every transition with an `@p:R` caller must
/// see a step expanding `R` on every acyclic path reaching its source.
pub fn check_empty_role_free(
    machine: &Dafsm,
    mut cache: Option<&mut CallerCache>,
) -> Vec<EmptyRoleViolation> {
    (0..machine.transitions.len())
        .filter_map(|i| erf_violation_for(machine, cache.as_deref_mut(), i))
        .collect()
}

/// Transitions whose source is unreachable from the initial state. The path
/// checks are vacuous for them, which silence would hide.
pub fn unreachable_warnings(machine: &Dafsm) -> Vec<Warning> {
    let mut reachable = vec![false; machine.states.len()];
    let mut stack = vec![machine.initial];
    reachable[machine.initial.0] = true;
    while let Some(s) = stack.pop() {
        for t in &machine.transitions {
            if t.source == s && !reachable[t.target.0] {
                reachable[t.target.0] = true;
                stack.push(t.target);
            }
        }
    }
    machine
        .transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| !reachable[t.source.0])
        .map(|(i, _)| Warning::UnreachableTransition(i))
        .collect()
}
