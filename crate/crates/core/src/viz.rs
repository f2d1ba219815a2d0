//! DOT rendering of a machine: one node per state (accepting states
//! double-circled), the constructor drawn as an edge from a point-shaped
//! phantom node, and edge labels in the same notation as the textual format.

use crate::expr::Expr;
use crate::model::Dafsm;

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

fn edge_label(machine: &Dafsm, index: usize) -> String {
    let t = &machine.transitions[index];
    let mut label = String::new();
    if t.label.guard != Expr::Bool(true) {
        label.push_str(&format!("{{{}}} ", t.label.guard));
    }
    label.push_str(&format!(
        "{} > {}.{}({})",
        t.label.participant,
        machine.coordinator,
        t.label.function,
        t.label
            .decls
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    if !t.label.assignments.is_empty() {
        let assigns = t
            .label
            .assignments
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        label.push_str(&format!(" {{{assigns}}}"));
    }
    label
}

/// Render the machine as a DOT digraph. Output is a pure function of the
/// machine: identical machines produce identical bytes.
pub fn to_dot(machine: &Dafsm) -> String {
    let mut out = String::from("digraph dafsm {\n  rankdir=LR;\n");
    out.push_str("  __start [shape=point, label=\"\"];\n");
    for (i, name) in machine.states.iter().enumerate() {
        let shape = if machine.is_accepting(crate::model::StateId(i)) {
            "doublecircle"
        } else {
            "circle"
        };
        out.push_str(&format!("  \"{}\" [shape={shape}];\n", escape(name)));
    }

    let ctor = &machine.constructor;
    let mut ctor_label = format!(
        "{}:{} > starts {}({})",
        ctor.creator,
        ctor.creator_role,
        machine.coordinator,
        ctor.params
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    if !ctor.init_assignments.is_empty() {
        let assigns = ctor
            .init_assignments
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        ctor_label.push_str(&format!(" {{{assigns}}}"));
    }
    out.push_str(&format!(
        "  __start -> \"{}\" [label=\"{}\"];\n",
        escape(machine.state_name(machine.initial)),
        escape(&ctor_label)
    ));

    for i in 0..machine.transitions.len() {
        let t = &machine.transitions[i];
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            escape(machine.state_name(t.source)),
            escape(machine.state_name(t.target)),
            escape(&edge_label(machine, i))
        ));
    }
    out.push_str("}\n");
    out
}
