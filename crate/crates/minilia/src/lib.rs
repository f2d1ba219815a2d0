//! A small SMT-LIB 2 solver for linear integer arithmetic with booleans,
//! including the quantified formulas produced by progress-constraint
//! encodings (existentials under negation are eliminated by exact integer
//! projection). Answers `unknown` rather than guessing whenever a query
//! falls outside the decided fragment: nonlinear atoms are attempted by
//! bounded search, projections needing divisibility reasoning give up.
//!
//! Supported commands: `set-logic`, `set-info`, `set-option`,
//! `declare-const`, `declare-fun` (zero arity), `assert`, `check-sat`,
//! `get-model`, `reset`, `exit`.

mod dnf;
pub mod omega;
mod sexp;
mod term;

pub use sexp::{ReadOutcome, Reader, Sexp};

use dnf::Cube;
use omega::{SolveResult, VarAlloc};
use std::collections::HashMap;
use term::{eval, parse_sort, parse_term, Sort, Symbols, Term, Value, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Sat,
    Unsat,
    Unknown,
}

impl Answer {
    fn as_str(self) -> &'static str {
        match self {
            Answer::Sat => "sat",
            Answer::Unsat => "unsat",
            Answer::Unknown => "unknown",
        }
    }
}

/// One solving session over a command stream.
#[derive(Default)]
pub struct Session {
    symbols: Symbols,
    globals: HashMap<String, VarId>,
    declared: Vec<VarId>,
    asserts: Vec<Term>,
    poisoned: Option<String>,
    model: Option<HashMap<VarId, Value>>,
}

/// What the driver should do after a command.
pub enum Step {
    /// Print this (possibly multi-line) response.
    Reply(String),
    /// Nothing to print.
    Quiet,
    /// `(exit)` was received.
    Exit,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn command(&mut self, form: &Sexp) -> Step {
        let Sexp::List(items) = form else {
            self.poison("toplevel form is not a command");
            return Step::Quiet;
        };
        let Some(Sexp::Sym(head)) = items.first() else {
            self.poison("command without a head symbol");
            return Step::Quiet;
        };
        match head.as_str() {
            "set-logic" | "set-info" | "set-option" => Step::Quiet,
            "declare-const" | "declare-fun" => {
                self.declare(items);
                Step::Quiet
            }
            "assert" => {
                self.assert_term(items);
                Step::Quiet
            }
            "check-sat" => Step::Reply(self.check_sat().as_str().to_string()),
            "get-model" => Step::Reply(self.render_model()),
            "reset" => {
                *self = Session::default();
                Step::Quiet
            }
            "exit" => Step::Exit,
            other => {
                self.poison(&format!("unsupported command `{other}`"));
                Step::Quiet
            }
        }
    }

    fn poison(&mut self, message: &str) {
        if self.poisoned.is_none() {
            self.poisoned = Some(message.to_string());
        }
    }

    fn declare(&mut self, items: &[Sexp]) {
        // (declare-const name Sort) or (declare-fun name () Sort)
        let parsed = match items {
            [Sexp::Sym(cmd), Sexp::Sym(name), sort] if cmd == "declare-const" => {
                parse_sort(sort).map(|s| (name.clone(), s))
            }
            [Sexp::Sym(cmd), Sexp::Sym(name), Sexp::List(args), sort]
                if cmd == "declare-fun" && args.is_empty() =>
            {
                parse_sort(sort).map(|s| (name.clone(), s))
            }
            _ => Err("malformed declaration".into()),
        };
        match parsed {
            Ok((name, sort)) => {
                if self.globals.contains_key(&name) {
                    self.poison(&format!("`{name}` is already declared"));
                    return;
                }
                let v = self.symbols.add(&name, sort);
                self.globals.insert(name, v);
                self.declared.push(v);
            }
            Err(e) => self.poison(&e),
        }
    }

    fn assert_term(&mut self, items: &[Sexp]) {
        let [_, body] = items else {
            self.poison("`assert` expects one term");
            return;
        };
        let mut scope = Vec::new();
        match parse_term(body, &mut self.symbols, &self.globals, &mut scope) {
            Ok(term) => self.asserts.push(term),
            Err(e) => {
                let message = e;
                self.poison(&message);
            }
        }
    }

    pub fn check_sat(&mut self) -> Answer {
        self.model = None;
        if self.poisoned.is_some() {
            return Answer::Unknown;
        }
        let conjunction = Term::And(self.asserts.clone());
        let cubes = match dnf::dnf(&conjunction, false, &self.symbols) {
            Ok(cubes) => cubes,
            Err(_) => return Answer::Unknown,
        };

        let mut saw_unknown = false;
        for cube in &cubes {
            match self.decide_cube(cube) {
                CubeOutcome::Sat(model) => {
                    debug_assert!(self.model_satisfies(&model), "witness fails the asserts");
                    self.model = Some(model);
                    return Answer::Sat;
                }
                CubeOutcome::Unsat => {}
                CubeOutcome::Unknown => saw_unknown = true,
            }
        }
        if saw_unknown {
            Answer::Unknown
        } else {
            Answer::Unsat
        }
    }

    fn model_satisfies(&self, model: &HashMap<VarId, Value>) -> bool {
        // Quantified asserts are not ground-checkable; skip them.
        self.asserts.iter().all(|a| {
            if has_quantifier(a) {
                return true;
            }
            matches!(eval(a, model), Some(Value::Bool(true)) | None)
        })
    }

    fn decide_cube(&self, cube: &Cube) -> CubeOutcome {
        if cube.nonlin.is_empty() {
            let mut alloc = VarAlloc::new(self.symbols.len());
            return match omega::solve(&cube.lin, &mut alloc) {
                SolveResult::Sat(ints) => {
                    let mut model: HashMap<VarId, Value> = HashMap::new();
                    for &(v, b) in &cube.bools {
                        model.insert(v, Value::Bool(b));
                    }
                    for (v, n) in ints {
                        if v < self.symbols.len() {
                            model.insert(v, Value::Int(n));
                        }
                    }
                    self.fill_defaults(&mut model);
                    CubeOutcome::Sat(model)
                }
                SolveResult::Unsat => CubeOutcome::Unsat,
                SolveResult::Unknown => CubeOutcome::Unknown,
            };
        }
        self.bounded_search(cube)
    }

    /// Last resort for cubes with nonlinear atoms: exhaustive search over a
    /// small box. Finds genuine witnesses but can never refute, so failure
    /// is `Unknown`.
    fn bounded_search(&self, cube: &Cube) -> CubeOutcome {
        let vars = cube.vars();
        let int_vars: Vec<VarId> = vars
            .iter()
            .copied()
            .filter(|&v| v < self.symbols.len() && self.symbols.sort(v) == Sort::Int)
            .collect();
        let bool_vars: Vec<VarId> = vars
            .iter()
            .copied()
            .filter(|&v| v < self.symbols.len() && self.symbols.sort(v) == Sort::Bool)
            .collect();
        let bound: i128 = match int_vars.len() {
            0..=3 => 12,
            4 => 8,
            5 | 6 => 4,
            _ => return CubeOutcome::Unknown,
        };

        let mut model: HashMap<VarId, Value> = HashMap::new();
        for &(v, b) in &cube.bools {
            model.insert(v, Value::Bool(b));
        }
        let free_bools: Vec<VarId> = bool_vars
            .into_iter()
            .filter(|v| !model.contains_key(v))
            .collect();
        let free_ints: Vec<VarId> = int_vars
            .into_iter()
            .filter(|v| !model.contains_key(v))
            .collect();

        let satisfied = |model: &HashMap<VarId, Value>| -> bool {
            cube.lin.iter().all(|c| {
                let value = c.poly.terms.iter().fold(c.poly.constant, |acc, (&v, &k)| {
                    let x = match model.get(&v) {
                        Some(Value::Int(n)) => *n,
                        _ => 0,
                    };
                    acc + k * x
                });
                match c.kind {
                    omega::ConKind::Ge0 => value >= 0,
                    omega::ConKind::Eq0 => value == 0,
                }
            }) && cube.nonlin.iter().all(|(t, polarity)| {
                matches!(eval(t, model), Some(Value::Bool(b)) if b == *polarity)
            })
        };

        fn search(
            ints: &[VarId],
            bools: &[VarId],
            bound: i128,
            model: &mut HashMap<VarId, Value>,
            check: &dyn Fn(&HashMap<VarId, Value>) -> bool,
        ) -> bool {
            if let Some((&v, rest)) = bools.split_first() {
                for b in [false, true] {
                    model.insert(v, Value::Bool(b));
                    if search(ints, rest, bound, model, check) {
                        return true;
                    }
                }
                model.remove(&v);
                return false;
            }
            if let Some((&v, rest)) = ints.split_first() {
                for n in -bound..=bound {
                    model.insert(v, Value::Int(n));
                    if search(rest, bools, bound, model, check) {
                        return true;
                    }
                }
                model.remove(&v);
                return false;
            }
            check(model)
        }

        if search(&free_ints, &free_bools, bound, &mut model, &satisfied) {
            self.fill_defaults(&mut model);
            CubeOutcome::Sat(model)
        } else {
            CubeOutcome::Unknown
        }
    }

    fn fill_defaults(&self, model: &mut HashMap<VarId, Value>) {
        for &v in &self.declared {
            model.entry(v).or_insert(match self.symbols.sort(v) {
                Sort::Int => Value::Int(0),
                Sort::Bool => Value::Bool(false),
            });
        }
    }

    fn render_model(&self) -> String {
        let Some(model) = &self.model else {
            return "(error \"no model available\")".to_string();
        };
        let mut out = String::from("(\n");
        for &v in &self.declared {
            let name = &self.symbols.names[v];
            match self.symbols.sort(v) {
                Sort::Int => {
                    let n = match model.get(&v) {
                        Some(Value::Int(n)) => *n,
                        _ => 0,
                    };
                    let rendered = if n < 0 {
                        format!("(- {})", n.unsigned_abs())
                    } else {
                        n.to_string()
                    };
                    out.push_str(&format!("  (define-fun {name} () Int {rendered})\n"));
                }
                Sort::Bool => {
                    let b = matches!(model.get(&v), Some(Value::Bool(true)));
                    out.push_str(&format!("  (define-fun {name} () Bool {b})\n"));
                }
            }
        }
        out.push(')');
        out
    }
}

enum CubeOutcome {
    Sat(HashMap<VarId, Value>),
    Unsat,
    Unknown,
}

fn has_quantifier(t: &Term) -> bool {
    match t {
        Term::Exists(..) | Term::Forall(..) => true,
        Term::Int(_) | Term::Bool(_) | Term::Var(_) => false,
        Term::Add(xs) | Term::Mul(xs) | Term::And(xs) | Term::Or(xs) => {
            xs.iter().any(has_quantifier)
        }
        Term::Neg(x) | Term::Not(x) => has_quantifier(x),
        Term::Cmp(_, a, b) | Term::Eq(a, b) | Term::Implies(a, b) => {
            has_quantifier(a) || has_quantifier(b)
        }
        Term::Ite(a, b, c) => has_quantifier(a) || has_quantifier(b) || has_quantifier(c),
    }
}

/// Run a complete script and return the printed responses, one per output.
pub fn run_script(text: &str) -> Vec<String> {
    let mut reader = Reader::new(text.as_bytes());
    let mut session = Session::new();
    let mut out = Vec::new();
    loop {
        match reader.read() {
            ReadOutcome::Form(form) => match session.command(&form) {
                Step::Reply(reply) => out.push(reply),
                Step::Quiet => {}
                Step::Exit => break,
            },
            ReadOutcome::Eof => break,
            ReadOutcome::Error(_) => {
                out.push("unknown".to_string());
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(script: &str) -> String {
        run_script(script).join("\n")
    }

    #[test]
    fn trivial_sat_and_unsat() {
        assert_eq!(check("(assert true)(check-sat)"), "sat");
        assert_eq!(check("(assert false)(check-sat)"), "unsat");
    }

    #[test]
    fn bounds_with_model() {
        let out = run_script(
            "(set-logic QF_LIA)\n(declare-const x Int)\n(assert (and (>= x 2) (<= x 2)))\n(check-sat)\n(get-model)\n(exit)\n",
        );
        assert_eq!(out[0], "sat");
        assert!(out[1].contains("(define-fun x () Int 2)"), "model: {}", out[1]);
    }

    #[test]
    fn negative_model_rendering() {
        let out = run_script(
            "(declare-const x Int)\n(assert (= x (- 3)))\n(check-sat)\n(get-model)\n",
        );
        assert_eq!(out[0], "sat");
        assert!(out[1].contains("(define-fun x () Int (- 3))"), "model: {}", out[1]);
    }

    #[test]
    fn booleans_and_iff() {
        assert_eq!(
            check("(declare-const a Bool)(declare-const b Bool)(assert (= a b))(assert a)(assert (not b))(check-sat)"),
            "unsat"
        );
        assert_eq!(
            check("(declare-const a Bool)(assert (or a (not a)))(check-sat)"),
            "sat"
        );
    }

    #[test]
    fn consistency_shape_with_quantifier() {
        // price = _price && !(exists o: o > 0) is unsat: the existential is
        // valid, so its negation kills the conjunction.
        let script = "(set-logic LIA)\n\
                      (declare-const price Int)\n\
                      (declare-const _price Int)\n\
                      (assert (and (= price _price) (not (exists ((o Int)) (> o 0)))))\n\
                      (check-sat)\n";
        assert_eq!(check(script), "unsat");
    }

    #[test]
    fn bounded_existential_is_projected() {
        // !(exists d: 0 <= d <= x) is x <= -1: sat with negative x.
        let script = "(declare-const x Int)\n\
                      (assert (not (exists ((d Int)) (and (>= d 0) (<= d x)))))\n\
                      (check-sat)\n(get-model)\n";
        let out = run_script(script);
        assert_eq!(out[0], "sat");
        assert!(out[1].contains("(- "), "expected a negative value, model: {}", out[1]);
    }

    #[test]
    fn determinism_shape() {
        // !(Phi) for guards x <= 10 and x >= 10 meets at x = 10.
        let script = "(declare-const x Int)\n\
            (assert (not (and (=> (<= x 10) (not (>= x 10))) (=> (>= x 10) (not (<= x 10))))))\n\
            (check-sat)\n(get-model)\n";
        let out = run_script(script);
        assert_eq!(out[0], "sat");
        assert!(out[1].contains("(define-fun x () Int 10)"), "model: {}", out[1]);
    }

    #[test]
    fn disjoint_guards_are_deterministic() {
        let script = "(declare-const x Int)\n\
            (assert (not (and (=> (<= x 10) (not (> x 10))) (=> (> x 10) (not (<= x 10))))))\n\
            (check-sat)\n";
        assert_eq!(check(script), "unsat");
    }

    #[test]
    fn nonlinear_witness_via_bounded_search() {
        let script = "(set-logic QF_NIA)\n(declare-const x Int)\n(declare-const y Int)\n\
                      (assert (= (* x y) 6))\n(assert (> x y))\n(check-sat)\n";
        assert_eq!(check(script), "sat");
    }

    #[test]
    fn nonlinear_unsat_degrades_to_unknown() {
        // x*x = -1 has no solution but bounded search cannot prove it.
        let script = "(declare-const x Int)\n(assert (= (* x x) (- 1)))\n(check-sat)\n";
        assert_eq!(check(script), "unknown");
    }

    #[test]
    fn undeclared_symbol_poisons_to_unknown() {
        assert_eq!(check("(assert (> nope 0))(check-sat)"), "unknown");
    }

    #[test]
    fn get_model_before_check_errors() {
        let out = run_script("(get-model)");
        assert!(out[0].starts_with("(error"));
    }

    #[test]
    fn exit_stops_processing() {
        let out = run_script("(exit)(check-sat)");
        assert!(out.is_empty());
    }
}
