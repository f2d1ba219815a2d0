//! End-to-end script tests: the library API, the binary over a pipe, and a
//! property battery against brute-force evaluation of random formulas.

use proptest::prelude::*;
use std::io::Write;
use std::process::{Command, Stdio};

fn bin_path() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_BIN_EXE_minilia"))
}

fn run_binary(script: &str) -> String {
    let mut child = Command::new(bin_path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("spawn minilia");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(script.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn binary_answers_on_stdin() {
    let out = run_binary("(declare-const x Int)(assert (> x 5))(check-sat)(exit)\n");
    assert_eq!(out.trim(), "sat");
}

#[test]
fn binary_emits_model_after_sat() {
    let out = run_binary(
        "(declare-const x Int)(assert (and (>= x 7) (<= x 7)))(check-sat)(get-model)(exit)\n",
    );
    assert!(out.starts_with("sat\n"));
    assert!(out.contains("(define-fun x () Int 7)"), "got: {out}");
}

#[test]
fn binary_handles_eof_without_exit() {
    let out = run_binary("(check-sat)");
    assert_eq!(out.trim(), "sat");
}

// ---------------------------------------------------------------------------
// Random formula battery
// ---------------------------------------------------------------------------

/// Formula templates over three int variables and one bool, with constants
/// in a window that keeps brute force over [-6, 6] an exact oracle for
/// satisfiability restricted to that box: sat-in-box implies solver-sat
/// must hold, and solver models must check out.
#[derive(Debug, Clone)]
enum F {
    Atom(usize, i128, u8),
    BoolVar,
    Not(Box<F>),
    And(Box<F>, Box<F>),
    Or(Box<F>, Box<F>),
    LinkedEq(usize, usize, i128),
}

fn formula() -> impl Strategy<Value = F> {
    let leaf = prop_oneof![
        (0usize..3, -3i128..=3, 0u8..6).prop_map(|(v, k, op)| F::Atom(v, k, op)),
        Just(F::BoolVar),
        (0usize..3, 0usize..3, -2i128..=2).prop_map(|(a, b, k)| F::LinkedEq(a, b, k)),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| F::Not(Box::new(f))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| F::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| F::Or(Box::new(a), Box::new(b))),
        ]
    })
}

fn to_smt(f: &F) -> String {
    match f {
        F::Atom(v, k, op) => {
            let op = match op {
                0 => "<",
                1 => "<=",
                2 => ">",
                3 => ">=",
                4 => "=",
                _ => "distinct",
            };
            let k = if *k < 0 { format!("(- {})", -k) } else { k.to_string() };
            format!("({op} v{v} {k})")
        }
        F::BoolVar => "b0".to_string(),
        F::Not(x) => format!("(not {})", to_smt(x)),
        F::And(a, b) => format!("(and {} {})", to_smt(a), to_smt(b)),
        F::Or(a, b) => format!("(or {} {})", to_smt(a), to_smt(b)),
        F::LinkedEq(a, b, k) => {
            let k = if *k < 0 { format!("(- {})", -k) } else { k.to_string() };
            format!("(= v{a} (+ v{b} {k}))")
        }
    }
}

fn eval(f: &F, vs: &[i128; 3], b0: bool) -> bool {
    match f {
        F::Atom(v, k, op) => {
            let x = vs[*v];
            match op {
                0 => x < *k,
                1 => x <= *k,
                2 => x > *k,
                3 => x >= *k,
                _ => {
                    if *op == 4 {
                        x == *k
                    } else {
                        x != *k
                    }
                }
            }
        }
        F::BoolVar => b0,
        F::Not(x) => !eval(x, vs, b0),
        F::And(a, b) => eval(a, vs, b0) && eval(b, vs, b0),
        F::Or(a, b) => eval(a, vs, b0) || eval(b, vs, b0),
        F::LinkedEq(a, b, k) => vs[*a] == vs[*b] + k,
    }
}

fn box_witness(f: &F) -> Option<([i128; 3], bool)> {
    for x in -6..=6 {
        for y in -6..=6 {
            for z in -6..=6 {
                for b in [false, true] {
                    if eval(f, &[x, y, z], b) {
                        return Some(([x, y, z], b));
                    }
                }
            }
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn solver_agrees_with_box_search(f in formula()) {
        // Constants lie in [-3, 3] and variable links shift by at most 2:
        // any satisfiable formula in this family has a witness in [-6, 6].
        let script = format!(
            "(declare-const v0 Int)(declare-const v1 Int)(declare-const v2 Int)(declare-const b0 Bool)\n(assert {})\n(check-sat)\n",
            to_smt(&f)
        );
        let out = minilia::run_script(&script);
        let witness = box_witness(&f);
        match out[0].as_str() {
            "sat" => prop_assert!(witness.is_some(), "solver sat, box found nothing: {script}"),
            "unsat" => prop_assert!(witness.is_none(), "solver unsat, box found {witness:?}: {script}"),
            other => prop_assert!(false, "unexpected answer {other} for {script}"),
        }
    }

    #[test]
    fn models_evaluate_true(f in formula()) {
        let script = format!(
            "(declare-const v0 Int)(declare-const v1 Int)(declare-const v2 Int)(declare-const b0 Bool)\n(assert {})\n(check-sat)\n(get-model)\n",
            to_smt(&f)
        );
        let out = minilia::run_script(&script);
        if out[0] == "sat" {
            let model = &out[1];
            let grab_int = |name: &str| -> i128 {
                let marker = format!("(define-fun {name} () Int ");
                let start = model.find(&marker).map(|i| i + marker.len()).unwrap_or(0);
                let rest = &model[start..];
                let end = rest.find(')').unwrap_or(rest.len());
                let text = rest[..end].trim();
                if let Some(stripped) = text.strip_prefix("(- ") {
                    -stripped.trim().parse::<i128>().unwrap_or(0)
                } else {
                    text.parse().unwrap_or(0)
                }
            };
            let vs = [grab_int("v0"), grab_int("v1"), grab_int("v2")];
            let b0 = model.contains("(define-fun b0 () Bool true)");
            prop_assert!(eval(&f, &vs, b0), "model {vs:?} {b0} does not satisfy {script}");
        }
    }
}
