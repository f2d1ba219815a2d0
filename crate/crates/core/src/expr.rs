//! Typed expression AST shared by guards and assignment right-hand sides.
//!
//! Expressions range over integers and booleans. A variable reference is
//! either a coordinator state variable, a data parameter of the enclosing
//! transition, or an `old`-qualified state variable. The `old` form never
//! appears in source machines; it is introduced mechanically when building
//! consistency formulas. The same goes for `Exists`, which only shows up
//! inside solver formulas for target-state progress constraints.

use std::fmt;

/// Data sorts of state variables and data parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataType {
    Int,
    Bool,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Int => write!(f, "int"),
            DataType::Bool => write!(f, "bool"),
        }
    }
}

/// A variable occurrence inside an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VarRef {
    /// Coordinator state variable (plain identifier in the DSL).
    State(String),
    /// Data parameter of the enclosing transition (leading underscore).
    Param(String),
    /// Pre-state value of a state variable; produced by formula building only.
    Old(String),
}

impl VarRef {
    pub fn name(&self) -> &str {
        match self {
            VarRef::State(n) | VarRef::Param(n) | VarRef::Old(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Integer negation.
    Neg,
    /// Boolean negation.
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn is_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_equality(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne)
    }

    pub fn is_logic(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Implies)
    }
}

/// Expression AST. Side-effect free by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(VarRef),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Existential quantification over data parameters. Only produced when
    /// building solver formulas; rejected in source machines.
    Exists(Vec<(String, DataType)>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        if name.starts_with('_') {
            Expr::Var(VarRef::Param(name.to_string()))
        } else {
            Expr::Var(VarRef::State(name.to_string()))
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Conjunction with literal-`true` conjuncts dropped.
    pub fn and_all(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut acc: Option<Expr> = None;
        for p in parts {
            if p == Expr::Bool(true) {
                continue;
            }
            acc = Some(match acc {
                None => p,
                Some(a) => Expr::binary(BinOp::And, a, p),
            });
        }
        acc.unwrap_or(Expr::Bool(true))
    }

    /// Disjunction collapsing to `true` on a literal-`true` arm and dropping
    /// literal-`false` arms; the empty disjunction is `false`.
    pub fn or_all(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut acc: Option<Expr> = None;
        for p in parts {
            if p == Expr::Bool(true) {
                return Expr::Bool(true);
            }
            if p == Expr::Bool(false) {
                continue;
            }
            acc = Some(match acc {
                None => p,
                Some(a) => Expr::binary(BinOp::Or, a, p),
            });
        }
        acc.unwrap_or(Expr::Bool(false))
    }

    /// Visit every variable reference in the expression.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a VarRef)) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Exists(_, body) => body.visit_vars(f),
        }
    }

    /// Rewrite variable references bottom-up.
    pub fn map_vars(&self, f: &impl Fn(&VarRef) -> VarRef) -> Expr {
        match self {
            Expr::Int(_) | Expr::Bool(_) => self.clone(),
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
            Expr::Exists(vs, body) => Expr::Exists(vs.clone(), Box::new(body.map_vars(f))),
        }
    }

    /// True when the expression contains a product of two non-constant terms.
    pub fn has_nonlinear_mul(&self) -> bool {
        fn is_const(e: &Expr) -> bool {
            match e {
                Expr::Int(_) | Expr::Bool(_) => true,
                Expr::Unary(UnOp::Neg, e) => is_const(e),
                _ => false,
            }
        }
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => false,
            Expr::Unary(_, e) => e.has_nonlinear_mul(),
            Expr::Binary(BinOp::Mul, a, b) => {
                (!is_const(a) && !is_const(b)) || a.has_nonlinear_mul() || b.has_nonlinear_mul()
            }
            Expr::Binary(_, a, b) => a.has_nonlinear_mul() || b.has_nonlinear_mul(),
            Expr::Exists(_, body) => body.has_nonlinear_mul(),
        }
    }

    pub fn contains_exists(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => false,
            Expr::Unary(_, e) => e.contains_exists(),
            Expr::Binary(_, a, b) => a.contains_exists() || b.contains_exists(),
            Expr::Exists(..) => true,
        }
    }
}

/// Operator precedence used by both the parser and the printer.
/// Higher binds tighter.
pub(crate) fn precedence(op: BinOp) -> u8 {
    match op {
        BinOp::Mul => 6,
        BinOp::Add | BinOp::Sub => 5,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
        BinOp::And => 3,
        BinOp::Or => 2,
        BinOp::Implies => 1,
    }
}

pub(crate) fn op_symbol(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
        BinOp::Eq => "=",
        BinOp::Ne => "!=",
        BinOp::And => "&&",
        BinOp::Or => "||",
        BinOp::Implies => "=>",
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    match e {
        Expr::Int(n) => write!(f, "{n}"),
        Expr::Bool(b) => write!(f, "{b}"),
        Expr::Var(VarRef::State(n)) | Expr::Var(VarRef::Param(n)) => write!(f, "{n}"),
        Expr::Var(VarRef::Old(n)) => write!(f, "old {n}"),
        Expr::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            write!(f, "{sym}")?;
            // Unary binds tighter than any binary operator.
            match inner.as_ref() {
                Expr::Binary(..) | Expr::Exists(..) => {
                    write!(f, "(")?;
                    write_expr(f, inner, 0)?;
                    write!(f, ")")
                }
                _ => write_expr(f, inner, 7),
            }
        }
        Expr::Binary(op, a, b) => {
            let prec = precedence(*op);
            let parens = prec < min_prec;
            if parens {
                write!(f, "(")?;
            }
            // Implication is right-associative, everything else left.
            let (lmin, rmin) = if *op == BinOp::Implies {
                (prec + 1, prec)
            } else {
                (prec, prec + 1)
            };
            write_expr(f, a, lmin)?;
            write!(f, " {} ", op_symbol(*op))?;
            write_expr(f, b, rmin)?;
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Expr::Exists(vars, body) => {
            let names: Vec<String> = vars.iter().map(|(n, t)| format!("{t} {n}")).collect();
            write!(f, "exists({}) ", names.join(", "))?;
            write_expr(f, body, 7)
        }
    }
}

/// A concrete value for expression evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

/// Evaluate an expression under an environment mapping variable occurrences
/// to values. `Exists` bodies are evaluated over the supplied finite domain.
/// Used by tests and the desk-scale oracles; returns `None` when a variable
/// is unbound or on a sort mismatch.
pub fn eval_bounded(
    e: &Expr,
    env: &mut std::collections::HashMap<VarRef, Value>,
    int_domain: &[i64],
) -> Option<Value> {
    match e {
        Expr::Int(n) => Some(Value::Int(*n)),
        Expr::Bool(b) => Some(Value::Bool(*b)),
        Expr::Var(v) => env.get(v).copied(),
        Expr::Unary(UnOp::Neg, inner) => match eval_bounded(inner, env, int_domain)? {
            Value::Int(n) => Some(Value::Int(n.checked_neg()?)),
            _ => None,
        },
        Expr::Unary(UnOp::Not, inner) => match eval_bounded(inner, env, int_domain)? {
            Value::Bool(b) => Some(Value::Bool(!b)),
            _ => None,
        },
        Expr::Binary(op, a, b) => {
            let va = eval_bounded(a, env, int_domain)?;
            let vb = eval_bounded(b, env, int_domain)?;
            match (op, va, vb) {
                (BinOp::Add, Value::Int(x), Value::Int(y)) => Some(Value::Int(x.checked_add(y)?)),
                (BinOp::Sub, Value::Int(x), Value::Int(y)) => Some(Value::Int(x.checked_sub(y)?)),
                (BinOp::Mul, Value::Int(x), Value::Int(y)) => Some(Value::Int(x.checked_mul(y)?)),
                (BinOp::Lt, Value::Int(x), Value::Int(y)) => Some(Value::Bool(x < y)),
                (BinOp::Le, Value::Int(x), Value::Int(y)) => Some(Value::Bool(x <= y)),
                (BinOp::Gt, Value::Int(x), Value::Int(y)) => Some(Value::Bool(x > y)),
                (BinOp::Ge, Value::Int(x), Value::Int(y)) => Some(Value::Bool(x >= y)),
                (BinOp::Eq, x, y) => Some(Value::Bool(x == y)),
                (BinOp::Ne, x, y) => Some(Value::Bool(x != y)),
                (BinOp::And, Value::Bool(x), Value::Bool(y)) => Some(Value::Bool(x && y)),
                (BinOp::Or, Value::Bool(x), Value::Bool(y)) => Some(Value::Bool(x || y)),
                (BinOp::Implies, Value::Bool(x), Value::Bool(y)) => Some(Value::Bool(!x || y)),
                _ => None,
            }
        }
        Expr::Exists(vars, body) => {
            fn search(
                vars: &[(String, DataType)],
                body: &Expr,
                env: &mut std::collections::HashMap<VarRef, Value>,
                dom: &[i64],
            ) -> Option<bool> {
                match vars.split_first() {
                    None => match eval_bounded(body, env, dom)? {
                        Value::Bool(b) => Some(b),
                        _ => None,
                    },
                    Some(((name, ty), rest)) => {
                        let key = VarRef::Param(name.clone());
                        let candidates: Vec<Value> = match ty {
                            DataType::Int => dom.iter().map(|&n| Value::Int(n)).collect(),
                            DataType::Bool => vec![Value::Bool(false), Value::Bool(true)],
                        };
                        let saved = env.get(&key).copied();
                        let mut found = false;
                        for c in candidates {
                            env.insert(key.clone(), c);
                            if search(rest, body, env, dom)? {
                                found = true;
                                break;
                            }
                        }
                        match saved {
                            Some(v) => {
                                env.insert(key, v);
                            }
                            None => {
                                env.remove(&key);
                            }
                        }
                        Some(found)
                    }
                }
            }
            search(vars, body, env, int_domain).map(Value::Bool)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn display_round_trips_precedence() {
        // (a + b) * c needs parens, a + b * c does not.
        let e = Expr::binary(
            BinOp::Mul,
            Expr::binary(BinOp::Add, Expr::var("a"), Expr::var("b")),
            Expr::var("c"),
        );
        assert_eq!(e.to_string(), "(a + b) * c");
        let e2 = Expr::binary(
            BinOp::Add,
            Expr::var("a"),
            Expr::binary(BinOp::Mul, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(e2.to_string(), "a + b * c");
    }

    #[test]
    fn implies_is_right_associative() {
        let e = Expr::binary(
            BinOp::Implies,
            Expr::var("a"),
            Expr::binary(BinOp::Implies, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(e.to_string(), "a => b => c");
        let e2 = Expr::binary(
            BinOp::Implies,
            Expr::binary(BinOp::Implies, Expr::var("a"), Expr::var("b")),
            Expr::var("c"),
        );
        assert_eq!(e2.to_string(), "(a => b) => c");
    }

    #[test]
    fn eval_exists_over_domain() {
        // exists _x: _x > 2 holds over {-3..3}.
        let e = Expr::Exists(
            vec![("_x".into(), DataType::Int)],
            Box::new(Expr::binary(
                BinOp::Gt,
                Expr::Var(VarRef::Param("_x".into())),
                Expr::Int(2),
            )),
        );
        let dom: Vec<i64> = (-3..=3).collect();
        let mut env = HashMap::new();
        assert_eq!(
            eval_bounded(&e, &mut env, &dom),
            Some(Value::Bool(true))
        );
        // exists _x: _x > 3 has no witness in the domain.
        let e2 = Expr::Exists(
            vec![("_x".into(), DataType::Int)],
            Box::new(Expr::binary(
                BinOp::Gt,
                Expr::Var(VarRef::Param("_x".into())),
                Expr::Int(3),
            )),
        );
        assert_eq!(
            eval_bounded(&e2, &mut env, &dom),
            Some(Value::Bool(false))
        );
    }

    #[test]
    fn nonlinear_detection() {
        let lin = Expr::binary(BinOp::Mul, Expr::Int(3), Expr::var("x"));
        assert!(!lin.has_nonlinear_mul());
        let nonlin = Expr::binary(BinOp::Mul, Expr::var("x"), Expr::var("y"));
        assert!(nonlin.has_nonlinear_mul());
    }
}
