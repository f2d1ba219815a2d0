//! Term representation, SMT-LIB parsing and ground evaluation.

use crate::sexp::Sexp;
use std::collections::HashMap;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Int(i128),
    Bool(bool),
    Var(VarId),
    Add(Vec<Term>),
    Mul(Vec<Term>),
    Neg(Box<Term>),
    Cmp(CmpOp, Box<Term>, Box<Term>),
    Eq(Box<Term>, Box<Term>),
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
    Implies(Box<Term>, Box<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Exists(Vec<VarId>, Box<Term>),
    Forall(Vec<VarId>, Box<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// Declared and bound symbols. Bound variables get fresh ids too, so ids
/// are unique across the whole session.
#[derive(Debug, Default)]
pub struct Symbols {
    pub names: Vec<String>,
    pub sorts: Vec<Sort>,
}

impl Symbols {
    pub fn add(&mut self, name: &str, sort: Sort) -> VarId {
        self.names.push(name.to_string());
        self.sorts.push(sort);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn sort(&self, v: VarId) -> Sort {
        self.sorts[v]
    }
}

pub fn parse_sort(sexp: &Sexp) -> Result<Sort, String> {
    match sexp {
        Sexp::Sym(s) if s == "Int" => Ok(Sort::Int),
        Sexp::Sym(s) if s == "Bool" => Ok(Sort::Bool),
        other => Err(format!("unsupported sort {other}")),
    }
}

pub fn sort_of(term: &Term, symbols: &Symbols) -> Sort {
    match term {
        Term::Int(_) | Term::Add(_) | Term::Mul(_) | Term::Neg(_) => Sort::Int,
        Term::Bool(_)
        | Term::Cmp(..)
        | Term::Eq(..)
        | Term::Not(_)
        | Term::And(_)
        | Term::Or(_)
        | Term::Implies(..)
        | Term::Exists(..)
        | Term::Forall(..) => Sort::Bool,
        Term::Var(v) => symbols.sort(*v),
        Term::Ite(_, then, _) => sort_of(then, symbols),
    }
}

/// Parse one term. `scope` carries binder shadowing, innermost last.
pub fn parse_term(
    sexp: &Sexp,
    symbols: &mut Symbols,
    globals: &HashMap<String, VarId>,
    scope: &mut Vec<(String, VarId)>,
) -> Result<Term, String> {
    match sexp {
        Sexp::Num(n) => Ok(Term::Int(*n)),
        Sexp::Sym(s) if s == "true" => Ok(Term::Bool(true)),
        Sexp::Sym(s) if s == "false" => Ok(Term::Bool(false)),
        Sexp::Sym(s) => {
            if let Some((_, v)) = scope.iter().rev().find(|(name, _)| name == s) {
                return Ok(Term::Var(*v));
            }
            globals
                .get(s)
                .map(|&v| Term::Var(v))
                .ok_or_else(|| format!("unknown symbol `{s}`"))
        }
        Sexp::List(items) => {
            let Some(Sexp::Sym(head)) = items.first() else {
                return Err(format!("cannot apply {sexp}"));
            };
            let args = &items[1..];
            let parse_args = |symbols: &mut Symbols, scope: &mut Vec<(String, VarId)>| {
                args.iter()
                    .map(|a| parse_term(a, symbols, globals, scope))
                    .collect::<Result<Vec<Term>, String>>()
            };
            match head.as_str() {
                "+" => Ok(Term::Add(parse_args(symbols, scope)?)),
                "*" => Ok(Term::Mul(parse_args(symbols, scope)?)),
                "-" => {
                    let args = parse_args(symbols, scope)?;
                    match args.len() {
                        0 => Err("`-` needs arguments".into()),
                        1 => Ok(Term::Neg(Box::new(args.into_iter().next().unwrap()))),
                        _ => {
                            let mut iter = args.into_iter();
                            let first = iter.next().unwrap();
                            let mut out = vec![first];
                            out.extend(iter.map(|t| Term::Neg(Box::new(t))));
                            Ok(Term::Add(out))
                        }
                    }
                }
                "<" | "<=" | ">" | ">=" => {
                    let args = parse_args(symbols, scope)?;
                    if args.len() != 2 {
                        return Err(format!("`{head}` expects two arguments"));
                    }
                    let op = match head.as_str() {
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        ">" => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    };
                    let mut iter = args.into_iter();
                    Ok(Term::Cmp(
                        op,
                        Box::new(iter.next().unwrap()),
                        Box::new(iter.next().unwrap()),
                    ))
                }
                "=" => {
                    let args = parse_args(symbols, scope)?;
                    if args.len() < 2 {
                        return Err("`=` expects at least two arguments".into());
                    }
                    let eqs: Vec<Term> = args
                        .windows(2)
                        .map(|w| Term::Eq(Box::new(w[0].clone()), Box::new(w[1].clone())))
                        .collect();
                    Ok(if eqs.len() == 1 {
                        eqs.into_iter().next().unwrap()
                    } else {
                        Term::And(eqs)
                    })
                }
                "distinct" => {
                    let args = parse_args(symbols, scope)?;
                    let mut pairs = Vec::new();
                    for i in 0..args.len() {
                        for j in i + 1..args.len() {
                            pairs.push(Term::Not(Box::new(Term::Eq(
                                Box::new(args[i].clone()),
                                Box::new(args[j].clone()),
                            ))));
                        }
                    }
                    Ok(Term::And(pairs))
                }
                "not" => {
                    let args = parse_args(symbols, scope)?;
                    if args.len() != 1 {
                        return Err("`not` expects one argument".into());
                    }
                    Ok(Term::Not(Box::new(args.into_iter().next().unwrap())))
                }
                "and" => Ok(Term::And(parse_args(symbols, scope)?)),
                "or" => Ok(Term::Or(parse_args(symbols, scope)?)),
                "=>" => {
                    let args = parse_args(symbols, scope)?;
                    if args.is_empty() {
                        return Err("`=>` needs arguments".into());
                    }
                    let mut iter = args.into_iter().rev();
                    let mut acc = iter.next().unwrap();
                    for lhs in iter {
                        acc = Term::Implies(Box::new(lhs), Box::new(acc));
                    }
                    Ok(acc)
                }
                "ite" => {
                    let args = parse_args(symbols, scope)?;
                    if args.len() != 3 {
                        return Err("`ite` expects three arguments".into());
                    }
                    let mut iter = args.into_iter();
                    Ok(Term::Ite(
                        Box::new(iter.next().unwrap()),
                        Box::new(iter.next().unwrap()),
                        Box::new(iter.next().unwrap()),
                    ))
                }
                "exists" | "forall" => {
                    let [binders, body] = args else {
                        return Err(format!("`{head}` expects binders and a body"));
                    };
                    let Sexp::List(binders) = binders else {
                        return Err("quantifier binders must be a list".into());
                    };
                    let mut vars = Vec::new();
                    let before = scope.len();
                    for b in binders {
                        let Sexp::List(pair) = b else {
                            return Err("binder must be (name Sort)".into());
                        };
                        let [Sexp::Sym(name), sort] = pair.as_slice() else {
                            return Err("binder must be (name Sort)".into());
                        };
                        let sort = parse_sort(sort)?;
                        let v = symbols.add(name, sort);
                        scope.push((name.clone(), v));
                        vars.push(v);
                    }
                    let body = parse_term(body, symbols, globals, scope);
                    scope.truncate(before);
                    let body = body?;
                    Ok(if head == "exists" {
                        Term::Exists(vars, Box::new(body))
                    } else {
                        Term::Forall(vars, Box::new(body))
                    })
                }
                other => Err(format!("unsupported operator `{other}`")),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i128),
    Bool(bool),
}

/// Ground evaluation; `None` on unbound variables, sort confusion or
/// overflow. Quantifiers are not evaluated here.
pub fn eval(term: &Term, model: &HashMap<VarId, Value>) -> Option<Value> {
    match term {
        Term::Int(n) => Some(Value::Int(*n)),
        Term::Bool(b) => Some(Value::Bool(*b)),
        Term::Var(v) => model.get(v).copied(),
        Term::Add(xs) => {
            let mut acc: i128 = 0;
            for x in xs {
                match eval(x, model)? {
                    Value::Int(n) => acc = acc.checked_add(n)?,
                    Value::Bool(_) => return None,
                }
            }
            Some(Value::Int(acc))
        }
        Term::Mul(xs) => {
            let mut acc: i128 = 1;
            for x in xs {
                match eval(x, model)? {
                    Value::Int(n) => acc = acc.checked_mul(n)?,
                    Value::Bool(_) => return None,
                }
            }
            Some(Value::Int(acc))
        }
        Term::Neg(x) => match eval(x, model)? {
            Value::Int(n) => Some(Value::Int(n.checked_neg()?)),
            Value::Bool(_) => None,
        },
        Term::Cmp(op, a, b) => {
            let (Value::Int(a), Value::Int(b)) = (eval(a, model)?, eval(b, model)?) else {
                return None;
            };
            let r = match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
            };
            Some(Value::Bool(r))
        }
        Term::Eq(a, b) => Some(Value::Bool(eval(a, model)? == eval(b, model)?)),
        Term::Not(x) => match eval(x, model)? {
            Value::Bool(b) => Some(Value::Bool(!b)),
            Value::Int(_) => None,
        },
        Term::And(xs) => {
            for x in xs {
                match eval(x, model)? {
                    Value::Bool(false) => return Some(Value::Bool(false)),
                    Value::Bool(true) => {}
                    Value::Int(_) => return None,
                }
            }
            Some(Value::Bool(true))
        }
        Term::Or(xs) => {
            for x in xs {
                match eval(x, model)? {
                    Value::Bool(true) => return Some(Value::Bool(true)),
                    Value::Bool(false) => {}
                    Value::Int(_) => return None,
                }
            }
            Some(Value::Bool(false))
        }
        Term::Implies(a, b) => {
            let (Value::Bool(a), Value::Bool(b)) = (eval(a, model)?, eval(b, model)?) else {
                return None;
            };
            Some(Value::Bool(!a || b))
        }
        Term::Ite(c, t, e) => match eval(c, model)? {
            Value::Bool(true) => eval(t, model),
            Value::Bool(false) => eval(e, model),
            Value::Int(_) => None,
        },
        Term::Exists(..) | Term::Forall(..) => None,
    }
}

/// All variables occurring in a term, including under binders.
pub fn collect_vars(term: &Term, out: &mut Vec<VarId>) {
    match term {
        Term::Int(_) | Term::Bool(_) => {}
        Term::Var(v) => {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        Term::Add(xs) | Term::Mul(xs) | Term::And(xs) | Term::Or(xs) => {
            for x in xs {
                collect_vars(x, out);
            }
        }
        Term::Neg(x) | Term::Not(x) => collect_vars(x, out),
        Term::Cmp(_, a, b) | Term::Eq(a, b) | Term::Implies(a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Term::Ite(c, t, e) => {
            collect_vars(c, out);
            collect_vars(t, out);
            collect_vars(e, out);
        }
        Term::Exists(_, body) | Term::Forall(_, body) => collect_vars(body, out),
    }
}
