//! Conversion of formulas into disjunctive normal form over linear atoms,
//! with exact quantifier elimination: a negatively-occurring existential
//! (the common shape here) is eliminated by integer projection of its body
//! cubes, then the negated projection is folded back into the DNF.

use crate::omega::{self, ConKind, LinCon, Poly};
use crate::term::{sort_of, CmpOp, Sort, Symbols, Term, VarId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cube {
    /// Boolean literals, sorted by variable, at most one per variable.
    pub bools: Vec<(VarId, bool)>,
    pub lin: Vec<LinCon>,
    /// Atoms that did not linearize, with polarity; decided by bounded
    /// search if reached.
    pub nonlin: Vec<(Term, bool)>,
}

impl Cube {
    fn merge(&self, other: &Cube) -> Option<Cube> {
        let mut bools = self.bools.clone();
        for &(v, b) in &other.bools {
            match bools.iter().find(|(w, _)| *w == v) {
                Some(&(_, existing)) if existing != b => return None,
                Some(_) => {}
                None => bools.push((v, b)),
            }
        }
        bools.sort_unstable();
        let mut lin = self.lin.clone();
        lin.extend(other.lin.iter().cloned());
        let mut nonlin = self.nonlin.clone();
        nonlin.extend(other.nonlin.iter().cloned());
        Some(Cube { bools, lin, nonlin })
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = self.bools.iter().map(|&(v, _)| v).collect();
        for c in &self.lin {
            for v in c.poly.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        for (t, _) in &self.nonlin {
            crate::term::collect_vars(t, &mut out);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Hard cap on intermediate cube counts; beyond it the answer degrades to
/// `unknown`.
const CUBE_CAP: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TooLarge(pub String);

fn cross(a: Vec<Cube>, b: Vec<Cube>) -> Result<Vec<Cube>, TooLarge> {
    if a.len().saturating_mul(b.len()) > CUBE_CAP {
        return Err(TooLarge("conjunction exceeds the cube budget".into()));
    }
    let mut out = Vec::new();
    for x in &a {
        for y in &b {
            if let Some(m) = x.merge(y) {
                out.push(m);
            }
        }
    }
    Ok(out)
}

fn union(mut a: Vec<Cube>, mut b: Vec<Cube>) -> Result<Vec<Cube>, TooLarge> {
    if a.len() + b.len() > CUBE_CAP {
        return Err(TooLarge("disjunction exceeds the cube budget".into()));
    }
    a.append(&mut b);
    Ok(a)
}

fn linearize(term: &Term) -> Option<Poly> {
    match term {
        Term::Int(n) => Some(Poly::constant(*n)),
        Term::Var(v) => Some(Poly::var(*v)),
        Term::Add(xs) => {
            let mut acc = Poly::constant(0);
            for x in xs {
                acc = acc.add(&linearize(x)?).ok()?;
            }
            Some(acc)
        }
        Term::Neg(x) => linearize(x)?.negate().ok(),
        Term::Mul(xs) => {
            let mut acc = Poly::constant(1);
            for x in xs {
                let p = linearize(x)?;
                acc = if acc.is_constant() {
                    p.scale(acc.constant).ok()?
                } else if p.is_constant() {
                    acc.scale(p.constant).ok()?
                } else {
                    return None;
                };
            }
            Some(acc)
        }
        _ => None,
    }
}

/// `a - b`, or `None` when either side is nonlinear.
fn difference(a: &Term, b: &Term) -> Option<Poly> {
    let pa = linearize(a)?;
    let pb = linearize(b)?;
    pa.add(&pb.negate().ok()?).ok()
}

fn cmp_atom(op: CmpOp, a: &Term, b: &Term, neg: bool) -> Vec<Cube> {
    // Under negation, flip the comparison.
    let effective = if neg {
        match op {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    } else {
        op
    };
    match difference(a, b) {
        Some(diff) => {
            // a - b = diff; integer-tight normalization to `poly >= 0`.
            let poly = match effective {
                // a < b  <=>  b - a - 1 >= 0
                CmpOp::Lt => {
                    let mut p = diff.negate().unwrap_or_else(|_| Poly::constant(0));
                    p.constant -= 1;
                    p
                }
                CmpOp::Le => diff.negate().unwrap_or_else(|_| Poly::constant(0)),
                CmpOp::Gt => {
                    let mut p = diff;
                    p.constant -= 1;
                    p
                }
                CmpOp::Ge => diff,
            };
            vec![Cube { lin: vec![LinCon::ge0(poly)], ..Cube::default() }]
        }
        None => vec![Cube {
            nonlin: vec![(Term::Cmp(op, Box::new(a.clone()), Box::new(b.clone())), !neg)],
            ..Cube::default()
        }],
    }
}

/// Convert `term` (negated when `neg`) into DNF.
pub fn dnf(term: &Term, neg: bool, symbols: &Symbols) -> Result<Vec<Cube>, TooLarge> {
    match term {
        Term::Bool(b) => {
            if *b != neg {
                Ok(vec![Cube::default()])
            } else {
                Ok(vec![])
            }
        }
        Term::Var(v) => Ok(vec![Cube { bools: vec![(*v, !neg)], ..Cube::default() }]),
        Term::Not(x) => dnf(x, !neg, symbols),
        Term::And(xs) if !neg => {
            let mut acc = vec![Cube::default()];
            for x in xs {
                acc = cross(acc, dnf(x, false, symbols)?)?;
            }
            Ok(acc)
        }
        Term::And(xs) => {
            let mut acc = Vec::new();
            for x in xs {
                acc = union(acc, dnf(x, true, symbols)?)?;
            }
            Ok(acc)
        }
        Term::Or(xs) if !neg => {
            let mut acc = Vec::new();
            for x in xs {
                acc = union(acc, dnf(x, false, symbols)?)?;
            }
            Ok(acc)
        }
        Term::Or(xs) => {
            let mut acc = vec![Cube::default()];
            for x in xs {
                acc = cross(acc, dnf(x, true, symbols)?)?;
            }
            Ok(acc)
        }
        Term::Implies(a, b) => {
            // a => b  ==  !a || b
            if !neg {
                union(dnf(a, true, symbols)?, dnf(b, false, symbols)?)
            } else {
                cross(dnf(a, false, symbols)?, dnf(b, true, symbols)?)
            }
        }
        Term::Cmp(op, a, b) => Ok(cmp_atom(*op, a, b, neg)),
        Term::Eq(a, b) => {
            if sort_of(a, symbols) == Sort::Bool {
                // iff: (a && b) || (!a && !b); negated it is xor.
                let arm1 = cross(dnf(a, false, symbols)?, dnf(b, neg, symbols)?)?;
                let arm2 = cross(dnf(a, true, symbols)?, dnf(b, !neg, symbols)?)?;
                return union(arm1, arm2);
            }
            match difference(a, b) {
                Some(diff) if !neg => Ok(vec![Cube {
                    lin: vec![LinCon::eq0(diff)],
                    ..Cube::default()
                }]),
                Some(diff) => {
                    // a != b: (a - b - 1 >= 0) or (b - a - 1 >= 0)
                    let mut gt = diff.clone();
                    gt.constant -= 1;
                    let mut lt = diff.negate().unwrap_or_else(|_| Poly::constant(0));
                    lt.constant -= 1;
                    Ok(vec![
                        Cube { lin: vec![LinCon::ge0(gt)], ..Cube::default() },
                        Cube { lin: vec![LinCon::ge0(lt)], ..Cube::default() },
                    ])
                }
                None => Ok(vec![Cube {
                    nonlin: vec![(Term::Eq(a.clone(), b.clone()), !neg)],
                    ..Cube::default()
                }]),
            }
        }
        Term::Ite(c, t, e) => {
            if sort_of(t, symbols) == Sort::Bool {
                // (c && t) || (!c && e), with polarity on the branches.
                let then_side = cross(dnf(c, false, symbols)?, dnf(t, neg, symbols)?)?;
                let else_side = cross(dnf(c, true, symbols)?, dnf(e, neg, symbols)?)?;
                union(then_side, else_side)
            } else {
                Err(TooLarge("integer ite outside an atom".into()))
            }
        }
        Term::Exists(vars, body) => {
            if !neg {
                // Positive existential: bound ids are globally fresh, so
                // treating them as free preserves satisfiability.
                dnf(body, false, symbols)
            } else {
                // !exists x. body  ==  !(projection of body)
                let inner = dnf(body, false, symbols)?;
                let projected = project_cubes(inner, vars)?;
                negate_cubes(&projected)
            }
        }
        Term::Forall(vars, body) => {
            // forall x. body == !exists x. !body
            let flipped = Term::Exists(vars.clone(), Box::new(Term::Not(body.clone())));
            dnf(&flipped, !neg, symbols)
        }
        Term::Int(_) | Term::Add(_) | Term::Mul(_) | Term::Neg(_) => {
            Err(TooLarge("integer term in boolean position".into()))
        }
    }
}

/// Exact existential projection of `vars` out of each cube.
fn project_cubes(cubes: Vec<Cube>, vars: &[VarId]) -> Result<Vec<Cube>, TooLarge> {
    let mut current = cubes;
    for &v in vars {
        let mut next = Vec::new();
        for cube in current {
            for (term, _) in &cube.nonlin {
                let mut occurring = Vec::new();
                crate::term::collect_vars(term, &mut occurring);
                if occurring.contains(&v) {
                    return Err(TooLarge("projection over a nonlinear atom".into()));
                }
            }
            // exists b: (b = lit) && rest  ==  rest
            let bools: Vec<(VarId, bool)> =
                cube.bools.iter().copied().filter(|(w, _)| *w != v).collect();
            if cube.lin.iter().all(|c| c.poly.coeff(v) == 0) {
                next.push(Cube { bools, ..cube });
                continue;
            }
            match omega::project_var(&cube.lin, v) {
                Ok(unions) => {
                    for lin in unions {
                        if next.len() > CUBE_CAP {
                            return Err(TooLarge("projection exceeds the cube budget".into()));
                        }
                        next.push(Cube {
                            bools: bools.clone(),
                            lin,
                            nonlin: cube.nonlin.clone(),
                        });
                    }
                }
                Err(_) => return Err(TooLarge("projection needs divisibility reasoning".into())),
            }
        }
        current = next;
    }
    Ok(current)
}

/// Negate a union of cubes back into DNF: the conjunction over cubes of
/// the disjunction of their negated atoms.
fn negate_cubes(cubes: &[Cube]) -> Result<Vec<Cube>, TooLarge> {
    let mut acc = vec![Cube::default()];
    for cube in cubes {
        let mut arms: Vec<Cube> = Vec::new();
        for &(v, b) in &cube.bools {
            arms.push(Cube { bools: vec![(v, !b)], ..Cube::default() });
        }
        for con in &cube.lin {
            match con.kind {
                ConKind::Ge0 => {
                    // !(p >= 0)  ==  -p - 1 >= 0
                    let mut p = con.poly.negate().map_err(|_| {
                        TooLarge("overflow while negating a constraint".into())
                    })?;
                    p.constant -= 1;
                    arms.push(Cube { lin: vec![LinCon::ge0(p)], ..Cube::default() });
                }
                ConKind::Eq0 => {
                    let mut gt = con.poly.clone();
                    gt.constant -= 1;
                    let mut lt = con.poly.negate().map_err(|_| {
                        TooLarge("overflow while negating a constraint".into())
                    })?;
                    lt.constant -= 1;
                    arms.push(Cube { lin: vec![LinCon::ge0(gt)], ..Cube::default() });
                    arms.push(Cube { lin: vec![LinCon::ge0(lt)], ..Cube::default() });
                }
            }
        }
        for (t, polarity) in &cube.nonlin {
            arms.push(Cube { nonlin: vec![(t.clone(), !polarity)], ..Cube::default() });
        }
        acc = cross(acc, arms)?;
    }
    Ok(acc)
}
