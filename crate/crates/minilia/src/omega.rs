//! Decision procedure for conjunctions of linear integer constraints,
//! following the Omega test: equalities are eliminated by unimodular
//! substitution (introducing parameters via the extended gcd when no
//! coefficient is a unit), then variables are eliminated from the
//! inequalities by integer Fourier-Motzkin. When every bound pair has a
//! unit coefficient the real shadow is exact; otherwise the dark shadow
//! proves satisfiability, the real shadow refutes it, and the remaining
//! gray zone is covered by splintering on the lower bounds.
//!
//! All arithmetic is checked `i128`; overflow degrades the answer to
//! `Unknown` instead of lying.

use std::collections::{BTreeMap, HashMap};

pub type VarId = usize;

/// Sparse linear polynomial: sum of coeff * var plus a constant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    pub terms: BTreeMap<VarId, i128>,
    pub constant: i128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow;

impl Poly {
    pub fn constant(k: i128) -> Poly {
        Poly { terms: BTreeMap::new(), constant: k }
    }

    pub fn var(v: VarId) -> Poly {
        let mut terms = BTreeMap::new();
        terms.insert(v, 1);
        Poly { terms, constant: 0 }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, v: VarId) -> i128 {
        self.terms.get(&v).copied().unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Result<Poly, Overflow> {
        let mut out = self.clone();
        for (&v, &c) in &other.terms {
            let entry = out.terms.entry(v).or_insert(0);
            *entry = entry.checked_add(c).ok_or(Overflow)?;
            if *entry == 0 {
                out.terms.remove(&v);
            }
        }
        out.constant = out.constant.checked_add(other.constant).ok_or(Overflow)?;
        Ok(out)
    }

    pub fn scale(&self, k: i128) -> Result<Poly, Overflow> {
        if k == 0 {
            return Ok(Poly::constant(0));
        }
        let mut out = Poly { terms: BTreeMap::new(), constant: self.constant.checked_mul(k).ok_or(Overflow)? };
        for (&v, &c) in &self.terms {
            out.terms.insert(v, c.checked_mul(k).ok_or(Overflow)?);
        }
        Ok(out)
    }

    pub fn negate(&self) -> Result<Poly, Overflow> {
        self.scale(-1)
    }

    /// Substitute `v := replacement` into the polynomial.
    pub fn substitute(&self, v: VarId, replacement: &Poly) -> Result<Poly, Overflow> {
        let c = self.coeff(v);
        if c == 0 {
            return Ok(self.clone());
        }
        let mut base = self.clone();
        base.terms.remove(&v);
        base.add(&replacement.scale(c)?)
    }

    pub fn eval(&self, model: &HashMap<VarId, i128>) -> i128 {
        let mut acc = self.constant;
        for (&v, &c) in &self.terms {
            acc += c * model.get(&v).copied().unwrap_or(0);
        }
        acc
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConKind {
    /// poly >= 0
    Ge0,
    /// poly = 0
    Eq0,
}

/// A linear constraint `poly >= 0` or `poly = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinCon {
    pub poly: Poly,
    pub kind: ConKind,
}

impl LinCon {
    pub fn ge0(poly: Poly) -> LinCon {
        LinCon { poly, kind: ConKind::Ge0 }
    }

    pub fn eq0(poly: Poly) -> LinCon {
        LinCon { poly, kind: ConKind::Eq0 }
    }

    fn holds(&self, model: &HashMap<VarId, i128>) -> bool {
        let value = self.poly.eval(model);
        match self.kind {
            ConKind::Ge0 => value >= 0,
            ConKind::Eq0 => value == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Sat(HashMap<VarId, i128>),
    Unsat,
    Unknown,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Extended gcd: returns (g, u, v) with u*a + v*b = g, g >= 0.
fn extgcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        let sign = if a < 0 { -1 } else { 1 };
        return (a.abs(), sign, 0);
    }
    let (g, u1, v1) = extgcd(b, a % b);
    (g, v1, u1 - (a / b) * v1)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a / b;
    if a % b > 0 { q + 1 } else { q }
}

fn floor_div(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a / b;
    if a % b < 0 { q - 1 } else { q }
}

/// One elimination step, replayed in reverse to rebuild a witness.
#[derive(Debug, Clone)]
enum TrailStep {
    /// Variable defined by an exact substitution.
    Defined(VarId, Poly),
    /// Variable eliminated by Fourier-Motzkin; value recomputed from the
    /// surviving bounds. `lowers` are (beta, bound): beta*x >= bound;
    /// `uppers` are (gamma, bound): gamma*x <= bound.
    Bounded {
        var: VarId,
        lowers: Vec<(i128, Poly)>,
        uppers: Vec<(i128, Poly)>,
    },
}

fn replay(trail: &[TrailStep], model: &mut HashMap<VarId, i128>) {
    for step in trail.iter().rev() {
        match step {
            TrailStep::Defined(v, poly) => {
                let value = poly.eval(model);
                model.insert(*v, value);
            }
            TrailStep::Bounded { var, lowers, uppers } => {
                let lb = lowers
                    .iter()
                    .map(|(beta, bound)| ceil_div(bound.eval(model), *beta))
                    .max();
                let ub = uppers
                    .iter()
                    .map(|(gamma, bound)| floor_div(bound.eval(model), *gamma))
                    .min();
                let value = match (lb, ub) {
                    (None, None) => 0,
                    (Some(lb), None) => lb.max(0),
                    (None, Some(ub)) => ub.min(0),
                    (Some(lb), Some(ub)) => {
                        // Nonempty on the exact and dark-shadow paths, the
                        // only ones that reach the replay.
                        debug_assert!(lb <= ub, "bound extension is guaranteed nonempty");
                        0i128.clamp(lb, ub.max(lb))
                    }
                };
                model.insert(*var, value);
            }
        }
    }
}

/// Allocates fresh variables for gcd parameterisation and meters the
/// overall work so pathological systems degrade to `Unknown`.
#[derive(Debug)]
pub struct VarAlloc {
    next: VarId,
    steps: usize,
}

impl VarAlloc {
    pub fn new(first_free: VarId) -> Self {
        VarAlloc { next: first_free, steps: 50_000 }
    }

    pub fn fresh(&mut self) -> VarId {
        let v = self.next;
        self.next += 1;
        v
    }

    fn spend(&mut self, amount: usize) -> Result<(), Overflow> {
        if self.steps < amount {
            return Err(Overflow);
        }
        self.steps -= amount;
        Ok(())
    }
}

const MAX_DEPTH: usize = 48;

/// Tighten `poly >= 0` by the gcd of its coefficients: the constant can be
/// floored, which is exactly the integer strengthening that often turns
/// non-unit bounds into unit ones.
fn normalize_ge0(poly: &mut Poly) {
    let g = poly.terms.values().fold(0i128, |acc, &c| gcd(acc, c));
    if g > 1 {
        for c in poly.terms.values_mut() {
            *c /= g;
        }
        poly.constant = floor_div(poly.constant, g);
    }
}

/// Drop duplicate inequalities, keeping the tightest constant per
/// coefficient vector.
fn dedup_ge0(cons: &mut Vec<LinCon>) {
    let mut tightest: BTreeMap<Vec<(VarId, i128)>, i128> = BTreeMap::new();
    for c in cons.iter() {
        let key: Vec<(VarId, i128)> = c.poly.terms.iter().map(|(&v, &k)| (v, k)).collect();
        let entry = tightest.entry(key).or_insert(c.poly.constant);
        *entry = (*entry).min(c.poly.constant);
    }
    cons.clear();
    for (key, constant) in tightest {
        let mut poly = Poly::constant(constant);
        poly.terms = key.into_iter().collect();
        cons.push(LinCon::ge0(poly));
    }
}

/// Decide a conjunction of linear constraints over the integers.
pub fn solve(constraints: &[LinCon], alloc: &mut VarAlloc) -> SolveResult {
    let mut trail = Vec::new();
    let result = solve_inner(constraints.to_vec(), alloc, &mut trail, 0);
    match result {
        Ok(Some(mut model)) => {
            replay(&trail, &mut model);
            // The witness must check out against the original system.
            debug_assert!(
                constraints.iter().all(|c| c.holds(&model)),
                "witness fails the input system"
            );
            SolveResult::Sat(model)
        }
        Ok(None) => SolveResult::Unsat,
        Err(Overflow) => SolveResult::Unknown,
    }
}

/// `Ok(Some(model))` = sat over the remaining variables (trail holds the
/// eliminated ones), `Ok(None)` = unsat, `Err` = give up.
fn solve_inner(
    mut cons: Vec<LinCon>,
    alloc: &mut VarAlloc,
    trail: &mut Vec<TrailStep>,
    depth: usize,
) -> Result<Option<HashMap<VarId, i128>>, Overflow> {
    if depth > MAX_DEPTH {
        return Err(Overflow);
    }
    alloc.spend(1 + cons.len())?;

    // Ground constraints are decided immediately.
    cons.retain(|c| !c.poly.is_constant() || {
        // keep unsatisfied ground constraints so the check below sees them
        match c.kind {
            ConKind::Ge0 => c.poly.constant < 0,
            ConKind::Eq0 => c.poly.constant != 0,
        }
    });
    if cons.iter().any(|c| c.poly.is_constant()) {
        return Ok(None);
    }

    // Equality elimination. Always work on the equality with the smallest
    // minimal |coefficient|; when it has no unit, parameterise the pair
    // with the smallest gcd. The minimal coefficient strictly decreases, so
    // every equality eventually substitutes away.
    loop {
        alloc.spend(1)?;
        let target = cons
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ConKind::Eq0)
            .min_by_key(|(_, c)| c.poly.terms.values().map(|v| v.abs()).min().unwrap_or(0));
        let Some((pos, _)) = target else { break };
        let eq = cons.remove(pos);
        let mut poly = eq.poly;
        if poly.is_constant() {
            if poly.constant != 0 {
                return Ok(None);
            }
            continue;
        }
        let g = poly.terms.values().fold(0i128, |acc, &c| gcd(acc, c));
        if poly.constant % g != 0 {
            return Ok(None);
        }
        if g > 1 {
            for c in poly.terms.values_mut() {
                *c /= g;
            }
            poly.constant /= g;
        }

        if let Some((&v, &c)) = poly.terms.iter().find(|(_, &c)| c == 1 || c == -1) {
            // c*v + rest = 0  =>  v = -rest/c (c = +-1).
            let mut rest = poly.clone();
            rest.terms.remove(&v);
            let replacement = rest.scale(-c)?; // -rest when c=1, rest when c=-1
            trail.push(TrailStep::Defined(v, replacement.clone()));
            for con in cons.iter_mut() {
                con.poly = con.poly.substitute(v, &replacement)?;
            }
            cons.retain(|c| !(c.poly.is_constant() && match c.kind {
                ConKind::Ge0 => c.poly.constant >= 0,
                ConKind::Eq0 => c.poly.constant == 0,
            }));
            if cons.iter().any(|c| c.poly.is_constant()) {
                return Ok(None);
            }
            continue;
        }

        // No unit coefficient: replace two variables by their gcd
        // parameterisation  a*x + b*y = g*t  with  x = u*t + (b/g)*w,
        // y = v*t - (a/g)*w. After the overall gcd division some pair has
        // gcd below the minimal coefficient.
        let entries: Vec<(VarId, i128)> = poly.terms.iter().map(|(&v, &c)| (v, c)).collect();
        let mut best: Option<(VarId, i128, VarId, i128)> = None;
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let candidate = (entries[i].0, entries[i].1, entries[j].0, entries[j].1);
                let score = gcd(candidate.1, candidate.3);
                match &best {
                    Some(b) if gcd(b.1, b.3) <= score => {}
                    _ => best = Some(candidate),
                }
            }
        }
        let (x, a, y, b) = best.expect("equality with at least two variables");
        let (g2, u, v) = extgcd(a, b);
        let t = alloc.fresh();
        let w = alloc.fresh();
        let x_def = Poly::var(t).scale(u)?.add(&Poly::var(w).scale(b / g2)?)?;
        let y_def = Poly::var(t).scale(v)?.add(&Poly::var(w).scale(-(a / g2))?)?;
        trail.push(TrailStep::Defined(x, x_def.clone()));
        trail.push(TrailStep::Defined(y, y_def.clone()));
        let substitute_all = |p: &Poly| -> Result<Poly, Overflow> {
            p.substitute(x, &x_def)?.substitute(y, &y_def)
        };
        poly = substitute_all(&poly)?;
        for con in cons.iter_mut() {
            con.poly = substitute_all(&con.poly)?;
        }
        cons.push(LinCon::eq0(poly));
    }

    solve_ineqs(cons, alloc, trail, depth)
}

fn pick_variable(cons: &[LinCon]) -> Option<VarId> {
    // Prefer the variable with the fewest lower*upper combinations.
    let mut stats: BTreeMap<VarId, (usize, usize)> = BTreeMap::new();
    for c in cons {
        for (&v, &coeff) in &c.poly.terms {
            let entry = stats.entry(v).or_insert((0, 0));
            if coeff > 0 {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    stats
        .into_iter()
        .min_by_key(|(_, (lo, up))| lo * up)
        .map(|(v, _)| v)
}

fn solve_ineqs(
    mut cons: Vec<LinCon>,
    alloc: &mut VarAlloc,
    trail: &mut Vec<TrailStep>,
    depth: usize,
) -> Result<Option<HashMap<VarId, i128>>, Overflow> {
    debug_assert!(cons.iter().all(|c| c.kind == ConKind::Ge0));
    if depth > MAX_DEPTH {
        return Err(Overflow);
    }
    alloc.spend(1 + cons.len())?;
    for c in cons.iter_mut() {
        normalize_ge0(&mut c.poly);
    }
    dedup_ge0(&mut cons);
    for c in &cons {
        if c.poly.is_constant() && c.poly.constant < 0 {
            return Ok(None);
        }
    }
    let live: Vec<LinCon> = cons.into_iter().filter(|c| !c.poly.is_constant()).collect();
    let Some(x) = pick_variable(&live) else {
        return Ok(Some(HashMap::new()));
    };

    let mut rest: Vec<LinCon> = Vec::new();
    // beta*x >= bound
    let mut lowers: Vec<(i128, Poly)> = Vec::new();
    // gamma*x <= bound
    let mut uppers: Vec<(i128, Poly)> = Vec::new();
    for c in &live {
        let coeff = c.poly.coeff(x);
        if coeff == 0 {
            rest.push(c.clone());
        } else {
            let mut without = c.poly.clone();
            without.terms.remove(&x);
            if coeff > 0 {
                // coeff*x + rest >= 0  =>  coeff*x >= -rest
                lowers.push((coeff, without.negate()?));
            } else {
                // -gamma*x + rest >= 0  =>  gamma*x <= rest
                uppers.push((-coeff, without));
            }
        }
    }

    if lowers.is_empty() || uppers.is_empty() {
        // Unbounded on one side: any value far enough works.
        trail.push(TrailStep::Bounded { var: x, lowers, uppers });
        return solve_ineqs(rest, alloc, trail, depth + 1);
    }

    // Exact when every (lower, upper) pair has a unit coefficient: the
    // real shadow then coincides with the dark shadow.
    let exact = lowers.iter().all(|(beta, _)| {
        uppers.iter().all(|(gamma, _)| *beta == 1 || *gamma == 1)
    });

    let combine = |offset_fn: &dyn Fn(i128, i128) -> Result<i128, Overflow>| -> Result<Vec<LinCon>, Overflow> {
        let mut combined = rest.clone();
        for (beta, b) in &lowers {
            for (gamma, g) in &uppers {
                // beta*x >= b and gamma*x <= g  =>  beta*g - gamma*b >= offset
                let lhs = g.scale(*beta)?.add(&b.scale(-*gamma)?)?;
                let offset = offset_fn(*beta, *gamma)?;
                let mut poly = lhs;
                poly.constant = poly.constant.checked_sub(offset).ok_or(Overflow)?;
                combined.push(LinCon::ge0(poly));
            }
        }
        Ok(combined)
    };

    if exact {
        let shadow = combine(&|_, _| Ok(0))?;
        // The bound extension is replayed after deeper variables get their
        // values, so it must sit on the trail before the recursion's steps.
        trail.push(TrailStep::Bounded { var: x, lowers, uppers });
        return solve_ineqs(shadow, alloc, trail, depth + 1);
    }

    // Dark shadow: beta*g - gamma*b >= (beta-1)(gamma-1) guarantees an
    // integer point in the tightest interval.
    let dark = combine(&|beta, gamma| {
        (beta - 1).checked_mul(gamma - 1).ok_or(Overflow)
    })?;
    let mut dark_trail = trail.clone();
    dark_trail.push(TrailStep::Bounded {
        var: x,
        lowers: lowers.clone(),
        uppers: uppers.clone(),
    });
    match solve_ineqs(dark, alloc, &mut dark_trail, depth + 1) {
        Ok(Some(model)) => {
            *trail = dark_trail;
            return Ok(Some(model));
        }
        Ok(None) => {}
        Err(Overflow) => return Err(Overflow),
    }

    // Real shadow refutes.
    let real = combine(&|_, _| Ok(0))?;
    let mut real_trail = trail.clone();
    match solve_ineqs(real, alloc, &mut real_trail, depth + 1) {
        Ok(None) => return Ok(None),
        Ok(Some(_)) => {}
        Err(Overflow) => return Err(Overflow),
    }

    // Gray zone: any solution hugs a lower bound. For each lower bound
    // beta*x >= b try beta*x = b + i for the finitely many offsets below
    // the largest upper coefficient's reach.
    let gamma_max = uppers.iter().map(|(g, _)| *g).max().expect("uppers nonempty");
    for (beta, b) in &lowers {
        let max_i = (beta
            .checked_mul(gamma_max)
            .ok_or(Overflow)?
            .checked_sub(*beta)
            .ok_or(Overflow)?
            .checked_sub(gamma_max)
            .ok_or(Overflow)?)
            / gamma_max;
        for i in 0..=max_i {
            // beta*x - b - i = 0 together with the original system.
            let mut eq_poly = b.negate()?;
            eq_poly.constant = eq_poly.constant.checked_sub(i).ok_or(Overflow)?;
            let with_x = eq_poly.add(&Poly::var(x).scale(*beta)?)?;
            let mut splinter = live.clone();
            splinter.push(LinCon::eq0(with_x));
            let mut splinter_trail = trail.clone();
            match solve_inner(splinter, alloc, &mut splinter_trail, depth + 1) {
                Ok(Some(model)) => {
                    *trail = splinter_trail;
                    return Ok(Some(model));
                }
                Ok(None) => {}
                Err(Overflow) => return Err(Overflow),
            }
        }
    }
    Ok(None)
}

/// Exact existential projection of `var` out of a conjunction. Returns a
/// union of conjunctions equivalent to `exists var. cons` over the
/// integers, or `Err` when exactness would need divisibility reasoning
/// (non-unit equality coefficient, or a gray zone).
pub fn project_var(cons: &[LinCon], var: VarId) -> Result<Vec<Vec<LinCon>>, Overflow> {
    // An equality with a unit coefficient substitutes exactly.
    if let Some(eq) = cons
        .iter()
        .find(|c| c.kind == ConKind::Eq0 && matches!(c.poly.coeff(var), 1 | -1))
    {
        let c = eq.poly.coeff(var);
        let mut rest = eq.poly.clone();
        rest.terms.remove(&var);
        let replacement = rest.scale(-c)?;
        let mut out = Vec::new();
        for con in cons {
            if con == eq {
                continue;
            }
            out.push(LinCon { poly: con.poly.substitute(var, &replacement)?, kind: con.kind });
        }
        return Ok(vec![out]);
    }
    if cons.iter().any(|c| c.kind == ConKind::Eq0 && c.poly.coeff(var) != 0) {
        // Non-unit equality coefficient: divisibility constraint on the
        // remaining variables, not expressible here.
        return Err(Overflow);
    }

    let mut rest: Vec<LinCon> = Vec::new();
    let mut lowers: Vec<(i128, Poly)> = Vec::new();
    let mut uppers: Vec<(i128, Poly)> = Vec::new();
    for c in cons {
        let coeff = c.poly.coeff(var);
        if coeff == 0 {
            rest.push(c.clone());
            continue;
        }
        let mut without = c.poly.clone();
        without.terms.remove(&var);
        if coeff > 0 {
            lowers.push((coeff, without.negate()?));
        } else {
            uppers.push((-coeff, without));
        }
    }
    if lowers.is_empty() || uppers.is_empty() {
        return Ok(vec![rest]);
    }
    let exact = lowers.iter().all(|(b, _)| *b == 1) || uppers.iter().all(|(g, _)| *g == 1) || {
        lowers.iter().all(|(beta, _)| {
            uppers.iter().all(|(gamma, _)| *beta == 1 || *gamma == 1)
        })
    };
    if !exact {
        return Err(Overflow);
    }
    let mut out = rest;
    for (beta, b) in &lowers {
        for (gamma, g) in &uppers {
            let poly = g.scale(*beta)?.add(&b.scale(-*gamma)?)?;
            out.push(LinCon::ge0(poly));
        }
    }
    Ok(vec![out])
}
