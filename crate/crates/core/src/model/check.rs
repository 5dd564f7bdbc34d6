//! Derived predicates and the constraint checker.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{Constraint, ExtendedModel, LocClass, MOperand, Solution};
use crate::ir::Opcode;

/// Quantities fixed by the decision variables of a complete solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derived {
    pub live: Vec<bool>,
    pub ls: Vec<i32>,
    pub le: Vec<i32>,
    pub lk: Vec<i32>,
    /// Active operation that accesses the memory bus.
    pub mem: Vec<bool>,
    pub ok: Vec<i32>,
    reg: Vec<Option<usize>>,
    cycle: Vec<i32>,
}

impl Derived {
    /// Requires the solution to be shaped for the model (one entry per
    /// operation, operand and temp).
    pub fn new(m: &ExtendedModel, sol: &Solution) -> Derived {
        let f = &m.func;
        let nt = f.temps.len();
        let mut live = alloc::vec![false; nt];
        let mut ls = alloc::vec![-1; nt];
        let mut le = alloc::vec![-1; nt];
        for t in &f.temps {
            if t.alias || !sol.active(t.def_op) {
                continue;
            }
            live[t.id] = true;
            ls[t.id] = sol.cycle[t.def_op];
            le[t.id] = ls[t.id] + 1;
        }
        for o in &f.ops {
            if !sol.active(o.id) {
                continue;
            }
            for sel in sol.select[o.id].iter().flatten() {
                if live[*sel] {
                    le[*sel] = le[*sel].max(sol.cycle[o.id]);
                }
            }
        }
        let mut lk = alloc::vec![-1; nt];
        for t2 in 0..nt {
            if !live[t2] {
                continue;
            }
            for t1 in 0..nt {
                if t1 != t2 && live[t1] && sol.reg[t1] == sol.reg[t2] && le[t1] <= ls[t2] {
                    lk[t2] = lk[t2].max(le[t1]);
                }
            }
        }
        let mem: Vec<bool> = (0..f.ops.len())
            .map(|o| sol.active(o) && f.is_mem_access(o, sol.choice[o]))
            .collect();
        let mut ok = alloc::vec![-1; f.ops.len()];
        for o in 0..f.ops.len() {
            if !sol.active(o) {
                continue;
            }
            for o2 in 0..f.ops.len() {
                if o2 != o && mem[o2] && sol.cycle[o2] <= sol.cycle[o] {
                    ok[o] = ok[o].max(sol.cycle[o2]);
                }
            }
        }
        Derived { live, ls, le, lk, mem, ok, reg: sol.reg.clone(), cycle: sol.cycle.clone() }
    }

    pub fn samereg(&self, t1: usize, t2: usize) -> bool {
        self.live[t1] && self.live[t2] && self.reg[t1] == self.reg[t2]
    }

    pub fn is_before(&self, t1: usize, t2: usize) -> bool {
        self.samereg(t1, t2) && self.le[t1] <= self.ls[t2]
    }

    pub fn subseq(&self, t1: usize, t2: usize) -> bool {
        t1 != t2 && self.samereg(t1, t2) && self.lk[t2] == self.le[t1]
    }

    pub fn msubseq(&self, o1: usize, o2: usize) -> bool {
        o1 != o2 && self.mem[o1] && self.mem[o2] && self.ok[o2] == self.cycle[o1]
    }

    /// The temp written to `t`'s location right after it, if any.
    pub fn successor(&self, t: usize) -> Option<usize> {
        (0..self.live.len()).find(|&t2| self.subseq(t, t2))
    }

    pub fn predecessor(&self, t: usize) -> Option<usize> {
        (0..self.live.len()).find(|&t1| self.subseq(t1, t))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub family: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.family, self.detail)
    }
}

fn fail(family: &'static str, detail: String) -> Result<(), Violation> {
    Err(Violation { family, detail })
}

pub fn check_shape(m: &ExtendedModel, sol: &Solution) -> Result<(), Violation> {
    let f = &m.func;
    let ok = sol.choice.len() == f.ops.len()
        && sol.cycle.len() == f.ops.len()
        && sol.swap.len() == f.ops.len()
        && sol.select.len() == f.ops.len()
        && sol.select.iter().zip(&f.ops).all(|(s, o)| s.len() == o.operands.len())
        && sol.reg.len() == f.temps.len();
    if ok {
        Ok(())
    } else {
        fail("Shape", "solution dimensions do not match the model".into())
    }
}

/// Checks every constraint of the model and reports the first violation.
pub fn check(m: &ExtendedModel, sol: &Solution) -> Result<(), Violation> {
    check_shape(m, sol)?;
    let d = Derived::new(m, sol);
    for c in &m.constraints {
        check_one(m, sol, &d, &c.constraint)?;
    }
    Ok(())
}

/// Checks `m.constraints[from..]` only. The caller has checked the shape
/// and the earlier constraints.
pub fn check_from(m: &ExtendedModel, sol: &Solution, d: &Derived, from: usize) -> Result<(), Violation> {
    for c in &m.constraints[from..] {
        check_one(m, sol, d, &c.constraint)?;
    }
    Ok(())
}

/// All violated constraints, for diagnostics.
pub fn violations(m: &ExtendedModel, sol: &Solution) -> Vec<Violation> {
    if let Err(v) = check_shape(m, sol) {
        return alloc::vec![v];
    }
    let d = Derived::new(m, sol);
    m.constraints.iter().filter_map(|c| check_one(m, sol, &d, &c.constraint).err()).collect()
}

fn is_hw(m: &ExtendedModel, loc: Option<usize>) -> bool {
    loc.is_some_and(|l| m.target.is_register(l))
}

pub fn check_one(m: &ExtendedModel, sol: &Solution, d: &Derived, c: &Constraint) -> Result<(), Violation> {
    let f = &m.func;
    let fam = c.family();
    match c {
        Constraint::Activeness => {
            for o in &f.ops {
                let ch = sol.choice[o.id];
                if !f.choices(o.id).contains(&ch) {
                    return fail(fam, format!("{} cannot use {ch:?}", o.label()));
                }
                if o.mandatory && !ch.is_active() {
                    return fail(fam, format!("{} is mandatory", o.label()));
                }
                if ch.is_active() != (sol.cycle[o.id] >= 0) {
                    return fail(fam, format!("{} cycle does not match activeness", o.label()));
                }
            }
        }
        Constraint::Selection => {
            for o in &f.ops {
                let active = sol.active(o.id);
                for (j, p) in o.operands.iter().enumerate() {
                    let sel = sol.select[o.id][j];
                    match (p, sel, active) {
                        (_, None, false) => {}
                        (MOperand::Const(_), None, true) => {}
                        (MOperand::Temps(alts), Some(t), true) if alts.contains(&t) => {
                            if !d.live[t] {
                                return fail(fam, format!("{} selects dead t{t}", o.label()));
                            }
                        }
                        _ => return fail(fam, format!("{} operand {j} has invalid selection", o.label())),
                    }
                }
                if sol.swap[o.id] && !(active && m.swap_meaningful(o.id, sol)) {
                    return fail(fam, format!("{} swaps operands without effect", o.label()));
                }
            }
        }
        Constraint::Locations => {
            for t in &f.temps {
                let loc = sol.reg[t.id];
                if !d.live[t.id] {
                    if loc.is_some() {
                        return fail(fam, format!("t{} is not live but has a location", t.id));
                    }
                    continue;
                }
                let Some(loc) = loc else {
                    return fail(fam, format!("t{} is live without a location", t.id));
                };
                if loc >= m.target.num_locations() {
                    return fail(fam, format!("t{} location out of range", t.id));
                }
                if !m.loc_matches(loc, m.def_class(t.id, sol.choice[t.def_op])) {
                    return fail(fam, format!("t{} has the wrong location class for its definer", t.id));
                }
            }
            for o in &f.ops {
                for (j, sel) in sol.select[o.id].iter().enumerate() {
                    // Fixed result locations are reported as ResultRegister.
                    let (Some(t), Some(class)) = (sel, m.use_class(o.id, j, sol.choice[o.id])) else { continue };
                    if matches!(class, LocClass::Fixed(_)) {
                        continue;
                    }
                    if !sol.reg[*t].is_some_and(|l| m.loc_matches(l, class)) {
                        return fail(fam, format!("{} reads t{t} from the wrong location class", o.label()));
                    }
                }
            }
        }
        Constraint::Preassign { temp, loc } => {
            if d.live[*temp] && sol.reg[*temp] != Some(*loc) {
                return fail(fam, format!("t{temp} must be in {}", m.target.location_name(*loc)));
            }
        }
        Constraint::ResultRegister { operand, loc } => {
            let out = f.out_op();
            if let Some(t) = sol.select[out][*operand] {
                if sol.reg[t] != Some(*loc) {
                    return fail(fam, format!("output {operand} must be in {}", m.target.location_name(*loc)));
                }
            }
        }
        Constraint::TwoAddress { op } => {
            if sol.active(*op) {
                let first = sol.ordered_operands(f, *op)[0].1;
                let def = f.ops[*op].defs.first().copied();
                match (first, def) {
                    (Some(src), Some(def)) if sol.reg[src] == sol.reg[def] => {}
                    (_, None) => {}
                    _ => {
                        return fail(fam, format!("{} must write its first source register", f.ops[*op].label()))
                    }
                }
            }
        }
        Constraint::Precedence => {
            for o in &f.ops {
                if !sol.active(o.id) {
                    continue;
                }
                for sel in sol.select[o.id].iter().flatten() {
                    let def = f.temps[*sel].def_op;
                    if sol.cycle[def] + f.latency(def, sol.choice[def], &m.target) > sol.cycle[o.id] {
                        return fail(fam, format!("{} issues before t{sel} is ready", o.label()));
                    }
                }
            }
        }
        Constraint::MemoryOrder { first, second } => {
            let gap = if f.ops[*first].opcode == Opcode::Store {
                f.latency(*first, sol.choice[*first], &m.target)
            } else {
                1
            };
            if sol.cycle[*first] + gap > sol.cycle[*second] {
                return fail(
                    fam,
                    format!("{} must follow {}", f.ops[*second].label(), f.ops[*first].label()),
                );
            }
        }
        Constraint::SingleIssue => {
            let mut seen = Vec::new();
            for o in &f.ops {
                if !o.is_real() || !sol.active(o.id) {
                    continue;
                }
                let c = sol.cycle[o.id];
                if c < 1 || seen.contains(&c) {
                    return fail(fam, format!("{} shares or precedes the issue cycles", o.label()));
                }
                seen.push(c);
            }
        }
        Constraint::NoOverlap => {
            let n = f.temps.len();
            for t1 in 0..n {
                for t2 in t1 + 1..n {
                    if d.samereg(t1, t2) && !(d.le[t1] <= d.ls[t2] || d.le[t2] <= d.ls[t1]) {
                        return fail(fam, format!("t{t1} and t{t2} overlap in the same location"));
                    }
                }
            }
        }
        Constraint::Objective => {
            if sol.cycle[0] != 0 {
                return fail(fam, "in must issue at cycle 0".into());
            }
            let out = f.out_op();
            let end = (0..f.ops.len())
                .filter(|&o| o != out && sol.active(o))
                .map(|o| sol.cycle[o] + f.latency(o, sol.choice[o], &m.target))
                .max()
                .unwrap_or(1);
            if sol.cycle[out] != end || sol.objective != end {
                return fail(fam, format!("objective must be the makespan {end}"));
            }
        }
        Constraint::Rpair { a, b } => {
            if d.samereg(*a, *b) && is_hw(m, sol.reg[*a]) && (d.subseq(*a, *b) || d.subseq(*b, *a)) {
                return fail(fam, format!("t{a} and t{b} are subsequent in the same register"));
            }
        }
        Constraint::Spair { key, hiders } => {
            if d.live[*key] && is_hw(m, sol.reg[*key]) {
                let before = hiders.iter().any(|&h| d.subseq(h, *key));
                let after = hiders.iter().any(|&h| d.subseq(*key, h));
                if !before || !after {
                    let side = if before { "followed" } else { "preceded" };
                    return fail(fam, format!("t{key} is not {side} by a random hider"));
                }
            }
        }
        Constraint::EntrySecret { temp, hiders } => {
            if d.live[*temp] && is_hw(m, sol.reg[*temp]) {
                if let Some(next) = d.successor(*temp) {
                    if !hiders.contains(&next) {
                        return fail(fam, format!("t{next} overwrites secret input t{temp}"));
                    }
                }
            }
        }
        Constraint::Mmpair { a, b } => {
            if d.msubseq(*a, *b) || d.msubseq(*b, *a) {
                return fail(fam, format!("{} and {} are consecutive on the bus", f.ops[*a].label(), f.ops[*b].label()));
            }
        }
        Constraint::Mspair { op, hiders } => {
            if d.mem[*op] {
                let before = hiders.iter().any(|&h| d.msubseq(h, *op));
                let after = hiders.iter().any(|&h| d.msubseq(*op, h));
                if !before || !after {
                    let side = if before { "followed" } else { "preceded" };
                    return fail(fam, format!("{} is not {side} by a random memory access", f.ops[*op].label()));
                }
            }
        }
        Constraint::Accumulator { op, operand, def, src } => {
            if sol.active(*op)
                && sol.select[*op][*operand] == Some(*src)
                && d.samereg(*def, *src)
                && is_hw(m, sol.reg[*def])
            {
                return fail(fam, format!("t{def} reuses the register of t{src}"));
            }
        }
        Constraint::PreassignInterposition { a, b } => {
            if d.samereg(*a, *b) && is_hw(m, sol.reg[*a]) {
                let linked = |t: usize| d.successor(t).is_some() || d.predecessor(t).is_some();
                if !linked(*a) || !linked(*b) {
                    return fail(fam, format!("t{a} and t{b} share a register without interposed writes"));
                }
            }
        }
    }
    Ok(())
}
