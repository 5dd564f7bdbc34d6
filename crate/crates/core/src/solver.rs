//! Depth-first branch and bound over issue orders.
//!
//! Each node issues one more operation at its earliest cycle (so every
//! solution found has ASAP cycles for its order), choosing its instruction,
//! operand temps, operand order and destination location. Writing a
//! location kills its previous occupant; security constraints are checked
//! at the moment two temps or two memory accesses become adjacent, which is
//! exactly when `subseq` or `msubseq` starts to hold.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::ir::Opcode;
use crate::model::{check, Choice, Constraint, ExtendedModel, LocClass, MOperand, OpKind, Solution, Tag};

/// Something that can tell the search to stop, such as a wall clock.
pub trait Clock {
    fn expired(&self) -> bool;
}

pub struct NoClock;

impl Clock for NoClock {
    fn expired(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveBudget {
    pub nodes: Option<u64>,
    /// Only accept solutions strictly below this objective.
    pub cutoff: Option<i32>,
}

impl SolveBudget {
    pub fn nodes(n: u64) -> SolveBudget {
        SolveBudget { nodes: Some(n), cutoff: None }
    }
}

impl Default for SolveBudget {
    fn default() -> Self {
        SolveBudget::nodes(5_000_000)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveStats {
    pub nodes: u64,
    /// Candidate rejections by constraint checks at a node.
    pub propagations: u64,
    pub solutions: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: Status,
    pub best: Option<Solution>,
    pub stats: SolveStats,
}

/// Security constraints of a model, indexed for lookups.
#[derive(Clone, Debug, Default)]
struct Security {
    rpairs: BTreeSet<(usize, usize)>,
    spairs: BTreeMap<usize, Vec<usize>>,
    entry: BTreeMap<usize, Vec<usize>>,
    mmpairs: BTreeSet<(usize, usize)>,
    mspairs: BTreeMap<usize, Vec<usize>>,
}

impl Security {
    fn of(m: &ExtendedModel) -> Security {
        let mut s = Security::default();
        for c in &m.constraints {
            match &c.constraint {
                Constraint::Rpair { a, b } => {
                    s.rpairs.insert((*a.min(b), *a.max(b)));
                }
                Constraint::Spair { key, hiders } => {
                    s.spairs.insert(*key, hiders.clone());
                }
                Constraint::EntrySecret { temp, hiders } => {
                    s.entry.insert(*temp, hiders.clone());
                }
                Constraint::Mmpair { a, b } => {
                    s.mmpairs.insert((*a.min(b), *a.max(b)));
                }
                Constraint::Mspair { op, hiders } => {
                    s.mspairs.insert(*op, hiders.clone());
                }
                _ => {}
            }
        }
        s
    }

    /// Whether `next` may be written right after `prev` in a hardware register.
    fn reg_adjacent_ok(&self, prev: Option<usize>, next: usize) -> bool {
        if let Some(hs) = self.spairs.get(&next) {
            if !prev.is_some_and(|p| hs.contains(&p)) {
                return false;
            }
        }
        let Some(p) = prev else { return true };
        if self.rpairs.contains(&(p.min(next), p.max(next))) {
            return false;
        }
        if let Some(hs) = self.spairs.get(&p) {
            if !hs.contains(&next) {
                return false;
            }
        }
        if let Some(hs) = self.entry.get(&p) {
            if !hs.contains(&next) {
                return false;
            }
        }
        true
    }

    fn mem_adjacent_ok(&self, prev: Option<usize>, next: usize) -> bool {
        if let Some(hs) = self.mspairs.get(&next) {
            if !prev.is_some_and(|p| hs.contains(&p)) {
                return false;
            }
        }
        let Some(p) = prev else { return true };
        if self.mmpairs.contains(&(p.min(next), p.max(next))) {
            return false;
        }
        if let Some(hs) = self.mspairs.get(&p) {
            if !hs.contains(&next) {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
struct State {
    sol: Solution,
    issued: Vec<bool>,
    /// Last temp written to each location (inputs count as written).
    occupant: Vec<Option<usize>>,
    /// Overwritten temps; they may not be read again.
    dead: Vec<bool>,
    /// Interchangeable locations already written.
    used: Vec<bool>,
    last: i32,
    last_mem: Option<usize>,
    /// Unissued mandatory readers per program value.
    need: Vec<usize>,
    /// Latest completion among issued operations.
    end: i32,
}

struct Search<'a> {
    m: &'a ExtendedModel,
    sec: Security,
    clock: &'a dyn Clock,
    budget: SolveBudget,
    optimize: bool,
    stats: SolveStats,
    best: Option<Solution>,
    /// Receives every solution when enumerating; returning false stops.
    sink: Option<&'a mut dyn FnMut(&Solution) -> bool>,
    stopped: bool,
    /// Longest latency path from each operation to the end.
    tail: Vec<i32>,
    /// Mandatory predecessors in memory order.
    mem_preds: Vec<Vec<usize>>,
    nregs: usize,
    /// Earliest `last` at which each search state was expanded. States that
    /// agree on everything but a later clock cannot do better.
    seen: BTreeMap<Vec<u16>, i32>,
}

const SEEN_CAP: usize = 4_000_000;

/// Minimizes the makespan. With `budget.nodes` set, the outcome is
/// deterministic.
pub fn solve(m: &ExtendedModel, budget: SolveBudget, clock: &dyn Clock) -> SolveOutcome {
    let mut s = Search::new(m, budget, clock, true);
    s.run();
    let status = match (&s.best, s.stopped) {
        (Some(_), false) => Status::Optimal,
        (Some(_), true) => Status::Feasible,
        (None, false) => Status::Infeasible,
        (None, true) => Status::Timeout,
    };
    SolveOutcome { status, best: s.best, stats: s.stats }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EnumerateError {
    #[error("more than {cap} solutions")]
    CapExceeded { cap: usize },
    #[error("node budget exhausted")]
    Budget,
}

/// All canonical solutions, sorted.
pub fn enumerate(m: &ExtendedModel, cap: usize) -> Result<Vec<Solution>, EnumerateError> {
    let mut all = Vec::new();
    let mut visit = |s: &Solution| {
        all.push(s.clone());
        all.len() <= cap
    };
    let unlimited = SolveBudget { nodes: None, cutoff: None };
    match visit_solutions(m, unlimited, &NoClock, &mut visit) {
        Err(EnumerateError::Budget) if all.len() > cap => Err(EnumerateError::CapExceeded { cap }),
        Err(e) => Err(e),
        Ok(_) => {
            all.sort();
            Ok(all)
        }
    }
}

/// Streams every canonical solution to `visit` and returns how many there
/// were. The visitor can stop the search by returning false, which is
/// reported as `Budget`.
pub fn visit_solutions(
    m: &ExtendedModel,
    budget: SolveBudget,
    clock: &dyn Clock,
    visit: &mut dyn FnMut(&Solution) -> bool,
) -> Result<u64, EnumerateError> {
    let mut s = Search::new(m, budget, clock, false);
    s.sink = Some(visit);
    s.run();
    if s.stopped {
        return Err(EnumerateError::Budget);
    }
    Ok(s.stats.solutions)
}

impl<'a> Search<'a> {
    fn new(m: &'a ExtendedModel, budget: SolveBudget, clock: &'a dyn Clock, optimize: bool) -> Self {
        let f = &m.func;
        let mut tail = vec![0; f.ops.len()];
        for o in (0..f.ops.len()).rev() {
            let op = &f.ops[o];
            if !op.is_real() || !op.mandatory {
                continue;
            }
            let lat = f.latency(o, Choice::Op, &m.target);
            let mut t = lat;
            for &d in &op.defs {
                for &(u, _) in &f.users[d] {
                    if f.ops[u].mandatory && f.ops[u].is_real() {
                        t = t.max(lat + tail[u]);
                    }
                }
            }
            tail[o] = t;
        }
        let mut mem_preds = vec![Vec::new(); f.ops.len()];
        for &(a, b) in &f.mem_order {
            mem_preds[b].push(a);
        }
        Search {
            m,
            sec: Security::of(m),
            clock,
            budget,
            optimize,
            stats: SolveStats::default(),
            best: None,
            sink: None,
            stopped: false,
            tail,
            mem_preds,
            nregs: m.target.num_registers(),
            seen: BTreeMap::new(),
        }
    }

    fn initial(&self) -> State {
        let m = self.m;
        let f = &m.func;
        let mut sol = Solution::blank(f);
        let mut occupant = vec![None; m.target.num_locations()];
        for &t in &f.ops[0].defs {
            let loc = m.preassigned[t].expect("inputs are preassigned");
            sol.reg[t] = Some(loc);
            occupant[loc] = Some(t);
        }
        let mut need = vec![0; f.program.num_temps()];
        for o in &f.ops {
            if !o.mandatory || o.kind == OpKind::In {
                continue;
            }
            for p in &o.operands {
                if let MOperand::Temps(alts) = p {
                    need[f.temps[alts[0]].value.index()] += 1;
                }
            }
        }
        let mut issued = vec![false; f.ops.len()];
        issued[0] = true;
        State {
            sol,
            issued,
            occupant,
            dead: vec![false; f.temps.len()],
            used: vec![false; m.target.num_locations()],
            last: 0,
            last_mem: None,
            need,
            end: 1,
        }
    }

    fn run(&mut self) {
        let st = self.initial();
        self.dfs(st);
    }

    fn out_of_budget(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        let over_nodes = self.budget.nodes.is_some_and(|n| self.stats.nodes >= n);
        if over_nodes || (self.stats.nodes.is_multiple_of(256) && self.clock.expired()) {
            self.stopped = true;
        }
        self.stopped
    }

    fn bound(&self) -> Option<i32> {
        let inc = self.best.as_ref().map(|b| b.objective);
        match (inc, self.budget.cutoff) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn lower_bound(&self, st: &State) -> i32 {
        let f = &self.m.func;
        let mut lb = st.end;
        let mut remaining = 0;
        let mut min_lat = i32::MAX;
        for o in &f.ops {
            if !o.is_real() || !o.mandatory || st.issued[o.id] {
                continue;
            }
            remaining += 1;
            min_lat = min_lat.min(f.latency(o.id, Choice::Op, &self.m.target));
            lb = lb.max(st.last + 1 + self.tail[o.id]);
            let mut est = st.last + 1;
            for p in &o.operands {
                let MOperand::Temps(alts) = p else { continue };
                let mut ready = i32::MAX;
                for &t in alts {
                    let d = f.temps[t].def_op;
                    if st.issued[d] && !st.dead[t] {
                        ready = ready.min(st.sol.cycle[d] + f.latency(d, st.sol.choice[d], &self.m.target));
                    } else if !st.issued[d] {
                        ready = ready.min(st.last + 2);
                    }
                }
                est = est.max(ready);
            }
            lb = lb.max(est + self.tail[o.id]);
        }
        if remaining > 0 {
            lb = lb.max(st.last + remaining + min_lat);
        }
        lb
    }

    fn dfs(&mut self, st: State) {
        if self.out_of_budget() {
            return;
        }
        self.stats.nodes += 1;
        if self.optimize {
            if let Some(b) = self.bound() {
                if self.lower_bound(&st) >= b {
                    return;
                }
            }
        }
        if self.optimize && self.dominated(&st) {
            return;
        }
        let f = &self.m.func;
        let all_mandatory = f.ops.iter().all(|o| !o.mandatory || o.kind == OpKind::Out || st.issued[o.id]);
        if all_mandatory {
            self.finish(&st);
        }
        for o in 0..f.ops.len() {
            let op = &f.ops[o];
            if st.issued[o] || !op.is_real() {
                continue;
            }
            if self.mem_preds[o].iter().any(|&p| !st.issued[p]) {
                continue;
            }
            for &choice in f.choices(o) {
                if choice == Choice::Inactive {
                    continue;
                }
                self.issue(&st, o, choice);
                if self.stopped {
                    return;
                }
            }
        }
    }

    /// Everything that shapes the rest of the search, with times relative to
    /// the last issue cycle.
    fn key(&self, st: &State) -> Vec<u16> {
        let f = &self.m.func;
        let mut k = Vec::with_capacity(2 * f.ops.len() + 2 * st.occupant.len() + 2);
        for o in 0..f.ops.len() {
            if st.issued[o] {
                let ready = st.sol.cycle[o] + f.latency(o, st.sol.choice[o], &self.m.target) - st.last;
                k.push(1 + ready.max(0) as u16);
            } else {
                k.push(0);
            }
        }
        for (l, occ) in st.occupant.iter().enumerate() {
            k.push(occ.map_or(0, |t| t as u16 + 1));
            k.push(u16::from(st.used[l]));
        }
        k.push(st.last_mem.map_or(0, |o| o as u16 + 1));
        k.push((st.end - st.last).max(0) as u16);
        k
    }

    fn dominated(&mut self, st: &State) -> bool {
        let key = self.key(st);
        match self.seen.get_mut(&key) {
            Some(l) if *l <= st.last => true,
            Some(l) => {
                *l = st.last;
                false
            }
            None => {
                if self.seen.len() < SEEN_CAP {
                    self.seen.insert(key, st.last);
                }
                false
            }
        }
    }

    fn loc_ok(&self, loc: usize, class: LocClass) -> bool {
        self.m.loc_matches(loc, class)
    }

    /// Present members of an operand usable in `class`.
    fn candidates(&self, st: &State, alts: &[usize], class: Option<LocClass>) -> Vec<usize> {
        let f = &self.m.func;
        alts.iter()
            .copied()
            .filter(|&t| st.issued[f.temps[t].def_op] && !st.dead[t])
            .filter(|&t| class.is_none_or(|c| self.loc_ok(st.sol.reg[t].unwrap(), c)))
            .collect()
    }

    fn issue(&mut self, st: &State, o: usize, choice: Choice) {
        let m = self.m;
        let f = &m.func;
        let op = &f.ops[o];
        // Operand candidates.
        let mut cands: Vec<Vec<Option<usize>>> = Vec::new();
        for (j, p) in op.operands.iter().enumerate() {
            match p {
                MOperand::Const(_) => cands.push(vec![None]),
                MOperand::Temps(alts) => {
                    let c = self.candidates(st, alts, m.use_class(o, j, choice));
                    if c.is_empty() {
                        return;
                    }
                    cands.push(c.into_iter().map(Some).collect());
                }
            }
        }
        let mut sel = vec![None; cands.len()];
        self.each_selection(st, o, choice, &cands, 0, &mut sel);
    }

    fn each_selection(
        &mut self,
        st: &State,
        o: usize,
        choice: Choice,
        cands: &[Vec<Option<usize>>],
        j: usize,
        sel: &mut Vec<Option<usize>>,
    ) {
        if j == cands.len() {
            let swaps: &[bool] = if self.swap_meaningful(o, sel) { &[false, true] } else { &[false] };
            for &swap in swaps {
                self.place(st, o, choice, sel, swap);
                if self.stopped {
                    return;
                }
            }
            return;
        }
        for &c in &cands[j] {
            sel[j] = c;
            self.each_selection(st, o, choice, cands, j + 1, sel);
            if self.stopped {
                return;
            }
        }
    }

    fn swap_meaningful(&self, o: usize, sel: &[Option<usize>]) -> bool {
        if !self.m.two_address(o) {
            return false;
        }
        match (sel[0], sel[1]) {
            (Some(a), Some(b)) => a != b,
            (a, b) => a.is_some() != b.is_some(),
        }
    }

    fn place(&mut self, st: &State, o: usize, choice: Choice, sel: &[Option<usize>], swap: bool) {
        let m = self.m;
        let f = &m.func;
        let op = &f.ops[o];
        // Issue cycle.
        let mut c = st.last + 1;
        for t in sel.iter().flatten() {
            let d = f.temps[*t].def_op;
            c = c.max(st.sol.cycle[d] + f.latency(d, st.sol.choice[d], &m.target));
        }
        for &p in &self.mem_preds[o] {
            let gap = if f.ops[p].opcode == Opcode::Store { f.latency(p, st.sol.choice[p], &m.target) } else { 1 };
            c = c.max(st.sol.cycle[p] + gap);
        }
        let is_mem = f.is_mem_access(o, choice);
        if is_mem && !self.sec.mem_adjacent_ok(st.last_mem, o) {
            self.stats.propagations += 1;
            return;
        }

        let mut next = st.clone();
        next.issued[o] = true;
        next.sol.choice[o] = choice;
        next.sol.cycle[o] = c;
        next.sol.select[o] = sel.to_vec();
        next.sol.swap[o] = swap;
        next.last = c;
        next.end = next.end.max(c + f.latency(o, choice, &m.target));
        if is_mem {
            next.last_mem = Some(o);
        }
        if op.mandatory {
            for p in &op.operands {
                if let MOperand::Temps(alts) = p {
                    next.need[f.temps[alts[0]].value.index()] -= 1;
                }
            }
        }
        let Some(&def) = op.defs.first() else {
            self.dfs(next);
            return;
        };
        // Destination candidates.
        let forced = if m.two_address(o) {
            let first = if swap { sel[1] } else { sel[0] };
            match first {
                Some(t) => Some(st.sol.reg[t].unwrap()),
                None => return,
            }
        } else {
            None
        };
        let class = m.def_class(def, choice);
        let locs: Vec<usize> = match forced {
            Some(l) => vec![l],
            None => {
                let mut fresh_taken = [false, false];
                (0..m.target.num_locations())
                    .filter(|&l| self.loc_ok(l, class))
                    .filter(|&l| {
                        if !m.symmetry.interchangeable[l] || st.used[l] {
                            return true;
                        }
                        let k = usize::from(l >= self.nregs);
                        !core::mem::replace(&mut fresh_taken[k], true)
                    })
                    .collect()
            }
        };
        for loc in locs {
            if self.out_of_budget() {
                return;
            }
            let prev = st.occupant[loc];
            if loc < self.nregs && !self.sec.reg_adjacent_ok(prev, def) {
                self.stats.propagations += 1;
                continue;
            }
            let mut child = next.clone();
            child.sol.reg[def] = Some(loc);
            child.occupant[loc] = Some(def);
            child.used[loc] = true;
            if let Some(p) = prev {
                // Values that are still needed must keep a readable member.
                child.dead[p] = true;
                let v = f.temps[p].value.index();
                if child.need[v] > 0 && !self.has_member(&child, v) {
                    self.stats.propagations += 1;
                    continue;
                }
            }
            self.dfs(child);
            if self.stopped {
                return;
            }
        }
    }

    fn has_member(&self, st: &State, v: usize) -> bool {
        let f = &self.m.func;
        f.chains[v].iter().any(|&t| st.issued[f.temps[t].def_op] && !st.dead[t])
    }

    fn finish(&mut self, st: &State) {
        let m = self.m;
        let f = &m.func;
        // Keys still waiting for a follower.
        for (loc, occ) in st.occupant.iter().enumerate() {
            if let Some(t) = occ {
                if loc < self.nregs && self.sec.spairs.contains_key(t) {
                    self.stats.propagations += 1;
                    return;
                }
            }
        }
        if st.last_mem.is_some_and(|o| self.sec.mspairs.contains_key(&o)) {
            self.stats.propagations += 1;
            return;
        }
        if self.optimize && self.bound().is_some_and(|b| st.end >= b) {
            return;
        }
        let out = f.out_op();
        let mut cands = Vec::new();
        for (j, p) in f.ops[out].operands.iter().enumerate() {
            match p {
                MOperand::Temps(alts) => {
                    let c = self.candidates(st, alts, m.use_class(out, j, Choice::Op));
                    if c.is_empty() {
                        return;
                    }
                    cands.push(c);
                }
                MOperand::Const(_) => cands.push(Vec::new()),
            }
        }
        let mut sel = vec![None; cands.len()];
        self.each_output(st, &cands, 0, &mut sel);
    }

    fn each_output(&mut self, st: &State, cands: &[Vec<usize>], j: usize, sel: &mut Vec<Option<usize>>) {
        if self.stopped {
            return;
        }
        if j < cands.len() {
            for &t in &cands[j] {
                sel[j] = Some(t);
                self.each_output(st, cands, j + 1, sel);
            }
            return;
        }
        let f = &self.m.func;
        let out = f.out_op();
        let mut sol = st.sol.clone();
        sol.select[out] = sel.clone();
        sol.cycle[out] = st.end;
        sol.objective = st.end;
        debug_assert_eq!(check(self.m, &sol), Ok(()), "solver produced an invalid solution");
        self.stats.solutions += 1;
        if self.optimize {
            if self.bound().is_none_or(|b| sol.objective < b) {
                self.best = Some(sol);
            }
        } else {
            if let Some(sink) = self.sink.as_mut() {
                if !sink(&sol) {
                    self.stopped = true;
                }
            }
        }
    }
}

/// Why a model has no solution: the first constraint family whose removal
/// makes it feasible, or a family that is unsatisfiable on its own.
pub fn diagnose(m: &ExtendedModel, budget: SolveBudget, clock: &dyn Clock) -> Option<&'static str> {
    let f = &m.func;
    for c in &m.constraints {
        match &c.constraint {
            Constraint::Spair { key, hiders } if hiders.is_empty() => {
                let d = f.temps[*key].def_op;
                if f.ops[d].mandatory {
                    return Some("Spairs");
                }
            }
            Constraint::Mspair { op, hiders } if hiders.is_empty() && f.ops[*op].mandatory => {
                return Some("Mspairs");
            }
            _ => {}
        }
    }
    if m.is_secure() {
        let base = m.without_tag(Tag::Security);
        if solve(&base, budget, clock).status == Status::Infeasible {
            return Some("base");
        }
        for fam in m.security_families() {
            let relaxed = m.without_family(fam);
            if matches!(solve(&relaxed, budget, clock).status, Status::Optimal | Status::Feasible) {
                return Some(fam);
            }
        }
        return Some("security");
    }
    Some("base")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{by_name, FIXTURES};
    use crate::model::{add_implied_constraints, add_security_constraints, build_base_model, ImpliedOptions};
    use crate::secsets;
    use crate::typeinf::infer_types;

    fn models(name: &str) -> (ExtendedModel, ExtendedModel) {
        let fx = by_name(name).unwrap();
        let p = fx.program();
        let base = build_base_model(&p, &fx.target(), fx.copies).unwrap();
        let sets = secsets::compute(&infer_types(&p), &base.func);
        let sec = add_security_constraints(base.clone(), &sets);
        let sec = add_implied_constraints(sec, &sets, ImpliedOptions::default());
        (base, sec)
    }

    #[test]
    fn xor_secure_costs_nothing() {
        for name in ["xor", "xor-mips"] {
            let (base, sec) = models(name);
            let a = solve(&base, SolveBudget::default(), &NoClock);
            let b = solve(&sec, SolveBudget::default(), &NoClock);
            assert_eq!(a.status, Status::Optimal);
            assert_eq!(b.status, Status::Optimal);
            assert_eq!(a.best.as_ref().unwrap().objective, b.best.as_ref().unwrap().objective, "{name}");
            assert_eq!(check(&sec, b.best.as_ref().unwrap()), Ok(()));
        }
    }

    #[test]
    fn thumb_secure_xor_swaps_operands() {
        let (_, sec) = models("xor");
        let s = solve(&sec, SolveBudget::default(), &NoClock).best.unwrap();
        // t6 must not overwrite t1.
        assert_ne!(s.reg[6], s.reg[1]);
    }

    #[test]
    fn unmasked_secret_is_infeasible() {
        let (_, sec) = models("unmasked-and");
        assert_eq!(solve(&sec, SolveBudget::default(), &NoClock).status, Status::Infeasible);
        assert_eq!(diagnose(&sec, SolveBudget::default(), &NoClock), Some("Spairs"));
    }

    #[test]
    fn tiny_budget_times_out() {
        let (_, sec) = models("xor");
        let o = solve(&sec, SolveBudget::nodes(1), &NoClock);
        assert_eq!(o.status, Status::Timeout);
    }

    #[test]
    fn solutions_are_canonical_and_valid() {
        for fx in FIXTURES.iter().filter(|f| f.feasible) {
            let (base, sec) = models(fx.name);
            for m in [&base, &sec] {
                let o = solve(m, SolveBudget::default(), &NoClock);
                assert_eq!(o.status, Status::Optimal, "{}", fx.name);
                let s = o.best.unwrap();
                assert_eq!(check(m, &s), Ok(()), "{}", fx.name);
                assert_eq!(m.canonical_violation(&s), None, "{}", fx.name);
            }
        }
    }

    #[test]
    fn deterministic_under_a_node_budget() {
        let (_, sec) = models("memxor");
        let a = solve(&sec, SolveBudget::nodes(500), &NoClock);
        let b = solve(&sec, SolveBudget::nodes(500), &NoClock);
        assert_eq!(a, b);
    }

    #[test]
    fn enumeration_includes_the_insecure_layout() {
        let (base, _) = models("xor");
        let mut found = false;
        // t6 reuses t1's register and no copy is active.
        let mut visit = |s: &Solution| {
            found = s.reg[6] == Some(1) && s.reg[8] == Some(0) && !s.active(1);
            !found
        };
        let r = visit_solutions(&base, SolveBudget { nodes: None, cutoff: None }, &NoClock, &mut visit);
        assert_eq!(r, Err(EnumerateError::Budget));
        assert!(found);
    }

    #[test]
    fn secure_solutions_are_base_solutions() {
        let (base, sec) = models("stack-arg");
        let all = enumerate(&base, 1_000_000).unwrap();
        let secure = enumerate(&sec, 1_000_000).unwrap();
        assert!(!secure.is_empty() && secure.len() < all.len());
        assert!(secure.iter().all(|s| all.binary_search(s).is_ok()));
        assert!(matches!(enumerate(&base, 3), Err(EnumerateError::CapExceeded { cap: 3 })));
    }
}
