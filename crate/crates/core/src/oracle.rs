//! Brute-force reference for small models.
//!
//! The generator enumerates instruction choices, operand selections,
//! operand orders, issue orders and location assignments with nothing but
//! validity filtering, and hands each candidate to [`model::check`]. It
//! shares no code with the solver. The trace walks below recover
//! `subseq`/`msubseq` from the linear instruction sequence, and
//! [`recursive_leakage`] evaluates the leakage equations directly on
//! program values.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ir::{Opcode, Program, SecurityClass};
use crate::leakage::{hw, LeakEntry, LeakKind};
use crate::model::lower::Lowered;
use crate::model::{check_from, check_shape, Choice, Derived, ExtendedModel, MOperand, OpKind, Solution};
use crate::solver::{self, Clock, SolveBudget, Status};

/// Largest number of real operations the oracle accepts.
pub const DEFAULT_BOUND: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("model has {ops} operations, above the bound of {bound}")]
    TooLarge { ops: usize, bound: usize },
    #[error("models do not share a function and target")]
    Mismatch,
    #[error("{bits} input bits is too many to enumerate")]
    TooManyInputBits { bits: u32 },
}

/// Input bits up to which [`type_soundness`] enumerates.
pub const SOUNDNESS_BITS: u32 = 24;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelCount {
    pub solutions: u64,
    pub optimum: Option<i32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleReport {
    pub ops: usize,
    /// Complete candidates handed to the checker.
    pub candidates: u64,
    /// One entry per model, in the order given.
    pub models: Vec<ModelCount>,
    /// Solutions whose predicates were compared against trace walks.
    pub predicate_checks: u64,
    pub discrepancies: Vec<String>,
}

/// Temp pairs written consecutively to the same location, in the
/// linearized sequence.
pub fn trace_subseq(m: &ExtendedModel, sol: &Solution) -> BTreeSet<(usize, usize)> {
    let f = &m.func;
    let mut last: Vec<Option<usize>> = vec![None; m.target.num_locations()];
    let mut pairs = BTreeSet::new();
    for o in sol.linearize(f) {
        for &t in &f.ops[o].defs {
            let Some(loc) = sol.reg[t] else { continue };
            if let Some(prev) = last[loc] {
                pairs.insert((prev, t));
            }
            last[loc] = Some(t);
        }
    }
    pairs
}

/// Operation pairs that are consecutive memory accesses.
pub fn trace_msubseq(m: &ExtendedModel, sol: &Solution) -> BTreeSet<(usize, usize)> {
    let f = &m.func;
    let mut prev = None;
    let mut pairs = BTreeSet::new();
    for o in sol.linearize(f) {
        let touches = match f.ops[o].kind {
            OpKind::Source(_) => f.ops[o].opcode.is_memory(),
            OpKind::Copy { .. } => matches!(sol.choice[o], Choice::Spill | Choice::Reload),
            _ => false,
        };
        if touches {
            if let Some(p) = prev {
                pairs.insert((p, o));
            }
            prev = Some(o);
        }
    }
    pairs
}

/// Compares the model predicates with the trace walks.
pub fn predicate_discrepancies(m: &ExtendedModel, sol: &Solution) -> Vec<String> {
    let d = Derived::new(m, sol);
    let mut out = Vec::new();
    let nt = m.func.temps.len();
    let walked = trace_subseq(m, sol);
    let mut predicted = BTreeSet::new();
    for a in 0..nt {
        for b in 0..nt {
            if d.subseq(a, b) {
                predicted.insert((a, b));
            }
        }
    }
    if walked != predicted {
        out.push(format!("subseq mismatch: trace {walked:?} vs model {predicted:?}"));
    }
    let no = m.func.ops.len();
    let walked = trace_msubseq(m, sol);
    let mut predicted = BTreeSet::new();
    for a in 0..no {
        for b in 0..no {
            if d.msubseq(a, b) {
                predicted.insert((a, b));
            }
        }
    }
    if walked != predicted {
        out.push(format!("msubseq mismatch: trace {walked:?} vs model {predicted:?}"));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    Reg,
    Slot,
    Any,
}

struct Gen<'a> {
    m: &'a ExtendedModel,
    nregs: usize,
    nlocs: usize,
    choice: Vec<Choice>,
    select: Vec<Vec<Option<usize>>>,
    swap: Vec<bool>,
    order: Vec<usize>,
    cycle: Vec<i32>,
    reg: Vec<Option<usize>>,
}

impl<'a> Gen<'a> {
    fn new(m: &'a ExtendedModel) -> Self {
        let f = &m.func;
        Gen {
            m,
            nregs: m.target.num_registers(),
            nlocs: m.target.num_locations(),
            choice: f.ops.iter().map(|o| if o.is_copy() { Choice::Inactive } else { Choice::Op }).collect(),
            select: f.ops.iter().map(|o| vec![None; o.operands.len()]).collect(),
            swap: vec![false; f.ops.len()],
            order: Vec::new(),
            cycle: vec![-1; f.ops.len()],
            reg: vec![None; f.temps.len()],
        }
    }

    fn is_reg(&self, l: usize) -> bool {
        l < self.nregs
    }

    fn def_class(&self, t: usize) -> Class {
        let f = &self.m.func;
        let d = f.temps[t].def_op;
        match (f.ops[d].kind, self.choice[d]) {
            (OpKind::In, _) => {
                if self.is_reg(self.m.preassigned[t].unwrap()) {
                    Class::Reg
                } else {
                    Class::Slot
                }
            }
            (_, Choice::Spill) => Class::Slot,
            _ => Class::Reg,
        }
    }

    fn use_class(&self, o: usize) -> Class {
        match (self.m.func.ops[o].kind, self.choice[o]) {
            (OpKind::Out, _) => Class::Any,
            (_, Choice::Reload) => Class::Slot,
            _ => Class::Reg,
        }
    }

    fn run(&mut self, leaf: &mut dyn FnMut(&Solution)) {
        self.choices(0, leaf);
    }

    // Stage 1: instruction per copy.
    fn choices(&mut self, o: usize, leaf: &mut dyn FnMut(&Solution)) {
        let f = &self.m.func;
        if o == f.ops.len() {
            self.selections(0, 0, leaf);
            return;
        }
        if !f.ops[o].is_copy() {
            self.choices(o + 1, leaf);
            return;
        }
        for c in [Choice::Inactive, Choice::Move, Choice::Spill, Choice::Reload] {
            self.choice[o] = c;
            self.choices(o + 1, leaf);
        }
        self.choice[o] = Choice::Inactive;
    }

    fn active(&self, o: usize) -> bool {
        self.choice[o] != Choice::Inactive
    }

    // Stage 2: one alternative per operand of every active operation.
    fn selections(&mut self, o: usize, j: usize, leaf: &mut dyn FnMut(&Solution)) {
        let f = &self.m.func;
        if o == f.ops.len() {
            self.swaps(0, leaf);
            return;
        }
        if !self.active(o) || j == f.ops[o].operands.len() {
            self.selections(o + 1, 0, leaf);
            return;
        }
        match &f.ops[o].operands[j] {
            MOperand::Const(_) => self.selections(o, j + 1, leaf),
            MOperand::Temps(alts) => {
                let want = self.use_class(o);
                for &t in alts {
                    if !self.active(f.temps[t].def_op) {
                        continue;
                    }
                    if want != Class::Any && self.def_class(t) != want {
                        continue;
                    }
                    self.select[o][j] = Some(t);
                    self.selections(o, j + 1, leaf);
                }
                self.select[o][j] = None;
            }
        }
    }

    // Stage 3: operand order of two-address operations.
    fn swaps(&mut self, o: usize, leaf: &mut dyn FnMut(&Solution)) {
        let f = &self.m.func;
        if o == f.ops.len() {
            self.cycle[0] = 0;
            self.orders(leaf);
            return;
        }
        self.swap[o] = false;
        self.swaps(o + 1, leaf);
        let op = &f.ops[o];
        let differs = match (self.select[o].first(), self.select[o].get(1)) {
            (Some(a), Some(b)) => a != b,
            _ => false,
        };
        if self.active(o) && op.is_real() && op.opcode.is_binary() && self.m.target.two_address(op.opcode) && differs {
            self.swap[o] = true;
            self.swaps(o + 1, leaf);
            self.swap[o] = false;
        }
    }

    fn latency(&self, o: usize) -> i32 {
        let f = &self.m.func;
        let t = &self.m.target;
        let op = &f.ops[o];
        match (op.kind, self.choice[o]) {
            (OpKind::In, _) => 1,
            (OpKind::Out, _) => 0,
            (OpKind::Copy { .. }, Choice::Move) => t.latency(Opcode::Copy) as i32,
            (OpKind::Copy { .. }, Choice::Spill) => t.latency(Opcode::Store) as i32,
            (OpKind::Copy { .. }, Choice::Reload) => t.latency(Opcode::Load) as i32,
            _ => t.latency(op.opcode) as i32,
        }
    }

    // Stage 4: every issue order consistent with the selected dependencies,
    // with cycles as early as the order allows.
    fn orders(&mut self, leaf: &mut dyn FnMut(&Solution)) {
        let f = &self.m.func;
        let pending: Vec<usize> =
            (0..f.ops.len()).filter(|&o| f.ops[o].is_real() && self.active(o) && self.cycle[o] < 0).collect();
        if pending.is_empty() {
            self.locations(leaf);
            return;
        }
        let last = self.order.last().map_or(0, |&o| self.cycle[o]);
        for o in pending {
            let mut c = last + 1;
            let mut ready = true;
            for t in self.select[o].iter().flatten() {
                let d = f.temps[*t].def_op;
                if self.cycle[d] < 0 {
                    ready = false;
                    break;
                }
                c = c.max(self.cycle[d] + self.latency(d));
            }
            for &(a, b) in &f.mem_order {
                if b == o {
                    if self.cycle[a] < 0 {
                        ready = false;
                    } else {
                        let gap = if f.ops[a].opcode == Opcode::Store { self.latency(a) } else { 1 };
                        c = c.max(self.cycle[a] + gap);
                    }
                }
            }
            if !ready {
                continue;
            }
            self.cycle[o] = c;
            self.order.push(o);
            self.orders(leaf);
            self.order.pop();
            self.cycle[o] = -1;
        }
    }

    fn live_range(&self, t: usize) -> (i32, i32) {
        let f = &self.m.func;
        let ls = self.cycle[f.temps[t].def_op];
        let mut le = ls + 1;
        for &(u, j) in &f.users[t] {
            if self.select[u][j] == Some(t) {
                le = le.max(self.cycle[u]);
            }
        }
        (ls, le)
    }

    // Stage 5: locations, temp by temp in definition order.
    fn locations(&mut self, leaf: &mut dyn FnMut(&Solution)) {
        let f = &self.m.func;
        let out = f.out_op();
        let mut end = 1;
        for o in 0..f.ops.len() {
            if o != out && self.cycle[o] >= 0 {
                end = end.max(self.cycle[o] + self.latency(o));
            }
        }
        self.cycle[out] = end;
        let mut temps: Vec<usize> = f.ops[0].defs.clone();
        for &o in &self.order {
            temps.extend(f.ops[o].defs.iter().copied());
        }
        let ranges: Vec<(i32, i32)> = (0..f.temps.len())
            .map(|t| if self.cycle[f.temps[t].def_op] >= 0 && !f.temps[t].alias { self.live_range(t) } else { (0, 0) })
            .collect();
        let mut seen = vec![false; self.nlocs];
        self.assign(&temps, 0, &ranges, &mut seen, leaf);
        self.cycle[out] = -1;
        for &t in &temps {
            self.reg[t] = None;
        }
    }

    fn assign(
        &mut self,
        temps: &[usize],
        i: usize,
        ranges: &[(i32, i32)],
        seen: &mut Vec<bool>,
        leaf: &mut dyn FnMut(&Solution),
    ) {
        let m = self.m;
        let f = &m.func;
        if i == temps.len() {
            let sol = Solution {
                choice: self.choice.clone(),
                cycle: self.cycle.clone(),
                select: self.select.clone(),
                swap: self.swap.clone(),
                reg: self.reg.clone(),
                objective: self.cycle[f.out_op()],
            };
            leaf(&sol);
            return;
        }
        let t = temps[i];
        let d = f.temps[t].def_op;
        let cands: Vec<usize> = if let Some(l) = m.preassigned[t] {
            vec![l]
        } else if f.ops[d].is_real() && f.ops[d].opcode.is_binary() && m.target.two_address(f.ops[d].opcode) {
            let first = if self.swap[d] { self.select[d][1] } else { self.select[d][0] };
            match first.and_then(|s| self.reg[s]) {
                Some(l) => vec![l],
                None => return,
            }
        } else {
            let want = self.def_class(t);
            let mut fresh = [false, false];
            (0..self.nlocs)
                .filter(|&l| (want == Class::Reg) == self.is_reg(l))
                .filter(|&l| {
                    if !m.symmetry.interchangeable[l] || seen[l] {
                        return true;
                    }
                    let k = usize::from(!self.is_reg(l));
                    !core::mem::replace(&mut fresh[k], true)
                })
                .collect()
        };
        let out = f.out_op();
        let pinned: Option<usize> =
            self.select[out].iter().zip(&m.result_loc).find(|(s, _)| **s == Some(t)).and_then(|(_, r)| *r);
        let (ls, le) = ranges[t];
        for l in cands {
            if pinned.is_some_and(|r| r != l) {
                continue;
            }
            let clash = temps[..i].iter().any(|&u| {
                let (us, ue) = ranges[u];
                self.reg[u] == Some(l) && !(le <= us || ue <= ls)
            });
            if clash {
                continue;
            }
            let fresh = !seen[l];
            let real = f.ops[d].is_real();
            if real {
                seen[l] = true;
            }
            self.reg[t] = Some(l);
            self.assign(temps, i + 1, ranges, seen, leaf);
            self.reg[t] = None;
            if real && fresh {
                seen[l] = false;
            }
        }
    }
}

fn check_size(m: &ExtendedModel, bound: usize) -> Result<usize, OracleError> {
    let ops = m.func.num_real_ops();
    if ops > bound {
        return Err(OracleError::TooLarge { ops, bound });
    }
    Ok(ops)
}

/// Calls `visit` with every candidate and whether each model accepts it.
/// All models must share the first model's function and target.
pub fn generate(
    models: &[&ExtendedModel],
    bound: usize,
    visit: &mut dyn FnMut(&Solution, &[bool]),
) -> Result<u64, OracleError> {
    let first = models[0];
    check_size(first, bound)?;
    if models.iter().any(|m| m.func != first.func || m.target != first.target) {
        return Err(OracleError::Mismatch);
    }
    // A model whose constraint list extends an earlier model's only needs
    // its extra constraints checked once the earlier model accepts.
    let prefix: Vec<Option<usize>> = models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            (0..k)
                .filter(|&j| m.constraints.starts_with(&models[j].constraints))
                .max_by_key(|&j| models[j].constraints.len())
        })
        .collect();
    let mut count = 0u64;
    let mut ok = vec![false; models.len()];
    let mut g = Gen::new(first);
    g.run(&mut |sol| {
        count += 1;
        if check_shape(first, sol).is_err() {
            ok.iter_mut().for_each(|a| *a = false);
        } else {
            let d = Derived::new(first, sol);
            for (k, m) in models.iter().enumerate() {
                ok[k] = match prefix[k] {
                    Some(j) => ok[j] && check_from(m, sol, &d, models[j].constraints.len()).is_ok(),
                    None => check_from(m, sol, &d, 0).is_ok(),
                };
            }
        }
        visit(sol, &ok);
    });
    Ok(count)
}

/// Exhaustive counts and optima for each model, with the subseq/msubseq
/// characterizations checked on every solution of any model.
pub fn brute_force(models: &[&ExtendedModel], bound: usize) -> Result<OracleReport, OracleError> {
    let mut report = OracleReport {
        ops: models[0].func.num_real_ops(),
        models: vec![ModelCount::default(); models.len()],
        ..OracleReport::default()
    };
    let mut checks = 0u64;
    let mut disc = Vec::new();
    let candidates = generate(models, bound, &mut |sol, ok| {
        for (k, &accepted) in ok.iter().enumerate() {
            if accepted {
                let c = &mut report.models[k];
                c.solutions += 1;
                c.optimum = Some(c.optimum.map_or(sol.objective, |o| o.min(sol.objective)));
            }
        }
        if ok.iter().any(|&a| a) {
            checks += 1;
            if disc.len() < 20 {
                disc.extend(predicate_discrepancies(models[0], sol));
            }
        }
    })?;
    report.candidates = candidates;
    report.predicate_checks = checks;
    report.discrepancies = disc;
    Ok(report)
}

/// Brute force plus comparison against the solver: optima, and solution
/// counts when `count_limit` allows enumerating with the solver too.
pub fn cross_check(
    models: &[&ExtendedModel],
    bound: usize,
    budget: SolveBudget,
    clock: &dyn Clock,
    count_limit: u64,
) -> Result<OracleReport, OracleError> {
    let mut report = brute_force(models, bound)?;
    for (k, m) in models.iter().enumerate() {
        let want = report.models[k].optimum;
        let out = solver::solve(m, budget, clock);
        let got = match out.status {
            Status::Optimal => out.best.map(|s| s.objective),
            Status::Infeasible => None,
            s => {
                report.discrepancies.push(format!("model {k}: solver stopped with {s:?}"));
                continue;
            }
        };
        if got != want {
            report.discrepancies.push(format!("model {k}: solver optimum {got:?}, oracle {want:?}"));
        }
        if report.models[k].solutions <= count_limit {
            let unlimited = SolveBudget { nodes: None, cutoff: None };
            match solver::visit_solutions(m, unlimited, clock, &mut |_| true) {
                Ok(n) if n == report.models[k].solutions => {}
                Ok(n) => report
                    .discrepancies
                    .push(format!("model {k}: solver enumerates {n}, oracle {}", report.models[k].solutions)),
                Err(e) => report.discrepancies.push(format!("model {k}: {e}")),
            }
        }
    }
    Ok(report)
}

/// One observable step of a program: a register write, a bus transfer, or
/// both (a load).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Event {
    Reg { r: usize, v: u64 },
    Mem { v: u64 },
}

/// The leakage equations, evaluated by recursion on the program prefix.
/// Values come from evaluating the source program, not from a machine.
pub fn recursive_leakage(m: &ExtendedModel, low: &Lowered, inputs: &[u64]) -> Vec<LeakEntry> {
    let f = &m.func;
    let vals = f.program.eval(inputs);
    let val = |t: usize| vals[f.temps[t].value.index()];
    let mut events: Vec<(usize, Event)> = Vec::new();
    for (pos, step) in low.steps.iter().enumerate() {
        let op = &f.ops[step.op];
        match (op.kind, op.opcode) {
            (OpKind::Source(_), Opcode::Store) => {
                events.push((pos, Event::Mem { v: vals[f.temps[f.store_data_temp(step.op)].value.index()] }));
            }
            (OpKind::Source(_), Opcode::Load) => {
                let t = step.def.unwrap();
                events.push((pos, Event::Mem { v: val(t) }));
                events.push((pos, Event::Reg { r: low_reg(low, step), v: val(t) }));
            }
            _ => {
                let t = step.def.unwrap();
                match step.instr {
                    crate::model::lower::Instr::Spill { .. } => events.push((pos, Event::Mem { v: val(t) })),
                    crate::model::lower::Instr::Reload { .. } => {
                        events.push((pos, Event::Mem { v: val(t) }));
                        events.push((pos, Event::Reg { r: low_reg(low, step), v: val(t) }));
                    }
                    _ => events.push((pos, Event::Reg { r: low_reg(low, step), v: val(t) })),
                }
            }
        }
    }
    let mut init = vec![0u64; low.registers];
    for (i, &loc) in low.inputs.iter().enumerate() {
        if loc < low.registers {
            init[loc] = inputs[i] & crate::ir::word_mask(low.width);
        }
    }
    leak_of(&events, &init)
}

fn low_reg(_low: &Lowered, step: &crate::model::lower::Step) -> usize {
    step.instr.dst_register().expect("register write")
}

// L(P'; i) = L(P') plus the observation of i against the latest matching
// event in P', or against the initial content when there is none.
fn leak_of(events: &[(usize, Event)], init: &[u64]) -> Vec<LeakEntry> {
    let Some((last, prefix)) = events.split_last() else { return Vec::new() };
    let mut l = leak_of(prefix, init);
    let (pos, ev) = *last;
    let entry = match ev {
        Event::Reg { r, v } => {
            let before = latest(prefix, |e| matches!(e, Event::Reg { r: r2, .. } if r2 == r));
            let prev = match before {
                Some(Event::Reg { v, .. }) => v,
                _ => init[r],
            };
            LeakEntry { position: pos, kind: LeakKind::Rot, value: hw(v ^ prev) }
        }
        Event::Mem { v } => {
            let prev = match latest(prefix, |e| matches!(e, Event::Mem { .. })) {
                Some(Event::Mem { v }) => v,
                _ => 0,
            };
            LeakEntry { position: pos, kind: LeakKind::Mre, value: hw(v ^ prev) }
        }
    };
    l.push(entry);
    l
}

fn latest(events: &[(usize, Event)], pred: impl Fn(Event) -> bool) -> Option<Event> {
    match events.split_last() {
        None => None,
        Some((&(_, e), rest)) => {
            if pred(e) {
                Some(e)
            } else {
                latest(rest, pred)
            }
        }
    }
}

/// Checks inferred classes against exact distributions. For every fixed
/// choice of secret and public inputs, a Random temp must be uniform over
/// the random inputs; for every fixed public choice, a Public temp must have
/// the same distribution whatever the secrets are. Returns one message per
/// misclassified temp.
pub fn type_soundness(p: &Program, classes: &[SecurityClass]) -> Result<Vec<String>, OracleError> {
    let w = p.width;
    let bits = w * p.inputs.len() as u32;
    if bits > SOUNDNESS_BITS {
        return Err(OracleError::TooManyInputBits { bits });
    }
    let pos = |c: SecurityClass| -> Vec<usize> {
        p.inputs.iter().enumerate().filter(|(_, (_, k))| *k == c).map(|(i, _)| i).collect()
    };
    let (sec, publ, rnd) = (pos(SecurityClass::Secret), pos(SecurityClass::Public), pos(SecurityClass::Random));
    let words = |n: usize| 1u64 << (w as usize * n);
    let values = 1usize << w;
    let nt = p.num_temps();
    let mut bad = vec![false; nt];
    let mut inputs = vec![0u64; p.inputs.len()];
    let spread = |inputs: &mut [u64], idx: &[usize], mut x: u64| {
        for &i in idx {
            inputs[i] = x & crate::ir::word_mask(w);
            x >>= w;
        }
    };
    for q in 0..words(publ.len()) {
        spread(&mut inputs, &publ, q);
        let mut first: Option<Vec<Vec<u64>>> = None;
        for k in 0..words(sec.len()) {
            spread(&mut inputs, &sec, k);
            let mut hist = vec![vec![0u64; values]; nt];
            for r in 0..words(rnd.len()) {
                spread(&mut inputs, &rnd, r);
                for (t, v) in p.eval(&inputs).into_iter().enumerate() {
                    hist[t][v as usize] += 1;
                }
            }
            for t in 0..nt {
                match classes[t] {
                    SecurityClass::Random => {
                        if hist[t].iter().any(|&c| c != hist[t][0]) {
                            bad[t] = true;
                        }
                    }
                    SecurityClass::Public => {
                        if first.as_ref().is_some_and(|f| f[t] != hist[t]) {
                            bad[t] = true;
                        }
                    }
                    SecurityClass::Secret => {}
                }
            }
            if first.is_none() {
                first = Some(hist);
            }
        }
    }
    Ok((0..nt)
        .filter(|&t| bad[t])
        .map(|t| {
            let what = match classes[t] {
                SecurityClass::Random => "is not uniform",
                _ => "depends on a secret",
            };
            format!("{} classified {} {what}", p.names[t], classes[t].as_str())
        })
        .collect())
}
