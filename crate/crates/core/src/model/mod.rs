//! The combined register allocation and scheduling model.
//!
//! A [`Function`] expands a program with optional copy operations: after
//! `in`, every input gets `K` copies, and every defining body operation is
//! followed by `K` copies of its result. Copy `k` may read any earlier member
//! of the value's chain and is implemented as a register move, a spill
//! (register to stack slot) or a reload (slot to register).
//!
//! With `K = 1` the Xor kernel expands to
//!
//! ```text
//! o1: in [t0, t1, t2]
//! o2: t3 <- [-, copy] t0
//! o3: t4 <- [-, copy] t1
//! o4: t5 <- [-, copy] t2
//! o5: t6 <- xor [t1,t4] [t2,t5]
//! o6: t7 <- [-, copy] t6
//! o7: t8 <- xor [t0,t3] [t6,t7]
//! o8: t9 <- [-, copy] t8
//! o9: out [t10 <- [t8,t9]]
//! ```

pub mod check;
pub mod lower;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::ir::{self, Diagnostic, Opcode, Operand, Program, Temp};
use crate::secsets::SecuritySets;
use crate::target::TargetDesc;

pub use check::{check, check_from, check_shape, Derived, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OpKind {
    In,
    Out,
    /// Index into the program body.
    Source(usize),
    /// Copy `k` (1-based) of a program value.
    Copy { value: Temp, k: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MOperand {
    /// Equal-valued alternatives, primary first.
    Temps(Vec<usize>),
    Const(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MOp {
    pub id: usize,
    pub kind: OpKind,
    pub opcode: Opcode,
    pub operands: Vec<MOperand>,
    pub defs: Vec<usize>,
    pub mandatory: bool,
}

impl MOp {
    /// 1-based display label.
    pub fn label(&self) -> String {
        format!("o{}", self.id + 1)
    }

    pub fn is_copy(&self) -> bool {
        matches!(self.kind, OpKind::Copy { .. })
    }

    /// Occupies an issue slot (everything except `in` and `out`).
    pub fn is_real(&self) -> bool {
        !matches!(self.kind, OpKind::In | OpKind::Out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MTemp {
    pub id: usize,
    /// Program temp whose value this temp holds.
    pub value: Temp,
    /// 0 for the primary definition, `k` for copy `k`.
    pub copy: usize,
    pub def_op: usize,
    /// Output alias attached to `out`; never allocated.
    pub alias: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub program: Program,
    pub copies: usize,
    pub ops: Vec<MOp>,
    pub temps: Vec<MTemp>,
    /// Per program temp: primary model temp followed by its copies.
    pub chains: Vec<Vec<usize>>,
    /// Per model temp: `(op, operand)` positions listing it as an alternative.
    pub users: Vec<Vec<(usize, usize)>>,
    /// Pairs of source memory operations that must keep their order, with
    /// whether the first one is a store.
    pub mem_order: Vec<(usize, usize)>,
}

impl Function {
    pub fn expand(program: &Program, copies: usize) -> Function {
        let mut ops: Vec<MOp> = Vec::new();
        let mut temps: Vec<MTemp> = Vec::new();
        let mut chains: Vec<Vec<usize>> = alloc::vec![Vec::new(); program.num_temps()];

        let new_temp = |temps: &mut Vec<MTemp>, value: Temp, copy: usize, def_op: usize, alias: bool| {
            let id = temps.len();
            temps.push(MTemp { id, value, copy, def_op, alias });
            id
        };
        let add_copies = |ops: &mut Vec<MOp>, temps: &mut Vec<MTemp>, chains: &mut Vec<Vec<usize>>, v: Temp| {
            for k in 1..=copies {
                let op = ops.len();
                let t = new_temp(temps, v, k, op, false);
                let alts = chains[v.index()].clone();
                ops.push(MOp {
                    id: op,
                    kind: OpKind::Copy { value: v, k },
                    opcode: Opcode::Copy,
                    operands: alloc::vec![MOperand::Temps(alts)],
                    defs: alloc::vec![t],
                    mandatory: false,
                });
                chains[v.index()].push(t);
            }
        };

        let mut in_defs = Vec::new();
        for (t, _) in &program.inputs {
            let id = new_temp(&mut temps, *t, 0, 0, false);
            chains[t.index()].push(id);
            in_defs.push(id);
        }
        ops.push(MOp {
            id: 0,
            kind: OpKind::In,
            opcode: Opcode::In,
            operands: Vec::new(),
            defs: in_defs,
            mandatory: true,
        });
        for (t, _) in &program.inputs {
            add_copies(&mut ops, &mut temps, &mut chains, *t);
        }
        let mut source_op = Vec::new();
        for (i, bop) in program.body.iter().enumerate() {
            let op = ops.len();
            source_op.push(op);
            let operands = bop
                .uses
                .iter()
                .map(|u| match u {
                    Operand::Temp(t) => MOperand::Temps(chains[t.index()].clone()),
                    Operand::Const(c) => MOperand::Const(*c),
                })
                .collect();
            let defs = match bop.def {
                Some(d) => {
                    let id = new_temp(&mut temps, d, 0, op, false);
                    chains[d.index()].push(id);
                    alloc::vec![id]
                }
                None => Vec::new(),
            };
            ops.push(MOp { id: op, kind: OpKind::Source(i), opcode: bop.opcode, operands, defs, mandatory: true });
            if let Some(d) = bop.def {
                add_copies(&mut ops, &mut temps, &mut chains, d);
            }
        }
        let out = ops.len();
        let operands = program
            .outputs
            .iter()
            .map(|t| MOperand::Temps(chains[t.index()].clone()))
            .collect();
        for t in &program.outputs {
            new_temp(&mut temps, *t, 0, out, true);
        }
        ops.push(MOp { id: out, kind: OpKind::Out, opcode: Opcode::Out, operands, defs: Vec::new(), mandatory: true });

        let mut users = alloc::vec![Vec::new(); temps.len()];
        for o in &ops {
            for (j, p) in o.operands.iter().enumerate() {
                if let MOperand::Temps(alts) = p {
                    for &t in alts {
                        users[t].push((o.id, j));
                    }
                }
            }
        }

        let mut mem_order = Vec::new();
        let body = &program.body;
        for j in 0..body.len() {
            for i in 0..j {
                let (a, b) = (&body[i], &body[j]);
                if !(a.opcode.is_memory() && b.opcode.is_memory()) {
                    continue;
                }
                if a.opcode == Opcode::Load && b.opcode == Opcode::Load {
                    continue;
                }
                if ir::may_alias(a.uses[0], b.uses[0]) {
                    mem_order.push((source_op[i], source_op[j]));
                }
            }
        }

        Function { program: program.clone(), copies, ops, temps, chains, users, mem_order }
    }

    pub fn out_op(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn num_real_ops(&self) -> usize {
        self.ops.iter().filter(|o| o.is_real()).count()
    }

    pub fn temp_label(&self, t: usize) -> String {
        format!("t{t}")
    }

    /// Output aliases, in output order.
    pub fn aliases(&self) -> impl Iterator<Item = usize> + '_ {
        self.temps.iter().filter(|t| t.alias).map(|t| t.id)
    }

    /// Primary temp of the value a source store writes.
    pub fn store_data_temp(&self, op: usize) -> usize {
        match &self.ops[op].operands[1] {
            MOperand::Temps(alts) => alts[0],
            MOperand::Const(_) => unreachable!("store data is always a temp"),
        }
    }

    /// Whether the operation can be preceded on the bus: it is a source
    /// memory op or a copy chosen as spill or reload.
    pub fn is_mem_access(&self, op: usize, choice: Choice) -> bool {
        match self.ops[op].kind {
            OpKind::Source(_) => self.ops[op].opcode.is_memory(),
            OpKind::Copy { .. } => matches!(choice, Choice::Spill | Choice::Reload),
            _ => false,
        }
    }

    pub fn latency(&self, op: usize, choice: Choice, target: &TargetDesc) -> i32 {
        let l = match (self.ops[op].kind, choice) {
            (OpKind::In, _) => 1,
            (OpKind::Out, _) => 0,
            (OpKind::Copy { .. }, Choice::Move) => target.latency(Opcode::Copy),
            (OpKind::Copy { .. }, Choice::Spill) => target.latency(Opcode::Store),
            (OpKind::Copy { .. }, Choice::Reload) => target.latency(Opcode::Load),
            (OpKind::Copy { .. }, _) => 0,
            (OpKind::Source(_), _) => target.latency(self.ops[op].opcode),
        };
        l as i32
    }

    /// Instructions available to an operation.
    pub fn choices(&self, op: usize) -> &'static [Choice] {
        match self.ops[op].kind {
            OpKind::Copy { .. } => &[Choice::Inactive, Choice::Move, Choice::Spill, Choice::Reload],
            _ => &[Choice::Op],
        }
    }
}

/// Instruction implementing an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Choice {
    Inactive,
    /// The operation's own instruction (non-copies).
    Op,
    Move,
    Spill,
    Reload,
}

impl Choice {
    pub fn is_active(self) -> bool {
        self != Choice::Inactive
    }
}

/// Complete assignment of the decision variables. Derived quantities (live
/// ranges, `lk`, `ok`) are recomputed by [`Derived`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Solution {
    pub choice: Vec<Choice>,
    /// Issue cycle, `-1` for inactive operations.
    pub cycle: Vec<i32>,
    /// Selected temp per operand, `None` for literals and inactive operations.
    pub select: Vec<Vec<Option<usize>>>,
    /// Operand order reversed (two-address binary operations only).
    pub swap: Vec<bool>,
    /// Location per temp, `None` when not live.
    pub reg: Vec<Option<usize>>,
    pub objective: i32,
}

impl Solution {
    /// Every copy inactive, nothing selected or placed.
    pub fn blank(f: &Function) -> Solution {
        Solution {
            choice: f.ops.iter().map(|o| if o.is_copy() { Choice::Inactive } else { Choice::Op }).collect(),
            cycle: f.ops.iter().map(|o| if o.kind == OpKind::In { 0 } else { -1 }).collect(),
            select: f.ops.iter().map(|o| alloc::vec![None; o.operands.len()]).collect(),
            swap: alloc::vec![false; f.ops.len()],
            reg: alloc::vec![None; f.temps.len()],
            objective: 0,
        }
    }

    pub fn active(&self, op: usize) -> bool {
        self.choice[op].is_active()
    }

    /// Active operations ordered by issue cycle (`in` first, `out` last).
    pub fn linearize(&self, f: &Function) -> Vec<usize> {
        let mut ops: Vec<usize> = (0..f.ops.len()).filter(|&o| self.active(o)).collect();
        let rank = |o: usize| match f.ops[o].kind {
            OpKind::In => (i32::MIN, 0),
            OpKind::Out => (i32::MAX, 0),
            _ => (self.cycle[o], o),
        };
        ops.sort_by_key(|&o| rank(o));
        ops
    }

    /// Source operands in issue order, after applying `swap`.
    pub fn ordered_operands(&self, f: &Function, op: usize) -> Vec<(usize, Option<usize>)> {
        let mut idx: Vec<usize> = (0..f.ops[op].operands.len()).collect();
        if self.swap[op] {
            idx.swap(0, 1);
        }
        idx.into_iter().map(|j| (j, self.select[op][j])).collect()
    }
}

/// Locations that hold the same initial value and carry no calling
/// convention role; renaming them maps solutions to solutions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symmetry {
    pub interchangeable: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Tag {
    Base,
    Security,
    Implied,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Constraint {
    /// Mandatory operations active; instruction valid for the operation.
    Activeness,
    /// Each operand of an active operation selects a live alternative.
    Selection,
    /// Live temps get a location of the class their instruction demands.
    Locations,
    Preassign { temp: usize, loc: usize },
    ResultRegister { operand: usize, loc: usize },
    TwoAddress { op: usize },
    /// `c(def(y(p))) + lat <= c(o)` for every selected operand.
    Precedence,
    MemoryOrder { first: usize, second: usize },
    SingleIssue,
    NoOverlap,
    /// `in` at cycle 0, `out` at the makespan.
    Objective,
    Rpair { a: usize, b: usize },
    Spair { key: usize, hiders: Vec<usize> },
    EntrySecret { temp: usize, hiders: Vec<usize> },
    Mmpair { a: usize, b: usize },
    Mspair { op: usize, hiders: Vec<usize> },
    /// Destination and a selected source of one operation forming an rpair
    /// may not share a register.
    Accumulator { op: usize, operand: usize, def: usize, src: usize },
    /// Two preassigned rpair temps sharing a register need interposed writes.
    PreassignInterposition { a: usize, b: usize },
}

impl Constraint {
    pub fn family(&self) -> &'static str {
        match self {
            Constraint::Rpair { .. } => "Rpairs",
            Constraint::Spair { .. } => "Spairs",
            Constraint::EntrySecret { .. } => "EntrySecret",
            Constraint::Mmpair { .. } => "Mmpairs",
            Constraint::Mspair { .. } => "Mspairs",
            Constraint::Accumulator { .. } => "Accumulator",
            Constraint::PreassignInterposition { .. } => "PreassignInterposition",
            Constraint::Activeness => "Activeness",
            Constraint::Selection => "Selection",
            Constraint::Locations => "Locations",
            Constraint::Preassign { .. } => "Preassign",
            Constraint::ResultRegister { .. } => "ResultRegister",
            Constraint::TwoAddress { .. } => "TwoAddress",
            Constraint::Precedence => "Precedence",
            Constraint::MemoryOrder { .. } => "MemoryOrder",
            Constraint::SingleIssue => "SingleIssue",
            Constraint::NoOverlap => "NoOverlap",
            Constraint::Objective => "Objective",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tagged {
    pub tag: Tag,
    pub constraint: Constraint,
}

/// Variable domains, for inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecisionVars {
    pub maxc: i32,
    /// Allowed locations per temp (empty for output aliases).
    pub r: Vec<Vec<usize>>,
    pub a: Vec<Vec<bool>>,
    pub i: Vec<Vec<Choice>>,
    pub c: Vec<(i32, i32)>,
    /// Alternatives per operation operand.
    pub y: Vec<Vec<Vec<usize>>>,
    pub ls: Vec<(i32, i32)>,
    pub le: Vec<(i32, i32)>,
    pub lk: Vec<(i32, i32)>,
    pub ok: Vec<(i32, i32)>,
}

#[derive(Clone, Debug)]
pub struct ExtendedModel {
    pub func: Function,
    pub target: TargetDesc,
    pub vars: DecisionVars,
    pub constraints: Vec<Tagged>,
    pub sets: Option<SecuritySets>,
    pub symmetry: Symmetry,
    /// Fixed location per temp from the calling convention.
    pub preassigned: Vec<Option<usize>>,
    /// Fixed location per `out` operand.
    pub result_loc: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("invalid program: {0:?}")]
    InvalidProgram(Vec<Diagnostic>),
    #[error("{inputs} inputs exceed {capacity} argument registers and stack slots")]
    TooManyInputs { inputs: usize, capacity: usize },
    #[error("target has no registers")]
    NoRegisters,
}

pub fn build_base_model(p: &Program, target: &TargetDesc, copies: usize) -> Result<ExtendedModel, BuildError> {
    let diags = ir::validate(p);
    if !diags.is_empty() {
        return Err(BuildError::InvalidProgram(diags));
    }
    if target.num_registers() == 0 {
        return Err(BuildError::NoRegisters);
    }
    let capacity = target.args.len() + target.slots;
    if p.inputs.len() > capacity {
        return Err(BuildError::TooManyInputs { inputs: p.inputs.len(), capacity });
    }
    let func = Function::expand(p, copies);
    let nregs = target.num_registers();

    let mut preassigned = alloc::vec![None; func.temps.len()];
    let mut distinguished = alloc::vec![false; target.num_locations()];
    for (i, &t) in func.ops[0].defs.iter().enumerate() {
        let loc = target.args.get(i).copied().unwrap_or(nregs + i - target.args.len());
        preassigned[t] = Some(loc);
        distinguished[loc] = true;
    }
    let out = func.out_op();
    let result_loc: Vec<Option<usize>> =
        (0..func.ops[out].operands.len()).map(|j| target.results.get(j).copied()).collect();
    for &r in result_loc.iter().flatten() {
        distinguished[r] = true;
    }
    let symmetry = Symmetry { interchangeable: distinguished.iter().map(|d| !d).collect() };

    let mut constraints: Vec<Tagged> = Vec::new();
    let mut base = |c: Constraint| constraints.push(Tagged { tag: Tag::Base, constraint: c });
    base(Constraint::Activeness);
    base(Constraint::Selection);
    base(Constraint::Locations);
    for (t, loc) in preassigned.iter().enumerate() {
        if let Some(loc) = loc {
            base(Constraint::Preassign { temp: t, loc: *loc });
        }
    }
    for (j, loc) in result_loc.iter().enumerate() {
        if let Some(loc) = loc {
            base(Constraint::ResultRegister { operand: j, loc: *loc });
        }
    }
    for o in &func.ops {
        if o.is_real() && o.opcode.is_binary() && target.two_address(o.opcode) {
            base(Constraint::TwoAddress { op: o.id });
        }
    }
    base(Constraint::Precedence);
    for &(a, b) in &func.mem_order {
        base(Constraint::MemoryOrder { first: a, second: b });
    }
    base(Constraint::SingleIssue);
    base(Constraint::NoOverlap);
    base(Constraint::Objective);

    let vars = decision_vars(&func, target, &preassigned);
    Ok(ExtendedModel { func, target: target.clone(), vars, constraints, sets: None, symmetry, preassigned, result_loc })
}

fn decision_vars(f: &Function, target: &TargetDesc, pre: &[Option<usize>]) -> DecisionVars {
    let max_lat = |o: &MOp| -> i32 {
        f.choices(o.id).iter().map(|&c| f.latency(o.id, c, target)).max().unwrap_or(1)
    };
    let ncopies = f.ops.iter().filter(|o| o.is_copy()).count() as i32;
    let maxc = f.ops.iter().map(max_lat).sum::<i32>() + ncopies;
    let all_locs: Vec<usize> = (0..target.num_locations()).collect();
    let r = f
        .temps
        .iter()
        .map(|t| match (t.alias, pre[t.id]) {
            (true, _) => Vec::new(),
            (_, Some(l)) => alloc::vec![l],
            _ => all_locs.clone(),
        })
        .collect();
    let a = f
        .ops
        .iter()
        .map(|o| if o.mandatory { alloc::vec![true] } else { alloc::vec![false, true] })
        .collect();
    let i = f.ops.iter().map(|o| f.choices(o.id).to_vec()).collect();
    let c = f
        .ops
        .iter()
        .map(|o| match o.kind {
            OpKind::In => (0, 0),
            _ => (1, maxc),
        })
        .collect();
    let y = f
        .ops
        .iter()
        .map(|o| {
            o.operands
                .iter()
                .map(|p| match p {
                    MOperand::Temps(a) => a.clone(),
                    MOperand::Const(_) => Vec::new(),
                })
                .collect()
        })
        .collect();
    let nt = f.temps.len();
    DecisionVars {
        maxc,
        r,
        a,
        i,
        c,
        y,
        ls: alloc::vec![(0, maxc); nt],
        le: alloc::vec![(0, maxc); nt],
        lk: alloc::vec![(-1, maxc); nt],
        ok: alloc::vec![(-1, maxc); f.ops.len()],
    }
}

pub fn add_security_constraints(mut m: ExtendedModel, s: &SecuritySets) -> ExtendedModel {
    let mut sec = |c: Constraint| m.constraints.push(Tagged { tag: Tag::Security, constraint: c });
    for &(a, b) in &s.rpairs {
        sec(Constraint::Rpair { a, b });
    }
    for (&key, hs) in &s.spairs {
        sec(Constraint::Spair { key, hiders: hs.iter().copied().collect() });
    }
    for (&temp, hs) in &s.entry {
        sec(Constraint::EntrySecret { temp, hiders: hs.iter().copied().collect() });
    }
    for &(a, b) in &s.mmpairs {
        sec(Constraint::Mmpair { a, b });
    }
    for (&op, hs) in &s.mspairs {
        sec(Constraint::Mspair { op, hiders: hs.iter().copied().collect() });
    }
    m.sets = Some(s.clone());
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImpliedOptions {
    pub accumulator: bool,
    pub preassign: bool,
}

impl Default for ImpliedOptions {
    fn default() -> Self {
        ImpliedOptions { accumulator: true, preassign: true }
    }
}

pub fn add_implied_constraints(mut m: ExtendedModel, s: &SecuritySets, opts: ImpliedOptions) -> ExtendedModel {
    let mut added = Vec::new();
    if opts.accumulator {
        for o in &m.func.ops {
            if !o.is_real() || o.defs.len() != 1 {
                continue;
            }
            let def = o.defs[0];
            for (j, p) in o.operands.iter().enumerate() {
                let MOperand::Temps(alts) = p else { continue };
                for &src in alts {
                    if s.in_rpairs(def, src) {
                        added.push(Constraint::Accumulator { op: o.id, operand: j, def, src });
                    }
                }
            }
        }
    }
    if opts.preassign {
        let fixed = m.fixed_temps();
        for &(a, b) in &s.rpairs {
            if fixed[a] && fixed[b] {
                added.push(Constraint::PreassignInterposition { a, b });
            }
        }
    }
    m.constraints.extend(added.into_iter().map(|c| Tagged { tag: Tag::Implied, constraint: c }));
    m
}

impl ExtendedModel {
    /// Temps whose location the calling convention can fix: inputs, and
    /// every temp an `out` operand with a result register may select.
    pub fn fixed_temps(&self) -> Vec<bool> {
        let f = &self.func;
        let mut fixed: Vec<bool> = self.preassigned.iter().map(|p| p.is_some()).collect();
        for (j, p) in f.ops[f.out_op()].operands.iter().enumerate() {
            if let (MOperand::Temps(alts), Some(_)) = (p, self.result_loc[j]) {
                for &t in alts {
                    fixed[t] = true;
                }
            }
        }
        fixed
    }

    pub fn is_secure(&self) -> bool {
        self.constraints.iter().any(|c| c.tag == Tag::Security)
    }

    pub fn without_tag(&self, tag: Tag) -> ExtendedModel {
        let mut m = self.clone();
        m.constraints.retain(|c| c.tag != tag);
        m
    }

    /// Copy of the model with one constraint family removed.
    pub fn without_family(&self, family: &str) -> ExtendedModel {
        let mut m = self.clone();
        m.constraints.retain(|c| c.constraint.family() != family);
        m
    }

    /// Security families present in the model, in a fixed order.
    pub fn security_families(&self) -> Vec<&'static str> {
        let present: BTreeSet<&'static str> = self
            .constraints
            .iter()
            .filter(|c| c.tag == Tag::Security)
            .map(|c| c.constraint.family())
            .collect();
        ["Rpairs", "Spairs", "EntrySecret", "Mmpairs", "Mspairs"]
            .into_iter()
            .filter(|f| present.contains(f))
            .collect()
    }

    /// Location class a temp must take given the instruction of its definer.
    pub fn def_class(&self, t: usize, choice: Choice) -> LocClass {
        let o = &self.func.ops[self.func.temps[t].def_op];
        match (o.kind, choice) {
            (OpKind::In, _) => LocClass::Fixed(self.preassigned[t].expect("inputs are preassigned")),
            (OpKind::Copy { .. }, Choice::Spill) => LocClass::Slot,
            _ => LocClass::Register,
        }
    }

    /// Location class an operand's selected temp must have, if any.
    pub fn use_class(&self, op: usize, operand: usize, choice: Choice) -> Option<LocClass> {
        match (self.func.ops[op].kind, choice) {
            (OpKind::Out, _) => self.result_loc[operand].map(LocClass::Fixed),
            (OpKind::Copy { .. }, Choice::Reload) => Some(LocClass::Slot),
            _ => Some(LocClass::Register),
        }
    }

    pub fn loc_matches(&self, loc: usize, class: LocClass) -> bool {
        match class {
            LocClass::Register => self.target.is_register(loc),
            LocClass::Slot => !self.target.is_register(loc) && loc < self.target.num_locations(),
            LocClass::Fixed(l) => loc == l,
        }
    }

    /// Whether the operation at `op` is a two-address binary operation.
    pub fn two_address(&self, op: usize) -> bool {
        let o = &self.func.ops[op];
        o.is_real() && o.opcode.is_binary() && self.target.two_address(o.opcode)
    }

    /// The ASAP cycles for an issue order of the active real operations.
    pub fn asap_cycles(&self, order: &[usize], sol: &Solution) -> Vec<i32> {
        let f = &self.func;
        let mut cycle = alloc::vec![-1; f.ops.len()];
        cycle[0] = 0;
        let mut last = 0;
        for &o in order {
            let mut c = last + 1;
            for sel in sol.select[o].iter().flatten() {
                let d = f.temps[*sel].def_op;
                c = c.max(cycle[d] + f.latency(d, sol.choice[d], &self.target));
            }
            for &(a, b) in &f.mem_order {
                if b == o && cycle[a] >= 0 {
                    let gap = if f.ops[a].opcode == Opcode::Store {
                        f.latency(a, sol.choice[a], &self.target)
                    } else {
                        1
                    };
                    c = c.max(cycle[a] + gap);
                }
            }
            cycle[o] = c;
            last = c;
        }
        let mut end = 1;
        for o in 0..f.ops.len() {
            if cycle[o] >= 0 {
                end = end.max(cycle[o] + f.latency(o, sol.choice[o], &self.target));
            }
        }
        for sel in sol.select[f.out_op()].iter().flatten() {
            let d = f.temps[*sel].def_op;
            end = end.max(cycle[d] + f.latency(d, sol.choice[d], &self.target));
        }
        cycle[f.out_op()] = end;
        cycle
    }

    /// Sets ASAP cycles for the given issue order of the active real
    /// operations, and the objective.
    pub fn schedule(&self, sol: &mut Solution, order: &[usize]) {
        sol.cycle = self.asap_cycles(order, sol);
        sol.objective = sol.cycle[self.func.out_op()];
    }

    /// Solutions are canonical when their cycles are ASAP for their issue
    /// order, interchangeable locations are numbered by first write, and
    /// `swap` is only set where it changes the instruction.
    pub fn canonical_violation(&self, sol: &Solution) -> Option<&'static str> {
        let f = &self.func;
        let order: Vec<usize> = sol.linearize(f).into_iter().filter(|&o| f.ops[o].is_real()).collect();
        if self.asap_cycles(&order, sol) != sol.cycle {
            return Some("cycles not ASAP");
        }
        for o in &f.ops {
            if sol.swap[o.id] && !self.swap_meaningful(o.id, sol) {
                return Some("meaningless swap");
            }
        }
        let nregs = self.target.num_registers();
        let mut seen = alloc::vec![false; self.target.num_locations()];
        for &o in &order {
            for &t in &f.ops[o].defs {
                let Some(loc) = sol.reg[t] else { continue };
                if !self.symmetry.interchangeable[loc] || seen[loc] {
                    continue;
                }
                let range = if loc < nregs { 0..nregs } else { nregs..self.target.num_locations() };
                let lowest = range.clone().find(|&l| self.symmetry.interchangeable[l] && !seen[l]);
                if lowest != Some(loc) {
                    return Some("interchangeable locations not numbered by first write");
                }
                seen[loc] = true;
            }
        }
        None
    }

    pub fn swap_meaningful(&self, op: usize, sol: &Solution) -> bool {
        if !self.two_address(op) {
            return false;
        }
        match (sol.select[op].first(), sol.select[op].get(1)) {
            (Some(Some(a)), Some(Some(b))) => a != b,
            (Some(a), Some(b)) => a.is_some() != b.is_some(),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocClass {
    Register,
    Slot,
    Fixed(usize),
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |alts: &[usize]| {
            let v: Vec<String> = alts.iter().map(|t| format!("t{t}")).collect();
            v.join(",")
        };
        for o in &self.ops {
            write!(f, "{}: ", o.label())?;
            match o.kind {
                OpKind::In => {
                    writeln!(f, "in [{}]", list(&o.defs))?;
                }
                OpKind::Out => {
                    let aliases: Vec<usize> = self.aliases().collect();
                    let parts: Vec<String> = o
                        .operands
                        .iter()
                        .zip(&aliases)
                        .map(|(p, a)| match p {
                            MOperand::Temps(alts) => format!("t{a} <- [{}]", list(alts)),
                            MOperand::Const(c) => format!("{c:#x}"),
                        })
                        .collect();
                    writeln!(f, "out [{}]", parts.join(", "))?;
                }
                _ => {
                    if let Some(d) = o.defs.first() {
                        write!(f, "t{d} <- ")?;
                    }
                    if o.is_copy() {
                        write!(f, "[-, copy]")?;
                    } else {
                        write!(f, "{}", o.opcode)?;
                    }
                    for p in &o.operands {
                        match p {
                            MOperand::Temps(alts) if alts.len() == 1 => write!(f, " t{}", alts[0])?,
                            MOperand::Temps(alts) => write!(f, " [{}]", list(alts))?,
                            MOperand::Const(c) => write!(f, " {c:#x}")?,
                        }
                    }
                    writeln!(f)?;
                }
            }
        }
        Ok(())
    }
}
