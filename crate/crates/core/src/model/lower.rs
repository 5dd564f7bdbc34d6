//! Lowering a solution to a linear instruction sequence, and its listing.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Choice, ExtendedModel, OpKind, Solution};
use crate::ir::{Opcode, SecurityClass};
use crate::target::TargetDesc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Src {
    Reg(usize),
    Imm(u64),
}

/// Locations are indices into the target's location space; slots follow
/// the hardware registers.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Instr {
    Alu { op: Opcode, dst: usize, srcs: Vec<Src> },
    Move { dst: usize, src: usize },
    Spill { slot: usize, src: usize },
    Reload { dst: usize, slot: usize },
    Load { dst: usize, addr: Src },
    Store { addr: Src, src: usize },
}

impl Instr {
    /// Register written by the instruction, if any.
    pub fn dst_register(&self) -> Option<usize> {
        match self {
            Instr::Alu { dst, .. } | Instr::Move { dst, .. } | Instr::Reload { dst, .. } | Instr::Load { dst, .. } => {
                Some(*dst)
            }
            Instr::Spill { .. } | Instr::Store { .. } => None,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, Instr::Spill { .. } | Instr::Reload { .. } | Instr::Load { .. } | Instr::Store { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Step {
    /// Model operation id.
    pub op: usize,
    pub cycle: i32,
    pub instr: Instr,
    /// Model temp defined, if any.
    pub def: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lowered {
    pub width: u32,
    /// Class of each program input, in input order.
    pub classes: Vec<SecurityClass>,
    pub registers: usize,
    pub locations: usize,
    /// Entry location of each program input.
    pub inputs: Vec<usize>,
    /// Location read by `out` for each program output.
    pub outputs: Vec<usize>,
    pub steps: Vec<Step>,
}

impl Lowered {
    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.steps.iter().map(|s| &s.instr)
    }
}

fn src_of(sol: &Solution, sel: Option<usize>, operand: &super::MOperand) -> Src {
    match (sel, operand) {
        (Some(t), _) => Src::Reg(sol.reg[t].expect("selected temps are live")),
        (None, super::MOperand::Const(c)) => Src::Imm(*c),
        (None, super::MOperand::Temps(_)) => unreachable!("active operand without selection"),
    }
}

/// Requires a solution that satisfies the model's base constraints.
pub fn lower(m: &ExtendedModel, sol: &Solution) -> Lowered {
    let f = &m.func;
    let loc = |t: usize| sol.reg[t].expect("live temp has a location");
    let mut steps = Vec::new();
    for o in sol.linearize(f) {
        let op = &f.ops[o];
        let def = op.defs.first().copied();
        let instr = match op.kind {
            OpKind::In | OpKind::Out => continue,
            OpKind::Copy { .. } => {
                let src = loc(sol.select[o][0].expect("active copy selects a source"));
                let dst = loc(def.expect("copy defines a temp"));
                match sol.choice[o] {
                    Choice::Move => Instr::Move { dst, src },
                    Choice::Spill => Instr::Spill { slot: dst, src },
                    Choice::Reload => Instr::Reload { dst, slot: src },
                    c => unreachable!("copy lowered with {c:?}"),
                }
            }
            OpKind::Source(_) => {
                let srcs: Vec<Src> = sol
                    .ordered_operands(f, o)
                    .into_iter()
                    .map(|(j, sel)| src_of(sol, sel, &op.operands[j]))
                    .collect();
                match op.opcode {
                    Opcode::Load => Instr::Load { dst: loc(def.unwrap()), addr: srcs[0] },
                    Opcode::Store => {
                        let Src::Reg(src) = srcs[1] else { unreachable!("store data is a temp") };
                        Instr::Store { addr: srcs[0], src }
                    }
                    opc => Instr::Alu { op: opc, dst: loc(def.unwrap()), srcs },
                }
            }
        };
        steps.push(Step { op: o, cycle: sol.cycle[o], instr, def });
    }
    let out = f.out_op();
    Lowered {
        width: f.program.width,
        classes: f.program.inputs.iter().map(|(_, c)| *c).collect(),
        registers: m.target.num_registers(),
        locations: m.target.num_locations(),
        inputs: f.ops[0].defs.iter().map(|&t| m.preassigned[t].unwrap()).collect(),
        outputs: sol.select[out].iter().map(|s| loc(s.unwrap())).collect(),
        steps,
    }
}

fn fmt_src(t: &TargetDesc, s: Src) -> String {
    match s {
        Src::Reg(r) => t.location_name(r),
        Src::Imm(c) => format!("#{c:#x}"),
    }
}

fn fmt_addr(t: &TargetDesc, s: Src) -> String {
    match s {
        Src::Reg(r) => format!("[{}]", t.location_name(r)),
        Src::Imm(c) => format!("[{c:#x}]"),
    }
}

/// Assembly text for one instruction. Two-address operations omit the
/// destination, which equals the first source.
pub fn render_instr(t: &TargetDesc, instr: &Instr) -> String {
    let n = |l: usize| t.location_name(l);
    match instr {
        Instr::Alu { op, dst, srcs } => {
            let mut regs: Vec<String> = srcs.iter().map(|s| fmt_src(t, *s)).collect();
            let elide = t.two_address(*op) && srcs.len() == 2 && srcs[0] == Src::Reg(*dst);
            if !elide {
                regs.insert(0, n(*dst));
            }
            format!("{:<7} {}", op.mnemonic(), regs.join(", "))
        }
        Instr::Move { dst, src } => format!("{:<7} {}, {}", "mov", n(*dst), n(*src)),
        Instr::Spill { slot, src } => format!("{:<7} {}, [{}]", "str", n(*src), n(*slot)),
        Instr::Reload { dst, slot } => format!("{:<7} {}, [{}]", "ldr", n(*dst), n(*slot)),
        Instr::Load { dst, addr } => format!("{:<7} {}, {}", "ldr", n(*dst), fmt_addr(t, *addr)),
        Instr::Store { addr, src } => format!("{:<7} {}, {}", "str", n(*src), fmt_addr(t, *addr)),
    }
}

/// Annotated listing: one line per instruction with the issue cycle and the
/// temps involved.
pub fn render_asm(m: &ExtendedModel, sol: &Solution) -> String {
    let f = &m.func;
    let low = lower(m, sol);
    let mut s = String::new();
    let _ = writeln!(s, "; function {} for {}", f.program.name, m.target.name);
    let ins: Vec<String> = low
        .inputs
        .iter()
        .zip(&f.ops[0].defs)
        .map(|(l, t)| format!("t{t}:{}", m.target.location_name(*l)))
        .collect();
    let _ = writeln!(s, "; in  {}", ins.join(" "));
    let _ = writeln!(s, "{}:", f.program.name);
    for step in &low.steps {
        let text = render_instr(&m.target, &step.instr);
        let uses: Vec<String> = sol
            .ordered_operands(f, step.op)
            .into_iter()
            .filter_map(|(_, sel)| sel.map(|t| format!("t{t}")))
            .collect();
        let def = step.def.map(|t| format!("t{t} <- ")).unwrap_or_default();
        let _ = writeln!(s, "    {text:<24} ; c{} {}: {def}{}", step.cycle, f.ops[step.op].label(), uses.join(" "));
    }
    let outs: Vec<String> = sol.select[f.out_op()]
        .iter()
        .zip(&low.outputs)
        .map(|(t, l)| format!("t{}:{}", t.unwrap(), m.target.location_name(*l)))
        .collect();
    let _ = writeln!(s, "; out {} ; {} cycles", outs.join(" "), sol.objective);
    s
}
