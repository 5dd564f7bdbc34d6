//! Machine descriptions: registers, stack slots, latencies and calling convention.
//!
//! Config format, one `key = value` or `op` line per statement:
//!
//! ```text
//! target = thumb-like
//! registers = R0 R1 R2 R3 R4 R5 R6 R7
//! slots = 4
//! args = R0 R1 R2 R3
//! result = R0
//! op xor latency=1 two_address=true
//! op load latency=2 memory=true
//! ```
//!
//! Location indices `0..registers.len()` are hardware registers, the
//! following `slots` indices are stack slots.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::ir::Opcode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpInfo {
    pub latency: u32,
    pub two_address: bool,
    pub is_memory: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetDesc {
    pub name: String,
    pub registers: Vec<String>,
    pub slots: usize,
    pub ops: BTreeMap<Opcode, OpInfo>,
    /// Register indices receiving the inputs, in order.
    pub args: Vec<usize>,
    /// Register indices receiving the outputs, in order.
    pub results: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TargetError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, name: String },
    #[error("duplicate register `{0}`")]
    DuplicateRegister(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("latency of `{0}` must be at least 1")]
    ZeroLatency(Opcode),
    #[error("`{0}` is not binary and cannot be two-address")]
    TwoAddressNonBinary(Opcode),
    #[error("memory flag of `{0}` does not match the opcode")]
    MemoryFlag(Opcode),
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// Opcodes a target must (implicitly) describe; pseudo-ops take no time slot.
pub const MACHINE_OPS: [Opcode; 9] = [
    Opcode::Xor,
    Opcode::And,
    Opcode::Or,
    Opcode::Not,
    Opcode::GfMul,
    Opcode::Add,
    Opcode::Copy,
    Opcode::Load,
    Opcode::Store,
];

pub const PRESETS: [&str; 3] = ["thumb-like", "mips-like", "tiny"];

const THUMB_LIKE: &str = "\
target = thumb-like
registers = R0 R1 R2 R3 R4 R5 R6 R7
slots = 4
args = R0 R1 R2 R3
result = R0
op xor latency=1 two_address=true
op and latency=1 two_address=true
op or latency=1 two_address=true
op not latency=1
op gf_mul latency=1 two_address=true
op add latency=1 two_address=true
op copy latency=1
op load latency=2 memory=true
op store latency=2 memory=true
";

const MIPS_LIKE: &str = "\
target = mips-like
registers = R0 R1 R2 R3 R4 R5 R6 R7 R8 R9 R10 R11 R12 R13 R14 R15
slots = 4
args = R4 R5 R6 R7
result = R2 R3
op xor latency=1
op and latency=1
op or latency=1
op not latency=1
op gf_mul latency=1
op add latency=1
op copy latency=1
op load latency=2 memory=true
op store latency=2 memory=true
";

// Small register file for exhaustive cross-checks and spill pressure.
const TINY: &str = "\
target = tiny
registers = R0 R1 R2
slots = 2
args = R0 R1 R2
result = R0
op xor latency=1
op and latency=1
op or latency=1
op not latency=1
op gf_mul latency=1
op add latency=1
op copy latency=1
op load latency=2 memory=true
op store latency=2 memory=true
";

pub fn preset(name: &str) -> Result<TargetDesc, TargetError> {
    let text = match name {
        "thumb-like" => THUMB_LIKE,
        "mips-like" => MIPS_LIKE,
        "tiny" => TINY,
        _ => return Err(TargetError::UnknownPreset(name.into())),
    };
    load_target(text)
}

fn parse_bool(line: usize, v: &str) -> Result<bool, TargetError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(TargetError::Syntax { line, msg: format!("expected true or false, found `{v}`") }),
    }
}

pub fn load_target(text: &str) -> Result<TargetDesc, TargetError> {
    let mut name = None;
    let mut registers: Option<Vec<String>> = None;
    let mut slots = 0usize;
    let mut args_names: Vec<String> = Vec::new();
    let mut result_names: Vec<String> = Vec::new();
    let mut ops = BTreeMap::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let syntax = |msg: String| TargetError::Syntax { line, msg };
        if let Some(rest) = body.strip_prefix("op ").or_else(|| body.strip_prefix("op\t")) {
            let mut words = rest.split_whitespace();
            let opname = words.next().ok_or_else(|| syntax("`op` needs an opcode".into()))?;
            let opcode = Opcode::from_mnemonic(opname)
                .filter(|o| MACHINE_OPS.contains(o))
                .ok_or_else(|| TargetError::UnknownOpcode { line, name: opname.into() })?;
            let mut info = OpInfo { latency: 1, two_address: false, is_memory: opcode.is_memory() };
            for w in words {
                let (k, v) = w
                    .split_once('=')
                    .ok_or_else(|| syntax(format!("expected key=value, found `{w}`")))?;
                match k {
                    "latency" => {
                        info.latency =
                            v.parse().map_err(|_| syntax(format!("bad latency `{v}`")))?;
                    }
                    "two_address" => info.two_address = parse_bool(line, v)?,
                    "memory" => info.is_memory = parse_bool(line, v)?,
                    _ => return Err(syntax(format!("unknown op attribute `{k}`"))),
                }
            }
            if ops.insert(opcode, info).is_some() {
                return Err(syntax(format!("duplicate entry for `{opcode}`")));
            }
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, found `{body}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let list = || v.split_whitespace().map(ToString::to_string).collect::<Vec<_>>();
        match k {
            "target" => name = Some(v.to_string()),
            "registers" => registers = Some(list()),
            "slots" => slots = v.parse().map_err(|_| syntax(format!("bad slot count `{v}`")))?,
            "args" => args_names = list(),
            "result" => result_names = list(),
            _ => return Err(syntax(format!("unknown key `{k}`"))),
        }
    }

    let name = name.ok_or(TargetError::Missing("target"))?;
    let registers = registers.ok_or(TargetError::Missing("registers"))?;
    if registers.is_empty() {
        return Err(TargetError::Missing("registers"));
    }
    for (i, r) in registers.iter().enumerate() {
        if registers[..i].contains(r) {
            return Err(TargetError::DuplicateRegister(r.clone()));
        }
    }
    let index_of = |n: &String| {
        registers
            .iter()
            .position(|r| r == n)
            .ok_or_else(|| TargetError::UnknownRegister(n.clone()))
    };
    let args = args_names.iter().map(index_of).collect::<Result<Vec<_>, _>>()?;
    for (i, a) in args.iter().enumerate() {
        if args[..i].contains(a) {
            return Err(TargetError::DuplicateRegister(registers[*a].clone()));
        }
    }
    let results = result_names.iter().map(index_of).collect::<Result<Vec<_>, _>>()?;
    for (i, a) in results.iter().enumerate() {
        if results[..i].contains(a) {
            return Err(TargetError::DuplicateRegister(registers[*a].clone()));
        }
    }
    for op in MACHINE_OPS {
        let info = ops
            .entry(op)
            .or_insert(OpInfo { latency: 1, two_address: false, is_memory: op.is_memory() });
        if info.latency == 0 {
            return Err(TargetError::ZeroLatency(op));
        }
        if info.two_address && !op.is_binary() {
            return Err(TargetError::TwoAddressNonBinary(op));
        }
        if info.is_memory != op.is_memory() {
            return Err(TargetError::MemoryFlag(op));
        }
    }
    Ok(TargetDesc { name, registers, slots, ops, args, results })
}

/// Canonical config text: `load_target(&render_target(t)) == Ok(t)`.
pub fn render_target(t: &TargetDesc) -> String {
    let names = |ix: &[usize]| ix.iter().map(|&i| t.registers[i].as_str()).collect::<Vec<_>>().join(" ");
    let mut s = format!("target = {}\n", t.name);
    s.push_str(&format!("registers = {}\n", t.registers.join(" ")));
    s.push_str(&format!("slots = {}\n", t.slots));
    s.push_str(&format!("args = {}\n", names(&t.args)));
    s.push_str(&format!("result = {}\n", names(&t.results)));
    for (op, info) in &t.ops {
        s.push_str(&format!("op {} latency={}", op, info.latency));
        if info.two_address {
            s.push_str(" two_address=true");
        }
        if info.is_memory {
            s.push_str(" memory=true");
        }
        s.push('\n');
    }
    s
}

impl TargetDesc {
    pub fn num_registers(&self) -> usize {
        self.registers.len()
    }

    pub fn num_locations(&self) -> usize {
        self.registers.len() + self.slots
    }

    pub fn is_register(&self, loc: usize) -> bool {
        loc < self.registers.len()
    }

    pub fn latency(&self, op: Opcode) -> u32 {
        match op {
            Opcode::In => 1,
            Opcode::Out => 0,
            _ => self.ops.get(&op).map_or(1, |i| i.latency),
        }
    }

    pub fn two_address(&self, op: Opcode) -> bool {
        self.ops.get(&op).is_some_and(|i| i.two_address)
    }

    pub fn location_name(&self, loc: usize) -> String {
        match self.registers.get(loc) {
            Some(r) => r.clone(),
            None => format!("S{}", loc - self.registers.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        let t = preset("thumb-like").unwrap();
        assert_eq!(t.num_registers(), 8);
        assert_eq!(t.args, [0, 1, 2, 3]);
        assert_eq!(t.results, [0]);
        assert!(t.two_address(Opcode::Xor) && t.two_address(Opcode::Add));
        assert!(!t.two_address(Opcode::Not));
        assert_eq!(t.latency(Opcode::Load), 2);
        let m = preset("mips-like").unwrap();
        assert_eq!(m.num_registers(), 16);
        assert!(!m.two_address(Opcode::Xor));
        assert_eq!(m.latency(Opcode::Store), 2);
        assert_eq!(m.location_name(17), "S1");
        assert!(preset("vax").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "target = x\nregisters = A B\n";
        assert_eq!(
            load_target(&format!("{base}op xor latency=0\n")),
            Err(TargetError::ZeroLatency(Opcode::Xor))
        );
        assert!(matches!(
            load_target(&format!("{base}op rol latency=1\n")),
            Err(TargetError::UnknownOpcode { line: 3, .. })
        ));
        assert_eq!(
            load_target("target = x\nregisters = A A\n"),
            Err(TargetError::DuplicateRegister("A".into()))
        );
        assert_eq!(
            load_target(&format!("{base}op not two_address=true\n")),
            Err(TargetError::TwoAddressNonBinary(Opcode::Not))
        );
        assert_eq!(load_target(&format!("{base}args = C\n")), Err(TargetError::UnknownRegister("C".into())));
    }

    #[test]
    fn round_trip() {
        for p in PRESETS {
            let t = preset(p).unwrap();
            let text = render_target(&t);
            assert_eq!(load_target(&text).unwrap(), t);
            assert_eq!(render_target(&load_target(&text).unwrap()), text);
        }
    }
}
