//! Straight-line SSA programs with security-annotated inputs.
//!
//! Textual form, one statement per line, `#` starts a comment:
//!
//! ```text
//! func xor width 4
//! in t0:public t1:random t2:secret
//! t3 = xor t1, t2
//! t4 = xor t0, t3
//! out t4
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::gf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SecurityClass {
    Secret,
    Public,
    Random,
}

impl SecurityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SecurityClass::Secret => "secret",
            SecurityClass::Public => "public",
            SecurityClass::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "secret" => Some(SecurityClass::Secret),
            "public" => Some(SecurityClass::Public),
            "random" => Some(SecurityClass::Random),
            _ => None,
        }
    }
}

impl fmt::Display for SecurityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SecurityClass::Secret => "Secret",
            SecurityClass::Public => "Public",
            SecurityClass::Random => "Random",
        };
        f.write_str(s)
    }
}

/// Dense temporary index, numbered in definition order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Temp(pub u32);

impl Temp {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Temp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Opcode {
    In,
    Out,
    Xor,
    And,
    Or,
    Not,
    GfMul,
    Add,
    Copy,
    Load,
    Store,
}

impl Opcode {
    pub const ALL: [Opcode; 11] = [
        Opcode::In,
        Opcode::Out,
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

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::In => "in",
            Opcode::Out => "out",
            Opcode::Xor => "xor",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Not => "not",
            Opcode::GfMul => "gf_mul",
            Opcode::Add => "add",
            Opcode::Copy => "copy",
            Opcode::Load => "load",
            Opcode::Store => "store",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Opcode::ALL.into_iter().find(|o| o.mnemonic() == s)
    }

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            Opcode::Xor | Opcode::And | Opcode::Or | Opcode::GfMul | Opcode::Add
        )
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Opcode::Not | Opcode::Copy)
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, Opcode::In | Opcode::Out)
    }

    /// Number of operands in a body operation; `None` for the variadic pseudo-ops.
    pub fn arity(self) -> Option<usize> {
        match self {
            Opcode::In | Opcode::Out => None,
            Opcode::Load => Some(1),
            Opcode::Store => Some(2),
            o if o.is_binary() => Some(2),
            _ => Some(1),
        }
    }

    /// Applies the operation to word values. Memory and pseudo-ops return `None`.
    pub fn apply(self, args: &[u64], width: u32) -> Option<u64> {
        let mask = word_mask(width);
        let v = match (self, args) {
            (Opcode::Xor, [a, b]) => a ^ b,
            (Opcode::And, [a, b]) => a & b,
            (Opcode::Or, [a, b]) => a | b,
            (Opcode::Add, [a, b]) => a.wrapping_add(*b),
            (Opcode::GfMul, [a, b]) => gf::mul(*a, *b, width),
            (Opcode::Not, [a]) => !a,
            (Opcode::Copy, [a]) => *a,
            _ => return None,
        };
        Some(v & mask)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

pub fn word_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Operand {
    Temp(Temp),
    Const(u64),
}

impl Operand {
    pub fn temp(self) -> Option<Temp> {
        match self {
            Operand::Temp(t) => Some(t),
            Operand::Const(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IrOperation {
    pub id: usize,
    pub opcode: Opcode,
    pub uses: Vec<Operand>,
    pub def: Option<Temp>,
    pub mandatory: bool,
}

impl IrOperation {
    /// For `store` the operands are `[address, data]`; for `load` just `[address]`.
    pub fn address(&self) -> Option<Operand> {
        if self.opcode.is_memory() {
            self.uses.first().copied()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Program {
    pub name: String,
    pub width: u32,
    pub inputs: Vec<(Temp, SecurityClass)>,
    pub body: Vec<IrOperation>,
    pub outputs: Vec<Temp>,
    /// Source names indexed by temp id.
    pub names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    BadWidth(u32),
    NoInputs,
    DuplicateDefinition { op: Option<usize>, temp: Temp },
    UseBeforeDef { op: usize, temp: Temp },
    UndefinedOutput { temp: Temp },
    StoreHasDef { op: usize },
    MissingDef { op: usize },
    Arity { op: usize, expected: usize, found: usize },
    PseudoOpInBody { op: usize },
    CopyInSource { op: usize },
    ConstTooWide { op: usize, value: u64 },
    ConstFirstOperand { op: usize },
    UnresolvedLoad { op: usize },
    BadOperationId { op: usize, expected: usize },
    BadName { temp: Temp },
}

impl Diagnostic {
    pub fn code(&self) -> &'static str {
        match self {
            Diagnostic::BadWidth(_) => "bad-width",
            Diagnostic::NoInputs => "no-inputs",
            Diagnostic::DuplicateDefinition { .. } => "duplicate-definition",
            Diagnostic::UseBeforeDef { .. } => "use-before-def",
            Diagnostic::UndefinedOutput { .. } => "undefined-output",
            Diagnostic::StoreHasDef { .. } => "store-has-def",
            Diagnostic::MissingDef { .. } => "missing-def",
            Diagnostic::Arity { .. } => "arity",
            Diagnostic::PseudoOpInBody { .. } => "pseudo-op-in-body",
            Diagnostic::CopyInSource { .. } => "copy-in-source",
            Diagnostic::ConstTooWide { .. } => "const-too-wide",
            Diagnostic::ConstFirstOperand { .. } => "const-first-operand",
            Diagnostic::UnresolvedLoad { .. } => "unresolved-load",
            Diagnostic::BadOperationId { .. } => "bad-operation-id",
            Diagnostic::BadName { .. } => "bad-name",
        }
    }

    pub fn op(&self) -> Option<usize> {
        match *self {
            Diagnostic::DuplicateDefinition { op, .. } => op,
            Diagnostic::UseBeforeDef { op, .. }
            | Diagnostic::StoreHasDef { op }
            | Diagnostic::MissingDef { op }
            | Diagnostic::Arity { op, .. }
            | Diagnostic::PseudoOpInBody { op }
            | Diagnostic::CopyInSource { op }
            | Diagnostic::ConstTooWide { op, .. }
            | Diagnostic::ConstFirstOperand { op }
            | Diagnostic::UnresolvedLoad { op }
            | Diagnostic::BadOperationId { op, .. } => Some(op),
            _ => None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())?;
        match self {
            Diagnostic::BadWidth(w) => write!(f, " {w}"),
            Diagnostic::DuplicateDefinition { temp, .. }
            | Diagnostic::UseBeforeDef { temp, .. }
            | Diagnostic::UndefinedOutput { temp }
            | Diagnostic::BadName { temp } => write!(f, " {temp}"),
            Diagnostic::Arity { expected, found, .. } => {
                write!(f, " expected {expected} found {found}")
            }
            Diagnostic::ConstTooWide { value, .. } => write!(f, " {value:#x}"),
            _ => Ok(()),
        }?;
        if let Some(op) = self.op() {
            write!(f, " (op {op})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, col: usize, name: String },
    #[error("{line}:{col}: use before definition of `{name}`")]
    UseBeforeDef { line: usize, col: usize, name: String },
    #[error("{line}:{col}: duplicate definition of `{name}`")]
    DuplicateDefinition { line: usize, col: usize, name: String },
    #[error("invalid program: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub const WIDTHS: [u32; 4] = [4, 8, 16, 32];

impl Program {
    pub fn num_temps(&self) -> usize {
        self.names.len()
    }

    pub fn name_of(&self, t: Temp) -> &str {
        self.names.get(t.index()).map(String::as_str).unwrap_or("?")
    }

    pub fn class_of_input(&self, t: Temp) -> Option<SecurityClass> {
        self.inputs.iter().find(|(u, _)| *u == t).map(|(_, c)| *c)
    }

    pub fn inputs_of(&self, class: SecurityClass) -> Vec<Temp> {
        self.inputs
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(t, _)| *t)
            .collect()
    }

    /// Index into `body` of the operation defining `t`, `None` for inputs.
    pub fn def_site(&self, t: Temp) -> Option<usize> {
        self.body.iter().position(|o| o.def == Some(t))
    }

    /// For each load in `body`, the body index of the store it reads from.
    pub fn load_sources(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for (i, op) in self.body.iter().enumerate() {
            if op.opcode == Opcode::Load {
                if let Some(j) = resolve_load(&self.body, i) {
                    out.insert(i, j);
                }
            }
        }
        out
    }

    /// Evaluates every temp for the given input values (ordered as `inputs`).
    pub fn eval(&self, inputs: &[u64]) -> Vec<u64> {
        let mask = word_mask(self.width);
        let mut vals = alloc::vec![0u64; self.num_temps()];
        for ((t, _), v) in self.inputs.iter().zip(inputs) {
            vals[t.index()] = v & mask;
        }
        let mut mem: BTreeMap<u64, u64> = BTreeMap::new();
        let get = |vals: &[u64], o: &Operand| match *o {
            Operand::Temp(t) => vals[t.index()],
            Operand::Const(c) => c & mask,
        };
        for op in &self.body {
            match op.opcode {
                Opcode::Store => {
                    let a = get(&vals, &op.uses[0]);
                    let d = get(&vals, &op.uses[1]);
                    mem.insert(a, d);
                }
                Opcode::Load => {
                    let a = get(&vals, &op.uses[0]);
                    let d = mem.get(&a).copied().unwrap_or(0);
                    if let Some(t) = op.def {
                        vals[t.index()] = d;
                    }
                }
                opc => {
                    let args: Vec<u64> = op.uses.iter().map(|o| get(&vals, o)).collect();
                    if let (Some(t), Some(v)) = (op.def, opc.apply(&args, self.width)) {
                        vals[t.index()] = v;
                    }
                }
            }
        }
        vals
    }
}

/// Two addresses may refer to the same location unless both are distinct constants.
pub fn may_alias(a: Operand, b: Operand) -> bool {
    match (a, b) {
        (Operand::Const(x), Operand::Const(y)) => x == y,
        _ => true,
    }
}

/// The latest earlier store that may alias the load at `body[i]`, provided it
/// names the identical address.
fn resolve_load(body: &[IrOperation], i: usize) -> Option<usize> {
    let addr = body[i].address()?;
    let j = (0..i)
        .rev()
        .find(|&j| body[j].opcode == Opcode::Store && may_alias(body[j].uses[0], addr))?;
    (body[j].uses[0] == addr).then_some(j)
}

pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if !WIDTHS.contains(&p.width) {
        diags.push(Diagnostic::BadWidth(p.width));
    }
    if p.inputs.is_empty() {
        diags.push(Diagnostic::NoInputs);
    }
    let n = p.num_temps();
    let mask = word_mask(p.width);
    let mut defined = alloc::vec![false; n];
    let define = |defined: &mut [bool], t: Temp, op: Option<usize>, diags: &mut Vec<Diagnostic>| {
        if t.index() >= n {
            diags.push(Diagnostic::BadName { temp: t });
        } else if defined[t.index()] {
            diags.push(Diagnostic::DuplicateDefinition { op, temp: t });
        } else {
            defined[t.index()] = true;
        }
    };
    for (t, _) in &p.inputs {
        define(&mut defined, *t, None, &mut diags);
    }
    for (i, op) in p.body.iter().enumerate() {
        if op.id != i + 1 {
            diags.push(Diagnostic::BadOperationId { op: op.id, expected: i + 1 });
        }
        let id = op.id;
        if op.opcode.is_pseudo() {
            diags.push(Diagnostic::PseudoOpInBody { op: id });
            continue;
        }
        if op.opcode == Opcode::Copy {
            diags.push(Diagnostic::CopyInSource { op: id });
        }
        if let Some(k) = op.opcode.arity() {
            if op.uses.len() != k {
                diags.push(Diagnostic::Arity { op: id, expected: k, found: op.uses.len() });
            }
        }
        for (pos, u) in op.uses.iter().enumerate() {
            match *u {
                Operand::Temp(t) => {
                    if t.index() >= n || !defined[t.index()] {
                        diags.push(Diagnostic::UseBeforeDef { op: id, temp: t });
                    }
                }
                Operand::Const(c) => {
                    if c & !mask != 0 {
                        diags.push(Diagnostic::ConstTooWide { op: id, value: c });
                    }
                    let data_pos = match op.opcode {
                        Opcode::Store => pos == 1,
                        Opcode::Load => false,
                        _ => pos == 0,
                    };
                    if data_pos {
                        diags.push(Diagnostic::ConstFirstOperand { op: id });
                    }
                }
            }
        }
        if op.opcode == Opcode::Load && resolve_load(&p.body, i).is_none() {
            diags.push(Diagnostic::UnresolvedLoad { op: id });
        }
        match (op.opcode, op.def) {
            (Opcode::Store, Some(_)) => diags.push(Diagnostic::StoreHasDef { op: id }),
            (Opcode::Store, None) => {}
            (_, None) => diags.push(Diagnostic::MissingDef { op: id }),
            (_, Some(t)) => define(&mut defined, t, Some(id), &mut diags),
        }
    }
    for t in &p.outputs {
        if t.index() >= n || !defined[t.index()] {
            diags.push(Diagnostic::UndefinedOutput { temp: *t });
        }
    }
    diags
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut toks = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        let sep = ch.is_whitespace() || ch == ',';
        match (sep, start) {
            (true, Some(s)) => {
                toks.push(Tok { text: &line[s..i], col: s + 1 });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        toks.push(Tok { text: &line[s..], col: s + 1 });
    }
    toks
}

fn parse_literal(s: &str) -> Option<u64> {
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()
    } else if s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty() {
        s.parse().ok()
    } else {
        None
    }
}

fn is_temp_name(s: &str) -> bool {
    s.len() > 1 && s.starts_with('t') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

fn is_ident(s: &str) -> bool {
    let mut b = s.bytes();
    matches!(b.next(), Some(c) if c.is_ascii_alphabetic() || c == b'_')
        && b.all(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'-')
}

struct Parser {
    names: Vec<String>,
    by_name: BTreeMap<String, Temp>,
}

impl Parser {
    fn define(&mut self, tok: &Tok<'_>, line: usize) -> Result<Temp, ParseError> {
        if !is_temp_name(tok.text) {
            return Err(ParseError::Syntax {
                line,
                col: tok.col,
                msg: format!("expected a temp name, found `{}`", tok.text),
            });
        }
        if self.by_name.contains_key(tok.text) {
            return Err(ParseError::DuplicateDefinition {
                line,
                col: tok.col,
                name: tok.text.into(),
            });
        }
        let t = Temp(self.names.len() as u32);
        self.names.push(tok.text.into());
        self.by_name.insert(tok.text.into(), t);
        Ok(t)
    }

    fn lookup(&self, tok: &Tok<'_>, line: usize) -> Result<Temp, ParseError> {
        if !is_temp_name(tok.text) {
            return Err(ParseError::Syntax {
                line,
                col: tok.col,
                msg: format!("expected a temp name, found `{}`", tok.text),
            });
        }
        self.by_name
            .get(tok.text)
            .copied()
            .ok_or_else(|| ParseError::UseBeforeDef { line, col: tok.col, name: tok.text.into() })
    }

    fn operand(&self, tok: &Tok<'_>, line: usize) -> Result<Operand, ParseError> {
        if let Some(v) = parse_literal(tok.text) {
            return Ok(Operand::Const(v));
        }
        self.lookup(tok, line).map(Operand::Temp)
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser { names: Vec::new(), by_name: BTreeMap::new() };
    let mut header: Option<(String, u32)> = None;
    let mut inputs = Vec::new();
    let mut body: Vec<IrOperation> = Vec::new();
    let mut outputs: Option<Vec<Temp>> = None;
    let mut last_line = 0;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        last_line = line;
        let toks = tokenize(raw);
        let Some(first) = toks.first() else { continue };
        let syntax = |col: usize, msg: String| ParseError::Syntax { line, col, msg };
        if header.is_none() && first.text != "func" {
            return Err(syntax(first.col, "program must start with `func <name> width <w>`".into()));
        }
        if outputs.is_some() {
            return Err(syntax(first.col, "statement after `out`".into()));
        }
        match first.text {
            "func" => {
                if header.is_some() {
                    return Err(syntax(first.col, "duplicate `func` header".into()));
                }
                let [_, name, kw, w] = toks.as_slice() else {
                    return Err(syntax(first.col, "expected `func <name> width <w>`".into()));
                };
                if !is_ident(name.text) {
                    return Err(syntax(name.col, format!("bad function name `{}`", name.text)));
                }
                if kw.text != "width" {
                    return Err(syntax(kw.col, format!("expected `width`, found `{}`", kw.text)));
                }
                let width = match parse_literal(w.text) {
                    Some(v) if WIDTHS.contains(&(v as u32)) && v <= 32 => v as u32,
                    _ => return Err(syntax(w.col, format!("width must be 4, 8, 16 or 32, found `{}`", w.text))),
                };
                header = Some((name.text.into(), width));
            }
            "in" => {
                if !body.is_empty() {
                    return Err(syntax(first.col, "`in` after body statements".into()));
                }
                if toks.len() < 2 {
                    return Err(syntax(first.col, "`in` needs at least one input".into()));
                }
                for tok in &toks[1..] {
                    let Some((name, class)) = tok.text.split_once(':') else {
                        return Err(syntax(tok.col, format!("expected `<temp>:<class>`, found `{}`", tok.text)));
                    };
                    let Some(class) = SecurityClass::parse(class) else {
                        return Err(syntax(
                            tok.col + name.len() + 1,
                            format!("unknown security class `{class}`"),
                        ));
                    };
                    let t = p.define(&Tok { text: name, col: tok.col }, line)?;
                    inputs.push((t, class));
                }
            }
            "out" => {
                let mut outs = Vec::new();
                for tok in &toks[1..] {
                    outs.push(p.lookup(tok, line)?);
                }
                outputs = Some(outs);
            }
            "store" => {
                let [_, addr, data] = toks.as_slice() else {
                    return Err(syntax(first.col, "expected `store <addr>, <temp>`".into()));
                };
                let addr = p.operand(addr, line)?;
                let data = Operand::Temp(p.lookup(data, line)?);
                body.push(IrOperation {
                    id: body.len() + 1,
                    opcode: Opcode::Store,
                    uses: alloc::vec![addr, data],
                    def: None,
                    mandatory: true,
                });
            }
            _ => {
                if toks.len() < 3 || toks[1].text != "=" {
                    if Opcode::from_mnemonic(first.text).is_none() && !is_temp_name(first.text) {
                        return Err(ParseError::UnknownOpcode {
                            line,
                            col: first.col,
                            name: first.text.into(),
                        });
                    }
                    return Err(syntax(first.col, "expected `<temp> = <opcode> <operands>`".into()));
                }
                let optok = &toks[2];
                let opcode = match Opcode::from_mnemonic(optok.text) {
                    Some(o) if !o.is_pseudo() && o != Opcode::Store && o != Opcode::Copy => o,
                    _ => {
                        return Err(ParseError::UnknownOpcode {
                            line,
                            col: optok.col,
                            name: optok.text.into(),
                        })
                    }
                };
                let args = &toks[3..];
                let want = opcode.arity().unwrap_or(0);
                if args.len() != want {
                    return Err(syntax(
                        optok.col,
                        format!("`{opcode}` takes {want} operand(s), found {}", args.len()),
                    ));
                }
                let mut uses = Vec::new();
                for a in args {
                    uses.push(p.operand(a, line)?);
                }
                let def = p.define(&toks[0], line)?;
                body.push(IrOperation {
                    id: body.len() + 1,
                    opcode,
                    uses,
                    def: Some(def),
                    mandatory: true,
                });
            }
        }
    }
    let Some((name, width)) = header else {
        return Err(ParseError::Syntax { line: 1, col: 1, msg: "empty program".into() });
    };
    let outputs = outputs.ok_or_else(|| ParseError::Syntax {
        line: last_line.max(1),
        col: 1,
        msg: "missing `out` statement".into(),
    })?;
    let prog = Program { name, width, inputs, body, outputs, names: p.names };
    let diags = validate(&prog);
    if diags.is_empty() {
        Ok(prog)
    } else {
        Err(ParseError::Invalid(diags))
    }
}

fn render_operand(p: &Program, o: &Operand) -> String {
    match o {
        Operand::Temp(t) => p.name_of(*t).into(),
        Operand::Const(c) => format!("{c:#x}"),
    }
}

/// Canonical text of a program: `parse_program(&render_program(p)) == p`.
pub fn render_program(p: &Program) -> String {
    let mut s = format!("func {} width {}\n", p.name, p.width);
    s.push_str("in");
    for (t, c) in &p.inputs {
        s.push_str(&format!(" {}:{}", p.name_of(*t), c.as_str()));
    }
    s.push('\n');
    for op in &p.body {
        let args: Vec<String> = op.uses.iter().map(|o| render_operand(p, o)).collect();
        match op.def {
            Some(d) => s.push_str(&format!("{} = {} {}\n", p.name_of(d), op.opcode, args.join(", "))),
            None => s.push_str(&format!("{} {}\n", op.opcode, args.join(", "))),
        }
    }
    s.push_str("out");
    for t in &p.outputs {
        s.push(' ');
        s.push_str(p.name_of(*t));
    }
    s.push('\n');
    s
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_program(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const XOR: &str = "func xor width 4\nin t0:public t1:random t2:secret\nt6 = xor t1, t2\nt8 = xor t0, t6\nout t8\n";

    #[test]
    fn parses_running_example() {
        let p = parse_program(XOR).unwrap();
        assert_eq!(p.body.len(), 2);
        assert_eq!(p.inputs.len(), 3);
        assert_eq!(p.body[0].def, Some(Temp(3)));
        assert_eq!(p.body[1].uses, [Operand::Temp(Temp(0)), Operand::Temp(Temp(3))]);
        assert_eq!(p.outputs, [Temp(4)]);
        assert_eq!(p.name_of(Temp(4)), "t8");
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn identity_program() {
        let p = parse_program("func id width 8\nin t0:public\nout t0\n").unwrap();
        assert!(p.body.is_empty());
    }

    #[test]
    fn use_before_def() {
        let e = parse_program("func f width 4\nin t0:public\nt1 = xor t0, t9\nout t1").unwrap_err();
        assert_eq!(e, ParseError::UseBeforeDef { line: 3, col: 14, name: "t9".into() });
    }

    #[test]
    fn duplicate_and_unknown() {
        let e = parse_program("func f width 4\nin t0:public\nt0 = not t0\nout t0").unwrap_err();
        assert!(matches!(e, ParseError::DuplicateDefinition { line: 3, col: 1, .. }));
        let e = parse_program("func f width 4\nin t0:public\nt1 = rol t0, 1\nout t1").unwrap_err();
        assert!(matches!(e, ParseError::UnknownOpcode { line: 3, col: 6, .. }));
        let e = parse_program("func f width 5\nin t0:public\nout t0").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 1, col: 14, .. }));
    }

    #[test]
    fn validate_reports_invariants() {
        let mut p = parse_program(XOR).unwrap();
        p.body[1].def = Some(Temp(3));
        let d = validate(&p);
        assert_eq!(d[0], Diagnostic::DuplicateDefinition { op: Some(2), temp: Temp(3) });
        assert_eq!(d[0].to_string(), "duplicate-definition t3 (op 2)");

        let mut p = parse_program("func f width 4\nin t0:public\nstore 0, t0\nt1 = load 0\nout t1").unwrap();
        p.body[0].def = Some(Temp(0));
        let codes: Vec<_> = validate(&p).iter().map(Diagnostic::code).collect();
        assert!(codes.contains(&"store-has-def"));
    }

    #[test]
    fn unresolved_load() {
        let e = parse_program("func f width 4\nin t0:public t1:public\nstore t1, t0\nt2 = load 3\nout t2");
        assert!(matches!(e, Err(ParseError::Invalid(ref d)) if d[0].code() == "unresolved-load"));
        let p = parse_program("func f width 4\nin t0:public\nstore 3, t0\nstore 4, t0\nt2 = load 3\nout t2").unwrap();
        assert_eq!(p.load_sources()[&2], 0);
    }

    #[test]
    fn round_trip_and_eval() {
        let src = "func k width 8\nin t0:secret t1:random\nt2 = gf_mul t0, t1\nt3 = and t2, 0xf\nstore 0x10, t3\nt4 = load 0x10\nt5 = not t4\nout t5 t2\n";
        let p = parse_program(src).unwrap();
        assert_eq!(render_program(&p), src);
        assert_eq!(parse_program(&render_program(&p)).unwrap(), p);
        let v = p.eval(&[0x57, 0x83]);
        assert_eq!(v[2], 0xC1);
        assert_eq!(v[5], !0x01u64 & 0xFF);
    }
}
