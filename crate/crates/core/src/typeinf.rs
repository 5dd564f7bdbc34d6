//! Security type inference over forward-substituted expressions.
//!
//! Every temp is mapped to an expression over the program inputs. The
//! auxiliary functions `xor_only`, `supp`, `unq` and `dom` are computed once
//! per hash-consed node; `classify` applies the RAND and PUB rules and then
//! the NEST/DISTR rewrites with a bounded rewrite depth.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ir::{Opcode, Operand, Program, SecurityClass, Temp};

/// Set of program inputs, bit `i` standing for `program.inputs[i]`.
pub type VarSet = u64;

/// Maximum number of program inputs representable in a [`VarSet`].
pub const MAX_INPUTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExprId(u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Xor,
    GfMul,
    And,
    Or,
    Add,
}

impl BinOp {
    pub fn from_opcode(op: Opcode) -> Option<Self> {
        Some(match op {
            Opcode::Xor => BinOp::Xor,
            Opcode::GfMul => BinOp::GfMul,
            Opcode::And => BinOp::And,
            Opcode::Or => BinOp::Or,
            Opcode::Add => BinOp::Add,
            _ => return None,
        })
    }

    /// Neither xor nor field multiplication.
    pub fn is_other(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Add)
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Xor => "^",
            BinOp::GfMul => "*",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Add => "+",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnOp {
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    /// Position in the program's input list.
    Input(u32),
    Const(u64),
    Unary(UnOp, ExprId),
    Binary(BinOp, ExprId, ExprId),
}

#[derive(Clone, Copy, Debug)]
struct Facts {
    xor_only: bool,
    supp: VarSet,
    unq: VarSet,
    dom: VarSet,
}

const REWRITE_DEPTH: u8 = 3;

/// Hash-consed expression arena with memoized analysis facts.
#[derive(Clone, Debug)]
pub struct ExprPool {
    classes: Vec<SecurityClass>,
    sec: VarSet,
    rand: VarSet,
    nodes: Vec<Node>,
    facts: Vec<Facts>,
    index: BTreeMap<Node, ExprId>,
    memo: BTreeMap<(ExprId, u8), SecurityClass>,
}

impl ExprPool {
    /// `classes[i]` is the class of input variable `i`.
    pub fn new(classes: Vec<SecurityClass>) -> Self {
        assert!(classes.len() <= MAX_INPUTS, "at most {MAX_INPUTS} inputs");
        let mask_of = |c: SecurityClass| {
            classes
                .iter()
                .enumerate()
                .filter(|(_, k)| **k == c)
                .fold(0, |m, (i, _)| m | 1u64 << i)
        };
        let sec = mask_of(SecurityClass::Secret);
        let rand = mask_of(SecurityClass::Random);
        ExprPool {
            classes,
            sec,
            rand,
            nodes: Vec::new(),
            facts: Vec::new(),
            index: BTreeMap::new(),
            memo: BTreeMap::new(),
        }
    }

    pub fn secret_vars(&self) -> VarSet {
        self.sec
    }

    pub fn random_vars(&self) -> VarSet {
        self.rand
    }

    pub fn var_class(&self, var: u32) -> SecurityClass {
        self.classes[var as usize]
    }

    pub fn node(&self, e: ExprId) -> Node {
        self.nodes[e.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn intern(&mut self, n: Node) -> ExprId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let facts = self.compute_facts(n);
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push(n);
        self.facts.push(facts);
        self.index.insert(n, id);
        id
    }

    pub fn input(&mut self, var: u32) -> ExprId {
        assert!((var as usize) < self.classes.len());
        self.intern(Node::Input(var))
    }

    pub fn constant(&mut self, c: u64) -> ExprId {
        self.intern(Node::Const(c))
    }

    pub fn unary(&mut self, op: UnOp, e: ExprId) -> ExprId {
        self.intern(Node::Unary(op, e))
    }

    pub fn binary(&mut self, op: BinOp, a: ExprId, b: ExprId) -> ExprId {
        self.intern(Node::Binary(op, a, b))
    }

    /// For `a ^ b` where one side is `x ^ y` and the other equals `x` (or
    /// `y`), the operand left after cancellation.
    fn nested_cancel(&self, a: ExprId, b: ExprId) -> Option<ExprId> {
        let inner = |outer: ExprId, other: ExprId| match self.node(outer) {
            Node::Binary(BinOp::Xor, x, y) if x == other => Some(y),
            Node::Binary(BinOp::Xor, x, y) if y == other => Some(x),
            _ => None,
        };
        inner(b, a).or_else(|| inner(a, b))
    }

    fn compute_facts(&self, n: Node) -> Facts {
        match n {
            Node::Input(v) => {
                let bit = 1u64 << v;
                let unq = bit & self.rand;
                Facts { xor_only: true, supp: bit, unq, dom: unq }
            }
            Node::Const(_) => Facts { xor_only: true, supp: 0, unq: 0, dom: 0 },
            Node::Unary(_, e) => self.facts[e.index()],
            Node::Binary(op, a, b) => {
                let fa = self.facts[a.index()];
                let fb = self.facts[b.index()];
                let xor_only = op == BinOp::Xor && fa.xor_only && fb.xor_only;
                let supp = if xor_only {
                    fa.supp ^ fb.supp
                } else if let Some(c) = (op == BinOp::Xor).then(|| self.nested_cancel(a, b)).flatten() {
                    self.facts[c.index()].supp
                } else {
                    fa.supp | fb.supp
                };
                let unq = (fa.unq | fb.unq) & !(fa.supp & fb.supp);
                let dom = if op == BinOp::Xor { (fa.dom | fb.dom) & unq } else { 0 };
                Facts { xor_only, supp, unq, dom }
            }
        }
    }

    pub fn xor_only(&self, e: ExprId) -> bool {
        self.facts[e.index()].xor_only
    }

    pub fn supp(&self, e: ExprId) -> VarSet {
        self.facts[e.index()].supp
    }

    pub fn unq(&self, e: ExprId) -> VarSet {
        self.facts[e.index()].unq
    }

    pub fn dom(&self, e: ExprId) -> VarSet {
        self.facts[e.index()].dom
    }

    pub fn classify(&mut self, e: ExprId) -> SecurityClass {
        self.classify_at(e, 0)
    }

    fn classify_at(&mut self, e: ExprId, depth: u8) -> SecurityClass {
        if let Some(&c) = self.memo.get(&(e, depth)) {
            return c;
        }
        let c = self.derive(e, depth);
        self.memo.insert((e, depth), c);
        c
    }

    fn derive(&mut self, e: ExprId, depth: u8) -> SecurityClass {
        use SecurityClass::*;
        let f = self.facts[e.index()];
        // RAND
        if f.dom != 0 {
            return Random;
        }
        // PUB1
        if f.supp & self.sec == 0 {
            return Public;
        }
        let Node::Binary(op, a, b) = self.node(e) else {
            return Secret;
        };
        let ta = self.classify_at(a, 0);
        let tb = self.classify_at(b, 0);
        if self.pub_rules(op, [a, b], [ta, tb]) {
            return Public;
        }
        if depth < REWRITE_DEPTH {
            for r in self.rewrites(op, a, b) {
                let t = self.classify_at(r, depth + 1);
                if t != Secret {
                    return t;
                }
            }
        }
        Secret
    }

    fn pub_rules(&mut self, op: BinOp, e: [ExprId; 2], t: [SecurityClass; 2]) -> bool {
        use SecurityClass::*;
        let supp = [self.supp(e[0]), self.supp(e[1])];
        let dom = [self.dom(e[0]), self.dom(e[1])];
        // PUB2
        if t == [Public, Public] && supp[0] & supp[1] == 0 {
            return true;
        }
        // PUB3
        if op.is_other()
            && t == [Random, Random]
            && (dom[0] & !supp[1] != 0 || dom[1] & !supp[0] != 0)
        {
            return true;
        }
        // PUB4
        if op == BinOp::GfMul && t == [Random, Random] && dom[0] != dom[1] {
            return true;
        }
        for (i, j) in [(0, 1), (1, 0)] {
            // PUB5
            if t[i] == Random
                && dom[i] & !supp[j] == 0
                && dom[i] == dom[j]
                && supp[i] == supp[j]
            {
                return true;
            }
            // PUB6
            if op == BinOp::GfMul && t[i] == Random && t[j] == Public && dom[i] & !supp[j] != 0 {
                return true;
            }
            // PUB7
            if op.is_other() && t[i] == Public && t[j] == Random && supp[i] & supp[j] == 0 {
                return true;
            }
        }
        if op == BinOp::Xor {
            // PUB8: (x * y) ^ x with both factors non-secret
            for (i, j) in [(0, 1), (1, 0)] {
                if let Node::Binary(BinOp::GfMul, x, y) = self.node(e[i]) {
                    let other = if x == e[j] {
                        Some(y)
                    } else if y == e[j] {
                        Some(x)
                    } else {
                        None
                    };
                    if let Some(other) = other {
                        if self.classify_at(e[j], 0) != Secret && self.classify_at(other, 0) != Secret {
                            return true;
                        }
                    }
                }
            }
            // PUB9
            if t == [Public, Public] && supp[0] & supp[1] & self.rand == 0 {
                return true;
            }
        }
        false
    }

    /// Equivalent expressions produced by NEST1-3 and DISTR0-3, in rule order.
    fn rewrites(&mut self, op: BinOp, a: ExprId, b: ExprId) -> Vec<ExprId> {
        let mut out = Vec::new();
        if op != BinOp::Xor {
            return out;
        }
        // NEST1: x ^ (x ^ z) = z
        if let Some(z) = self.nested_cancel(a, b) {
            out.push(z);
        }
        for (outer, x) in [(a, b), (b, a)] {
            match self.node(outer) {
                // NEST2: x ^ (x | z) = ~x & z
                Node::Binary(BinOp::Or, p, q) if p == x || q == x => {
                    let z = if p == x { q } else { p };
                    let nx = self.unary(UnOp::Not, x);
                    out.push(self.binary(BinOp::And, nx, z));
                }
                // NEST3: x ^ (x & z) = x & ~z
                Node::Binary(BinOp::And, p, q) if p == x || q == x => {
                    let z = if p == x { q } else { p };
                    let nz = self.unary(UnOp::Not, z);
                    out.push(self.binary(BinOp::And, x, nz));
                }
                _ => {}
            }
        }
        // DISTR0-3: (a0 * a1) ^ (b0 * b1) with a shared factor
        if let (Node::Binary(BinOp::GfMul, a0, a1), Node::Binary(BinOp::GfMul, b0, b1)) =
            (self.node(a), self.node(b))
        {
            let cases = [(a0, b0, a1, b1), (a0, b1, a1, b0), (a1, b0, a0, b1), (a1, b1, a0, b0)];
            for (s, s2, u, v) in cases {
                if s == s2 {
                    let sum = self.binary(BinOp::Xor, u, v);
                    out.push(self.binary(BinOp::GfMul, s, sum));
                }
            }
        }
        out
    }

    /// Infix rendering, with input `i` printed as `names[i]`.
    pub fn render(&self, e: ExprId, names: &[String]) -> String {
        match self.node(e) {
            Node::Input(v) => names.get(v as usize).cloned().unwrap_or_else(|| format!("in{v}")),
            Node::Const(c) => format!("{c:#x}"),
            Node::Unary(UnOp::Not, x) => format!("~{}", self.render_operand(x, names)),
            Node::Binary(op, x, y) => format!(
                "{} {} {}",
                self.render_operand(x, names),
                op.symbol(),
                self.render_operand(y, names)
            ),
        }
    }

    fn render_operand(&self, e: ExprId, names: &[String]) -> String {
        match self.node(e) {
            Node::Binary(..) => format!("({})", self.render(e, names)),
            _ => self.render(e, names),
        }
    }
}

/// Iterates the input positions in a [`VarSet`].
pub fn vars(set: VarSet) -> impl Iterator<Item = u32> {
    (0..64u32).filter(move |i| set >> i & 1 == 1)
}

/// Types and expressions for every temp of a program.
#[derive(Clone, Debug)]
pub struct TypeEnv {
    pub pool: ExprPool,
    pub exprs: Vec<ExprId>,
    pub classes: Vec<SecurityClass>,
    /// Source names of the inputs, indexed by input position.
    pub input_names: Vec<String>,
}

/// Forward substitution: the expression of every temp over input leaves.
/// Loads take the expression of the data their store wrote.
pub fn build_exprs(p: &Program) -> (ExprPool, Vec<ExprId>) {
    let mut pool = ExprPool::new(p.inputs.iter().map(|(_, c)| *c).collect());
    let mut exprs: Vec<Option<ExprId>> = alloc::vec![None; p.num_temps()];
    for (i, (t, _)) in p.inputs.iter().enumerate() {
        exprs[t.index()] = Some(pool.input(i as u32));
    }
    let sources = p.load_sources();
    for (i, op) in p.body.iter().enumerate() {
        let Some(d) = op.def else { continue };
        let arg = |pool: &mut ExprPool, o: Operand| match o {
            Operand::Temp(t) => exprs[t.index()].expect("validated program"),
            Operand::Const(c) => pool.constant(c),
        };
        let e = match op.opcode {
            Opcode::Load => {
                let st = &p.body[sources[&i]];
                arg(&mut pool, st.uses[1])
            }
            Opcode::Copy => arg(&mut pool, op.uses[0]),
            Opcode::Not => {
                let x = arg(&mut pool, op.uses[0]);
                pool.unary(UnOp::Not, x)
            }
            opc => {
                let bop = BinOp::from_opcode(opc).expect("binary opcode");
                let x = arg(&mut pool, op.uses[0]);
                let y = arg(&mut pool, op.uses[1]);
                pool.binary(bop, x, y)
            }
        };
        exprs[d.index()] = Some(e);
    }
    let exprs = exprs.into_iter().map(|e| e.expect("every temp defined")).collect();
    (pool, exprs)
}

pub fn infer_types(p: &Program) -> TypeEnv {
    let (mut pool, exprs) = build_exprs(p);
    let classes = exprs.iter().map(|&e| pool.classify(e)).collect();
    let input_names = p.inputs.iter().map(|(t, _)| String::from(p.name_of(*t))).collect();
    TypeEnv { pool, exprs, classes, input_names }
}

impl TypeEnv {
    pub fn class(&self, t: Temp) -> SecurityClass {
        self.classes[t.index()]
    }

    pub fn expr(&self, t: Temp) -> ExprId {
        self.exprs[t.index()]
    }

    pub fn supp(&self, t: Temp) -> VarSet {
        self.pool.supp(self.expr(t))
    }

    pub fn unq(&self, t: Temp) -> VarSet {
        self.pool.unq(self.expr(t))
    }

    pub fn dom(&self, t: Temp) -> VarSet {
        self.pool.dom(self.expr(t))
    }

    pub fn render(&self, t: Temp) -> String {
        self.pool.render(self.expr(t), &self.input_names)
    }

    pub fn var_names(&self, set: VarSet) -> Vec<String> {
        vars(set).map(|v| self.input_names[v as usize].clone()).collect()
    }

    /// Class of `t1 ^ t2`, operands ordered by expression id so the result is
    /// symmetric. Equal expressions cancel to zero.
    pub fn xor_class(&mut self, t1: Temp, t2: Temp) -> SecurityClass {
        let (a, b) = (self.expr(t1), self.expr(t2));
        if a == b {
            return SecurityClass::Public;
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let e = self.pool.binary(BinOp::Xor, a, b);
        self.pool.classify(e)
    }
}
