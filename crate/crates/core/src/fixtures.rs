//! Small masked kernels used by tests, examples and the CLI.

use alloc::string::String;
use alloc::vec::Vec;

use crate::ir::{parse_program, Program};
use crate::target::{load_target, preset, TargetDesc};

#[derive(Clone, Copy, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub source: &'static str,
    /// Preset name, or a full target description.
    pub target: &'static str,
    /// Copies per value in the expanded function.
    pub copies: usize,
    /// Whether the secure model is expected to have solutions.
    pub feasible: bool,
}

impl Fixture {
    pub fn program(&self) -> Program {
        parse_program(self.source).expect("fixture program parses")
    }

    pub fn target(&self) -> TargetDesc {
        if self.target.contains('\n') {
            load_target(self.target).expect("fixture target parses")
        } else {
            preset(self.target).expect("fixture preset exists")
        }
    }
}

pub const XOR_SRC: &str = "\
func xor width 4
in t0:public t1:random t2:secret
t6 = xor t1, t2
t8 = xor t0, t6
out t8
";

/// Two registers, one argument register; further inputs arrive on the stack.
pub const NARROW_TARGET: &str = "\
target = narrow
registers = R0 R1
slots = 2
args = R0
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

pub const FIXTURES: &[Fixture] = &[
    Fixture { name: "xor", source: XOR_SRC, target: "thumb-like", copies: 1, feasible: true },
    Fixture { name: "xor-mips", source: XOR_SRC, target: "mips-like", copies: 1, feasible: true },
    Fixture {
        name: "goubin",
        source: "\
func goubin width 4
in t0:secret t1:random t2:random t9:public
t3 = xor t0, t1
t4 = xor t3, t2
t5 = xor t4, t1
t6 = and t2, t9
out t5 t6
",
        target: "mips-like",
        copies: 0,
        feasible: true,
    },
    Fixture {
        name: "secmult",
        source: "\
func secmult width 4
in t0:secret t1:random t2:public t3:random
t4 = xor t0, t1
t5 = gf_mul t4, t2
t6 = gf_mul t1, t2
t7 = xor t5, t3
t8 = xor t6, t3
out t7 t8
",
        target: "thumb-like",
        copies: 0,
        feasible: true,
    },
    Fixture {
        name: "masked-and",
        source: "\
func masked_and width 4
in t0:secret t1:random t2:random
t3 = xor t0, t1
t4 = and t3, t2
out t4
",
        target: "tiny",
        copies: 1,
        feasible: true,
    },
    Fixture {
        name: "stack-arg",
        source: "\
func stack_arg width 4
in t0:secret t1:random
t2 = xor t0, t1
out t2
",
        target: NARROW_TARGET,
        copies: 1,
        feasible: true,
    },
    Fixture {
        name: "spill-pressure",
        source: "\
func spill_pressure width 4
in t0:secret t1:random t2:random
t3 = xor t0, t1
t4 = xor t1, t2
t5 = xor t3, t4
out t5
",
        target: NARROW_TARGET,
        copies: 2,
        feasible: true,
    },
    Fixture {
        name: "memxor",
        source: "\
func memxor width 4
in t0:random t1:secret t2:random
t3 = xor t1, t0
store 0x1, t3
t4 = load 0x1
t5 = xor t4, t2
out t5
",
        target: "mips-like",
        copies: 1,
        feasible: true,
    },
    Fixture {
        name: "unmasked-and",
        source: "\
func unmasked_and width 4
in t0:secret t1:public
t2 = and t0, t1
out t2
",
        target: "thumb-like",
        copies: 0,
        feasible: false,
    },
];

pub fn by_name(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

pub fn names() -> Vec<String> {
    FIXTURES.iter().map(|f| String::from(f.name)).collect()
}
