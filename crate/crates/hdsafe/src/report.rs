//! JSON shapes written by the CLI. Field names are stable.

use std::collections::BTreeMap;

use hdsafe_core::ir::Temp;
use hdsafe_core::leakage::{LeakKind, Rational, Verdict};
use hdsafe_core::model::{ExtendedModel, Function};
use hdsafe_core::secsets::SecuritySets;
use hdsafe_core::solver::SolveStats;
use hdsafe_core::typeinf::TypeEnv;
use serde::Serialize;

#[derive(Serialize, Debug)]
pub struct TempInfo {
    pub source: String,
    pub class: &'static str,
    pub expr: String,
    pub supp: Vec<String>,
    pub unq: Vec<String>,
    pub dom: Vec<String>,
}

#[derive(Serialize, Debug, Default)]
pub struct SetsJson {
    pub rpairs: Vec<[String; 2]>,
    pub spairs: BTreeMap<String, Vec<String>>,
    pub entry: BTreeMap<String, Vec<String>>,
    pub mmpairs: Vec<[String; 2]>,
    pub mspairs: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Debug)]
pub struct Analysis {
    pub program: String,
    pub width: u32,
    pub copies: usize,
    pub temps: BTreeMap<String, TempInfo>,
    pub sets: SetsJson,
}

#[derive(Serialize, Debug)]
pub struct SolverJson {
    pub status: &'static str,
    pub nodes: u64,
    pub propagations: u64,
    pub solutions: u64,
    pub seconds: f64,
}

#[derive(Serialize, Debug)]
pub struct PositionJson {
    pub instruction: usize,
    pub kind: &'static str,
    pub delta_mean: String,
    pub delta_variance: String,
}

#[derive(Serialize, Debug)]
pub struct VerdictJson {
    pub secrets: [Vec<u64>; 2],
    pub public: Vec<u64>,
    pub sampling: String,
    pub verdict: &'static str,
    pub delta_mean: String,
    pub delta_variance: String,
    pub positions: Vec<PositionJson>,
}

#[derive(Serialize, Debug)]
pub struct Report {
    pub program: String,
    pub target: String,
    pub mode: &'static str,
    pub implied: bool,
    pub objective: i32,
    pub secure: bool,
    pub asm: String,
    pub types: BTreeMap<String, &'static str>,
    pub sets: SetsJson,
    pub solver: SolverJson,
    pub verdicts: Vec<VerdictJson>,
}

/// Model temps are numbered across copies; `t{n}` follows that numbering.
pub fn temp_name(t: usize) -> String {
    format!("t{t}")
}

fn op_name(o: usize) -> String {
    format!("o{}", o + 1)
}

pub fn sets_json(sets: &SecuritySets) -> SetsJson {
    let names = |s: &std::collections::BTreeSet<usize>, f: fn(usize) -> String| s.iter().map(|&x| f(x)).collect();
    SetsJson {
        rpairs: sets.rpairs.iter().map(|&(a, b)| [temp_name(a), temp_name(b)]).collect(),
        spairs: sets.spairs.iter().map(|(k, v)| (temp_name(*k), names(v, temp_name))).collect(),
        entry: sets.entry.iter().map(|(k, v)| (temp_name(*k), names(v, temp_name))).collect(),
        mmpairs: sets.mmpairs.iter().map(|&(a, b)| [op_name(a), op_name(b)]).collect(),
        mspairs: sets.mspairs.iter().map(|(k, v)| (op_name(*k), names(v, op_name))).collect(),
    }
}

pub fn types_json(env: &TypeEnv, f: &Function) -> BTreeMap<String, &'static str> {
    f.temps.iter().map(|t| (temp_name(t.id), env.class(t.value).as_str())).collect()
}

pub fn analysis(env: &TypeEnv, f: &Function, copies: usize, sets: &SecuritySets) -> Analysis {
    let p = &f.program;
    let temps = f
        .temps
        .iter()
        .map(|t| {
            let v: Temp = t.value;
            let info = TempInfo {
                source: p.name_of(v).to_string(),
                class: env.class(v).as_str(),
                expr: env.render(v),
                supp: env.var_names(env.supp(v)),
                unq: env.var_names(env.unq(v)),
                dom: env.var_names(env.dom(v)),
            };
            (temp_name(t.id), info)
        })
        .collect();
    Analysis { program: p.name.clone(), width: p.width, copies, temps, sets: sets_json(sets) }
}

pub fn rational(r: &Rational) -> String {
    r.to_string()
}

pub fn verdict_json(v: &Verdict, secrets: [Vec<u64>; 2], public: Vec<u64>, sampling: String) -> VerdictJson {
    let zero = Rational::from_integer(0);
    let (name, dm, dv, positions) = match v {
        Verdict::Equivalent => ("equivalent", zero, zero, Vec::new()),
        Verdict::Leaky { positions, delta_mean, delta_var } => ("leaky", *delta_mean, *delta_var, positions.clone()),
    };
    VerdictJson {
        secrets,
        public,
        sampling,
        verdict: name,
        delta_mean: rational(&dm),
        delta_variance: rational(&dv),
        positions: positions
            .iter()
            .map(|p| PositionJson {
                instruction: p.position,
                kind: match p.kind {
                    LeakKind::Rot => "register",
                    LeakKind::Mre => "bus",
                },
                delta_mean: rational(&p.delta_mean),
                delta_variance: rational(&p.delta_var),
            })
            .collect(),
    }
}

pub fn solver_json(status: &'static str, stats: &SolveStats, seconds: f64) -> SolverJson {
    SolverJson {
        status,
        nodes: stats.nodes,
        propagations: stats.propagations,
        solutions: stats.solutions,
        seconds,
    }
}

/// Text dump of the expanded function and its tagged constraints.
pub fn model_text(m: &ExtendedModel) -> String {
    let mut s = m.func.to_string();
    s.push('\n');
    for c in &m.constraints {
        s.push_str(&format!("{:?} {:?}\n", c.tag, c.constraint));
    }
    s
}
