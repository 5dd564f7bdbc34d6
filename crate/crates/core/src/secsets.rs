//! The four security sets parameterizing the secure model.
//!
//! Register sets range over model temps, memory sets over model operations.
//! Classification is done on program values (a temp and its copies share a
//! value) and expanded to every copy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::ir::{Opcode, SecurityClass, Temp};
use crate::model::{Function, OpKind};
use crate::typeinf::TypeEnv;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SecuritySets {
    /// Unordered temp pairs, stored with the smaller id first.
    pub rpairs: BTreeSet<(usize, usize)>,
    /// Secret temp to the random temps that may neighbour it in a register.
    pub spairs: BTreeMap<usize, BTreeSet<usize>>,
    /// Secret input temp to the temps allowed to overwrite its register.
    pub entry: BTreeMap<usize, BTreeSet<usize>>,
    /// Unordered memory-operation pairs.
    pub mmpairs: BTreeSet<(usize, usize)>,
    pub mspairs: BTreeMap<usize, BTreeSet<usize>>,
    /// Memory operation to the temp whose value it moves over the bus.
    pub tm: BTreeMap<usize, usize>,
}

impl SecuritySets {
    pub fn is_empty(&self) -> bool {
        self.rpairs.is_empty()
            && self.spairs.is_empty()
            && self.entry.is_empty()
            && self.mmpairs.is_empty()
            && self.mspairs.is_empty()
    }

    pub fn in_rpairs(&self, a: usize, b: usize) -> bool {
        self.rpairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn in_mmpairs(&self, a: usize, b: usize) -> bool {
        self.mmpairs.contains(&(a.min(b), a.max(b)))
    }
}

pub fn xor_class(env: &mut TypeEnv, t1: Temp, t2: Temp) -> SecurityClass {
    env.xor_class(t1, t2)
}

/// Whether two non-secret values must not be adjacent in a register or on
/// the bus: their xor is secret, or they share a dominating mask while their
/// joint support touches a secret input.
pub fn sensitive(env: &mut TypeEnv, a: Temp, b: Temp) -> bool {
    if env.xor_class(a, b) == SecurityClass::Secret {
        return true;
    }
    let shared_mask = env.dom(a) & env.dom(b) != 0;
    let touches_secret = (env.supp(a) | env.supp(b)) & env.pool.secret_vars() != 0;
    shared_mask && touches_secret
}

fn is_rp(c: SecurityClass) -> bool {
    matches!(c, SecurityClass::Random | SecurityClass::Public)
}

struct Cache<'a> {
    env: &'a mut TypeEnv,
    sens: BTreeMap<(Temp, Temp), bool>,
    hides: BTreeMap<(Temp, Temp), bool>,
}

impl Cache<'_> {
    fn sensitive(&mut self, a: Temp, b: Temp) -> bool {
        let key = (a.min(b), a.max(b));
        if let Some(&s) = self.sens.get(&key) {
            return s;
        }
        let s = sensitive(self.env, key.0, key.1);
        self.sens.insert(key, s);
        s
    }

    /// `h` is random and masks the secret `k` when adjacent to it.
    fn hides(&mut self, h: Temp, k: Temp) -> bool {
        if let Some(&s) = self.hides.get(&(h, k)) {
            return s;
        }
        let s = self.env.class(h) == SecurityClass::Random
            && self.env.xor_class(h, k) == SecurityClass::Random;
        self.hides.insert((h, k), s);
        s
    }
}

fn allocatable(f: &Function) -> impl Iterator<Item = usize> + '_ {
    f.temps.iter().filter(|t| !t.alias).map(|t| t.id)
}

fn op_defined(f: &Function) -> Vec<usize> {
    f.temps
        .iter()
        .filter(|t| !t.alias && f.ops[t.def_op].kind != OpKind::In)
        .map(|t| t.id)
        .collect()
}

pub fn compute_rpairs(env: &mut TypeEnv, f: &Function) -> BTreeSet<(usize, usize)> {
    let mut c = Cache { env, sens: BTreeMap::new(), hides: BTreeMap::new() };
    rpairs_with(&mut c, f)
}

fn rpairs_with(c: &mut Cache<'_>, f: &Function) -> BTreeSet<(usize, usize)> {
    let temps: Vec<usize> = allocatable(f)
        .filter(|&t| is_rp(c.env.class(f.temps[t].value)))
        .collect();
    let mut out = BTreeSet::new();
    for (i, &a) in temps.iter().enumerate() {
        for &b in &temps[i + 1..] {
            if c.sensitive(f.temps[a].value, f.temps[b].value) {
                out.insert((a, b));
            }
        }
    }
    out
}

fn hider_map(c: &mut Cache<'_>, f: &Function, keys: &[usize]) -> BTreeMap<usize, BTreeSet<usize>> {
    let cands = op_defined(f);
    let mut out = BTreeMap::new();
    for &k in keys {
        let kv = f.temps[k].value;
        let hs = cands.iter().copied().filter(|&h| c.hides(f.temps[h].value, kv)).collect();
        out.insert(k, hs);
    }
    out
}

pub fn compute_spairs(env: &mut TypeEnv, f: &Function) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut c = Cache { env, sens: BTreeMap::new(), hides: BTreeMap::new() };
    let keys = secret_keys(&c, f, false);
    hider_map(&mut c, f, &keys)
}

fn secret_keys(c: &Cache<'_>, f: &Function, inputs: bool) -> Vec<usize> {
    allocatable(f)
        .filter(|&t| (f.ops[f.temps[t].def_op].kind == OpKind::In) == inputs)
        .filter(|&t| c.env.class(f.temps[t].value) == SecurityClass::Secret)
        .collect()
}

/// Operations that may touch memory: source loads and stores, and every copy
/// (a copy becomes a spill or reload depending on its instruction).
pub fn memops(f: &Function) -> Vec<usize> {
    f.ops
        .iter()
        .filter(|o| o.opcode.is_memory() || o.opcode == Opcode::Copy)
        .map(|o| o.id)
        .collect()
}

/// The temp whose value a memory operation puts on the bus.
pub fn tm(f: &Function, op: usize) -> usize {
    let o = &f.ops[op];
    match o.opcode {
        Opcode::Store => f.store_data_temp(op),
        _ => o.defs[0],
    }
}

pub fn compute_mmpairs(env: &mut TypeEnv, f: &Function, memops: &[usize]) -> BTreeSet<(usize, usize)> {
    let mut c = Cache { env, sens: BTreeMap::new(), hides: BTreeMap::new() };
    mmpairs_with(&mut c, f, memops)
}

fn mmpairs_with(c: &mut Cache<'_>, f: &Function, memops: &[usize]) -> BTreeSet<(usize, usize)> {
    let ops: Vec<(usize, Temp)> = memops
        .iter()
        .map(|&o| (o, f.temps[tm(f, o)].value))
        .filter(|(_, v)| is_rp(c.env.class(*v)))
        .collect();
    let mut out = BTreeSet::new();
    for (i, &(a, va)) in ops.iter().enumerate() {
        for &(b, vb) in &ops[i + 1..] {
            if c.sensitive(va, vb) {
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

pub fn compute_mspairs(env: &mut TypeEnv, f: &Function, memops: &[usize]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut c = Cache { env, sens: BTreeMap::new(), hides: BTreeMap::new() };
    mspairs_with(&mut c, f, memops)
}

fn mspairs_with(c: &mut Cache<'_>, f: &Function, memops: &[usize]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out = BTreeMap::new();
    for &o in memops {
        let v = f.temps[tm(f, o)].value;
        if c.env.class(v) != SecurityClass::Secret {
            continue;
        }
        let hs = memops
            .iter()
            .copied()
            .filter(|&h| h != o && c.hides(f.temps[tm(f, h)].value, v))
            .collect();
        out.insert(o, hs);
    }
    out
}

/// All sets for a function expanded from the program `env` was inferred on.
pub fn compute(env: &TypeEnv, f: &Function) -> SecuritySets {
    let mut env = env.clone();
    let mut c = Cache { env: &mut env, sens: BTreeMap::new(), hides: BTreeMap::new() };
    let rpairs = rpairs_with(&mut c, f);
    let keys = secret_keys(&c, f, false);
    let spairs = hider_map(&mut c, f, &keys);
    let entry_keys = secret_keys(&c, f, true);
    let entry = hider_map(&mut c, f, &entry_keys);
    let mops = memops(f);
    let mmpairs = mmpairs_with(&mut c, f, &mops);
    let mspairs = mspairs_with(&mut c, f, &mops);
    let tm = mops.iter().map(|&o| (o, tm(f, o))).collect();
    SecuritySets { rpairs, spairs, entry, mmpairs, mspairs, tm }
}
