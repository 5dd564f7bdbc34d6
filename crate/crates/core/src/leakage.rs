//! Hamming-distance leakage simulation and leakage-equivalence checks.
//!
//! Every register write leaks the Hamming distance between the new and the
//! previous content of that register. Every memory access (loads, stores,
//! spills and reloads) leaks the distance between its data and the previous
//! word on the memory bus. A load leaks on the bus first, then in its
//! destination register.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{word_mask, SecurityClass};
use crate::model::lower::{Instr, Lowered, Src};

pub type Rational = Ratio<i128>;

pub fn hw(x: u64) -> u32 {
    x.count_ones()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Addr {
    Data(u64),
    /// Stack slot, numbered from 0.
    Stack(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub width: u32,
    pub regs: Vec<u64>,
    pub bus: u64,
    pub memory: BTreeMap<Addr, u64>,
}

impl MachineState {
    /// All registers and the bus hold `fill`; memory is empty.
    pub fn new(width: u32, registers: usize, fill: u64) -> MachineState {
        let fill = fill & word_mask(width);
        MachineState { width, regs: vec![fill; registers], bus: fill, memory: BTreeMap::new() }
    }

    /// Inputs placed at their entry locations; everything else is zero.
    pub fn entry(low: &Lowered, inputs: &[u64]) -> MachineState {
        let mut st = MachineState::new(low.width, low.registers, 0);
        for (&loc, &v) in low.inputs.iter().zip(inputs) {
            st.write_loc(low, loc, v & word_mask(low.width));
        }
        st
    }

    fn write_loc(&mut self, low: &Lowered, loc: usize, v: u64) {
        if loc < low.registers {
            self.regs[loc] = v;
        } else {
            self.memory.insert(Addr::Stack(loc - low.registers), v);
        }
    }

    pub fn read_loc(&self, registers: usize, loc: usize) -> Option<u64> {
        if loc < registers {
            Some(self.regs[loc])
        } else {
            self.memory.get(&Addr::Stack(loc - registers)).copied()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LeakKind {
    /// Register overwrite.
    Rot,
    /// Memory-bus transition.
    Mre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LeakEntry {
    /// Index of the instruction in the sequence.
    pub position: usize,
    pub kind: LeakKind,
    pub value: u32,
}

pub type LeakTrace = Vec<LeakEntry>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LeakError {
    #[error("instruction {position} reads uninitialized memory at {addr:?}")]
    Uninitialized { position: usize, addr: Addr },
    #[error("exhaustive enumeration of {bits} random bits exceeds the bound of {bound}")]
    TooLarge { bits: u32, bound: u32 },
    #[error("expected {expected} {what} values, got {got}")]
    Arity { what: &'static str, expected: usize, got: usize },
    #[error("monte carlo sampling needs at least two samples")]
    TooFewSamples,
}

/// Largest number of random input bits enumerated exhaustively.
pub const EXHAUSTIVE_BITS: u32 = 20;

pub fn simulate(
    instrs: &[Instr],
    registers: usize,
    mut st: MachineState,
) -> Result<(MachineState, LeakTrace), LeakError> {
    let mask = word_mask(st.width);
    let mut trace = Vec::new();
    for (pos, ins) in instrs.iter().enumerate() {
        let read = |st: &MachineState, s: Src| match s {
            Src::Reg(r) => st.regs[r],
            Src::Imm(c) => c & mask,
        };
        let mut bus = |st: &mut MachineState, v: u64| {
            trace.push(LeakEntry { position: pos, kind: LeakKind::Mre, value: hw(v ^ st.bus) });
            st.bus = v;
        };
        let load = |st: &MachineState, addr: Addr| {
            st.memory.get(&addr).copied().ok_or(LeakError::Uninitialized { position: pos, addr })
        };
        let written = match *ins {
            Instr::Alu { op, dst, ref srcs } => {
                let args: Vec<u64> = srcs.iter().map(|s| read(&st, *s)).collect();
                let v = op.apply(&args, st.width).expect("lowered operations have full arity");
                Some((dst, v))
            }
            Instr::Move { dst, src } => Some((dst, st.regs[src])),
            Instr::Spill { slot, src } => {
                let v = st.regs[src];
                bus(&mut st, v);
                st.memory.insert(Addr::Stack(slot - registers), v);
                None
            }
            Instr::Reload { dst, slot } => {
                let v = load(&st, Addr::Stack(slot - registers))?;
                bus(&mut st, v);
                Some((dst, v))
            }
            Instr::Load { dst, addr } => {
                let v = load(&st, Addr::Data(read(&st, addr)))?;
                bus(&mut st, v);
                Some((dst, v))
            }
            Instr::Store { addr, src } => {
                let a = read(&st, addr);
                let v = st.regs[src];
                bus(&mut st, v);
                st.memory.insert(Addr::Data(a), v);
                None
            }
        };
        if let Some((dst, v)) = written {
            trace.push(LeakEntry { position: pos, kind: LeakKind::Rot, value: hw(v ^ st.regs[dst]) });
            st.regs[dst] = v;
        }
    }
    Ok((st, trace))
}

/// Runs a lowered solution from its entry state.
pub fn run(low: &Lowered, inputs: &[u64]) -> Result<(MachineState, LeakTrace), LeakError> {
    let instrs: Vec<Instr> = low.instrs().cloned().collect();
    simulate(&instrs, low.registers, MachineState::entry(low, inputs))
}

/// Values read by `out` after running from the entry state.
pub fn outputs(low: &Lowered, st: &MachineState) -> Vec<u64> {
    low.outputs.iter().map(|&l| st.read_loc(low.registers, l).unwrap_or(0)).collect()
}

/// Raw moments of one leak position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Moments {
    pub n: u64,
    pub s1: u128,
    pub s2: u128,
    pub s3: u128,
    pub s4: u128,
}

impl Moments {
    fn add(&mut self, x: u32) {
        let x = x as u128;
        self.n += 1;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.s4 += x * x * x * x;
    }

    pub fn mean(&self) -> Rational {
        Ratio::new(self.s1 as i128, self.n as i128)
    }

    /// Population variance of the observed values.
    pub fn variance(&self) -> Rational {
        let m = self.mean();
        Ratio::new(self.s2 as i128, self.n as i128) - m * m
    }

    fn mean_f(&self) -> f64 {
        self.s1 as f64 / self.n as f64
    }

    fn var_f(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean_f();
        (self.s2 as f64 / n - m * m).max(0.0)
    }

    /// Variance of the centered square `(x - mean)^2`.
    fn var_of_square_f(&self) -> f64 {
        let n = self.n as f64;
        let (m1, m2, m3, m4) = (self.s1 as f64 / n, self.s2 as f64 / n, self.s3 as f64 / n, self.s4 as f64 / n);
        let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
        let v = self.var_f();
        (c4 - v * v).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakStats {
    pub kinds: Vec<(usize, LeakKind)>,
    pub moments: Vec<Moments>,
    pub exhaustive: bool,
}

impl LeakStats {
    pub fn means(&self) -> Vec<Rational> {
        self.moments.iter().map(Moments::mean).collect()
    }

    pub fn variances(&self) -> Vec<Rational> {
        self.moments.iter().map(Moments::variance).collect()
    }

    pub fn sum_mean(&self) -> Rational {
        self.means().into_iter().fold(Ratio::from_integer(0), |a, b| a + b)
    }

    pub fn sum_variance(&self) -> Rational {
        self.variances().into_iter().fold(Ratio::from_integer(0), |a, b| a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Exhaustive,
    MonteCarlo { samples: u64, seed: u64 },
}

fn random_positions(low: &Lowered) -> Vec<usize> {
    (0..low.classes.len()).filter(|&i| low.classes[i] == SecurityClass::Random).collect()
}

/// Statistics over the random inputs with every other input fixed. `fixed`
/// holds one value per program input; random entries are ignored.
pub fn leak_stats(low: &Lowered, fixed: &[u64], sampling: Sampling) -> Result<LeakStats, LeakError> {
    if fixed.len() != low.classes.len() {
        return Err(LeakError::Arity { what: "input", expected: low.classes.len(), got: fixed.len() });
    }
    let rand = random_positions(low);
    let mask = word_mask(low.width);
    let mut inputs = fixed.to_vec();
    let mut stats: Option<LeakStats> = None;
    let mut record = |inputs: &[u64]| -> Result<(), LeakError> {
        let (_, trace) = run(low, inputs)?;
        let s = stats.get_or_insert_with(|| LeakStats {
            kinds: trace.iter().map(|e| (e.position, e.kind)).collect(),
            moments: vec![Moments::default(); trace.len()],
            exhaustive: matches!(sampling, Sampling::Exhaustive),
        });
        for (m, e) in s.moments.iter_mut().zip(&trace) {
            m.add(e.value);
        }
        Ok(())
    };
    match sampling {
        Sampling::Exhaustive => {
            let bits = low.width * rand.len() as u32;
            if bits > EXHAUSTIVE_BITS {
                return Err(LeakError::TooLarge { bits, bound: EXHAUSTIVE_BITS });
            }
            for &r in &rand {
                inputs[r] = 0;
            }
            // Odometer over the random inputs.
            loop {
                record(&inputs)?;
                let mut i = 0;
                while i < rand.len() {
                    let r = rand[i];
                    if inputs[r] == mask {
                        inputs[r] = 0;
                        i += 1;
                    } else {
                        inputs[r] += 1;
                        break;
                    }
                }
                if i == rand.len() {
                    break;
                }
            }
        }
        Sampling::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(LeakError::TooFewSamples);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                for &r in &rand {
                    inputs[r] = rng.next_u64() & mask;
                }
                record(&inputs)?;
            }
        }
    }
    Ok(stats.expect("at least one execution"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositionDelta {
    pub index: usize,
    pub position: usize,
    pub kind: LeakKind,
    /// Second minus first.
    pub delta_mean: Rational,
    pub delta_var: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Leaky { positions: Vec<PositionDelta>, delta_mean: Rational, delta_var: Rational },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

/// Threshold on Welch's t statistic for Monte Carlo comparisons.
pub const T_THRESHOLD: f64 = 4.5;

fn welch(a: f64, va: f64, na: f64, b: f64, vb: f64, nb: f64) -> f64 {
    let den = libm::sqrt(va / na + vb / nb);
    if den == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / den
    }
}

/// Assigns `values` to the inputs of class `class`, in input order.
pub fn assign(low: &Lowered, base: &mut [u64], class: SecurityClass, values: &[u64]) -> Result<(), LeakError> {
    let idx: Vec<usize> = (0..low.classes.len()).filter(|&i| low.classes[i] == class).collect();
    if idx.len() != values.len() {
        let what = match class {
            SecurityClass::Secret => "secret",
            SecurityClass::Public => "public",
            SecurityClass::Random => "random",
        };
        return Err(LeakError::Arity { what, expected: idx.len(), got: values.len() });
    }
    for (i, v) in idx.into_iter().zip(values) {
        base[i] = *v;
    }
    Ok(())
}

/// Compares the leakage of two executions that differ only in their secret
/// inputs. Exhaustive mode decides on exact equality of the summed means
/// and variances; Monte Carlo mode flags any position whose mean or
/// variance differs with `|t| > T_THRESHOLD`.
pub fn check_equivalence(
    low: &Lowered,
    public: &[u64],
    secrets: (&[u64], &[u64]),
    sampling: Sampling,
) -> Result<Verdict, LeakError> {
    let mut a = vec![0; low.classes.len()];
    assign(low, &mut a, SecurityClass::Public, public)?;
    let mut b = a.clone();
    assign(low, &mut a, SecurityClass::Secret, secrets.0)?;
    assign(low, &mut b, SecurityClass::Secret, secrets.1)?;
    let sa = leak_stats(low, &a, sampling)?;
    let sb = leak_stats(low, &b, sampling)?;
    Ok(compare(&sa, &sb))
}

pub fn compare(sa: &LeakStats, sb: &LeakStats) -> Verdict {
    let mut positions = Vec::new();
    let mut flagged = false;
    for (i, (ma, mb)) in sa.moments.iter().zip(&sb.moments).enumerate() {
        let dm = mb.mean() - ma.mean();
        let dv = mb.variance() - ma.variance();
        let differs = if sa.exhaustive {
            dm != Ratio::from_integer(0) || dv != Ratio::from_integer(0)
        } else {
            let (na, nb) = (ma.n as f64, mb.n as f64);
            let t_mean = welch(ma.mean_f(), ma.var_f(), na, mb.mean_f(), mb.var_f(), nb);
            let t_var = welch(ma.var_f(), ma.var_of_square_f(), na, mb.var_f(), mb.var_of_square_f(), nb);
            let hit = t_mean.abs() > T_THRESHOLD || t_var.abs() > T_THRESHOLD;
            flagged |= hit;
            hit
        };
        if differs {
            let (position, kind) = sa.kinds[i];
            positions.push(PositionDelta { index: i, position, kind, delta_mean: dm, delta_var: dv });
        }
    }
    let delta_mean = sb.sum_mean() - sa.sum_mean();
    let delta_var = sb.sum_variance() - sa.sum_variance();
    let leaky = if sa.exhaustive {
        delta_mean != Ratio::from_integer(0) || delta_var != Ratio::from_integer(0)
    } else {
        flagged
    };
    if leaky {
        Verdict::Leaky { positions, delta_mean, delta_var }
    } else {
        Verdict::Equivalent
    }
}

/// Whether two statistics agree position by position (stronger than the
/// summed comparison).
pub fn positionwise_equal(sa: &LeakStats, sb: &LeakStats) -> bool {
    sa.moments.len() == sb.moments.len()
        && sa
            .moments
            .iter()
            .zip(&sb.moments)
            .all(|(a, b)| a.mean() == b.mean() && a.variance() == b.variance())
}
