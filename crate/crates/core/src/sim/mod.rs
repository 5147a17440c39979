//! Cycle simulator for the clustered machine.
//!
//! Bundles execute one at a time: every op of a bundle reads the state as
//! it was before the bundle, then all writes land together. A bundle costs
//! its slowest op's latency, and at least the branch penalty when it holds
//! a branch, whether or not the branch is taken.

mod asm;
mod image;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::asm::parse_assembly;
pub use self::image::DataImage;
use crate::isa::{Op, OpcodeClass, Operand, RegClass, RegRef};
use crate::machine::{bundle_cost, first_slot_conflict, MachineDesc};

pub const DEFAULT_FUEL: u64 = 100_000_000;

/// Label charged for bundles ahead of the first label.
pub const ENTRY_LABEL: &str = "(entry)";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("line {line}: {msg}")]
    AsmSyntaxError { line: usize, msg: String },
    #[error("branch to undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("undefined symbol `{0}`")]
    UndefinedSymbol(String),
    #[error("out of fuel after {0} bundles")]
    OutOfFuel(u64),
    #[error("memory access at {addr} outside 0..{size}")]
    MemoryOutOfRange { addr: i64, size: usize },
    #[error("bundle {bundle}: no free issue slot for {op}")]
    DivergentSlotUse { bundle: usize, op: String },
    #[error("data image line {line}: {msg}")]
    ImageSyntax { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmProgram {
    pub bundles: Vec<Vec<Op>>,
    /// Branch target of each bundle, if it has a branch.
    pub targets: Vec<Option<usize>>,
    /// Labels in program order with the index of the bundle they precede.
    pub labels: Vec<(String, usize)>,
    pub symbols: BTreeMap<String, u32>,
}

impl AsmProgram {
    /// Bind symbols; every symbol the program mentions must end up bound.
    pub fn link(mut self, symbols: &BTreeMap<String, u32>) -> Result<AsmProgram, SimError> {
        self.symbols.extend(symbols.iter().map(|(k, v)| (k.clone(), *v)));
        for op in self.bundles.iter().flatten() {
            for o in &op.operands {
                if let Operand::Sym { name, .. } = o {
                    if !self.symbols.contains_key(name) {
                        return Err(SimError::UndefinedSymbol(name.clone()));
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn label(&self, name: &str) -> Option<usize> {
        self.labels.iter().find(|(l, _)| l == name).map(|(_, i)| *i)
    }

    /// Number of bundles from a label up to the next label.
    pub fn block_len(&self, name: &str) -> Option<usize> {
        let k = self.labels.iter().position(|(l, _)| l == name)?;
        let start = self.labels[k].1;
        let end = self.labels.get(k + 1).map_or(self.bundles.len(), |(_, i)| *i);
        Some(end - start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    /// `gpr[cluster][n]`
    pub gpr: Vec<Vec<i32>>,
    /// `macc[cluster][n]`
    pub macc: Vec<Vec<i32>>,
    pub addr: Vec<i32>,
    pub memory: Vec<i32>,
    pub pc: usize,
    pub cycles: u64,
    pub bundles_executed: u64,
    pub instructions_executed: u64,
    pub label_cycles: Vec<(String, u64)>,
}

impl SimState {
    pub fn new(desc: &MachineDesc, memory: Vec<i32>) -> SimState {
        let n = desc.cluster_count();
        SimState {
            gpr: vec![vec![0; desc.general_regs_per_cluster as usize]; n],
            macc: vec![vec![0; desc.macc_regs_per_cluster as usize]; n],
            addr: vec![0; desc.address_regs as usize],
            memory,
            pc: 0,
            cycles: 0,
            bundles_executed: 0,
            instructions_executed: 0,
            label_cycles: Vec::new(),
        }
    }

    pub fn from_image(desc: &MachineDesc, image: &DataImage) -> SimState {
        SimState::new(desc, image.words.clone())
    }

    /// Registers and memory only, without counters.
    pub fn same_data(&self, other: &SimState) -> bool {
        self.gpr == other.gpr && self.macc == other.macc && self.addr == other.addr && self.memory == other.memory
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCycles {
    pub label: String,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub per_label: Vec<LabelCycles>,
    pub bundles: u64,
    pub instructions: u64,
}

impl CycleReport {
    pub fn label(&self, name: &str) -> Option<u64> {
        self.per_label.iter().find(|l| l.label == name).map(|l| l.cycles)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total cycles  {}", self.total_cycles)?;
        writeln!(f, "bundles       {}", self.bundles)?;
        writeln!(f, "instructions  {}", self.instructions)?;
        for l in &self.per_label {
            writeln!(f, "  {:<16} {}", l.label, l.cycles)?;
        }
        Ok(())
    }
}

pub fn cycle_report(state: &SimState) -> CycleReport {
    CycleReport {
        total_cycles: state.cycles,
        per_label: state
            .label_cycles
            .iter()
            .map(|(label, cycles)| LabelCycles { label: label.clone(), cycles: *cycles })
            .collect(),
        bundles: state.bundles_executed,
        instructions: state.instructions_executed,
    }
}

/// One executed bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub pc: usize,
    pub cost: u32,
    pub taken: bool,
}

enum Write {
    Gpr(usize, usize, i32),
    Macc(usize, usize, i32),
    Addr(usize, i32),
    Mem(usize, i32),
}

struct Machine<'a> {
    s: &'a SimState,
    writes: Vec<Write>,
}

fn reg_index(r: RegRef) -> usize {
    usize::from(r.resolved().reg.phys().expect("physical register"))
}

impl Machine<'_> {
    fn gpr(&self, cl: usize, o: &Operand) -> i32 {
        match o {
            Operand::Reg(r) => self.s.gpr[cl][reg_index(*r)],
            Operand::Imm(v) => *v,
            _ => unreachable!("register operand expected, got {o:?}"),
        }
    }

    fn macc_index(o: &Operand) -> usize {
        match o {
            Operand::Reg(r) if r.reg.class == RegClass::Macc => reg_index(*r),
            _ => unreachable!("MACC operand expected, got {o:?}"),
        }
    }

    fn dest(o: &Operand) -> usize {
        match o {
            Operand::Reg(r) => reg_index(*r),
            _ => unreachable!("register destination expected, got {o:?}"),
        }
    }

    /// Word address of a memory operand for the cluster of rank `lane`.
    fn address(&self, o: &Operand, lane: i64, width: i64) -> Result<(usize, usize), SimError> {
        let Operand::Mem(m) = o else { unreachable!("memory operand expected") };
        let u = usize::from(m.base.phys().expect("physical register"));
        let base = i64::from(self.s.addr[u]) + if m.post_inc { 0 } else { i64::from(m.amount) };
        let at = base + if m.distributed { lane * width } else { 0 };
        let size = self.s.memory.len();
        if at < 0 || at + width > size as i64 {
            return Err(SimError::MemoryOutOfRange { addr: at, size });
        }
        Ok((at as usize, u))
    }

    fn post_increment(&mut self, o: &Operand) {
        if let Operand::Mem(m) = o {
            if m.post_inc {
                let u = usize::from(m.base.phys().expect("physical register"));
                self.writes.push(Write::Addr(u, self.s.addr[u].wrapping_add(m.amount)));
            }
        }
    }

    /// Execute one op against the pre-bundle state; returns whether it is
    /// a taken branch.
    fn exec(&mut self, op: &Op) -> Result<bool, SimError> {
        use OpcodeClass as C;
        let o = &op.operands;
        let lanes: Vec<usize> = op.clusters.iter().collect();
        match op.class {
            C::LoadWord | C::LoadDual => {
                let width = if op.class == C::LoadDual { 2 } else { 1 };
                let d = Self::dest(&o[0]);
                for (k, &cl) in lanes.iter().enumerate() {
                    let (at, _) = self.address(&o[1], k as i64, width)?;
                    for w in 0..width as usize {
                        self.writes.push(Write::Gpr(cl, d + w, self.s.memory[at + w]));
                    }
                }
                self.post_increment(&o[1]);
            }
            C::StoreWord => {
                for (k, &cl) in lanes.iter().enumerate() {
                    let (at, _) = self.address(&o[0], k as i64, 1)?;
                    self.writes.push(Write::Mem(at, self.gpr(cl, &o[1])));
                }
                self.post_increment(&o[0]);
            }
            C::MoveImm | C::MoveReg => {
                let d = Self::dest(&o[0]);
                for &cl in &lanes {
                    self.writes.push(Write::Gpr(cl, d, self.gpr(cl, &o[1])));
                }
            }
            C::Add | C::Sub | C::Mul => {
                let d = Self::dest(&o[0]);
                for &cl in &lanes {
                    let (a, b) = (self.gpr(cl, &o[1]), self.gpr(cl, &o[2]));
                    let v = match op.class {
                        C::Add => a.wrapping_add(b),
                        C::Sub => a.wrapping_sub(b),
                        _ => a.wrapping_mul(b),
                    };
                    self.writes.push(Write::Gpr(cl, d, v));
                }
            }
            C::Macc => {
                let m = Self::macc_index(&o[0]);
                for &cl in &lanes {
                    let prod = self.gpr(cl, &o[1]).wrapping_mul(self.gpr(cl, &o[2]));
                    self.writes.push(Write::Macc(cl, m, self.s.macc[cl][m].wrapping_add(prod)));
                }
            }
            C::MaccInit => {
                let m = Self::macc_index(&o[0]);
                for &cl in &lanes {
                    self.writes.push(Write::Macc(cl, m, self.gpr(cl, &o[1])));
                }
            }
            C::MaccRead => {
                let (d, m) = (Self::dest(&o[0]), Self::macc_index(&o[1]));
                for &cl in &lanes {
                    self.writes.push(Write::Gpr(cl, d, self.s.macc[cl][m]));
                }
            }
            C::Sigma => {
                let Operand::ClusterReg(set, r) = &o[1] else { unreachable!("sigma source") };
                let n = reg_index(*r);
                let sum = set.iter().fold(0i32, |acc, cl| acc.wrapping_add(self.s.gpr[cl][n]));
                let d = Self::dest(&o[0]);
                for &cl in &lanes {
                    self.writes.push(Write::Gpr(cl, d, sum));
                }
            }
            C::BranchCond => {
                let Operand::Cond(c) = &o[1] else { unreachable!("branch condition") };
                let cl = lanes.first().copied().unwrap_or(0);
                return Ok(c.holds(self.gpr(cl, &o[0]), self.gpr(cl, &o[2])));
            }
            C::AddrMove => {
                let u = match &o[0] {
                    Operand::Reg(r) => reg_index(*r),
                    _ => unreachable!("address destination"),
                };
                let v = match &o[1] {
                    Operand::Imm(v) => *v,
                    Operand::ClusterReg(set, r) => {
                        let cl = set.iter().next().unwrap_or(0);
                        self.s.gpr[cl][reg_index(*r)]
                    }
                    other => unreachable!("address source {other:?}"),
                };
                self.writes.push(Write::Addr(u, v));
            }
        }
        Ok(false)
    }
}

/// Symbols replaced by their addresses.
fn resolve_symbols(p: &AsmProgram) -> Result<Vec<Vec<Op>>, SimError> {
    let mut out = p.bundles.clone();
    for op in out.iter_mut().flatten() {
        for o in &mut op.operands {
            if let Operand::Sym { name, offset } = o {
                let base = *p.symbols.get(name.as_str()).ok_or_else(|| SimError::UndefinedSymbol(name.clone()))?;
                *o = Operand::Imm((base as i32).wrapping_add(*offset));
            }
        }
    }
    Ok(out)
}

fn execute(
    p: &AsmProgram,
    mut s: SimState,
    desc: &MachineDesc,
    fuel: u64,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<SimState, SimError> {
    for (k, ops) in p.bundles.iter().enumerate() {
        if let Some(i) = first_slot_conflict(ops, desc) {
            return Err(SimError::DivergentSlotUse { bundle: k, op: ops[i].class.name().into() });
        }
    }
    let bundles = resolve_symbols(p)?;
    let costs: Vec<u32> = bundles.iter().map(|b| bundle_cost(b, desc)).collect();

    if s.label_cycles.is_empty() {
        if p.labels.first().map_or(!bundles.is_empty(), |(_, i)| *i > 0) {
            s.label_cycles.push((ENTRY_LABEL.into(), 0));
        }
        s.label_cycles.extend(p.labels.iter().map(|(l, _)| (l.clone(), 0)));
    }
    let offset = s.label_cycles.len() - p.labels.len();
    // Owner of each bundle: the last label at or before it.
    let mut owner = vec![0; bundles.len()];
    let mut next = 0;
    for (k, o) in owner.iter_mut().enumerate() {
        while next < p.labels.len() && p.labels[next].1 <= k {
            next += 1;
        }
        *o = if next == 0 { 0 } else { offset + next - 1 };
    }

    let mut writes = Vec::new();
    let mut used = 0u64;
    while s.pc < bundles.len() {
        if used == fuel {
            return Err(SimError::OutOfFuel(fuel));
        }
        used += 1;
        let pc = s.pc;
        let mut m = Machine { s: &s, writes: std::mem::take(&mut writes) };
        let mut taken = false;
        for op in &bundles[pc] {
            taken |= m.exec(op)?;
        }
        writes = m.writes;
        for w in writes.drain(..) {
            match w {
                Write::Gpr(cl, n, v) => s.gpr[cl][n] = v,
                Write::Macc(cl, n, v) => s.macc[cl][n] = v,
                Write::Addr(n, v) => s.addr[n] = v,
                Write::Mem(at, v) => s.memory[at] = v,
            }
        }
        let cost = costs[pc];
        s.cycles += u64::from(cost);
        s.label_cycles[owner[pc]].1 += u64::from(cost);
        s.bundles_executed += 1;
        s.instructions_executed += bundles[pc].len() as u64;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceEntry { pc, cost, taken });
        }
        s.pc = match (taken, p.targets[pc]) {
            (true, Some(t)) => t,
            _ => pc + 1,
        };
    }
    Ok(s)
}

/// Run from `init` until control falls off the end, at most `fuel` bundles.
pub fn run(p: &AsmProgram, init: SimState, desc: &MachineDesc, fuel: u64) -> Result<SimState, SimError> {
    execute(p, init, desc, fuel, None)
}

/// [`run`], also recording every executed bundle.
pub fn run_traced(
    p: &AsmProgram,
    init: SimState,
    desc: &MachineDesc,
    fuel: u64,
) -> Result<(SimState, Vec<TraceEntry>), SimError> {
    let mut trace = Vec::new();
    let s = execute(p, init, desc, fuel, Some(&mut trace))?;
    Ok((s, trace))
}

#[cfg(test)]
mod tests;
