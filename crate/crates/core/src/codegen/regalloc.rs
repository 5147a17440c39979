//! Liveness, interference and register allocation.
//!
//! Registers are named by number independently of clusters: a virtual
//! register gets the same physical number on every cluster it lives on, so
//! interference ignores clusters. A register written in a bundle also
//! interferes with everything the bundle reads, so no bundle both reads and
//! writes one physical register through different ops.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CgirFunction, CodegenError};
use crate::isa::{OpcodeClass, Operand, Reg, RegClass, RegId};
use crate::machine::MachineDesc;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Liveness {
    pub live_in: Vec<BTreeSet<Reg>>,
    pub live_out: Vec<BTreeSet<Reg>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveRange {
    pub reg: Reg,
    /// First and last bundle (function-wide linear index) referencing it.
    pub start: usize,
    pub end: usize,
    pub spans_block_boundary: bool,
    /// Reference count weighted by 10^loop depth.
    pub priority: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllocViolation {
    Unassigned(Reg),
    ClassMismatch { vreg: Reg, phys: Reg },
    MisalignedPair(Reg),
    SharedRegister { a: Reg, b: Reg, phys: Reg },
    MaccNotInMaccRegister { block: String, op: String },
    MaccOutOfRange(Reg),
}

impl fmt::Display for AllocViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocViolation::Unassigned(r) => write!(f, "{r:?} has no register"),
            AllocViolation::ClassMismatch { vreg, phys } => {
                write!(f, "{vreg:?} assigned to {phys:?} of another class")
            }
            AllocViolation::MisalignedPair(r) => write!(f, "register pair {r:?} does not start even"),
            AllocViolation::SharedRegister { a, b, phys } => {
                write!(f, "{a:?} and {b:?} are live together in {phys:?}")
            }
            AllocViolation::MaccNotInMaccRegister { block, op } => {
                write!(f, "MACC op requires MACC register ({op} in {block})")
            }
            AllocViolation::MaccOutOfRange(r) => write!(f, "{r:?} is not one of MACC0..MACC3"),
        }
    }
}

fn virt(regs: Vec<Reg>) -> impl Iterator<Item = Reg> {
    regs.into_iter().filter(|r| r.is_virtual())
}

/// Per-block live-in/live-out sets of virtual registers.
pub fn liveness(f: &CgirFunction) -> Liveness {
    let n = f.blocks.len();
    let mut gen = vec![BTreeSet::new(); n];
    let mut kill = vec![BTreeSet::new(); n];
    for (i, b) in f.blocks.iter().enumerate() {
        for bundle in &b.bundles {
            let mut defs = Vec::new();
            for op in &bundle.ops {
                for u in virt(op.uses()) {
                    if !kill[i].contains(&u) {
                        gen[i].insert(u);
                    }
                }
                defs.extend(virt(op.defs()));
            }
            kill[i].extend(defs);
        }
    }
    let succ: Vec<Vec<usize>> = (0..n).map(|i| f.successors(i)).collect();
    let mut live = Liveness { live_in: vec![BTreeSet::new(); n], live_out: vec![BTreeSet::new(); n] };
    let mut changed = true;
    while changed {
        changed = false;
        for i in (0..n).rev() {
            let out: BTreeSet<Reg> = succ[i].iter().flat_map(|&s| live.live_in[s].iter().copied()).collect();
            let inn: BTreeSet<Reg> = gen[i].iter().copied().chain(out.difference(&kill[i]).copied()).collect();
            if out != live.live_out[i] || inn != live.live_in[i] {
                live.live_out[i] = out;
                live.live_in[i] = inn;
                changed = true;
            }
        }
    }
    live
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum File {
    General,
    Address,
    Macc,
}

fn file(class: RegClass) -> File {
    match class {
        RegClass::Gpr | RegClass::Pair => File::General,
        RegClass::Addr => File::Address,
        RegClass::Macc => File::Macc,
    }
}

/// Interference graph over virtual registers of the same register file.
pub fn interference(f: &CgirFunction) -> BTreeMap<Reg, BTreeSet<Reg>> {
    let live = liveness(f);
    let mut g: BTreeMap<Reg, BTreeSet<Reg>> = BTreeMap::new();
    for r in f.virtual_regs() {
        g.entry(r).or_default();
    }
    let edge = |a: Reg, b: Reg, g: &mut BTreeMap<Reg, BTreeSet<Reg>>| {
        if a != b && file(a.class) == file(b.class) {
            g.entry(a).or_default().insert(b);
            g.entry(b).or_default().insert(a);
        }
    };
    for (i, b) in f.blocks.iter().enumerate() {
        let mut now = live.live_out[i].clone();
        for bundle in b.bundles.iter().rev() {
            let defs: Vec<Reg> = bundle.ops.iter().flat_map(|o| virt(o.defs())).collect();
            let uses: Vec<Reg> = bundle.ops.iter().flat_map(|o| virt(o.uses())).collect();
            for &d in &defs {
                for &l in now.iter().chain(&defs).chain(&uses) {
                    edge(d, l, &mut g);
                }
            }
            for d in &defs {
                now.remove(d);
            }
            for op in &bundle.ops {
                now.extend(virt(op.uses()));
            }
        }
    }
    g
}

fn global_regs(f: &CgirFunction, live: &Liveness) -> BTreeSet<Reg> {
    let mut out: BTreeSet<Reg> = live.live_in.iter().flatten().copied().collect();
    let mut home: BTreeMap<Reg, usize> = BTreeMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        for op in b.ops() {
            for r in virt(op.defs()).chain(virt(op.uses())) {
                if *home.entry(r).or_insert(i) != i {
                    out.insert(r);
                }
            }
        }
    }
    out
}

/// Def/use spans, block-crossing flags and priorities of all virtual registers.
pub fn live_ranges(f: &CgirFunction) -> Vec<LiveRange> {
    let live = liveness(f);
    let global = global_regs(f, &live);
    let mut ranges: BTreeMap<Reg, LiveRange> = BTreeMap::new();
    let mut pos = 0;
    for b in &f.blocks {
        let weight = 10u64.saturating_pow(b.depth);
        for bundle in &b.bundles {
            for op in &bundle.ops {
                for r in virt(op.defs()).chain(virt(op.uses())) {
                    let e = ranges.entry(r).or_insert(LiveRange {
                        reg: r,
                        start: pos,
                        end: pos,
                        spans_block_boundary: global.contains(&r),
                        priority: 0,
                    });
                    e.end = pos;
                    e.priority = e.priority.saturating_add(weight);
                }
            }
            pos += 1;
        }
    }
    ranges.into_values().collect()
}

fn occupied(phys: Reg) -> Vec<u8> {
    let n = phys.phys().expect("physical register");
    if phys.class == RegClass::Pair {
        vec![n, n + 1]
    } else {
        vec![n]
    }
}

fn limit(class: RegClass, desc: &MachineDesc) -> u32 {
    match file(class) {
        File::General => desc.general_regs_per_cluster,
        File::Address => desc.address_regs,
        File::Macc => desc.macc_regs_per_cluster,
    }
}

fn color(
    f: &mut CgirFunction,
    order: &[Reg],
    graph: &BTreeMap<Reg, BTreeSet<Reg>>,
    desc: &MachineDesc,
) -> Result<(), CodegenError> {
    for &v in order {
        let mut busy = BTreeSet::new();
        for nb in graph.get(&v).into_iter().flatten() {
            if let Some(p) = f.assignment.get(nb) {
                busy.extend(occupied(*p));
            }
        }
        let max = limit(v.class, desc).min(256) as u16;
        let (first, stride, width) = if v.class == RegClass::Pair { (0u16, 2, 2) } else { (0, 1, 1) };
        let pick = (first..max)
            .step_by(stride)
            .find(|&n| n + width <= max && (n..n + width).all(|k| !busy.contains(&(k as u8))));
        let Some(n) = pick else {
            let what = match file(v.class) {
                File::General => "general",
                File::Address => "address",
                File::Macc => "MACC",
            };
            return Err(CodegenError::AllocationOverflow(what.into()));
        };
        f.assignment.insert(v, Reg { class: v.class, id: RegId::Phys(n as u8) });
    }
    Ok(())
}

/// Color registers live across blocks: MACC accumulators first, then the
/// rest by descending priority.
pub fn allocate_global(mut f: CgirFunction, desc: &MachineDesc) -> Result<CgirFunction, CodegenError> {
    let live = liveness(&f);
    let graph = interference(&f);
    let global = global_regs(&f, &live);
    let prio: BTreeMap<Reg, u64> = live_ranges(&f).into_iter().map(|r| (r.reg, r.priority)).collect();
    let mut order: Vec<Reg> = global.iter().copied().filter(|r| !f.assignment.contains_key(r)).collect();
    order.sort_by_key(|r| (r.class != RegClass::Macc, std::cmp::Reverse(prio.get(r).copied().unwrap_or(0)), *r));
    color(&mut f, &order, &graph, desc)?;
    Ok(f)
}

/// Linear scan over each block: remaining registers in order of first
/// appearance take the lowest number free of every live neighbor.
pub fn allocate_local(mut f: CgirFunction, desc: &MachineDesc) -> Result<CgirFunction, CodegenError> {
    let graph = interference(&f);
    let order: Vec<Reg> = f.virtual_regs().into_iter().filter(|r| !f.assignment.contains_key(r)).collect();
    color(&mut f, &order, &graph, desc)?;
    Ok(f)
}

/// Check an allocated function against its assignment map.
pub fn verify_allocation(f: &CgirFunction) -> Result<(), Vec<AllocViolation>> {
    let mut out = Vec::new();
    for v in f.virtual_regs() {
        match f.assignment.get(&v) {
            None => out.push(AllocViolation::Unassigned(v)),
            Some(p) if p.class != v.class || p.is_virtual() => {
                out.push(AllocViolation::ClassMismatch { vreg: v, phys: *p })
            }
            Some(p) if p.class == RegClass::Pair && p.phys().is_some_and(|n| n % 2 != 0) => {
                out.push(AllocViolation::MisalignedPair(*p))
            }
            _ => {}
        }
    }
    let graph = interference(f);
    for (a, nbs) in &graph {
        for b in nbs.iter().filter(|b| *b > a) {
            if let (Some(pa), Some(pb)) = (f.assignment.get(a), f.assignment.get(b)) {
                if pa.is_virtual() || pb.is_virtual() {
                    continue;
                }
                let (oa, ob) = (occupied(*pa), occupied(*pb));
                if oa.iter().any(|x| ob.contains(x)) {
                    out.push(AllocViolation::SharedRegister { a: *a, b: *b, phys: *pa });
                }
            }
        }
    }
    for b in &f.blocks {
        for op in b.ops() {
            let acc_idx = match op.class {
                OpcodeClass::Macc | OpcodeClass::MaccInit => 0,
                OpcodeClass::MaccRead => 1,
                _ => continue,
            };
            let Some(Operand::Reg(acc)) = op.operands.get(acc_idx) else { continue };
            let phys = f.resolve(acc.reg);
            if phys.class != RegClass::Macc {
                out.push(AllocViolation::MaccNotInMaccRegister { block: b.label.clone(), op: op.class.name().into() });
            } else if phys.phys().is_some_and(|n| n > 3) {
                out.push(AllocViolation::MaccOutOfRange(phys));
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
