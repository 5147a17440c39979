//! Bundle legality: issue slots, intra-bundle dependences, branch placement
//! and label resolution.

use std::fmt;

use super::CgirFunction;
use crate::isa::{ClusterSet, Op, OpcodeClass, Operand, Reg, RegClass, RegId};
use crate::machine::{first_slot_conflict, MachineDesc};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleViolation {
    SlotConflict {
        block: String,
        bundle: usize,
        op: String,
    },
    /// An op reads or writes a register another op of the bundle writes.
    IntraBundleDependence {
        block: String,
        bundle: usize,
        op: String,
    },
    BranchNotLast {
        block: String,
        bundle: usize,
    },
    UndefinedLabel(String),
}

impl fmt::Display for BundleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BundleViolation::SlotConflict { block, bundle, op } => {
                write!(f, "{block} bundle {bundle}: no free slot for {op}")
            }
            BundleViolation::IntraBundleDependence { block, bundle, op } => {
                write!(f, "{block} bundle {bundle}: {op} depends on a write in the same bundle")
            }
            BundleViolation::BranchNotLast { block, bundle } => {
                write!(f, "{block} bundle {bundle}: branch before the end of the block")
            }
            BundleViolation::UndefinedLabel(l) => write!(f, "branch to undefined label {l}"),
        }
    }
}

/// A register cell: cluster (none for shared address registers) and a
/// register number or virtual id within its file.
type Cell = (Option<usize>, u8, u64);

fn cells(reg: Reg, clusters: ClusterSet) -> Vec<Cell> {
    let file = match reg.class {
        RegClass::Gpr | RegClass::Pair => 0,
        RegClass::Addr => 1,
        RegClass::Macc => 2,
    };
    let units: Vec<u64> = match (reg.class, reg.id) {
        (_, RegId::Virt(v)) => vec![1 << 32 | u64::from(v)],
        (RegClass::Pair, RegId::Phys(n)) => vec![u64::from(n), u64::from(n) + 1],
        (_, RegId::Phys(n)) => vec![u64::from(n)],
    };
    let lanes: Vec<Option<usize>> = if reg.class == RegClass::Addr || clusters.is_empty() {
        vec![None]
    } else {
        clusters.iter().map(Some).collect()
    };
    lanes.iter().flat_map(|l| units.iter().map(move |u| (*l, file, *u))).collect()
}

/// Cells read and written by an op.
pub(crate) fn op_cells(op: &Op) -> (Vec<Cell>, Vec<Cell>) {
    let (mut reads, mut writes) = (Vec::new(), Vec::new());
    for (i, opnd) in op.operands.iter().enumerate() {
        match opnd {
            Operand::Reg(r) => {
                let dest = i == 0 && op.class != OpcodeClass::BranchCond;
                if dest {
                    writes.extend(cells(r.reg, op.clusters));
                }
                if !dest || op.class == OpcodeClass::Macc {
                    reads.extend(cells(r.reg, op.clusters));
                }
            }
            Operand::ClusterReg(set, r) => reads.extend(cells(r.reg, *set)),
            Operand::Mem(m) => {
                reads.extend(cells(m.base, ClusterSet::EMPTY));
                if m.post_inc {
                    writes.extend(cells(m.base, ClusterSet::EMPTY));
                }
            }
            _ => {}
        }
    }
    (reads, writes)
}

/// Index of the first op that touches a cell another op of the same bundle
/// writes.
pub(crate) fn first_dependence(ops: &[Op]) -> Option<usize> {
    let cells: Vec<(Vec<Cell>, Vec<Cell>)> = ops.iter().map(op_cells).collect();
    (0..ops.len()).find(|&i| {
        cells
            .iter()
            .enumerate()
            .any(|(j, (_, w))| j != i && (cells[i].0.iter().chain(&cells[i].1)).any(|c| w.contains(c)))
    })
}

pub fn verify_bundles(f: &CgirFunction, desc: &MachineDesc) -> Vec<BundleViolation> {
    let mut out = Vec::new();
    for b in &f.blocks {
        let last = b.bundles.len().saturating_sub(1);
        for (k, bundle) in b.bundles.iter().enumerate() {
            if let Some(i) = first_slot_conflict(&bundle.ops, desc) {
                out.push(BundleViolation::SlotConflict {
                    block: b.label.clone(),
                    bundle: k,
                    op: bundle.ops[i].class.name().into(),
                });
            }
            if let Some(i) = first_dependence(&bundle.ops) {
                out.push(BundleViolation::IntraBundleDependence {
                    block: b.label.clone(),
                    bundle: k,
                    op: bundle.ops[i].class.name().into(),
                });
            }
            if bundle.terminal() && k != last {
                out.push(BundleViolation::BranchNotLast { block: b.label.clone(), bundle: k });
            }
            for op in &bundle.ops {
                if let Some(t) = op.label_target() {
                    if f.block(t).is_none() {
                        out.push(BundleViolation::UndefinedLabel(t.into()));
                    }
                }
            }
        }
    }
    out
}
