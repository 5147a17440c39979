//! Issue-slot bookkeeping for one bundle.

use std::collections::BTreeSet;

use super::MachineDesc;
use crate::isa::Op;

/// Slots taken so far in a bundle. Each slot name exists once per cluster;
/// ops without a cluster (address moves) share one extra pseudo-cluster.
#[derive(Debug, Clone, Default)]
pub struct SlotBoard {
    taken: BTreeSet<(Option<usize>, String)>,
}

impl SlotBoard {
    pub fn new() -> SlotBoard {
        SlotBoard::default()
    }

    fn lanes(op: &Op) -> Vec<Option<usize>> {
        if !op.class.is_clustered() || op.clusters.is_empty() {
            vec![None]
        } else {
            op.clusters.iter().map(Some).collect()
        }
    }

    /// The first alternative slot free on every cluster the op runs on.
    pub fn free_slot(&self, op: &Op, desc: &MachineDesc) -> Option<String> {
        let lanes = Self::lanes(op);
        desc.opcode(op.class)
            .slots
            .iter()
            .find(|s| lanes.iter().all(|l| !self.taken.contains(&(*l, (*s).clone()))))
            .cloned()
    }

    /// Claim a slot for `op`; false when none is free.
    pub fn take(&mut self, op: &Op, desc: &MachineDesc) -> bool {
        let Some(slot) = self.free_slot(op, desc) else { return false };
        for l in Self::lanes(op) {
            self.taken.insert((l, slot.clone()));
        }
        true
    }

    pub fn fits(&self, op: &Op, desc: &MachineDesc) -> bool {
        self.free_slot(op, desc).is_some()
    }
}

/// Index of the first op of `ops` that cannot get a slot, if any.
pub fn first_slot_conflict(ops: &[Op], desc: &MachineDesc) -> Option<usize> {
    let mut board = SlotBoard::new();
    ops.iter().position(|op| !board.take(op, desc))
}

/// Cycles charged for issuing `ops` as one bundle.
pub fn bundle_cost(ops: &[Op], desc: &MachineDesc) -> u32 {
    let max = ops.iter().map(|o| desc.latency(o.class)).max().unwrap_or(0);
    if ops.iter().any(Op::is_branch) {
        max.max(desc.branch_taken_penalty)
    } else {
        max
    }
}
