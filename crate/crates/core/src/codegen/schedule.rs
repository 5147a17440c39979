//! Greedy in-order list scheduling within a block.

use super::{Bundle, CgirFunction};
use crate::isa::{Op, OpcodeClass, Reg};
use crate::machine::{MachineDesc, SlotBoard};

struct Placed {
    bundle: usize,
    defs: Vec<Reg>,
    uses: Vec<Reg>,
    load: bool,
    store: bool,
}

fn is_load(op: &Op) -> bool {
    matches!(op.class, OpcodeClass::LoadWord | OpcodeClass::LoadDual)
}

/// Earliest bundle for `op` given everything placed before it in program
/// order. No register is both written and otherwise touched within one
/// bundle; a store may share a bundle with an earlier load.
fn earliest(op: &Op, placed: &[Placed]) -> usize {
    let (defs, uses) = (op.defs(), op.uses());
    let mut at = 0;
    for p in placed {
        let raw = uses.iter().any(|u| p.defs.contains(u));
        let waw = defs.iter().any(|d| p.defs.contains(d));
        let war = defs.iter().any(|d| p.uses.contains(d));
        let mem_after_store = p.store && (is_load(op) || op.class == OpcodeClass::StoreWord);
        let store_after_load = p.load && op.class == OpcodeClass::StoreWord;
        if raw || waw || war || mem_after_store {
            at = at.max(p.bundle + 1);
        } else if store_after_load {
            at = at.max(p.bundle);
        }
    }
    at
}

fn schedule_ops(ops: Vec<Op>, desc: &MachineDesc) -> Vec<Bundle> {
    let mut bundles: Vec<Bundle> = Vec::new();
    let mut boards: Vec<SlotBoard> = Vec::new();
    let mut placed: Vec<Placed> = Vec::new();
    for op in ops {
        let mut at = earliest(&op, &placed);
        if op.is_branch() {
            at = at.max(bundles.len().saturating_sub(1));
        }
        while at < bundles.len() && !boards[at].fits(&op, desc) {
            at += 1;
        }
        if at == bundles.len() {
            bundles.push(Bundle::default());
            boards.push(SlotBoard::new());
        }
        boards[at].take(&op, desc);
        placed.push(Placed {
            bundle: at,
            defs: op.defs(),
            uses: op.uses(),
            load: is_load(&op),
            store: op.class == OpcodeClass::StoreWord,
        });
        if op.is_branch() {
            bundles[at].ops.insert(0, op);
        } else {
            bundles[at].ops.push(op);
        }
    }
    bundles
}

/// Pack each block's ops into bundles. A block's branch is its last op and
/// lands in its final bundle.
pub fn schedule_bundles(mut f: CgirFunction, desc: &MachineDesc) -> CgirFunction {
    for b in &mut f.blocks {
        let ops: Vec<Op> = std::mem::take(&mut b.bundles).into_iter().flat_map(|x| x.ops).collect();
        b.bundles = schedule_ops(ops, desc);
    }
    f
}
