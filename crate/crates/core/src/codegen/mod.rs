//! Code generation: loop IR to bundled, register-allocated machine code in
//! the clustered VLIW assembly dialect.
//!
//! The pipeline is `annotate` (IR to CGIR ops on virtual registers),
//! `assign_clusters`, `schedule_bundles`, `allocate_global`,
//! `allocate_local` and `emit_assembly`. [`generate`] runs all of it.

mod annotate;
mod cluster;
mod emit;
mod regalloc;
mod schedule;
mod verify;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use self::annotate::annotate;
pub use self::cluster::assign_clusters;
pub use self::emit::emit_assembly;
pub use self::regalloc::{
    allocate_global, allocate_local, interference, live_ranges, liveness, verify_allocation, AllocViolation, LiveRange,
    Liveness,
};
pub use self::schedule::schedule_bundles;
pub use self::verify::{verify_bundles, BundleViolation};

use crate::frontend::ir::{LoopIr, NodeId};
use crate::isa::{Op, Reg, RegId};
use crate::machine::MachineDesc;

pub type CgirOp = Op;

/// Ops issued together in one cycle. A branch, when present, comes first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bundle {
    pub ops: Vec<Op>,
}

impl Bundle {
    pub fn terminal(&self) -> bool {
        self.ops.iter().any(Op::is_branch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    /// Loop nesting depth of the code in the block.
    pub depth: u32,
    pub bundles: Vec<Bundle>,
}

impl Block {
    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.bundles.iter().flat_map(|b| b.ops.iter())
    }

    pub fn branch_target(&self) -> Option<&str> {
        self.bundles.last()?.ops.iter().find(|o| o.is_branch())?.label_target()
    }
}

/// A loop whose body starts at a labeled block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopLabel {
    pub label: String,
    pub loop_id: NodeId,
    pub innermost: bool,
    pub lanes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub addr: u32,
    pub len: u32,
}

/// Data layout: every variable gets `len` words at a fixed address.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolTable {
    pub symbols: Vec<Symbol>,
    pub size: u32,
}

impl SymbolTable {
    /// Variables in declaration order, packed from address 0.
    pub fn layout(ir: &LoopIr) -> SymbolTable {
        let mut t = SymbolTable::default();
        for v in &ir.vars {
            t.symbols.push(Symbol { name: symbol_name(&v.name), addr: t.size, len: v.words() });
            t.size += v.words();
        }
        t
    }

    pub fn get(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.name == name)
    }

    pub fn addresses(&self) -> BTreeMap<String, u32> {
        self.symbols.iter().map(|s| (s.name.clone(), s.addr)).collect()
    }
}

/// Assembly symbol of a source variable.
pub fn symbol_name(var: &str) -> String {
    format!("__{var}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CgirFunction {
    pub name: String,
    pub blocks: Vec<Block>,
    pub symbols: SymbolTable,
    /// Virtual to physical register map filled by the allocators.
    pub assignment: BTreeMap<Reg, Reg>,
    pub loops: Vec<LoopLabel>,
    pub next_vreg: u32,
}

impl CgirFunction {
    pub fn block(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.blocks.iter().flat_map(Block::ops)
    }

    /// Virtual registers referenced anywhere, in first-appearance order.
    pub fn virtual_regs(&self) -> Vec<Reg> {
        let mut seen = Vec::new();
        for op in self.ops() {
            for r in op.defs().into_iter().chain(op.uses()) {
                if r.is_virtual() && !seen.contains(&r) {
                    seen.push(r);
                }
            }
        }
        seen
    }

    pub fn resolve(&self, r: Reg) -> Reg {
        self.assignment.get(&r).copied().unwrap_or(r)
    }

    /// Copy with every assigned virtual register replaced by its physical one.
    pub fn materialized(&self) -> CgirFunction {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for bundle in &mut b.bundles {
                for op in &mut bundle.ops {
                    op.map_regs(|r| self.resolve(r));
                }
            }
        }
        out
    }

    pub fn has_virtual_regs(&self) -> bool {
        self.ops().any(|op| {
            op.defs()
                .into_iter()
                .chain(op.uses())
                .any(|r| matches!(r.id, RegId::Virt(_)) && !self.assignment.contains_key(&r))
        })
    }

    /// Innermost loop body labels.
    pub fn innermost_labels(&self) -> Vec<&str> {
        self.loops.iter().filter(|l| l.innermost).map(|l| l.label.as_str()).collect()
    }

    /// Block successors: fall-through plus branch target.
    pub fn successors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if idx + 1 < self.blocks.len() {
            out.push(idx + 1);
        }
        if let Some(t) = self.blocks[idx].branch_target().and_then(|l| self.block(l)) {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodegenError {
    #[error("no lowering rule for {0}")]
    UnsupportedNode(String),
    #[error("register allocation overflow: no free {0} register")]
    AllocationOverflow(String),
    #[error("branch to undefined label `{0}`")]
    UndefinedLabel(String),
}

/// Full back end: annotation through allocation. The result is verified.
pub fn generate(ir: &LoopIr, desc: &MachineDesc) -> Result<CgirFunction, CodegenError> {
    let f = annotate(ir, desc)?;
    let f = assign_clusters(f, desc);
    let f = schedule_bundles(f, desc);
    let f = allocate_global(f, desc)?;
    let f = allocate_local(f, desc)?;
    debug_assert_eq!(verify_allocation(&f), Ok(()));
    debug_assert_eq!(verify_bundles(&f.materialized(), desc), vec![]);
    Ok(f)
}

impl fmt::Display for CgirFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = ["x", "y", "z", "t"].iter().map(|s| s.to_string()).collect();
        for b in &self.blocks {
            writeln!(f, "{}:", b.label)?;
            for bundle in &b.bundles {
                for (i, op) in bundle.ops.iter().enumerate() {
                    let prefix = if i == 0 { "" } else { "||" };
                    writeln!(f, "{prefix}{}", emit::render_generic(op, &names))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
