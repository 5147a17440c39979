use std::fmt::Write as _;

use super::CgirFunction;
use crate::isa::Op;
use crate::machine::{cluster_prefix, render_operand, MachineDesc};

/// Render the function in the assembly dialect: a label line per block,
/// one op per line with `||` marking ops issued with the previous line, and
/// `.code_align 4` ahead of every branch bundle.
pub fn emit_assembly(f: &CgirFunction, desc: &MachineDesc) -> String {
    let mut out = String::new();
    for b in &f.blocks {
        let _ = writeln!(out, "{}:", b.label);
        for bundle in &b.bundles {
            if bundle.terminal() {
                out.push_str(".code_align 4\n");
            }
            for (i, op) in bundle.ops.iter().enumerate() {
                let mut op = op.clone();
                op.map_regs(|r| f.resolve(r));
                if i > 0 {
                    out.push_str("||");
                }
                out.push_str(&desc.opcode(op.class).print_format.render(&op, &desc.cluster_names));
                out.push('\n');
            }
        }
    }
    out
}

/// Description-independent rendering for debugging dumps.
pub(super) fn render_generic(op: &Op, clusters: &[String]) -> String {
    let operands: Vec<String> = op.operands.iter().map(|o| render_operand(o, clusters)).collect();
    let prefix = cluster_prefix(op.clusters, clusters);
    if prefix.is_empty() {
        format!("{} {}", op.class, operands.join(", "))
    } else {
        format!("{prefix}.{} {}", op.class, operands.join(", "))
    }
}
