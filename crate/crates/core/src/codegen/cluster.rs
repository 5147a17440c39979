use super::CgirFunction;
use crate::isa::{ClusterSet, OpcodeClass, Operand, Placement};
use crate::machine::MachineDesc;

/// Tag every op with its clusters: vector ops run on all clusters, scalar
/// ops on the first (`x`), address moves on none. A sigma reads its source
/// on every cluster; an address move from a register reads it on `x`.
pub fn assign_clusters(mut f: CgirFunction, desc: &MachineDesc) -> CgirFunction {
    let all = desc.all_clusters();
    let scalar = ClusterSet::single(0);
    for op in f.blocks.iter_mut().flat_map(|b| b.bundles.iter_mut()).flat_map(|b| b.ops.iter_mut()) {
        op.clusters = match op.placement {
            Placement::Vector => all,
            Placement::Scalar => scalar,
            Placement::Shared => ClusterSet::EMPTY,
        };
        let source_set = if op.class == OpcodeClass::Sigma { all } else { scalar };
        for opnd in &mut op.operands {
            if let Operand::ClusterReg(set, _) = opnd {
                if set.is_empty() {
                    *set = source_set;
                }
            }
        }
    }
    f
}
