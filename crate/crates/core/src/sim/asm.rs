//! Assembler for the emitted dialect.
//!
//! One op per line. A line starting with `||` joins the previous bundle,
//! `name:` defines a label at the next bundle, `.code_align N` is accepted
//! and ignored, and `//` starts a comment.

use std::collections::BTreeMap;

use super::{AsmProgram, SimError};
use crate::codegen::CgirFunction;
use crate::isa::{ClusterSet, Op, OpcodeClass, Operand, Placement, RegClass, RegRef};
use crate::machine::MachineDesc;

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c == '.' || c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn placement(set: ClusterSet) -> Placement {
    match set.len() {
        0 => Placement::Shared,
        1 => Placement::Scalar,
        _ => Placement::Vector,
    }
}

/// Match one op against every print format of the description.
fn parse_op(text: &str, desc: &MachineDesc) -> Option<Op> {
    let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    OpcodeClass::ALL.iter().find_map(|&class| {
        let info = desc.opcode_table.get(&class)?;
        let (set, operands) = info.print_format.matches(&squeezed, class.operand_kinds(), &desc.cluster_names)?;
        Some(Op { class, placement: placement(set), clusters: set, operands })
    })
}

/// Register numbers within the description's files.
fn check_ranges(op: &Op, desc: &MachineDesc) -> Result<(), String> {
    let check = |r: RegRef| -> Result<(), String> {
        let r = r.resolved();
        let n = u32::from(r.reg.phys().unwrap_or(0));
        let (limit, what) = match r.reg.class {
            RegClass::Gpr => (desc.general_regs_per_cluster, "general"),
            RegClass::Pair => (desc.general_regs_per_cluster.saturating_sub(1), "general"),
            RegClass::Addr => (desc.address_regs, "address"),
            RegClass::Macc => (desc.macc_regs_per_cluster, "MACC"),
        };
        if n >= limit {
            return Err(format!("{what} register {n} out of range"));
        }
        Ok(())
    };
    for o in &op.operands {
        match o {
            Operand::Reg(r) | Operand::ClusterReg(_, r) => check(*r)?,
            Operand::Mem(m) => check(RegRef::whole(m.base))?,
            _ => {}
        }
    }
    Ok(())
}

/// Assemble `text`. Symbols stay unbound until [`AsmProgram::link`].
pub fn parse_assembly(text: &str, desc: &MachineDesc) -> Result<AsmProgram, SimError> {
    let mut bundles: Vec<Vec<Op>> = Vec::new();
    let mut labels: Vec<(String, usize)> = Vec::new();
    // A label closes the open bundle.
    let mut open = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| SimError::AsmSyntaxError { line: line_no, msg };
        let line = raw.split("//").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('.') {
            let mut words = rest.split_whitespace();
            match (words.next(), words.next(), words.next()) {
                (Some("code_align"), Some(n), None) if n.parse::<u32>().is_ok() => continue,
                _ => return Err(err(format!("unknown directive `{line}`"))),
            }
        }
        if let Some(name) = line.strip_suffix(':') {
            let name = name.trim();
            if !is_label(name) {
                return Err(err(format!("bad label `{name}`")));
            }
            if labels.iter().any(|(l, _)| l == name) {
                return Err(err(format!("label `{name}` defined twice")));
            }
            labels.push((name.to_string(), bundles.len()));
            open = false;
            continue;
        }
        let (joins, body) = match line.strip_prefix("||") {
            Some(rest) => (true, rest),
            None => (false, line),
        };
        let op = parse_op(body, desc).ok_or_else(|| err(format!("unrecognized instruction `{body}`")))?;
        check_ranges(&op, desc).map_err(err)?;
        if joins {
            if !open {
                return Err(err("`||` without an open bundle".into()));
            }
            bundles.last_mut().expect("open bundle").push(op);
        } else {
            bundles.push(vec![op]);
            open = true;
        }
    }
    AsmProgram::new(bundles, labels)
}

impl AsmProgram {
    /// Build from bundles and `(label, bundle index)` pairs, resolving
    /// branch targets.
    pub fn new(bundles: Vec<Vec<Op>>, labels: Vec<(String, usize)>) -> Result<AsmProgram, SimError> {
        let index: BTreeMap<&str, usize> = labels.iter().map(|(l, i)| (l.as_str(), *i)).collect();
        let mut targets = Vec::with_capacity(bundles.len());
        for ops in &bundles {
            let mut target = None;
            for op in ops {
                if let Some(l) = op.label_target() {
                    target = Some(*index.get(l).ok_or_else(|| SimError::UndefinedLabel(l.to_string()))?);
                }
            }
            targets.push(target);
        }
        Ok(AsmProgram { bundles, targets, labels, symbols: BTreeMap::new() })
    }

    /// The allocated function as a program, symbols bound to its layout.
    pub fn from_cgir(f: &CgirFunction) -> Result<AsmProgram, SimError> {
        let f = f.materialized();
        let mut bundles = Vec::new();
        let mut labels = Vec::new();
        for b in &f.blocks {
            labels.push((b.label.clone(), bundles.len()));
            bundles.extend(b.bundles.iter().map(|x| x.ops.clone()));
        }
        AsmProgram::new(bundles, labels)?.link(&f.symbols.addresses())
    }
}
