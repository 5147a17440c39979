//! Declarative machine description: clusters, register files, MACC
//! resources, per-class latencies, issue slots and print formats.
//!
//! The text format is line oriented with four sections:
//!
//! ```text
//! [clusters]
//! names x y z t          # single-letter cluster names, in lane order
//! simd_width 2           # words per cluster in double-word mode
//! [registers]
//! general 64             # r0..r63 per cluster
//! address 16             # u0..u15, shared
//! macc 4                 # MACC0..MACC3 per cluster
//! [opcodes]
//! add 1 alu "{c}{0}={1}+{2}"   # class latency slots "print format"
//! [branch]
//! penalty 5
//! ```
//!
//! `#` starts a comment outside quotes. Omitted cluster, register and branch
//! keys take the defaults shown above; every opcode class must be listed.

mod format;
mod slots;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use self::format::{cluster_prefix, parse_operand, render_operand, render_reg, PrintFormat, Segment};
pub use self::slots::{bundle_cost, first_slot_conflict, SlotBoard};
use crate::isa::OpcodeClass;

/// The shipped default description.
pub const DEFAULT_DESCRIPTION: &str = include_str!("../../machines/bw.mdesc");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeInfo {
    pub class: OpcodeClass,
    pub latency: u32,
    /// Alternative issue slots; an op takes the first one free on each of its clusters.
    pub slots: Vec<String>,
    pub print_format: PrintFormat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineDesc {
    pub cluster_names: Vec<String>,
    pub general_regs_per_cluster: u32,
    pub address_regs: u32,
    pub macc_regs_per_cluster: u32,
    pub simd_width_per_cluster: u32,
    pub opcode_table: BTreeMap<OpcodeClass, OpcodeInfo>,
    pub branch_taken_penalty: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoClusters,
    TooManyClusters(usize),
    BadClusterName(String),
    NoRegisters(&'static str),
    MissingOpcode(OpcodeClass),
    ZeroLatency(OpcodeClass),
    NoSlot(OpcodeClass),
    ArityMismatch { class: OpcodeClass, expected: usize, found: Vec<usize> },
    ClusterPlaceholder(OpcodeClass),
    ZeroSimdWidth,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoClusters => write!(f, "cluster count must be >= 1"),
            Violation::TooManyClusters(n) => write!(f, "{n} clusters exceeds the limit of 8"),
            Violation::BadClusterName(n) => {
                write!(f, "cluster name `{n}` must be a single unique letter other than r, u, M")
            }
            Violation::NoRegisters(file) => write!(f, "{file} register file is empty"),
            Violation::MissingOpcode(c) => write!(f, "opcode class `{c}` is missing"),
            Violation::ZeroLatency(c) => write!(f, "latency >= 1 required for `{c}`"),
            Violation::NoSlot(c) => write!(f, "`{c}` has no issue slot"),
            Violation::ArityMismatch { class, expected, found } => {
                write!(f, "print format for `{class}` has placeholders {found:?} but arity {expected}")
            }
            Violation::ClusterPlaceholder(c) => {
                write!(f, "print format for `{c}` must contain {{c}} exactly when the op is clustered")
            }
            Violation::ZeroSimdWidth => write!(f, "simd_width must be >= 1"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown opcode class `{0}`")]
    UnknownOpcodeClass(String),
    #[error("line {line}: duplicate entry `{key}`")]
    DuplicateEntry { line: usize, key: String },
    #[error("invalid machine description: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Clusters,
    Registers,
    Opcodes,
    Branch,
}

/// Split a line into whitespace-separated fields, keeping `"..."` intact
/// and dropping `#` comments outside quotes.
fn fields(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match c {
            '#' => break,
            '"' => {
                let mut quoted = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(q) => quoted.push(q),
                        None => return Err("unterminated string".into()),
                    }
                }
                out.push(format!("\"{quoted}"));
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn parse_u32(s: &str, line: usize) -> Result<u32, DescError> {
    s.parse().map_err(|_| DescError::Syntax { line, msg: format!("expected a number, found `{s}`") })
}

pub fn load_machine_description(text: &str) -> Result<MachineDesc, DescError> {
    let mut desc = MachineDesc {
        cluster_names: ["x", "y", "z", "t"].iter().map(|s| s.to_string()).collect(),
        general_regs_per_cluster: 64,
        address_regs: 16,
        macc_regs_per_cluster: 4,
        simd_width_per_cluster: 2,
        opcode_table: BTreeMap::new(),
        branch_taken_penalty: 5,
    };
    let mut section = Section::None;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let f = fields(raw).map_err(|msg| DescError::Syntax { line, msg })?;
        if f.is_empty() {
            continue;
        }
        if f[0].starts_with('[') {
            section = match f[0].as_str() {
                "[clusters]" => Section::Clusters,
                "[registers]" => Section::Registers,
                "[opcodes]" => Section::Opcodes,
                "[branch]" => Section::Branch,
                other => return Err(DescError::Syntax { line, msg: format!("unknown section {other}") }),
            };
            if f.len() > 1 {
                return Err(DescError::Syntax { line, msg: "trailing text after section".into() });
            }
            continue;
        }
        let key = match section {
            Section::Opcodes => format!("opcode {}", f[0]),
            _ => f[0].clone(),
        };
        if seen.insert(key.clone(), line).is_some() {
            return Err(DescError::DuplicateEntry { line, key });
        }
        let want = |n: usize| -> Result<(), DescError> {
            if f.len() == n {
                Ok(())
            } else {
                Err(DescError::Syntax { line, msg: format!("`{}` expects {} field(s)", f[0], n - 1) })
            }
        };
        match section {
            Section::None => return Err(DescError::Syntax { line, msg: "entry outside of a section".into() }),
            Section::Clusters => match f[0].as_str() {
                "names" => desc.cluster_names = f[1..].to_vec(),
                "simd_width" => {
                    want(2)?;
                    desc.simd_width_per_cluster = parse_u32(&f[1], line)?;
                }
                other => return Err(DescError::Syntax { line, msg: format!("unknown cluster key `{other}`") }),
            },
            Section::Registers => {
                want(2)?;
                let v = parse_u32(&f[1], line)?;
                match f[0].as_str() {
                    "general" => desc.general_regs_per_cluster = v,
                    "address" => desc.address_regs = v,
                    "macc" => desc.macc_regs_per_cluster = v,
                    other => return Err(DescError::Syntax { line, msg: format!("unknown register key `{other}`") }),
                }
            }
            Section::Branch => {
                want(2)?;
                match f[0].as_str() {
                    "penalty" => desc.branch_taken_penalty = parse_u32(&f[1], line)?,
                    other => return Err(DescError::Syntax { line, msg: format!("unknown branch key `{other}`") }),
                }
            }
            Section::Opcodes => {
                want(4)?;
                let class = OpcodeClass::from_name(&f[0]).ok_or_else(|| DescError::UnknownOpcodeClass(f[0].clone()))?;
                let latency = parse_u32(&f[1], line)?;
                let slots: Vec<String> = f[2].split('|').filter(|s| !s.is_empty()).map(str::to_string).collect();
                let Some(fmt_src) = f[3].strip_prefix('"') else {
                    return Err(DescError::Syntax { line, msg: "print format must be quoted".into() });
                };
                let print_format = PrintFormat::parse(fmt_src).map_err(|msg| DescError::Syntax { line, msg })?;
                desc.opcode_table.insert(class, OpcodeInfo { class, latency, slots, print_format });
            }
        }
    }

    let violations = validate_description(&desc);
    if violations.is_empty() {
        Ok(desc)
    } else {
        Err(DescError::Invalid(violations))
    }
}

/// Check every invariant and return the complete list of violations.
pub fn validate_description(desc: &MachineDesc) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = desc.cluster_names.len();
    if n == 0 {
        out.push(Violation::NoClusters);
    }
    if n > 8 {
        out.push(Violation::TooManyClusters(n));
    }
    for (i, name) in desc.cluster_names.iter().enumerate() {
        let ok = name.chars().count() == 1
            && name.chars().all(|c| c.is_ascii_lowercase() && c != 'r' && c != 'u')
            && !desc.cluster_names[..i].contains(name);
        if !ok {
            out.push(Violation::BadClusterName(name.clone()));
        }
    }
    if desc.general_regs_per_cluster == 0 {
        out.push(Violation::NoRegisters("general"));
    }
    if desc.address_regs == 0 {
        out.push(Violation::NoRegisters("address"));
    }
    if desc.macc_regs_per_cluster == 0 {
        out.push(Violation::NoRegisters("macc"));
    }
    if desc.simd_width_per_cluster == 0 {
        out.push(Violation::ZeroSimdWidth);
    }
    for class in OpcodeClass::ALL {
        let Some(info) = desc.opcode_table.get(&class) else {
            out.push(Violation::MissingOpcode(class));
            continue;
        };
        if info.latency == 0 {
            out.push(Violation::ZeroLatency(class));
        }
        if info.slots.is_empty() {
            out.push(Violation::NoSlot(class));
        }
        let found = info.print_format.operand_placeholders();
        let expected = class.arity();
        if found != (0..expected).collect::<Vec<_>>() {
            out.push(Violation::ArityMismatch { class, expected, found });
        }
        if info.print_format.has_cluster() != class.is_clustered() {
            out.push(Violation::ClusterPlaceholder(class));
        }
    }
    out
}

pub fn lookup_opcode<'a>(desc: &'a MachineDesc, class: &str) -> Result<&'a OpcodeInfo, DescError> {
    OpcodeClass::from_name(class)
        .and_then(|c| desc.opcode_table.get(&c))
        .ok_or_else(|| DescError::UnknownOpcodeClass(class.to_string()))
}

impl MachineDesc {
    pub fn default_bw() -> MachineDesc {
        load_machine_description(DEFAULT_DESCRIPTION).expect("shipped description is valid")
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_names.len()
    }

    pub fn all_clusters(&self) -> crate::isa::ClusterSet {
        crate::isa::ClusterSet::all(self.cluster_count())
    }

    /// Entry for a class. Validated descriptions contain every class.
    pub fn opcode(&self, class: OpcodeClass) -> &OpcodeInfo {
        &self.opcode_table[&class]
    }

    pub fn latency(&self, class: OpcodeClass) -> u32 {
        self.opcode(class).latency
    }

    /// Elements per SIMD iteration in double-word mode.
    pub fn double_word_factor(&self) -> u32 {
        self.cluster_count() as u32 * self.simd_width_per_cluster
    }

    /// Serialize back to the text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[clusters]\n");
        s.push_str(&format!("names {}\n", self.cluster_names.join(" ")));
        s.push_str(&format!("simd_width {}\n\n", self.simd_width_per_cluster));
        s.push_str("[registers]\n");
        s.push_str(&format!("general {}\n", self.general_regs_per_cluster));
        s.push_str(&format!("address {}\n", self.address_regs));
        s.push_str(&format!("macc {}\n\n", self.macc_regs_per_cluster));
        s.push_str("[opcodes]\n");
        for info in self.opcode_table.values() {
            s.push_str(&format!(
                "{:<12} {:<3} {:<10} \"{}\"\n",
                info.class.name(),
                info.latency,
                info.slots.join("|"),
                info.print_format.source()
            ));
        }
        s.push_str("\n[branch]\n");
        s.push_str(&format!("penalty {}\n", self.branch_taken_penalty));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_description_loads() {
        let d = MachineDesc::default_bw();
        assert_eq!(d.cluster_count(), 4);
        assert_eq!(d.macc_regs_per_cluster, 4);
        assert_eq!(d.general_regs_per_cluster, 64);
        assert_eq!(d.address_regs, 16);
        assert_eq!(d.double_word_factor(), 8);
        assert!(validate_description(&d).is_empty());
        let expected = [
            ("load_word", 4),
            ("load_dual", 4),
            ("store_word", 4),
            ("mul", 4),
            ("add", 1),
            ("sub", 1),
            ("move_imm", 1),
            ("move_reg", 1),
            ("macc", 2),
            ("macc_init", 1),
            ("macc_read", 1),
            ("sigma", 2),
            ("addr_move", 1),
        ];
        for (name, lat) in expected {
            assert_eq!(lookup_opcode(&d, name).unwrap().latency, lat, "{name}");
        }
        assert_eq!(d.branch_taken_penalty, 5);
    }

    #[test]
    fn missing_macc_is_reported() {
        let text: String =
            DEFAULT_DESCRIPTION.lines().filter(|l| !l.starts_with("macc ")).map(|l| format!("{l}\n")).collect();
        match load_machine_description(&text) {
            Err(DescError::Invalid(v)) => {
                assert_eq!(v, vec![Violation::MissingOpcode(OpcodeClass::Macc)])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_cluster_machine() {
        let text = DEFAULT_DESCRIPTION.replace("names x y z t", "names x y");
        let d = load_machine_description(&text).unwrap();
        assert_eq!(d.cluster_count(), 2);
        assert_eq!(d.double_word_factor(), 4);
    }

    #[test]
    fn reports_every_violation() {
        let mut d = MachineDesc::default_bw();
        d.opcode_table.get_mut(&OpcodeClass::Mul).unwrap().latency = 0;
        d.opcode_table.get_mut(&OpcodeClass::Macc).unwrap().print_format = PrintFormat::parse("{c}{0}+={1}").unwrap();
        let v = validate_description(&d);
        assert_eq!(v.len(), 2);
        assert!(v.contains(&Violation::ZeroLatency(OpcodeClass::Mul)));
        assert!(v.iter().any(|x| matches!(x, Violation::ArityMismatch { class: OpcodeClass::Macc, .. })));
        assert!(v[0].to_string().contains("latency >= 1"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = load_machine_description("[clusters]\nnames x y\n[bogus]\n").unwrap_err();
        assert_eq!(err, DescError::Syntax { line: 3, msg: "unknown section [bogus]".into() });
        let err = load_machine_description("[branch]\npenalty 5\npenalty 6\n").unwrap_err();
        assert!(matches!(err, DescError::DuplicateEntry { line: 3, .. }));
        let err = load_machine_description("[opcodes]\nfrobnicate 1 alu \"{c}\"\n").unwrap_err();
        assert_eq!(err, DescError::UnknownOpcodeClass("frobnicate".into()));
    }

    #[test]
    fn lookup_unknown_class() {
        let d = MachineDesc::default_bw();
        assert_eq!(lookup_opcode(&d, "frobnicate"), Err(DescError::UnknownOpcodeClass("frobnicate".into())));
        assert_eq!(lookup_opcode(&d, "macc").unwrap().latency, 2);
        assert!(lookup_opcode(&d, "sigma").unwrap().print_format.source().contains("sigma"));
    }

    #[test]
    fn text_round_trip() {
        let d = MachineDesc::default_bw();
        let again = load_machine_description(&d.to_text()).unwrap();
        assert_eq!(d, again);
    }
}
