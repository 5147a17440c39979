//! Machine-level operation model shared by the code generator, the emitter,
//! the assembler and the simulator.

use std::fmt;

/// Opcode classes known to the machine description and the code generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpcodeClass {
    LoadWord,
    LoadDual,
    StoreWord,
    MoveImm,
    MoveReg,
    Add,
    Sub,
    Mul,
    Macc,
    MaccInit,
    MaccRead,
    Sigma,
    BranchCond,
    AddrMove,
}

/// What an operand slot of an opcode class accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandKind {
    Gpr,
    Pair,
    Macc,
    Addr,
    ImmOrSym,
    Mem,
    Cond,
    Label,
    /// A general register read on an explicit cluster set (`xyztr8`).
    ClusterGpr,
    /// Source of an address move: immediate, symbol or `xrN`.
    AddrSrc,
}

impl OpcodeClass {
    pub const ALL: [OpcodeClass; 14] = [
        OpcodeClass::LoadWord,
        OpcodeClass::LoadDual,
        OpcodeClass::StoreWord,
        OpcodeClass::MoveImm,
        OpcodeClass::MoveReg,
        OpcodeClass::Add,
        OpcodeClass::Sub,
        OpcodeClass::Mul,
        OpcodeClass::Macc,
        OpcodeClass::MaccInit,
        OpcodeClass::MaccRead,
        OpcodeClass::Sigma,
        OpcodeClass::BranchCond,
        OpcodeClass::AddrMove,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpcodeClass::LoadWord => "load_word",
            OpcodeClass::LoadDual => "load_dual",
            OpcodeClass::StoreWord => "store_word",
            OpcodeClass::MoveImm => "move_imm",
            OpcodeClass::MoveReg => "move_reg",
            OpcodeClass::Add => "add",
            OpcodeClass::Sub => "sub",
            OpcodeClass::Mul => "mul",
            OpcodeClass::Macc => "macc",
            OpcodeClass::MaccInit => "macc_init",
            OpcodeClass::MaccRead => "macc_read",
            OpcodeClass::Sigma => "sigma",
            OpcodeClass::BranchCond => "branch_cond",
            OpcodeClass::AddrMove => "addr_move",
        }
    }

    pub fn from_name(name: &str) -> Option<OpcodeClass> {
        OpcodeClass::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn operand_kinds(self) -> &'static [OperandKind] {
        use OperandKind::*;
        match self {
            OpcodeClass::LoadWord => &[Gpr, Mem],
            OpcodeClass::LoadDual => &[Pair, Mem],
            OpcodeClass::StoreWord => &[Mem, Gpr],
            OpcodeClass::MoveImm => &[Gpr, ImmOrSym],
            OpcodeClass::MoveReg => &[Gpr, Gpr],
            OpcodeClass::Add | OpcodeClass::Sub | OpcodeClass::Mul => &[Gpr, Gpr, Gpr],
            OpcodeClass::Macc => &[Macc, Gpr, Gpr],
            OpcodeClass::MaccInit => &[Macc, Gpr],
            OpcodeClass::MaccRead => &[Gpr, Macc],
            OpcodeClass::Sigma => &[Gpr, ClusterGpr],
            OpcodeClass::BranchCond => &[Gpr, Cond, Gpr, Label],
            OpcodeClass::AddrMove => &[Addr, AddrSrc],
        }
    }

    pub fn arity(self) -> usize {
        self.operand_kinds().len()
    }

    /// Whether the op executes on a cluster (and so carries a cluster prefix).
    pub fn is_clustered(self) -> bool {
        self != OpcodeClass::AddrMove
    }
}

impl fmt::Display for OpcodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bit set of cluster indices (position in the machine's cluster list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ClusterSet(u8);

impl ClusterSet {
    pub const EMPTY: ClusterSet = ClusterSet(0);
    pub const MAX_CLUSTERS: usize = 8;

    pub fn single(idx: usize) -> ClusterSet {
        ClusterSet(1 << idx)
    }

    pub fn all(count: usize) -> ClusterSet {
        if count >= 8 {
            ClusterSet(u8::MAX)
        } else {
            ClusterSet((1u8 << count) - 1)
        }
    }

    pub fn insert(&mut self, idx: usize) {
        self.0 |= 1 << idx;
    }

    pub fn contains(self, idx: usize) -> bool {
        self.0 & (1 << idx) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..8).filter(move |&i| self.contains(i))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegClass {
    /// One 32-bit general register per cluster (`r0..r63`).
    Gpr,
    /// Even/odd adjacent general register pair, written `r{hi}:{lo}`.
    Pair,
    /// Shared address register (`u0..u15`).
    Addr,
    /// Dedicated multiply-accumulate register (`MACC0..MACC3`).
    Macc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegId {
    Virt(u32),
    /// Physical register number; for pairs, the even low register.
    Phys(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg {
    pub class: RegClass,
    pub id: RegId,
}

impl Reg {
    pub fn virt(class: RegClass, n: u32) -> Reg {
        Reg { class, id: RegId::Virt(n) }
    }
    pub fn gpr(n: u8) -> Reg {
        Reg { class: RegClass::Gpr, id: RegId::Phys(n) }
    }
    pub fn pair(low: u8) -> Reg {
        Reg { class: RegClass::Pair, id: RegId::Phys(low) }
    }
    pub fn addr(n: u8) -> Reg {
        Reg { class: RegClass::Addr, id: RegId::Phys(n) }
    }
    pub fn macc(n: u8) -> Reg {
        Reg { class: RegClass::Macc, id: RegId::Phys(n) }
    }
    pub fn is_virtual(self) -> bool {
        matches!(self.id, RegId::Virt(_))
    }
    pub fn phys(self) -> Option<u8> {
        match self.id {
            RegId::Phys(n) => Some(n),
            RegId::Virt(_) => None,
        }
    }
}

/// Which part of a register an operand names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    Whole,
    Lo,
    Hi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegRef {
    pub reg: Reg,
    pub half: Half,
}

impl RegRef {
    pub fn whole(reg: Reg) -> RegRef {
        RegRef { reg, half: Half::Whole }
    }
    pub fn lo(reg: Reg) -> RegRef {
        RegRef { reg, half: Half::Lo }
    }
    pub fn hi(reg: Reg) -> RegRef {
        RegRef { reg, half: Half::Hi }
    }

    /// Collapse a physical pair half into the single register it names.
    pub fn resolved(self) -> RegRef {
        match (self.reg.class, self.reg.id, self.half) {
            (RegClass::Pair, RegId::Phys(n), Half::Lo) => RegRef::whole(Reg::gpr(n)),
            (RegClass::Pair, RegId::Phys(n), Half::Hi) => RegRef::whole(Reg::gpr(n + 1)),
            _ => self,
        }
    }
}

/// Branch comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cond {
    pub fn symbol(self) -> &'static str {
        match self {
            Cond::Eq => "==",
            Cond::Ne => "!=",
            Cond::Lt => "<",
            Cond::Le => "<=",
            Cond::Gt => ">",
            Cond::Ge => ">=",
        }
    }

    pub fn holds(self, a: i32, b: i32) -> bool {
        match self {
            Cond::Eq => a == b,
            Cond::Ne => a != b,
            Cond::Lt => a < b,
            Cond::Le => a <= b,
            Cond::Gt => a > b,
            Cond::Ge => a >= b,
        }
    }
}

/// Memory reference `[uA+=inc,F]` (post-increment) or `[uA+disp,F]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemRef {
    pub base: Reg,
    /// Post-increment amount, or displacement when `post_inc` is false.
    pub amount: i32,
    pub post_inc: bool,
    /// Access flag 1: SIMD distributed across the op's clusters.
    pub distributed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(RegRef),
    ClusterReg(ClusterSet, RegRef),
    Imm(i32),
    Sym { name: String, offset: i32 },
    Mem(MemRef),
    Cond(Cond),
    Label(String),
}

/// Where annotation wants an op to execute; cluster assignment resolves it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    Scalar,
    Vector,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Op {
    pub class: OpcodeClass,
    pub placement: Placement,
    pub clusters: ClusterSet,
    pub operands: Vec<Operand>,
}

impl Op {
    pub fn new(class: OpcodeClass, placement: Placement, operands: Vec<Operand>) -> Op {
        Op { class, placement, clusters: ClusterSet::EMPTY, operands }
    }

    /// Registers written by the op (address post-increments included).
    pub fn defs(&self) -> Vec<Reg> {
        let mut out = Vec::new();
        for (i, opnd) in self.operands.iter().enumerate() {
            match opnd {
                Operand::Reg(r) if i == 0 && !matches!(self.class, OpcodeClass::BranchCond) => out.push(r.reg),
                Operand::Mem(m) if m.post_inc => out.push(m.base),
                _ => {}
            }
        }
        out
    }

    /// Registers read by the op.
    pub fn uses(&self) -> Vec<Reg> {
        let mut out = Vec::new();
        for (i, opnd) in self.operands.iter().enumerate() {
            match opnd {
                Operand::Reg(r) => {
                    let is_dest = i == 0 && !matches!(self.class, OpcodeClass::BranchCond | OpcodeClass::Macc);
                    if !is_dest {
                        out.push(r.reg);
                    }
                }
                Operand::ClusterReg(_, r) => out.push(r.reg),
                Operand::Mem(m) => out.push(m.base),
                _ => {}
            }
        }
        out
    }

    pub fn is_branch(&self) -> bool {
        self.class == OpcodeClass::BranchCond
    }

    pub fn touches_memory(&self) -> bool {
        matches!(self.class, OpcodeClass::LoadWord | OpcodeClass::LoadDual | OpcodeClass::StoreWord)
    }

    pub fn label_target(&self) -> Option<&str> {
        self.operands.iter().find_map(|o| match o {
            Operand::Label(l) => Some(l.as_str()),
            _ => None,
        })
    }

    /// Apply `f` to every register operand.
    pub fn map_regs(&mut self, mut f: impl FnMut(Reg) -> Reg) {
        for opnd in &mut self.operands {
            match opnd {
                Operand::Reg(r) | Operand::ClusterReg(_, r) => r.reg = f(r.reg),
                Operand::Mem(m) => m.base = f(m.base),
                _ => {}
            }
        }
    }
}
