//! Instruction annotation: expand the loop IR into CGIR ops on virtual
//! registers, one op per bundle.
//!
//! Scalars live in registers for the whole function: loaded at entry when
//! their old value can be observed, stored back at exit when assigned.
//! Induction variables are never stored back. Every array access inside a
//! loop gets its own address register, set up in the loop preheader and
//! post-incremented by `coef * step` words per iteration.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{symbol_name, Block, Bundle, CgirFunction, CodegenError, LoopLabel, SymbolTable};
use crate::frontend::ir::{affine_of, AccId, Expr, LaneLayout, Loop, LoopIr, Node, Place};
use crate::isa::{ClusterSet, Cond, MemRef, Op, OpcodeClass, Operand, Placement, Reg, RegClass, RegRef};
use crate::machine::MachineDesc;

use OpcodeClass as C;

fn r(reg: Reg) -> Operand {
    Operand::Reg(RegRef::whole(reg))
}

fn sym(var: &str, offset: i32) -> Operand {
    Operand::Sym { name: symbol_name(var), offset }
}

struct Access {
    array: String,
    base: Reg,
    inc: i32,
    distributed: bool,
}

impl Access {
    fn mem(&self) -> Operand {
        Operand::Mem(MemRef {
            base: self.base,
            amount: self.inc,
            post_inc: self.inc != 0,
            distributed: self.distributed,
        })
    }
}

struct LoopCtx {
    var: String,
    /// Constant value of `var` when the preheader runs.
    start: Option<i32>,
    queue: VecDeque<Access>,
}

/// Element access as seen by the collection walk.
struct PendingAccess {
    array: String,
    index: Expr,
    distributed: bool,
}

struct Lowerer<'a> {
    ir: &'a LoopIr,
    desc: &'a MachineDesc,
    blocks: Vec<Block>,
    cur: Block,
    next_vreg: u32,
    next_label: u32,
    scalars: BTreeMap<String, Reg>,
    constants: BTreeMap<String, i32>,
    accs: BTreeMap<AccId, (LaneLayout, Vec<Reg>)>,
    loops: Vec<LoopCtx>,
    loop_labels: Vec<LoopLabel>,
    reads: BTreeSet<String>,
}

/// Scalars whose value is read: loads outside index expressions, loop
/// bounds and reduction targets.
fn value_reads(nodes: &[Node], out: &mut BTreeSet<String>) {
    fn expr(e: &Expr, out: &mut BTreeSet<String>) {
        match e {
            Expr::Const(_) | Expr::Load(Place::Element(..)) => {}
            Expr::Load(Place::Scalar(n)) => {
                out.insert(n.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                expr(a, out);
                expr(b, out);
            }
        }
    }
    for n in nodes {
        match n {
            Node::Store(s) => expr(&s.value, out),
            Node::Loop(l) => {
                expr(&l.lower, out);
                expr(&l.upper, out);
                value_reads(&l.body, out);
            }
            Node::MaccAccum { lhs, rhs, .. } => {
                expr(lhs, out);
                expr(rhs, out);
            }
            Node::MaccReduce { target, .. } => {
                out.insert(target.clone());
            }
            Node::MaccInit { .. } => {}
        }
    }
}

/// Scalars assigned, split by whether the assignment sits inside a loop.
fn scalar_writes(nodes: &[Node], in_loop: bool, all: &mut BTreeSet<String>, looped: &mut BTreeSet<String>) {
    for n in nodes {
        let target = match n {
            Node::Store(s) => match &s.target {
                Place::Scalar(v) => Some(v),
                Place::Element(..) => None,
            },
            Node::MaccReduce { target, .. } => Some(target),
            Node::Loop(l) => {
                scalar_writes(&l.body, true, all, looped);
                None
            }
            _ => None,
        };
        if let Some(t) = target {
            all.insert(t.clone());
            if in_loop {
                looped.insert(t.clone());
            }
        }
    }
}

impl<'a> Lowerer<'a> {
    fn vreg(&mut self, class: RegClass) -> Reg {
        self.next_vreg += 1;
        Reg::virt(class, self.next_vreg - 1)
    }

    fn gpr(&mut self) -> Reg {
        self.vreg(RegClass::Gpr)
    }

    fn label(&mut self) -> String {
        self.next_label += 1;
        format!("_Lt_0_{}", self.next_label - 1)
    }

    fn emit(&mut self, class: OpcodeClass, placement: Placement, operands: Vec<Operand>) {
        self.cur.bundles.push(Bundle { ops: vec![Op::new(class, placement, operands)] });
    }

    fn start_block(&mut self, label: String, depth: u32) {
        let next = Block { label, depth, bundles: Vec::new() };
        let done = std::mem::replace(&mut self.cur, next);
        self.blocks.push(done);
    }

    fn scalar_reg(&self, name: &str) -> Result<Reg, CodegenError> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| CodegenError::UnsupportedNode(format!("scalar `{name}` has no register")))
    }

    fn collect_expr(e: &Expr, out: &mut Vec<PendingAccess>) {
        match e {
            Expr::Const(_) | Expr::Load(Place::Scalar(_)) => {}
            Expr::Load(Place::Element(a, i)) => {
                out.push(PendingAccess { array: a.clone(), index: (**i).clone(), distributed: false })
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                Self::collect_expr(a, out);
                Self::collect_expr(b, out);
            }
        }
    }

    /// Element accesses of a loop body in the order lowering consumes them.
    fn collect(&self, nodes: &[Node], out: &mut Vec<PendingAccess>) {
        for n in nodes {
            match n {
                Node::Store(s) => {
                    Self::collect_expr(&s.value, out);
                    if let Place::Element(a, i) = &s.target {
                        out.push(PendingAccess { array: a.clone(), index: (**i).clone(), distributed: false });
                    }
                }
                Node::Loop(l) => {
                    Self::collect_expr(&l.lower, out);
                    if l.const_trip_count().is_none() {
                        Self::collect_expr(&l.upper, out);
                    }
                }
                Node::MaccAccum { acc, lhs, rhs, .. } => {
                    let vector = self.ir.accumulator(*acc).is_some_and(|a| a.layout != LaneLayout::Scalar);
                    for side in [lhs, rhs] {
                        match (vector, side) {
                            (true, Expr::Load(Place::Element(a, i))) => {
                                out.push(PendingAccess { array: a.clone(), index: (**i).clone(), distributed: true })
                            }
                            _ => Self::collect_expr(side, out),
                        }
                    }
                }
                Node::MaccInit { .. } | Node::MaccReduce { .. } => {}
            }
        }
    }

    fn ivars(&self) -> Vec<String> {
        self.loops.iter().map(|l| l.var.clone()).collect()
    }

    /// Emit the address computation for an access and return its register.
    fn address_init(&mut self, array: &str, index: &Expr) -> Result<(Reg, Option<i32>), CodegenError> {
        let ivars = self.ivars();
        let mut aff = affine_of(index, &ivars)
            .ok_or_else(|| CodegenError::UnsupportedNode(format!("non-affine index into `{array}`")))?;
        let u = self.vreg(RegClass::Addr);
        let inner = self.loops.last().map(|l| aff.coef(&l.var));
        if let Some(LoopCtx { var, start: Some(lo), .. }) = self.loops.last() {
            if let Some(c) = aff.coefs.remove(var) {
                aff.constant = aff.constant.wrapping_add(c.wrapping_mul(*lo));
            }
        }
        if aff.coefs.is_empty() {
            self.emit(C::AddrMove, Placement::Shared, vec![r(u), sym(array, aff.constant)]);
            return Ok((u, inner));
        }
        let mut acc = self.gpr();
        self.emit(C::MoveImm, Placement::Scalar, vec![r(acc), sym(array, aff.constant)]);
        for (var, coef) in &aff.coefs {
            let v = self.scalar_reg(var)?;
            let term = if *coef == 1 {
                v
            } else {
                let c = self.gpr();
                self.emit(C::MoveImm, Placement::Scalar, vec![r(c), Operand::Imm(*coef)]);
                let m = self.gpr();
                self.emit(C::Mul, Placement::Scalar, vec![r(m), r(c), r(v)]);
                m
            };
            let next = self.gpr();
            self.emit(C::Add, Placement::Scalar, vec![r(next), r(acc), r(term)]);
            acc = next;
        }
        let src = Operand::ClusterReg(ClusterSet::EMPTY, RegRef::whole(acc));
        self.emit(C::AddrMove, Placement::Shared, vec![r(u), src]);
        Ok((u, inner))
    }

    fn next_access(&mut self, array: &str, index: &Expr, distributed: bool) -> Result<Access, CodegenError> {
        if let Some(ctx) = self.loops.last_mut() {
            let a = ctx.queue.pop_front().expect("access queue matches the lowering walk");
            debug_assert_eq!(a.array, array);
            debug_assert_eq!(a.distributed, distributed);
            return Ok(a);
        }
        let (base, _) = self.address_init(array, index)?;
        Ok(Access { array: array.to_string(), base, inc: 0, distributed })
    }

    fn lower(&mut self, e: &Expr) -> Result<Reg, CodegenError> {
        match e {
            Expr::Load(Place::Scalar(n)) if !self.constants.contains_key(n) => self.scalar_reg(n),
            _ => {
                let d = self.gpr();
                self.lower_into(e, d)?;
                Ok(d)
            }
        }
    }

    fn lower_into(&mut self, e: &Expr, dest: Reg) -> Result<(), CodegenError> {
        let s = Placement::Scalar;
        match e {
            Expr::Const(v) => self.emit(C::MoveImm, s, vec![r(dest), Operand::Imm(*v)]),
            Expr::Load(Place::Scalar(n)) => {
                if let Some(v) = self.constants.get(n) {
                    let v = *v;
                    self.emit(C::MoveImm, s, vec![r(dest), Operand::Imm(v)]);
                } else {
                    let src = self.scalar_reg(n)?;
                    if src != dest {
                        self.emit(C::MoveReg, s, vec![r(dest), r(src)]);
                    }
                }
            }
            Expr::Load(Place::Element(a, i)) => {
                let acc = self.next_access(a, i, false)?;
                self.emit(C::LoadWord, s, vec![r(dest), acc.mem()]);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let class = match e {
                    Expr::Add(..) => C::Add,
                    Expr::Sub(..) => C::Sub,
                    _ => C::Mul,
                };
                let x = self.lower(a)?;
                let y = self.lower(b)?;
                self.emit(class, s, vec![r(dest), r(x), r(y)]);
            }
        }
        Ok(())
    }

    fn acc_regs(&mut self, acc: AccId) -> Result<(LaneLayout, Vec<Reg>), CodegenError> {
        if let Some(v) = self.accs.get(&acc) {
            return Ok(v.clone());
        }
        let decl = self
            .ir
            .accumulator(acc)
            .ok_or_else(|| CodegenError::UnsupportedNode(format!("undeclared accumulator acc{}", acc.0)))?;
        let n = match decl.layout {
            LaneLayout::DoubleWord => {
                if self.desc.simd_width_per_cluster < 2 {
                    return Err(CodegenError::UnsupportedNode(
                        "double-word accumulator on a single-word machine".into(),
                    ));
                }
                2
            }
            LaneLayout::SingleWord | LaneLayout::Scalar => 1,
        };
        let regs: Vec<Reg> = (0..n).map(|_| self.vreg(RegClass::Macc)).collect();
        self.accs.insert(acc, (decl.layout, regs.clone()));
        Ok((decl.layout, regs))
    }

    fn lower_nodes(&mut self, nodes: &[Node]) -> Result<(), CodegenError> {
        for n in nodes {
            self.lower_node(n)?;
        }
        Ok(())
    }

    fn lower_node(&mut self, n: &Node) -> Result<(), CodegenError> {
        match n {
            Node::Store(st) => match &st.target {
                Place::Scalar(v) => {
                    let dest = self.scalar_reg(v)?;
                    self.lower_into(&st.value, dest)
                }
                Place::Element(a, i) => {
                    let val = self.lower(&st.value)?;
                    let acc = self.next_access(a, i, false)?;
                    self.emit(C::StoreWord, Placement::Scalar, vec![acc.mem(), r(val)]);
                    Ok(())
                }
            },
            Node::Loop(l) => self.lower_loop(l),
            Node::MaccInit { acc, .. } => {
                let (layout, regs) = self.acc_regs(*acc)?;
                let p = placement_of(layout);
                let z = self.gpr();
                self.emit(C::MoveImm, p, vec![r(z), Operand::Imm(0)]);
                for m in regs {
                    self.emit(C::MaccInit, p, vec![r(m), r(z)]);
                }
                Ok(())
            }
            Node::MaccAccum { acc, lhs, rhs, .. } => {
                let (layout, regs) = self.acc_regs(*acc)?;
                match layout {
                    LaneLayout::Scalar => {
                        let x = self.lower(lhs)?;
                        let y = self.lower(rhs)?;
                        self.emit(C::Macc, Placement::Scalar, vec![r(regs[0]), r(x), r(y)]);
                    }
                    LaneLayout::SingleWord => {
                        let x = self.vector_load(lhs, RegClass::Gpr)?;
                        let y = self.vector_load(rhs, RegClass::Gpr)?;
                        self.emit(C::Macc, Placement::Vector, vec![r(regs[0]), r(x), r(y)]);
                    }
                    LaneLayout::DoubleWord => {
                        let x = self.vector_load(lhs, RegClass::Pair)?;
                        let y = self.vector_load(rhs, RegClass::Pair)?;
                        let v = Placement::Vector;
                        let hi = |p| Operand::Reg(RegRef::hi(p));
                        let lo = |p| Operand::Reg(RegRef::lo(p));
                        self.emit(C::Macc, v, vec![r(regs[0]), hi(x), hi(y)]);
                        self.emit(C::Macc, v, vec![r(regs[1]), lo(x), lo(y)]);
                    }
                }
                Ok(())
            }
            Node::MaccReduce { acc, target, .. } => {
                let (layout, regs) = self.acc_regs(*acc)?;
                let t = self.scalar_reg(target)?;
                let p = placement_of(layout);
                let mut parts = Vec::new();
                for m in regs {
                    let d = self.gpr();
                    self.emit(C::MaccRead, p, vec![r(d), r(m)]);
                    parts.push(d);
                }
                let mut sum = parts[0];
                for &q in &parts[1..] {
                    let d = self.gpr();
                    self.emit(C::Add, p, vec![r(d), r(sum), r(q)]);
                    sum = d;
                }
                if layout != LaneLayout::Scalar {
                    let d = self.gpr();
                    let src = Operand::ClusterReg(ClusterSet::EMPTY, RegRef::whole(sum));
                    self.emit(C::Sigma, Placement::Scalar, vec![r(d), src]);
                    sum = d;
                }
                self.emit(C::Add, Placement::Scalar, vec![r(t), r(t), r(sum)]);
                Ok(())
            }
        }
    }

    fn vector_load(&mut self, e: &Expr, class: RegClass) -> Result<Reg, CodegenError> {
        let Expr::Load(Place::Element(a, i)) = e else {
            return Err(CodegenError::UnsupportedNode(format!("vector MACC operand `{e}`")));
        };
        let acc = self.next_access(a, i, true)?;
        let d = self.vreg(class);
        let opc = if class == RegClass::Pair { C::LoadDual } else { C::LoadWord };
        self.emit(opc, Placement::Vector, vec![r(d), acc.mem()]);
        Ok(d)
    }

    fn lower_loop(&mut self, l: &Loop) -> Result<(), CodegenError> {
        let iv = self.scalar_reg(&l.var)?;
        let trip = l.const_trip_count();
        if trip == Some(0) && !self.reads.contains(&l.var) {
            return Ok(());
        }
        self.lower_into(&l.lower, iv)?;
        if trip == Some(0) {
            return Ok(());
        }
        let hi = match trip {
            None => Some(self.lower(&l.upper)?),
            Some(_) => None,
        };

        self.loops.push(LoopCtx { var: l.var.clone(), start: l.lower.as_const(), queue: VecDeque::new() });
        let mut pending = Vec::new();
        self.collect(&l.body, &mut pending);
        for p in pending {
            let (base, coef) = self.address_init(&p.array, &p.index)?;
            let inc = coef.unwrap_or(0).wrapping_mul(l.step);
            let access = Access { array: p.array, base, inc, distributed: p.distributed };
            self.loops.last_mut().expect("pushed above").queue.push_back(access);
        }

        let body = self.label();
        let exit = self.label();
        let s = Placement::Scalar;
        if let Some(hi) = hi {
            self.emit(C::BranchCond, s, vec![r(iv), Operand::Cond(Cond::Ge), r(hi), Operand::Label(exit.clone())]);
        }
        self.start_block(body.clone(), l.depth);
        let innermost = !l.body.iter().any(|n| matches!(n, Node::Loop(_)));
        self.loop_labels.push(LoopLabel { label: body.clone(), loop_id: l.id, innermost, lanes: l.lanes });
        self.lower_nodes(&l.body)?;

        let step = self.gpr();
        self.emit(C::MoveImm, s, vec![r(step), Operand::Imm(l.step)]);
        let target = Operand::Label(body);
        match (trip, hi) {
            (Some(t), _) => {
                let lo = l.lower.as_const().expect("constant trip count has constant bounds");
                let end = (i64::from(lo) + i64::from(t) * i64::from(l.step)) as i32;
                let bound = self.gpr();
                if l.lanes > 1 {
                    self.emit(C::MoveImm, s, vec![r(bound), Operand::Imm(end.wrapping_sub(1))]);
                    self.emit(C::Add, s, vec![r(iv), r(iv), r(step)]);
                    self.emit(C::BranchCond, s, vec![r(bound), Operand::Cond(Cond::Ge), r(iv), target]);
                } else {
                    self.emit(C::MoveImm, s, vec![r(bound), Operand::Imm(end)]);
                    self.emit(C::Add, s, vec![r(iv), r(iv), r(step)]);
                    self.emit(C::BranchCond, s, vec![r(iv), Operand::Cond(Cond::Ne), r(bound), target]);
                }
            }
            (None, Some(hi)) => {
                self.emit(C::Add, s, vec![r(iv), r(iv), r(step)]);
                self.emit(C::BranchCond, s, vec![r(hi), Operand::Cond(Cond::Gt), r(iv), target]);
            }
            (None, None) => unreachable!(),
        }
        let ctx = self.loops.pop().expect("pushed above");
        debug_assert!(ctx.queue.is_empty());
        self.start_block(exit, l.depth - 1);
        Ok(())
    }
}

fn placement_of(layout: LaneLayout) -> Placement {
    match layout {
        LaneLayout::Scalar => Placement::Scalar,
        LaneLayout::SingleWord | LaneLayout::DoubleWord => Placement::Vector,
    }
}

/// Lower a loop IR (original or MACC-rewritten) to unbundled CGIR.
pub fn annotate(ir: &LoopIr, desc: &MachineDesc) -> Result<CgirFunction, CodegenError> {
    let mut lw = Lowerer {
        ir,
        desc,
        blocks: Vec::new(),
        cur: Block { label: String::new(), depth: 0, bundles: Vec::new() },
        next_vreg: 0,
        next_label: 0,
        scalars: BTreeMap::new(),
        constants: BTreeMap::new(),
        accs: BTreeMap::new(),
        loops: Vec::new(),
        loop_labels: Vec::new(),
        reads: BTreeSet::new(),
    };
    lw.cur.label = lw.label();
    for v in &ir.vars {
        if v.len.is_some() {
            continue;
        }
        if v.constant {
            lw.constants.insert(v.name.clone(), v.init.unwrap_or(0));
        } else {
            let reg = lw.gpr();
            lw.scalars.insert(v.name.clone(), reg);
        }
    }

    let mut reads = BTreeSet::new();
    value_reads(&ir.body, &mut reads);
    lw.reads = reads.clone();
    let (mut assigned, mut looped) = (BTreeSet::new(), BTreeSet::new());
    scalar_writes(&ir.body, false, &mut assigned, &mut looped);

    for v in &ir.vars {
        let Some(&reg) = lw.scalars.get(&v.name) else { continue };
        if reads.contains(&v.name) || (looped.contains(&v.name) && !v.induction) {
            let u = lw.vreg(RegClass::Addr);
            lw.emit(C::AddrMove, Placement::Shared, vec![r(u), sym(&v.name, 0)]);
            let mem = MemRef { base: u, amount: 0, post_inc: false, distributed: false };
            lw.emit(C::LoadWord, Placement::Scalar, vec![r(reg), Operand::Mem(mem)]);
        }
    }

    lw.lower_nodes(&ir.body)?;

    for v in &ir.vars {
        let Some(&reg) = lw.scalars.get(&v.name) else { continue };
        if assigned.contains(&v.name) && !v.induction {
            let u = lw.vreg(RegClass::Addr);
            lw.emit(C::AddrMove, Placement::Shared, vec![r(u), sym(&v.name, 0)]);
            let mem = MemRef { base: u, amount: 0, post_inc: false, distributed: false };
            lw.emit(C::StoreWord, Placement::Scalar, vec![Operand::Mem(mem), r(reg)]);
        }
    }

    let last = std::mem::replace(&mut lw.cur, Block { label: String::new(), depth: 0, bundles: Vec::new() });
    lw.blocks.push(last);
    Ok(CgirFunction {
        name: "main".into(),
        blocks: lw.blocks,
        symbols: SymbolTable::layout(ir),
        assignment: BTreeMap::new(),
        loops: lw.loop_labels,
        next_vreg: lw.next_vreg,
    })
}
