//! Multiply-accumulate synthesis.
//!
//! Recognizes `opnd0 = opnd0 + opnd1 * opnd2` in innermost loops, sizes
//! the rewrite against the per-cluster MACC register budget, and rewrites
//! the loop into an accumulator prologue, a MACC main loop, a scalar
//! remainder loop and a reduction epilogue.

use thiserror::Error;

use crate::frontend::innermost_loops;
use crate::frontend::ir::{
    affine_of, AccDecl, AccId, Expr, LaneLayout, Loop, LoopIr, LoopRef, Node, NodeId, Place, Store,
};
use crate::machine::MachineDesc;

/// One recognized accumulate statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaccMatch {
    pub store_node: NodeId,
    /// opnd0
    pub accumulator: Place,
    /// opnd1
    pub mul_lhs: Expr,
    /// opnd2
    pub mul_rhs: Expr,
    pub loop_ref: LoopRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    None,
    ScalarMacc,
    SimdSingleWord,
    SimdDoubleWord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeDecision {
    pub mode: Mode,
    pub vector_factor: u32,
    /// MACC registers used on each cluster.
    pub macc_regs_used: u32,
    pub matches_accepted: Vec<MaccMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewrittenLoop {
    pub decision: ModeDecision,
    pub accumulators: Vec<AccDecl>,
    pub prologue: Vec<Node>,
    pub main_loop: Loop,
    pub remainder_loop: Option<Loop>,
    pub epilogue: Vec<Node>,
    /// First node id not used by the rewrite.
    pub next_id: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("rewrite unsupported: {0}")]
    RewriteUnsupported(String),
    /// The loop cannot be vectorized; a scalar MACC rewrite may still apply.
    #[error("loop not vectorizable: {0}")]
    NotVectorizable(String),
    #[error("no MACC synthesis was selected for this loop")]
    ModeNone,
    #[error("loop reference does not name a loop")]
    BadLoopRef,
}

/// Split `ADD(x, y)` into (accumulator load, MUL operands) in either operand order.
fn accumulate_shape(value: &Expr) -> Option<(&Place, &Expr, &Expr)> {
    let Expr::Add(a, b) = value else { return None };
    match (a.as_ref(), b.as_ref()) {
        (Expr::Load(p), Expr::Mul(l, r)) | (Expr::Mul(l, r), Expr::Load(p)) => Some((p, l, r)),
        _ => None,
    }
}

/// Every store in the loop body of the form `opnd0 = opnd0 + opnd1 * opnd2`.
pub fn find_macc_patterns(loop_ref: &LoopRef, ir: &LoopIr) -> Vec<MaccMatch> {
    let Some(l) = ir.loop_at(&loop_ref.path) else { return Vec::new() };
    l.body
        .iter()
        .filter_map(|n| match n {
            Node::Store(s) => Some(s),
            _ => None,
        })
        .filter_map(|s| {
            let (acc, lhs, rhs) = accumulate_shape(&s.value)?;
            (acc == &s.target).then(|| MaccMatch {
                store_node: s.id,
                accumulator: s.target.clone(),
                mul_lhs: lhs.clone(),
                mul_rhs: rhs.clone(),
                loop_ref: loop_ref.clone(),
            })
        })
        .collect()
}

/// Pick the MACC mode that fits the register budget, preferring double-word SIMD.
pub fn check_macc_resources(matches: &[MaccMatch], desc: &MachineDesc) -> ModeDecision {
    let k = matches.len() as u32;
    let budget = desc.macc_regs_per_cluster;
    let width = desc.simd_width_per_cluster;
    let clusters = desc.cluster_count() as u32;
    let none = ModeDecision { mode: Mode::None, vector_factor: 1, macc_regs_used: 0, matches_accepted: Vec::new() };
    if k == 0 {
        return none;
    }
    if width >= 2 && k * width <= budget {
        ModeDecision {
            mode: Mode::SimdDoubleWord,
            vector_factor: clusters * width,
            macc_regs_used: k * width,
            matches_accepted: matches.to_vec(),
        }
    } else if k <= budget {
        ModeDecision {
            mode: Mode::SimdSingleWord,
            vector_factor: clusters,
            macc_regs_used: k,
            matches_accepted: matches.to_vec(),
        }
    } else {
        none
    }
}

/// Downgrade a SIMD decision to scalar MACC on one cluster.
pub fn scalar_decision(decision: &ModeDecision) -> ModeDecision {
    ModeDecision {
        mode: Mode::ScalarMacc,
        vector_factor: 1,
        macc_regs_used: decision.matches_accepted.len() as u32,
        matches_accepted: decision.matches_accepted.clone(),
    }
}

fn renumber(nodes: &[Node], next: &mut u32) -> Vec<Node> {
    fn fresh(next: &mut u32) -> NodeId {
        let id = NodeId(*next);
        *next += 1;
        id
    }
    let mut out = Vec::with_capacity(nodes.len());
    for n in nodes {
        out.push(match n {
            Node::Store(s) => Node::Store(Store { id: fresh(next), ..s.clone() }),
            Node::Loop(l) => {
                let id = fresh(next);
                Node::Loop(Loop { id, body: renumber(&l.body, next), ..l.clone() })
            }
            Node::MaccInit { acc, .. } => Node::MaccInit { id: fresh(next), acc: *acc },
            Node::MaccAccum { acc, lhs, rhs, .. } => {
                Node::MaccAccum { id: fresh(next), acc: *acc, lhs: lhs.clone(), rhs: rhs.clone() }
            }
            Node::MaccReduce { acc, target, .. } => {
                Node::MaccReduce { id: fresh(next), acc: *acc, target: target.clone() }
            }
        });
    }
    out
}

fn touches(node: &Node, name: &str) -> bool {
    match node {
        Node::Store(s) => {
            s.target.name() == name || s.value.reads(name) || matches!(&s.target, Place::Element(_, i) if i.reads(name))
        }
        Node::Loop(l) => l.var == name || l.body.iter().any(|n| touches(n, name)),
        Node::MaccAccum { lhs, rhs, .. } => lhs.reads(name) || rhs.reads(name),
        Node::MaccReduce { target, .. } => target == name,
        Node::MaccInit { .. } => false,
    }
}

/// Enclosing induction variables of the loop at `path`, outermost first.
fn enclosing_vars(ir: &LoopIr, path: &[usize]) -> Vec<String> {
    (1..=path.len()).filter_map(|n| ir.loop_at(&path[..n]).map(|l| l.var.clone())).collect()
}

/// Unit-stride array element in `var`; the only operand shape SIMD loads support.
fn unit_stride(e: &Expr, var: &str, ivars: &[String]) -> bool {
    match e {
        Expr::Load(Place::Element(_, idx)) => affine_of(idx, ivars).is_some_and(|a| a.coef(var) == 1),
        _ => false,
    }
}

pub fn rewrite_macc(loop_ref: &LoopRef, decision: &ModeDecision, ir: &LoopIr) -> Result<RewrittenLoop, RewriteError> {
    if decision.mode == Mode::None || decision.matches_accepted.is_empty() {
        return Err(RewriteError::ModeNone);
    }
    let l = ir.loop_at(&loop_ref.path).ok_or(RewriteError::BadLoopRef)?;
    let matched: Vec<NodeId> = decision.matches_accepted.iter().map(|m| m.store_node).collect();

    let mut acc_names = Vec::new();
    for m in &decision.matches_accepted {
        let Place::Scalar(name) = &m.accumulator else {
            return Err(RewriteError::RewriteUnsupported(format!(
                "accumulator `{}` is an array element",
                m.accumulator
            )));
        };
        acc_names.push(name.clone());
    }
    for name in &acc_names {
        if name == &l.var {
            return Err(RewriteError::RewriteUnsupported(format!("accumulator `{name}` is the loop variable")));
        }
        for m in &decision.matches_accepted {
            if m.mul_lhs.reads(name) || m.mul_rhs.reads(name) {
                return Err(RewriteError::RewriteUnsupported(format!("multiply operands read accumulator `{name}`")));
            }
        }
        for n in &l.body {
            if !matched.contains(&n.id()) && touches(n, name) {
                return Err(RewriteError::RewriteUnsupported(format!(
                    "accumulator `{name}` is used by another statement of the loop"
                )));
            }
        }
    }

    let layout = match decision.mode {
        Mode::ScalarMacc => LaneLayout::Scalar,
        Mode::SimdSingleWord => LaneLayout::SingleWord,
        Mode::SimdDoubleWord => LaneLayout::DoubleWord,
        Mode::None => unreachable!(),
    };
    let vf = decision.vector_factor;
    let mut trip = None;
    if layout != LaneLayout::Scalar {
        let ivars = enclosing_vars(ir, &loop_ref.path);
        if l.step != 1 {
            return Err(RewriteError::NotVectorizable("step is not 1".into()));
        }
        trip = Some(
            l.const_trip_count().ok_or_else(|| RewriteError::NotVectorizable("trip count is not a constant".into()))?,
        );
        if l.body.iter().any(|n| !matched.contains(&n.id())) {
            return Err(RewriteError::NotVectorizable("loop body has statements besides accumulations".into()));
        }
        for m in &decision.matches_accepted {
            if !unit_stride(&m.mul_lhs, &l.var, &ivars) || !unit_stride(&m.mul_rhs, &l.var, &ivars) {
                return Err(RewriteError::NotVectorizable(
                    "multiply operands are not unit-stride array elements".into(),
                ));
            }
        }
    }

    let first_acc = ir.accumulators.iter().map(|a| a.id.0 + 1).max().unwrap_or(0);
    let accumulators: Vec<AccDecl> = (0..decision.matches_accepted.len() as u32)
        .map(|i| AccDecl { id: AccId(first_acc + i), layout, lanes: vf })
        .collect();
    let mut next = ir.next_id;
    let mut fresh = || {
        let id = NodeId(next);
        next += 1;
        id
    };
    let prologue: Vec<Node> = accumulators.iter().map(|a| Node::MaccInit { id: fresh(), acc: a.id }).collect();
    let accum_for = |store: NodeId| {
        let i = matched.iter().position(|m| *m == store)?;
        let m = &decision.matches_accepted[i];
        Some((accumulators[i].id, m.mul_lhs.clone(), m.mul_rhs.clone()))
    };

    let (main_loop, remainder_loop) = match trip {
        None => {
            let id = fresh();
            let body = l
                .body
                .iter()
                .map(|n| match accum_for(n.id()) {
                    Some((acc, lhs, rhs)) => Node::MaccAccum { id: fresh(), acc, lhs, rhs },
                    None => n.clone(),
                })
                .collect();
            (Loop { id, body, ..l.clone() }, None)
        }
        Some(n) => {
            let lo = l.lower.as_const().expect("constant trip implies constant bounds");
            let main_trips = n / vf;
            let split = lo.wrapping_add((main_trips * vf) as i32);
            let id = fresh();
            let body = l
                .body
                .iter()
                .filter_map(|n| accum_for(n.id()))
                .map(|(acc, lhs, rhs)| Node::MaccAccum { id: fresh(), acc, lhs, rhs })
                .collect();
            let main = Loop {
                id,
                var: l.var.clone(),
                lower: Expr::Const(lo),
                upper: Expr::Const(split),
                step: vf as i32,
                depth: l.depth,
                lanes: vf,
                body,
            };
            let rem_id = fresh();
            let mut counter = next;
            let rem_body = renumber(&l.body, &mut counter);
            next = counter;
            let rem = Loop {
                id: rem_id,
                var: l.var.clone(),
                lower: Expr::Const(split),
                upper: l.upper.clone(),
                step: 1,
                depth: l.depth,
                lanes: 1,
                body: rem_body,
            };
            (main, Some(rem))
        }
    };
    let mut next_after = next;
    let epilogue = accumulators
        .iter()
        .zip(&acc_names)
        .map(|(a, t)| {
            let id = NodeId(next_after);
            next_after += 1;
            Node::MaccReduce { id, acc: a.id, target: t.clone() }
        })
        .collect();
    Ok(RewrittenLoop {
        decision: decision.clone(),
        accumulators,
        prologue,
        main_loop,
        remainder_loop,
        epilogue,
        next_id: next_after,
    })
}

impl RewrittenLoop {
    pub fn main_trip_count(&self) -> Option<u32> {
        self.main_loop.const_trip_count()
    }

    pub fn remainder_trip_count(&self) -> Option<u32> {
        self.remainder_loop.as_ref().map_or(Some(0), Loop::const_trip_count)
    }

    /// The statements replacing the original loop, in execution order.
    pub fn nodes(&self) -> Vec<Node> {
        let mut out = self.prologue.clone();
        out.push(Node::Loop(self.main_loop.clone()));
        if let Some(r) = &self.remainder_loop {
            out.push(Node::Loop(r.clone()));
        }
        out.extend(self.epilogue.iter().cloned());
        out
    }

    /// A copy of `ir` with the loop at `path` replaced by the rewrite.
    pub fn splice(&self, ir: &LoopIr, path: &[usize]) -> LoopIr {
        let mut out = ir.clone();
        let (last, parents) = path.split_last().expect("loop path is never empty");
        let mut nodes = &mut out.body;
        for &i in parents {
            match &mut nodes[i] {
                Node::Loop(l) => nodes = &mut l.body,
                _ => unreachable!("path runs through loops"),
            }
        }
        nodes.splice(*last..=*last, self.nodes());
        out.accumulators.extend(self.accumulators.iter().cloned());
        out.next_id = out.next_id.max(self.next_id);
        out
    }
}

/// What happened to one innermost loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopOutcome {
    pub loop_id: NodeId,
    pub matches: usize,
    pub mode: Mode,
    pub vector_factor: u32,
    pub macc_regs_used: u32,
    /// Why synthesis was abandoned or downgraded, if it was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PassReport {
    pub loops: Vec<LoopOutcome>,
}

impl PassReport {
    pub fn rewritten(&self) -> usize {
        self.loops.iter().filter(|l| l.mode != Mode::None).count()
    }
}

/// Run recognition, resource checking and rewriting over every innermost loop.
pub fn run_macc_pass(ir: &LoopIr, desc: &MachineDesc) -> (LoopIr, PassReport) {
    let mut out = ir.clone();
    let mut report = PassReport::default();
    // Later loops first, so splicing never shifts a pending path.
    for loop_ref in innermost_loops(ir).into_iter().rev() {
        let matches = find_macc_patterns(&loop_ref, &out);
        let decision = check_macc_resources(&matches, desc);
        let mut outcome = LoopOutcome {
            loop_id: loop_ref.id,
            matches: matches.len(),
            mode: Mode::None,
            vector_factor: 1,
            macc_regs_used: 0,
            note: None,
        };
        if decision.mode == Mode::None {
            if !matches.is_empty() {
                outcome.note = Some(format!(
                    "{} accumulations exceed {} MACC registers",
                    matches.len(),
                    desc.macc_regs_per_cluster
                ));
            }
            report.loops.push(outcome);
            continue;
        }
        let attempt = match rewrite_macc(&loop_ref, &decision, &out) {
            Err(RewriteError::NotVectorizable(why)) => {
                outcome.note = Some(format!("scalar MACC: {why}"));
                rewrite_macc(&loop_ref, &scalar_decision(&decision), &out)
            }
            other => other,
        };
        match attempt {
            Ok(rw) => {
                outcome.mode = rw.decision.mode;
                outcome.vector_factor = rw.decision.vector_factor;
                outcome.macc_regs_used = rw.decision.macc_regs_used;
                out = rw.splice(&out, &loop_ref.path);
            }
            Err(e) => outcome.note = Some(e.to_string()),
        }
        report.loops.push(outcome);
    }
    report.loops.reverse();
    (out, report)
}

#[cfg(test)]
mod tests;
