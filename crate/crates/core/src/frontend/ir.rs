//! Loop-nest tree IR.
//!
//! Loops are normalized to `var = lower; var < upper; var += step` with a
//! constant positive step and loop-invariant bounds. Besides the source
//! constructs, the tree carries the accumulator nodes the MACC rewrite
//! introduces, so the rewritten program is still an ordinary `LoopIr`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use super::ast::{self, BinOp, CmpOp, Stmt};
use super::check::{Affine, CheckedProgram, VarInfo, VarKind};
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Place {
    Scalar(String),
    Element(String, Box<Expr>),
}

impl Place {
    pub fn name(&self) -> &str {
        match self {
            Place::Scalar(n) | Place::Element(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(i32),
    Load(Place),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn scalar(name: &str) -> Expr {
        Expr::Load(Place::Scalar(name.to_string()))
    }

    pub fn element(name: &str, idx: Expr) -> Expr {
        Expr::Load(Place::Element(name.to_string(), Box::new(idx)))
    }

    pub fn as_const(&self) -> Option<i32> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Visit every place read by the expression, including index subexpressions.
    pub fn for_each_load<'a>(&'a self, f: &mut impl FnMut(&'a Place)) {
        match self {
            Expr::Const(_) => {}
            Expr::Load(p) => {
                f(p);
                if let Place::Element(_, idx) = p {
                    idx.for_each_load(f);
                }
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.for_each_load(f);
                b.for_each_load(f);
            }
        }
    }

    /// Whether any scalar or array named `name` is read.
    pub fn reads(&self, name: &str) -> bool {
        let mut hit = false;
        self.for_each_load(&mut |p| hit |= p.name() == name);
        hit
    }

    /// Fold constant subtrees with wrapping arithmetic.
    pub fn folded(&self) -> Expr {
        let bin = |a: &Expr, b: &Expr, f: fn(i32, i32) -> i32, mk: fn(Box<Expr>, Box<Expr>) -> Expr| {
            let (a, b) = (a.folded(), b.folded());
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => Expr::Const(f(x, y)),
                _ => mk(Box::new(a), Box::new(b)),
            }
        };
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Load(Place::Scalar(_)) => self.clone(),
            Expr::Load(Place::Element(n, i)) => Expr::Load(Place::Element(n.clone(), Box::new(i.folded()))),
            Expr::Add(a, b) => bin(a, b, i32::wrapping_add, Expr::Add),
            Expr::Sub(a, b) => bin(a, b, i32::wrapping_sub, Expr::Sub),
            Expr::Mul(a, b) => bin(a, b, i32::wrapping_mul, Expr::Mul),
        }
    }
}

/// Affine form of an IR expression over induction variables `ivars`.
pub fn affine_of(e: &Expr, ivars: &[String]) -> Option<Affine> {
    use super::ast::Expr as A;
    fn to_ast(e: &Expr) -> Option<A> {
        Some(match e {
            Expr::Const(v) => A::Int(*v),
            Expr::Load(Place::Scalar(n)) => A::Var(n.clone()),
            Expr::Load(Place::Element(..)) => return None,
            Expr::Add(a, b) => A::bin(BinOp::Add, to_ast(a)?, to_ast(b)?),
            Expr::Sub(a, b) => A::bin(BinOp::Sub, to_ast(a)?, to_ast(b)?),
            Expr::Mul(a, b) => A::bin(BinOp::Mul, to_ast(a)?, to_ast(b)?),
        })
    }
    super::check::affine_form(&to_ast(e)?, ivars, &BTreeMap::new())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub id: NodeId,
    pub var: String,
    pub lower: Expr,
    pub upper: Expr,
    /// Increment of `var` per iteration; equals `lanes` for vector loops.
    pub step: i32,
    /// Nesting depth, 1 for an outermost loop.
    pub depth: u32,
    /// Elements processed per iteration (1 = scalar loop).
    pub lanes: u32,
    pub body: Vec<Node>,
}

impl Loop {
    /// Trip count when both bounds are constants.
    pub fn const_trip_count(&self) -> Option<u32> {
        trip_count(self.lower.as_const()?, self.upper.as_const()?, self.step)
    }
}

pub fn trip_count(lower: i32, upper: i32, step: i32) -> Option<u32> {
    if step <= 0 {
        return None;
    }
    let span = i64::from(upper) - i64::from(lower);
    if span <= 0 {
        return Some(0);
    }
    u32::try_from((span + i64::from(step) - 1) / i64::from(step)).ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    pub id: NodeId,
    pub target: Place,
    pub value: Expr,
}

/// How an accumulator's lanes map onto MACC registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneLayout {
    /// One MACC register on the scalar cluster.
    Scalar,
    /// One MACC register per cluster, one element per cluster per iteration.
    SingleWord,
    /// Two MACC registers per cluster fed from register pairs.
    DoubleWord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccDecl {
    pub id: AccId,
    pub layout: LaneLayout,
    pub lanes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Loop(Loop),
    Store(Store),
    /// Zero every lane of an accumulator.
    MaccInit {
        id: NodeId,
        acc: AccId,
    },
    /// `lane[j] += lhs(var + j) * rhs(var + j)` for each lane of the enclosing loop.
    MaccAccum {
        id: NodeId,
        acc: AccId,
        lhs: Expr,
        rhs: Expr,
    },
    /// `target = target + Σ lanes`.
    MaccReduce {
        id: NodeId,
        acc: AccId,
        target: String,
    },
}

impl Node {
    pub fn id(&self) -> NodeId {
        match self {
            Node::Loop(l) => l.id,
            Node::Store(s) => s.id,
            Node::MaccInit { id, .. } | Node::MaccAccum { id, .. } | Node::MaccReduce { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub len: Option<u32>,
    pub init: Option<i32>,
    pub induction: bool,
    pub constant: bool,
}

impl VarDecl {
    pub fn words(&self) -> u32 {
        self.len.unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopIr {
    pub vars: Vec<VarDecl>,
    pub body: Vec<Node>,
    pub accumulators: Vec<AccDecl>,
    pub next_id: u32,
}

impl LoopIr {
    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn fresh_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn accumulator(&self, id: AccId) -> Option<&AccDecl> {
        self.accumulators.iter().find(|a| a.id == id)
    }

    /// The loop at `path` (indices into successive bodies).
    pub fn loop_at(&self, path: &[usize]) -> Option<&Loop> {
        let mut nodes = &self.body;
        let mut found = None;
        for &i in path {
            match nodes.get(i)? {
                Node::Loop(l) => {
                    found = Some(l);
                    nodes = &l.body;
                }
                _ => return None,
            }
        }
        found
    }

    pub fn loop_count(&self) -> usize {
        fn count(nodes: &[Node]) -> usize {
            nodes
                .iter()
                .map(|n| match n {
                    Node::Loop(l) => 1 + count(&l.body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.body)
    }
}

/// Reference to one loop of a `LoopIr`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRef {
    pub path: Vec<usize>,
    pub id: NodeId,
    pub depth: u32,
    pub trip_count: Option<u32>,
    pub innermost: bool,
}

/// Loops whose bodies contain no loop, in source order.
pub fn innermost_loops(ir: &LoopIr) -> Vec<LoopRef> {
    fn walk(nodes: &[Node], path: &mut Vec<usize>, out: &mut Vec<LoopRef>) {
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Loop(l) = n {
                path.push(i);
                let innermost = !l.body.iter().any(|b| matches!(b, Node::Loop(_)));
                if innermost {
                    out.push(LoopRef {
                        path: path.clone(),
                        id: l.id,
                        depth: l.depth,
                        trip_count: l.const_trip_count(),
                        innermost,
                    });
                } else {
                    walk(&l.body, path, out);
                }
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(&ir.body, &mut Vec::new(), &mut out);
    out
}

struct Builder<'a> {
    symbols: &'a BTreeMap<String, VarInfo>,
    next_id: u32,
}

impl Builder<'_> {
    fn id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn expr(&self, e: &ast::Expr) -> Expr {
        match e {
            ast::Expr::Int(v) => Expr::Const(*v),
            ast::Expr::Var(n) => match self.symbols.get(n).and_then(VarInfo::constant_value) {
                Some(v) => Expr::Const(v),
                None => Expr::scalar(n),
            },
            ast::Expr::Index(n, i) => Expr::element(n, self.expr(i)),
            ast::Expr::Bin(op, a, b) => {
                let (a, b) = (Box::new(self.expr(a)), Box::new(self.expr(b)));
                match op {
                    BinOp::Add => Expr::Add(a, b),
                    BinOp::Sub => Expr::Sub(a, b),
                    BinOp::Mul => Expr::Mul(a, b),
                }
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt], depth: u32) -> Result<Vec<Node>, FrontendError> {
        stmts.iter().map(|s| self.stmt(s, depth)).collect()
    }

    fn stmt(&mut self, s: &Stmt, depth: u32) -> Result<Node, FrontendError> {
        match s {
            Stmt::Assign { target, value, .. } => {
                let target = match &target.index {
                    None => Place::Scalar(target.name.clone()),
                    Some(i) => Place::Element(target.name.clone(), Box::new(self.expr(i).folded())),
                };
                Ok(Node::Store(Store { id: self.id(), target, value: self.expr(value) }))
            }
            Stmt::For(l) => self.for_loop(l, depth + 1),
        }
    }

    fn for_loop(&mut self, l: &ast::ForLoop, depth: u32) -> Result<Node, FrontendError> {
        let unsupported = |msg: String| Err(FrontendError::UnsupportedLoopForm(msg));
        let bound = self.expr(&l.bound).folded();
        let upper = match l.cmp {
            CmpOp::Lt => bound,
            CmpOp::Le => Expr::Add(Box::new(bound), Box::new(Expr::Const(1))).folded(),
            other => {
                return unsupported(format!(
                    "loop `{}` uses `{}`; only `<` and `<=` bounds are accepted",
                    l.var,
                    match other {
                        CmpOp::Ne => "!=",
                        CmpOp::Gt => ">",
                        CmpOp::Ge => ">=",
                        _ => "==",
                    }
                ))
            }
        };
        let step = match self.expr(&l.step).folded() {
            Expr::Const(s) if s > 0 => s,
            _ => return unsupported(format!("loop `{}` needs a constant positive step", l.var)),
        };
        let lower = self.expr(&l.init).folded();
        let id = self.id();
        let body = self.stmts(&l.body, depth)?;

        let mut written = Vec::new();
        collect_written(&body, &mut written);
        if written.iter().any(|w| w == &l.var) {
            return unsupported(format!("loop variable `{}` is modified inside its loop", l.var));
        }
        if let Some(w) = written.iter().find(|w| upper.reads(w)) {
            return unsupported(format!("bound of loop `{}` depends on `{w}`, written in the body", l.var));
        }
        if upper.reads(&l.var) {
            return unsupported(format!("bound of loop `{}` depends on the loop variable", l.var));
        }
        if let (Some(lo), Some(trip)) = (lower.as_const(), trip_count_of(&lower, &upper, step)) {
            let end = i64::from(lo) + i64::from(trip) * i64::from(step);
            if end > i64::from(i32::MAX) {
                return unsupported(format!("loop `{}` overflows its 32-bit counter", l.var));
            }
        }
        Ok(Node::Loop(Loop { id, var: l.var.clone(), lower, upper, step, depth, lanes: 1, body }))
    }
}

fn trip_count_of(lower: &Expr, upper: &Expr, step: i32) -> Option<u32> {
    trip_count(lower.as_const()?, upper.as_const()?, step)
}

/// Names of scalars and arrays written (including nested loop variables).
pub fn collect_written(nodes: &[Node], out: &mut Vec<String>) {
    for n in nodes {
        match n {
            Node::Store(s) => out.push(s.target.name().to_string()),
            Node::Loop(l) => {
                out.push(l.var.clone());
                collect_written(&l.body, out);
            }
            Node::MaccReduce { target, .. } => out.push(target.clone()),
            Node::MaccInit { .. } | Node::MaccAccum { .. } => {}
        }
    }
}

pub fn build_loop_ir(checked: &CheckedProgram) -> Result<LoopIr, FrontendError> {
    let mut b = Builder { symbols: &checked.symbols, next_id: 0 };
    let body = b.stmts(&checked.ast.stmts, 0)?;
    let vars = checked
        .ast
        .decls
        .iter()
        .map(|d| {
            let info = &checked.symbols[&d.name];
            VarDecl {
                name: d.name.clone(),
                len: match info.kind {
                    VarKind::Array(n) => Some(n),
                    VarKind::Scalar => None,
                },
                init: d.init,
                induction: info.induction,
                constant: info.constant_value().is_some(),
            }
        })
        .collect();
    Ok(LoopIr { vars, body, accumulators: Vec::new(), next_id: b.next_id })
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Scalar(n) => f.write_str(n),
            Place::Element(n, i) => write!(f, "{n}[{i}]"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Load(p) => write!(f, "LOAD {p}"),
            Expr::Add(a, b) => write!(f, "ADD({a}, {b})"),
            Expr::Sub(a, b) => write!(f, "SUB({a}, {b})"),
            Expr::Mul(a, b) => write!(f, "MUL({a}, {b})"),
        }
    }
}

fn dump_nodes(out: &mut String, nodes: &[Node], indent: usize) {
    let pad = "  ".repeat(indent);
    for n in nodes {
        let _ = match n {
            Node::Store(s) => writeln!(out, "{pad}#{} STORE {} = {}", s.id.0, s.target, s.value),
            Node::MaccInit { id, acc } => writeln!(out, "{pad}#{} MACC_INIT acc{}", id.0, acc.0),
            Node::MaccAccum { id, acc, lhs, rhs } => {
                writeln!(out, "{pad}#{} MACC acc{} += {} * {}", id.0, acc.0, lhs, rhs)
            }
            Node::MaccReduce { id, acc, target } => {
                writeln!(out, "{pad}#{} MACC_REDUCE {target} += sigma acc{}", id.0, acc.0)
            }
            Node::Loop(l) => {
                let _ = writeln!(
                    out,
                    "{pad}#{} LOOP {} = {} .. {} step {} lanes {} depth {}",
                    l.id.0, l.var, l.lower, l.upper, l.step, l.lanes, l.depth
                );
                dump_nodes(out, &l.body, indent + 1);
                Ok(())
            }
        };
    }
}

impl fmt::Display for LoopIr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vars {
            match v.len {
                Some(n) => writeln!(f, "var {}[{n}]", v.name)?,
                None => writeln!(f, "var {}", v.name)?,
            }
        }
        for a in &self.accumulators {
            writeln!(f, "acc{} {:?} lanes {}", a.id.0, a.layout, a.lanes)?;
        }
        let mut out = String::new();
        dump_nodes(&mut out, &self.body, 0);
        f.write_str(&out)
    }
}
