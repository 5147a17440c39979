//! Reference interpreters for the AST and the loop IR (32-bit wrapping).

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{self, BinOp, CmpOp, Program, Stmt};
use super::ir::{AccId, Expr, LoopIr, Node, Place};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("index {index} out of bounds for `{array}`")]
    IndexOutOfBounds { array: String, index: i64 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown accumulator acc{0}")]
    UnknownAccumulator(u32),
    #[error("step budget exhausted")]
    OutOfFuel,
}

/// Variable store: every variable is a vector of words (scalars have one).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct State {
    pub values: BTreeMap<String, Vec<i32>>,
}

impl State {
    fn declare(&mut self, name: &str, len: Option<u32>, init: Option<i32>) {
        let n = len.unwrap_or(1) as usize;
        self.values.insert(name.to_string(), vec![init.unwrap_or(0); n]);
    }

    pub fn for_program(p: &Program) -> State {
        let mut s = State::default();
        for d in &p.decls {
            s.declare(&d.name, d.size, d.init);
        }
        s
    }

    pub fn for_ir(ir: &LoopIr) -> State {
        let mut s = State::default();
        for v in &ir.vars {
            s.declare(&v.name, v.len, v.init);
        }
        s
    }

    pub fn get(&self, name: &str, index: i64) -> Result<i32, EvalError> {
        let v = self.values.get(name).ok_or_else(|| EvalError::UnknownVariable(name.into()))?;
        usize::try_from(index)
            .ok()
            .and_then(|i| v.get(i))
            .copied()
            .ok_or_else(|| EvalError::IndexOutOfBounds { array: name.into(), index })
    }

    pub fn set(&mut self, name: &str, index: i64, value: i32) -> Result<(), EvalError> {
        let v = self.values.get_mut(name).ok_or_else(|| EvalError::UnknownVariable(name.into()))?;
        let slot = usize::try_from(index)
            .ok()
            .and_then(|i| v.get_mut(i))
            .ok_or_else(|| EvalError::IndexOutOfBounds { array: name.into(), index })?;
        *slot = value;
        Ok(())
    }

    pub fn scalar(&self, name: &str) -> i32 {
        self.values[name][0]
    }

    /// Overwrite a variable's contents (inputs), keeping its length.
    pub fn fill(&mut self, name: &str, data: &[i32]) -> Result<(), EvalError> {
        let v = self.values.get_mut(name).ok_or_else(|| EvalError::UnknownVariable(name.into()))?;
        let n = v.len().min(data.len());
        v[..n].copy_from_slice(&data[..n]);
        Ok(())
    }

    /// The state restricted to the given variable names.
    pub fn project<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, Vec<i32>> {
        names.into_iter().filter_map(|n| self.values.get(n).map(|v| (n.to_string(), v.clone()))).collect()
    }
}

struct Fuel(u64);

impl Fuel {
    fn burn(&mut self) -> Result<(), EvalError> {
        self.0 = self.0.checked_sub(1).ok_or(EvalError::OutOfFuel)?;
        Ok(())
    }
}

fn eval_ast(e: &ast::Expr, st: &State) -> Result<i32, EvalError> {
    Ok(match e {
        ast::Expr::Int(v) => *v,
        ast::Expr::Var(n) => st.get(n, 0)?,
        ast::Expr::Index(n, i) => st.get(n, i64::from(eval_ast(i, st)?))?,
        ast::Expr::Bin(op, a, b) => {
            let (a, b) = (eval_ast(a, st)?, eval_ast(b, st)?);
            match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                BinOp::Mul => a.wrapping_mul(b),
            }
        }
    })
}

fn exec_ast(stmts: &[Stmt], st: &mut State, fuel: &mut Fuel) -> Result<(), EvalError> {
    for s in stmts {
        fuel.burn()?;
        match s {
            Stmt::Assign { target, op, value } => {
                let idx = match &target.index {
                    Some(i) => i64::from(eval_ast(i, st)?),
                    None => 0,
                };
                let mut v = eval_ast(value, st)?;
                if *op == ast::AssignOp::AddAssign {
                    v = st.get(&target.name, idx)?.wrapping_add(v);
                }
                st.set(&target.name, idx, v)?;
            }
            Stmt::For(l) => {
                let init = eval_ast(&l.init, st)?;
                st.set(&l.var, 0, init)?;
                loop {
                    let i = st.get(&l.var, 0)?;
                    let bound = eval_ast(&l.bound, st)?;
                    let go = match l.cmp {
                        CmpOp::Lt => i < bound,
                        CmpOp::Le => i <= bound,
                        CmpOp::Gt => i > bound,
                        CmpOp::Ge => i >= bound,
                        CmpOp::Ne => i != bound,
                        CmpOp::Eq => i == bound,
                    };
                    if !go {
                        break;
                    }
                    fuel.burn()?;
                    exec_ast(&l.body, st, fuel)?;
                    let step = eval_ast(&l.step, st)?;
                    let i = st.get(&l.var, 0)?;
                    st.set(&l.var, 0, i.wrapping_add(step))?;
                }
            }
        }
    }
    Ok(())
}

/// Run a program's statements directly from the AST.
pub fn run_ast(p: &Program, st: &mut State, fuel: u64) -> Result<(), EvalError> {
    exec_ast(&p.stmts, st, &mut Fuel(fuel))
}

pub fn eval_expr(e: &Expr, st: &State) -> Result<i32, EvalError> {
    Ok(match e {
        Expr::Const(v) => *v,
        Expr::Load(Place::Scalar(n)) => st.get(n, 0)?,
        Expr::Load(Place::Element(n, i)) => st.get(n, i64::from(eval_expr(i, st)?))?,
        Expr::Add(a, b) => eval_expr(a, st)?.wrapping_add(eval_expr(b, st)?),
        Expr::Sub(a, b) => eval_expr(a, st)?.wrapping_sub(eval_expr(b, st)?),
        Expr::Mul(a, b) => eval_expr(a, st)?.wrapping_mul(eval_expr(b, st)?),
    })
}

struct IrRun<'a> {
    ir: &'a LoopIr,
    accs: BTreeMap<AccId, Vec<i32>>,
    fuel: Fuel,
}

impl IrRun<'_> {
    fn lanes(&mut self, acc: AccId) -> Result<&mut Vec<i32>, EvalError> {
        let decl = self.ir.accumulator(acc).ok_or(EvalError::UnknownAccumulator(acc.0))?;
        let n = decl.lanes as usize;
        Ok(self.accs.entry(acc).or_insert_with(|| vec![0; n]))
    }

    fn exec(&mut self, nodes: &[Node], st: &mut State, ctx: Option<(&str, u32)>) -> Result<(), EvalError> {
        for n in nodes {
            self.fuel.burn()?;
            match n {
                Node::Store(s) => {
                    let v = eval_expr(&s.value, st)?;
                    match &s.target {
                        Place::Scalar(name) => st.set(name, 0, v)?,
                        Place::Element(name, i) => {
                            let idx = i64::from(eval_expr(i, st)?);
                            st.set(name, idx, v)?
                        }
                    }
                }
                Node::Loop(l) => {
                    let lower = eval_expr(&l.lower, st)?;
                    let upper = eval_expr(&l.upper, st)?;
                    st.set(&l.var, 0, lower)?;
                    loop {
                        let i = st.get(&l.var, 0)?;
                        if i >= upper {
                            break;
                        }
                        self.fuel.burn()?;
                        self.exec(&l.body, st, Some((&l.var, l.lanes)))?;
                        st.set(&l.var, 0, i.wrapping_add(l.step))?;
                    }
                }
                Node::MaccInit { acc, .. } => self.lanes(*acc)?.iter_mut().for_each(|x| *x = 0),
                Node::MaccAccum { acc, lhs, rhs, .. } => {
                    let (var, lanes) = ctx.unwrap_or(("", 1));
                    let base = if var.is_empty() { 0 } else { st.get(var, 0)? };
                    let mut products = Vec::with_capacity(lanes as usize);
                    for j in 0..lanes {
                        if !var.is_empty() {
                            st.set(var, 0, base.wrapping_add(j as i32))?;
                        }
                        let p = eval_expr(lhs, st)?.wrapping_mul(eval_expr(rhs, st)?);
                        products.push(p);
                    }
                    if !var.is_empty() {
                        st.set(var, 0, base)?;
                    }
                    let acc_lanes = self.lanes(*acc)?;
                    if acc_lanes.len() != products.len() {
                        return Err(EvalError::UnknownAccumulator(acc.0));
                    }
                    for (l, p) in acc_lanes.iter_mut().zip(products) {
                        *l = l.wrapping_add(p);
                    }
                }
                Node::MaccReduce { acc, target, .. } => {
                    let sum = self.lanes(*acc)?.iter().fold(0i32, |a, &b| a.wrapping_add(b));
                    let cur = st.get(target, 0)?;
                    st.set(target, 0, cur.wrapping_add(sum))?;
                }
            }
        }
        Ok(())
    }
}

/// Run a loop IR (original or rewritten).
pub fn run_ir(ir: &LoopIr, st: &mut State, fuel: u64) -> Result<(), EvalError> {
    let mut run = IrRun { ir, accs: BTreeMap::new(), fuel: Fuel(fuel) };
    run.exec(&ir.body, st, None)
}
