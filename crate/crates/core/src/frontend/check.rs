//! Name resolution, type checking, affine-index checking and `+=` desugaring.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{AssignOp, BinOp, Expr, ForLoop, LValue, Program, Stmt};
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Array(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub kind: VarKind,
    pub init: Option<i32>,
    /// Used as a for-loop induction variable somewhere.
    pub induction: bool,
    /// Written by some assignment (loop headers excluded).
    pub assigned: bool,
}

impl VarInfo {
    /// Initialized scalars that nothing writes fold to their initializer.
    pub fn constant_value(&self) -> Option<i32> {
        match (self.kind, self.assigned || self.induction) {
            (VarKind::Scalar, false) => self.init,
            _ => None,
        }
    }
}

/// A type-checked program: every expression is int32, `+=` is desugared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedProgram {
    pub ast: Program,
    pub symbols: BTreeMap<String, VarInfo>,
}

/// Affine form `constant + Σ coef·var` with wrapping int32 coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Affine {
    pub constant: i32,
    pub coefs: BTreeMap<String, i32>,
}

impl Affine {
    pub fn coef(&self, var: &str) -> i32 {
        self.coefs.get(var).copied().unwrap_or(0)
    }

    fn combine(mut self, other: Affine, sign: i32) -> Affine {
        self.constant = self.constant.wrapping_add(other.constant.wrapping_mul(sign));
        for (v, c) in other.coefs {
            let e = self.coefs.entry(v).or_insert(0);
            *e = e.wrapping_add(c.wrapping_mul(sign));
        }
        self.coefs.retain(|_, c| *c != 0);
        self
    }

    fn scale(mut self, k: i32) -> Affine {
        self.constant = self.constant.wrapping_mul(k);
        for c in self.coefs.values_mut() {
            *c = c.wrapping_mul(k);
        }
        self.coefs.retain(|_, c| *c != 0);
        self
    }

    fn is_constant(&self) -> bool {
        self.coefs.is_empty()
    }
}

/// Affine form of `e` over the induction variables in `ivars`, folding
/// constant scalars. `None` when `e` is not affine.
pub fn affine_form(e: &Expr, ivars: &[String], symbols: &BTreeMap<String, VarInfo>) -> Option<Affine> {
    match e {
        Expr::Int(v) => Some(Affine { constant: *v, coefs: BTreeMap::new() }),
        Expr::Var(n) => {
            if ivars.iter().any(|v| v == n) {
                let mut coefs = BTreeMap::new();
                coefs.insert(n.clone(), 1);
                Some(Affine { constant: 0, coefs })
            } else {
                let c = symbols.get(n)?.constant_value()?;
                Some(Affine { constant: c, coefs: BTreeMap::new() })
            }
        }
        Expr::Index(..) => None,
        Expr::Bin(op, a, b) => {
            let a = affine_form(a, ivars, symbols)?;
            let b = affine_form(b, ivars, symbols)?;
            match op {
                BinOp::Add => Some(a.combine(b, 1)),
                BinOp::Sub => Some(a.combine(b, -1)),
                BinOp::Mul if a.is_constant() => Some(b.scale(a.constant)),
                BinOp::Mul if b.is_constant() => Some(a.scale(b.constant)),
                BinOp::Mul => None,
            }
        }
    }
}

struct Checker {
    symbols: BTreeMap<String, VarInfo>,
}

impl Checker {
    fn var(&self, name: &str) -> Result<&VarInfo, FrontendError> {
        self.symbols.get(name).ok_or_else(|| FrontendError::UndeclaredIdentifier(name.to_string()))
    }

    fn collect_writes(&mut self, stmts: &[Stmt]) -> Result<(), FrontendError> {
        for s in stmts {
            match s {
                Stmt::Assign { target, .. } => {
                    let name = target.name.clone();
                    self.symbols.get_mut(&name).ok_or(FrontendError::UndeclaredIdentifier(name))?.assigned = true;
                }
                Stmt::For(l) => {
                    let name = l.var.clone();
                    self.symbols.get_mut(&name).ok_or(FrontendError::UndeclaredIdentifier(name))?.induction = true;
                    self.collect_writes(&l.body)?;
                }
            }
        }
        Ok(())
    }

    fn expr(&self, e: &Expr, ivars: &[String]) -> Result<(), FrontendError> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Var(n) => match self.var(n)?.kind {
                VarKind::Scalar => Ok(()),
                VarKind::Array(_) => Err(FrontendError::TypeMismatch(format!("array `{n}` used without an index"))),
            },
            Expr::Index(n, idx) => {
                self.array_access(n, idx, ivars)?;
                self.expr(idx, ivars)
            }
            Expr::Bin(_, a, b) => {
                self.expr(a, ivars)?;
                self.expr(b, ivars)
            }
        }
    }

    fn array_access(&self, name: &str, idx: &Expr, ivars: &[String]) -> Result<(), FrontendError> {
        match self.var(name)?.kind {
            VarKind::Array(_) => {}
            VarKind::Scalar => return Err(FrontendError::TypeMismatch(format!("scalar `{name}` is indexed"))),
        }
        // Undeclared names inside the index are reported before non-affinity.
        self.names_declared(idx)?;
        if affine_form(idx, ivars, &self.symbols).is_none() {
            return Err(FrontendError::NonAffineIndex(name.to_string()));
        }
        Ok(())
    }

    fn names_declared(&self, e: &Expr) -> Result<(), FrontendError> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Var(n) => self.var(n).map(|_| ()),
            Expr::Index(n, i) => {
                self.var(n)?;
                self.names_declared(i)
            }
            Expr::Bin(_, a, b) => {
                self.names_declared(a)?;
                self.names_declared(b)
            }
        }
    }

    fn lvalue(&self, lv: &LValue, ivars: &[String]) -> Result<(), FrontendError> {
        match (&lv.index, self.var(&lv.name)?.kind) {
            (None, VarKind::Scalar) => Ok(()),
            (Some(idx), VarKind::Array(_)) => {
                self.array_access(&lv.name, idx, ivars)?;
                self.expr(idx, ivars)
            }
            (None, VarKind::Array(_)) => {
                Err(FrontendError::TypeMismatch(format!("assignment to array `{}` without an index", lv.name)))
            }
            (Some(_), VarKind::Scalar) => Err(FrontendError::TypeMismatch(format!("scalar `{}` is indexed", lv.name))),
        }
    }

    fn stmts(&self, stmts: &[Stmt], ivars: &mut Vec<String>) -> Result<Vec<Stmt>, FrontendError> {
        stmts.iter().map(|s| self.stmt(s, ivars)).collect()
    }

    fn stmt(&self, s: &Stmt, ivars: &mut Vec<String>) -> Result<Stmt, FrontendError> {
        match s {
            Stmt::Assign { target, op, value } => {
                self.lvalue(target, ivars)?;
                self.expr(value, ivars)?;
                let value = match op {
                    AssignOp::Set => value.clone(),
                    AssignOp::AddAssign => {
                        let current = match &target.index {
                            Some(i) => Expr::Index(target.name.clone(), Box::new(i.clone())),
                            None => Expr::Var(target.name.clone()),
                        };
                        Expr::bin(BinOp::Add, current, value.clone())
                    }
                };
                Ok(Stmt::Assign { target: target.clone(), op: AssignOp::Set, value })
            }
            Stmt::For(l) => {
                if self.var(&l.var)?.kind != VarKind::Scalar {
                    return Err(FrontendError::TypeMismatch(format!("loop variable `{}` is an array", l.var)));
                }
                self.expr(&l.init, ivars)?;
                self.expr(&l.bound, ivars)?;
                self.expr(&l.step, ivars)?;
                ivars.push(l.var.clone());
                let body = self.stmts(&l.body, ivars);
                ivars.pop();
                Ok(Stmt::For(ForLoop { body: body?, ..l.clone() }))
            }
        }
    }
}

pub fn typecheck(ast: &Program) -> Result<CheckedProgram, FrontendError> {
    let mut symbols = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for d in &ast.decls {
        if !seen.insert(d.name.clone()) {
            return Err(FrontendError::DuplicateDeclaration(d.name.clone()));
        }
        let kind = match d.size {
            Some(0) => return Err(FrontendError::TypeMismatch(format!("array `{}` has size 0", d.name))),
            Some(n) => VarKind::Array(n),
            None => VarKind::Scalar,
        };
        symbols.insert(d.name.clone(), VarInfo { kind, init: d.init, induction: false, assigned: false });
    }
    let mut checker = Checker { symbols };
    checker.collect_writes(&ast.stmts)?;
    let stmts = checker.stmts(&ast.stmts, &mut Vec::new())?;
    Ok(CheckedProgram { ast: Program { decls: ast.decls.clone(), stmts }, symbols: checker.symbols })
}
