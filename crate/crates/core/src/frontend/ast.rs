//! Source AST, recursive-descent parser and pretty printer.

use std::fmt::{self, Write as _};

use super::lexer::{tokenize, Tok, Token};
use super::{FrontendError, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    /// Element count for arrays, `None` for scalars.
    pub size: Option<u32>,
    pub init: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    AddAssign,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LValue {
    pub name: String,
    pub index: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
    Eq,
}

impl CmpOp {
    fn text(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "!=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForLoop {
    pub var: String,
    pub init: Expr,
    pub cmp: CmpOp,
    pub bound: Expr,
    /// Amount added to the induction variable per iteration.
    pub step: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign { target: LValue, op: AssignOp, value: Expr },
    For(ForLoop),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i32),
    Var(String),
    Index(String, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> FrontendError {
        let t = &self.toks[self.pos];
        FrontendError::Syntax(SyntaxError {
            line: t.line,
            column: t.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), FrontendError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&tok.describe()]))
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn literal(&mut self) -> Result<i32, FrontendError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(n) => {
                let v = if negative { -n } else { n };
                if v < i64::from(i32::MIN) || v > i64::from(i32::MAX) {
                    return Err(self.error(&["32-bit integer literal"]));
                }
                self.bump();
                Ok(v as i32)
            }
            _ => Err(self.error(&["integer literal"])),
        }
    }

    fn program(&mut self) -> Result<Program, FrontendError> {
        let mut decls = Vec::new();
        while *self.peek() == Tok::Int {
            decls.push(self.decl()?);
        }
        let mut stmts = Vec::new();
        while *self.peek() != Tok::Eof {
            if *self.peek() == Tok::Int {
                return Err(self.error(&["statement"]));
            }
            stmts.push(self.stmt()?);
        }
        if decls.is_empty() && stmts.is_empty() {
            return Err(FrontendError::EmptyProgram);
        }
        Ok(Program { decls, stmts })
    }

    fn decl(&mut self) -> Result<Decl, FrontendError> {
        self.expect(Tok::Int)?;
        let name = self.ident()?;
        let mut size = None;
        if *self.peek() == Tok::LBracket {
            self.bump();
            match *self.peek() {
                Tok::Num(n) if n <= i64::from(u32::MAX) => {
                    self.bump();
                    size = Some(n as u32);
                }
                _ => return Err(self.error(&["array size"])),
            }
            self.expect(Tok::RBracket)?;
        }
        let mut init = None;
        if *self.peek() == Tok::Assign {
            self.bump();
            init = Some(self.literal()?);
        }
        self.expect(Tok::Semi)?;
        Ok(Decl { name, size, init })
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        match self.peek() {
            Tok::For => self.for_loop().map(Stmt::For),
            Tok::Ident(_) => {
                let target = self.lvalue()?;
                let op = match self.peek() {
                    Tok::Assign => AssignOp::Set,
                    Tok::PlusAssign => AssignOp::AddAssign,
                    _ => return Err(self.error(&["`=`", "`+=`"])),
                };
                self.bump();
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Assign { target, op, value })
            }
            _ => Err(self.error(&["`for`", "identifier"])),
        }
    }

    fn lvalue(&mut self) -> Result<LValue, FrontendError> {
        let name = self.ident()?;
        let index = self.index_opt()?;
        Ok(LValue { name, index })
    }

    fn index_opt(&mut self) -> Result<Option<Expr>, FrontendError> {
        if *self.peek() == Tok::LBracket {
            self.bump();
            let e = self.expr()?;
            self.expect(Tok::RBracket)?;
            Ok(Some(e))
        } else {
            Ok(None)
        }
    }

    fn for_loop(&mut self) -> Result<ForLoop, FrontendError> {
        self.expect(Tok::For)?;
        self.expect(Tok::LParen)?;
        let var = self.ident()?;
        self.expect(Tok::Assign)?;
        let init = self.expr()?;
        self.expect(Tok::Semi)?;
        let cond_var = self.ident()?;
        let cmp = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::Ne => CmpOp::Ne,
            Tok::EqEq => CmpOp::Eq,
            _ => return Err(self.error(&["`<`", "`<=`", "`!=`"])),
        };
        self.bump();
        let bound = self.expr()?;
        self.expect(Tok::Semi)?;
        let step = self.step(&var)?;
        self.expect(Tok::RParen)?;
        if cond_var != var {
            return Err(FrontendError::UnsupportedLoopForm(format!(
                "loop condition tests `{cond_var}` but the loop variable is `{var}`"
            )));
        }
        self.expect(Tok::LBrace)?;
        let mut body = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.error(&["`}`"]));
            }
            body.push(self.stmt()?);
        }
        self.bump();
        Ok(ForLoop { var, init, cmp, bound, step, body })
    }

    fn step(&mut self, var: &str) -> Result<Expr, FrontendError> {
        let wrong_var = |name: &str| {
            FrontendError::UnsupportedLoopForm(format!("loop step updates `{name}` but the loop variable is `{var}`"))
        };
        if *self.peek() == Tok::PlusPlus {
            self.bump();
            let name = self.ident()?;
            return if name == var { Ok(Expr::Int(1)) } else { Err(wrong_var(&name)) };
        }
        let name = self.ident()?;
        if name != var {
            return Err(wrong_var(&name));
        }
        match self.peek() {
            Tok::PlusPlus => {
                self.bump();
                Ok(Expr::Int(1))
            }
            Tok::PlusAssign => {
                self.bump();
                self.expr()
            }
            Tok::Assign => {
                self.bump();
                let lhs = self.ident()?;
                if lhs != var {
                    return Err(wrong_var(&lhs));
                }
                self.expect(Tok::Plus)?;
                self.expr()
            }
            _ => Err(self.error(&["`++`", "`+=`", "`=`"])),
        }
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, FrontendError> {
        match self.peek() {
            Tok::Num(_) => self.literal().map(Expr::Int),
            Tok::Minus if matches!(self.peek_at(1), Tok::Num(_)) => self.literal().map(Expr::Int),
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(match self.index_opt()? {
                    Some(idx) => Expr::Index(name, Box::new(idx)),
                    None => Expr::Var(name),
                })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.error(&["integer literal", "identifier", "`(`"])),
        }
    }
}

pub fn parse_program(source: &str) -> Result<Program, FrontendError> {
    let toks = tokenize(source).map_err(FrontendError::Syntax)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Index(n, i) => write!(f, "{n}[{i}]"),
            Expr::Bin(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                };
                let child_prec = |e: &Expr| match e {
                    Expr::Bin(BinOp::Mul, ..) => 2,
                    Expr::Bin(..) => 1,
                    _ => 3,
                };
                // Left-associative: the right operand needs parens at equal precedence.
                if child_prec(a) < prec {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                if child_prec(b) <= prec {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Assign { target, op, value } => {
            let _ = write!(out, "{pad}{}", target.name);
            if let Some(i) = &target.index {
                let _ = write!(out, "[{i}]");
            }
            let op = match op {
                AssignOp::Set => "=",
                AssignOp::AddAssign => "+=",
            };
            let _ = writeln!(out, " {op} {value};");
        }
        Stmt::For(l) => {
            let _ = writeln!(
                out,
                "{pad}for ({v} = {}; {v} {} {}; {v} += {}) {{",
                l.init,
                l.cmp.text(),
                l.bound,
                l.step,
                v = l.var
            );
            for b in &l.body {
                write_stmt(out, b, indent + 1);
            }
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            write!(f, "int {}", d.name)?;
            if let Some(n) = d.size {
                write!(f, "[{n}]")?;
            }
            if let Some(v) = d.init {
                write!(f, " = {v}")?;
            }
            writeln!(f, ";")?;
        }
        let mut out = String::new();
        for s in &self.stmts {
            write_stmt(&mut out, s, 0);
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dot_product() {
        let p = parse_program(
            "int N = 1024; int a[1024]; int b[1024]; int sum = 0; int i;\n\
             for (i = 0; i < N; i++) { sum += a[i] * b[i]; }",
        )
        .unwrap();
        assert_eq!(p.decls.len(), 5);
        assert_eq!(p.stmts.len(), 1);
        let Stmt::For(l) = &p.stmts[0] else { panic!() };
        assert_eq!(l.body.len(), 1);
        assert!(matches!(l.body[0], Stmt::Assign { op: AssignOp::AddAssign, .. }));
    }

    #[test]
    fn empty_and_malformed() {
        assert_eq!(parse_program(""), Err(FrontendError::EmptyProgram));
        assert_eq!(parse_program("  // nothing\n"), Err(FrontendError::EmptyProgram));
        match parse_program("for(") {
            Err(FrontendError::Syntax(e)) => {
                assert_eq!(e.line, 1);
                assert_eq!(e.expected, vec!["identifier".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn step_forms() {
        for step in ["i++", "++i", "i += 1", "i = i + 1"] {
            let p = parse_program(&format!("int i; for (i = 0; i < 4; {step}) {{ }}")).unwrap();
            let Stmt::For(l) = &p.stmts[0] else { panic!() };
            assert_eq!(l.step, Expr::Int(1), "{step}");
        }
    }

    #[test]
    fn printer_keeps_tree_shape() {
        let p = parse_program("int x; x = 1 - (2 - 3) * (4 + 5) - -6;").unwrap();
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(p, again);
    }
}
