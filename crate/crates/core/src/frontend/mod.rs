//! Source language front end: a small C-like loop language of int32 scalars
//! and 1-D int32 arrays.
//!
//! ```text
//! program := decl* stmt*
//! decl    := "int" ident ("[" intlit "]")? ("=" intlit)? ";"
//! stmt    := ident index? "=" expr ";"
//!          | ident index? "+=" expr ";"
//!          | "for" "(" ident "=" expr ";" ident ("<"|"<=") expr ";" step ")" "{" stmt* "}"
//! step    := ident "++" | "++" ident | ident "+=" expr | ident "=" ident "+" expr
//! expr    := term (("+"|"-") term)*
//! term    := factor ("*" factor)*
//! factor  := "-"? intlit | ident index? | "(" expr ")"
//! index   := "[" expr "]"
//! ```

pub mod ast;
pub mod check;
pub mod interp;
pub mod ir;
mod lexer;

use std::fmt;

use thiserror::Error;

pub use self::ast::{parse_program, Program};
pub use self::check::{typecheck, CheckedProgram};
pub use self::ir::{build_loop_ir, innermost_loops, LoopIr, LoopRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: expected {}", self.line, self.column, self.expected.join(" or "))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("syntax error at {0}")]
    Syntax(SyntaxError),
    #[error("empty program")]
    EmptyProgram,
    #[error("undeclared identifier `{0}`")]
    UndeclaredIdentifier(String),
    #[error("`{0}` is declared more than once")]
    DuplicateDeclaration(String),
    #[error("index into `{0}` is not affine in the enclosing loop variables")]
    NonAffineIndex(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unsupported loop form: {0}")]
    UnsupportedLoopForm(String),
}

/// Parse, check and lower a source text.
pub fn compile_to_ir(source: &str) -> Result<LoopIr, FrontendError> {
    let ast = parse_program(source)?;
    let checked = typecheck(&ast)?;
    build_loop_ir(&checked)
}
