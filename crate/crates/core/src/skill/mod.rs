//! The skill language: small, non-recursive programs over action primitives.
//!
//! ```text
//! skill turn_and_move_forward(degree: number, duration: number)
//! doc "Turn by degree, then walk forward."
//! {
//!     call turn(degree);
//!     call move_forward(duration);
//! }
//! ```
//!
//! Scripts are parsed with [`parse`], checked against a registry with
//! [`validate`] and turned into primitives with [`compile`]. Skills that need
//! runtime logic the language cannot express are [`NativeSkill`]s.

mod check;
mod compile;
mod native;
mod parse;
pub mod presets;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::IoError;

pub use check::{call_graph_cycle, validate, validate_replacement, ValidationError};
pub use compile::{check_call, compile, CompileContext, CompileError, MAX_CALL_DEPTH};
pub use native::{native_skills, NativeSkill, PressHotkey, TaskIsNotFeasible, TASK_IS_NOT_FEASIBLE};
pub use parse::{extract_code_blocks, parse, parse_call, parse_many, SyntaxError};

/// Largest allowed `repeat` count.
pub const MAX_REPEAT: u32 = 1000;

/// Source position, 1-based. Ignored by equality so that a re-parsed script
/// compares equal to the original.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Number,
    String,
    Point,
    /// A mark id on the current screen.
    Label,
}

impl ParamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamKind::Number => "number",
            ParamKind::String => "string",
            ParamKind::Point => "point",
            ParamKind::Label => "label",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "number" => ParamKind::Number,
            "string" => ParamKind::String,
            "point" => ParamKind::Point,
            "label" => ParamKind::Label,
            _ => return None,
        })
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

impl Param {
    pub fn new(name: &str, kind: ParamKind) -> Self {
        Self { name: name.to_string(), kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(&self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Number(f64),
    Str(String),
    /// `(x, y)`; components are numbers or number parameters.
    Point(Box<Atom>, Box<Atom>),
    /// `["ctrl", "t"]`
    List(Vec<String>),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Atom(Atom),
    Binary(BinOp, Atom, Atom),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Prim { name: String, args: Vec<Expr>, pos: Pos },
    Call { callee: String, args: Vec<Expr>, pos: Pos },
    Repeat { count: u32, body: Vec<Stmt>, pos: Pos },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillScript {
    pub name: String,
    pub params: Vec<Param>,
    pub doc: String,
    pub body: Vec<Stmt>,
}

impl SkillScript {
    /// Names of skills called anywhere in the body, in first-use order.
    pub fn callees(&self) -> Vec<&str> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a str>) {
            for s in stmts {
                match s {
                    Stmt::Call { callee, .. } if !out.contains(&callee.as_str()) => out.push(callee),
                    Stmt::Repeat { body, .. } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
        format!("{}({})", self.name, params.join(", "))
    }
}

/// A concrete argument value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Str(String),
    Point(f64, f64),
    List(Vec<String>),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Str(_) => "string",
            Value::Point(..) => "point",
            Value::List(_) => "list",
        }
    }

    /// Whether this value can be passed for a parameter of `kind`. Labels
    /// are positive integer numbers.
    pub fn fits(&self, kind: ParamKind) -> bool {
        match (self, kind) {
            (Value::Number(_), ParamKind::Number) => true,
            (Value::Number(n), ParamKind::Label) => *n >= 1.0 && n.fract() == 0.0 && *n <= u32::MAX as f64,
            (Value::Str(_), ParamKind::String) => true,
            (Value::Point(..), ParamKind::Point) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Str(s) => write_str_lit(f, s),
            Value::Point(x, y) => write!(f, "({x}, {y})"),
            Value::List(items) => write_list(f, items),
        }
    }
}

/// A skill invocation chosen by the planner, e.g. `move_forward(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCall {
    pub name: String,
    pub args: Vec<Value>,
}

impl SkillCall {
    pub fn new(name: &str, args: Vec<Value>) -> Self {
        Self { name: name.to_string(), args }
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// What a registry knows about a skill name.
#[derive(Clone, Copy)]
pub enum SkillRef<'a> {
    Script(&'a SkillScript),
    Native(&'a dyn NativeSkill),
}

impl SkillRef<'_> {
    pub fn params(&self) -> Vec<Param> {
        match self {
            SkillRef::Script(s) => s.params.clone(),
            SkillRef::Native(n) => n.params(),
        }
    }

    pub fn doc(&self) -> String {
        match self {
            SkillRef::Script(s) => s.doc.clone(),
            SkillRef::Native(n) => n.doc().to_string(),
        }
    }
}

/// Name lookup used by validation and compilation.
pub trait SkillLookup {
    fn lookup(&self, name: &str) -> Option<SkillRef<'_>>;
}

#[derive(Clone)]
pub enum Skill {
    Script(SkillScript),
    Native(Arc<dyn NativeSkill>),
}

impl Skill {
    pub fn name(&self) -> &str {
        match self {
            Skill::Script(s) => &s.name,
            Skill::Native(n) => n.name(),
        }
    }

    pub fn as_ref(&self) -> SkillRef<'_> {
        match self {
            Skill::Script(s) => SkillRef::Script(s),
            Skill::Native(n) => SkillRef::Native(n.as_ref()),
        }
    }
}

impl fmt::Debug for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skill::Script(s) => f.debug_tuple("Script").field(&s.name).finish(),
            Skill::Native(n) => f.debug_tuple("Native").field(&n.name()).finish(),
        }
    }
}

impl PartialEq for Skill {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Skill::Script(a), Skill::Script(b)) => a == b,
            (Skill::Native(a), Skill::Native(b)) => a.name() == b.name(),
            _ => false,
        }
    }
}

/// A plain name-to-skill map.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    skills: BTreeMap<String, Skill>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, skill: Skill) -> Option<Skill> {
        self.skills.insert(skill.name().to_string(), skill)
    }

    pub fn with_natives() -> Self {
        let mut r = Self::new();
        for n in native_skills() {
            r.insert(Skill::Native(n));
        }
        r
    }

    pub fn get(&self, name: &str) -> Option<&Skill> {
        self.skills.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.skills.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }
}

impl SkillLookup for Registry {
    fn lookup(&self, name: &str) -> Option<SkillRef<'_>> {
        self.skills.get(name).map(Skill::as_ref)
    }
}

/// Lookup that sees `extra` on top of `base`.
pub struct Overlay<'a> {
    pub base: &'a dyn SkillLookup,
    pub extra: &'a SkillScript,
}

impl SkillLookup for Overlay<'_> {
    fn lookup(&self, name: &str) -> Option<SkillRef<'_>> {
        if name == self.extra.name {
            Some(SkillRef::Script(self.extra))
        } else {
            self.base.lookup(name)
        }
    }
}

#[derive(Debug, Error)]
pub enum SkillError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{}", join_errors(.0))]
    Invalid(Vec<ValidationError>),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Io(#[from] IoError),
}

fn join_errors(errs: &[ValidationError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

fn write_str_lit(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

fn write_list(f: &mut impl fmt::Write, items: &[String]) -> fmt::Result {
    f.write_char('[')?;
    for (i, s) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_str_lit(f, s)?;
    }
    f.write_char(']')
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Number(n) => write!(f, "{n}"),
            Atom::Str(s) => write_str_lit(f, s),
            Atom::Point(x, y) => write!(f, "({x}, {y})"),
            Atom::List(items) => write_list(f, items),
            Atom::Var(v) => f.write_str(v),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Binary(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

fn write_stmts(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], indent: usize) -> fmt::Result {
    let pad = "    ".repeat(indent);
    for s in stmts {
        match s {
            Stmt::Prim { name, args, .. } => {
                write!(f, "{pad}{name}(")?;
                write_args(f, args)?;
                writeln!(f, ");")?;
            }
            Stmt::Call { callee, args, .. } => {
                write!(f, "{pad}call {callee}(")?;
                write_args(f, args)?;
                writeln!(f, ");")?;
            }
            Stmt::Repeat { count, body, .. } => {
                writeln!(f, "{pad}repeat {count} {{")?;
                write_stmts(f, body, indent + 1)?;
                writeln!(f, "{pad}}}")?;
            }
        }
    }
    Ok(())
}

/// Canonical source form; [`parse`] reads it back to an equal script.
impl fmt::Display for SkillScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "skill {}", self.signature())?;
        f.write_str("doc ")?;
        write_str_lit(f, &self.doc)?;
        writeln!(f, "\n{{")?;
        write_stmts(f, &self.body, 1)?;
        writeln!(f, "}}")
    }
}
