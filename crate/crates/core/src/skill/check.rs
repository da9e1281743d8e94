use std::collections::BTreeSet;

use thiserror::Error;

use super::{Atom, Expr, Overlay, ParamKind, Pos, SkillLookup, SkillRef, SkillScript, Stmt};
use crate::io::{Button, Key};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("a skill named `{0}` already exists")]
    DuplicateName(String),
    #[error("parameter `{0}` declared twice")]
    DuplicateParam(String),
    #[error("documentation is empty")]
    EmptyDoc,
    #[error("{pos}: unknown skill `{callee}`")]
    UnknownCallee { callee: String, pos: Pos },
    #[error("{pos}: unknown primitive `{name}`")]
    UnknownPrimitive { name: String, pos: Pos },
    #[error("{pos}: unknown variable `{name}`")]
    UnknownVariable { name: String, pos: Pos },
    #[error("{pos}: `{callee}` takes {expected} arguments, got {found}")]
    ArityMismatch { callee: String, expected: String, found: usize, pos: Pos },
    #[error("{pos}: argument {index} of `{callee}` must be {expected}, got {found}")]
    KindMismatch { callee: String, index: usize, expected: String, found: String, pos: Pos },
    #[error("recursive call chain {}", .0.join(" -> "))]
    RecursionRejected(Vec<String>),
    #[error("{pos}: duration {value} outside [0, {ceiling}]")]
    DurationOutOfRange { value: f64, ceiling: f64, pos: Pos },
    #[error("{pos}: {message}")]
    InvalidLiteral { message: String, pos: Pos },
}

/// Static kind of an expression or argument slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ArgKind {
    Number,
    String,
    Point,
    List,
    Label,
}

impl ArgKind {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            ArgKind::Number => "number",
            ArgKind::String => "string",
            ArgKind::Point => "point",
            ArgKind::List => "list",
            ArgKind::Label => "label",
        }
    }

    pub(crate) fn of_param(kind: ParamKind) -> Self {
        match kind {
            ParamKind::Number => ArgKind::Number,
            ParamKind::String => ArgKind::String,
            ParamKind::Point => ArgKind::Point,
            ParamKind::Label => ArgKind::Label,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Default {
    Required,
    Num(f64),
    Str(&'static str),
}

/// What a literal string in a slot must name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Domain {
    Any,
    Key,
    Button,
    WaitMode,
    Coords,
    Duration,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Slot {
    pub kind: ArgKind,
    pub default: Default,
    pub domain: Domain,
}

const fn slot(kind: ArgKind, default: Default, domain: Domain) -> Slot {
    Slot { kind, default, domain }
}

const KEY: Slot = slot(ArgKind::String, Default::Required, Domain::Key);
const KEYS: Slot = slot(ArgKind::List, Default::Required, Domain::Key);
const HOLD: Slot = slot(ArgKind::Number, Default::Num(0.1), Domain::Duration);
const INSTANT: Slot = slot(ArgKind::Number, Default::Num(0.0), Domain::Duration);
const BUTTON: Slot = slot(ArgKind::String, Default::Str("left"), Domain::Button);
const WAIT_MODE: Slot = slot(ArgKind::String, Default::Str("sync"), Domain::WaitMode);
const POINT: Slot = slot(ArgKind::Point, Default::Required, Domain::Any);
const LABEL: Slot = slot(ArgKind::Label, Default::Required, Domain::Any);

pub(crate) const PRIMITIVES: &[(&str, &[Slot])] = &[
    ("key_press", &[KEY, HOLD]),
    ("key_hold", &[KEY]),
    ("key_release", &[KEY]),
    ("key_combo", &[KEYS, HOLD, WAIT_MODE]),
    ("hotkey", &[KEYS, HOLD, WAIT_MODE]),
    ("type_text", &[slot(ArgKind::String, Default::Required, Domain::Any), INSTANT]),
    ("mouse_click", &[BUTTON, HOLD]),
    ("mouse_hold", &[BUTTON]),
    ("mouse_release", &[BUTTON]),
    ("mouse_move", &[POINT, INSTANT, slot(ArgKind::String, Default::Str("absolute"), Domain::Coords)]),
    ("mouse_drag", &[POINT]),
    ("wheel_scroll", &[slot(ArgKind::Number, Default::Required, Domain::Any), INSTANT]),
    ("wait", &[slot(ArgKind::Number, Default::Required, Domain::Duration)]),
    ("click_on_label", &[LABEL]),
    ("double_click_on_label", &[LABEL]),
    ("hover_over_label", &[LABEL]),
    ("mouse_drag_to_label", &[LABEL]),
];

pub(crate) fn primitive(name: &str) -> Option<&'static [Slot]> {
    PRIMITIVES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub(crate) fn arity_range(slots: &[Slot]) -> (usize, usize) {
    let min = slots.iter().filter(|s| matches!(s.default, Default::Required)).count();
    (min, slots.len())
}

pub(crate) fn arity_text(min: usize, max: usize) -> String {
    if min == max {
        min.to_string()
    } else {
        format!("{min} to {max}")
    }
}

fn check_domain(domain: Domain, s: &str) -> Result<(), String> {
    match domain {
        Domain::Key => Key::new(s).map(|_| ()).map_err(|e| e.to_string()),
        Domain::Button => s.parse::<Button>().map(|_| ()).map_err(|e| e.to_string()),
        Domain::WaitMode if s == "sync" || s == "async" => Ok(()),
        Domain::WaitMode => Err(format!("wait mode must be sync or async, got `{s}`")),
        Domain::Coords if s == "absolute" || s == "relative" => Ok(()),
        Domain::Coords => Err(format!("coordinate system must be absolute or relative, got `{s}`")),
        _ => Ok(()),
    }
}

struct Checker<'a> {
    script: &'a SkillScript,
    lookup: &'a dyn SkillLookup,
    ceiling: f64,
    errors: Vec<ValidationError>,
}

impl Checker<'_> {
    fn var_kind(&mut self, name: &str, pos: Pos) -> Option<ArgKind> {
        match self.script.params.iter().find(|p| p.name == name) {
            Some(p) => Some(ArgKind::of_param(p.kind)),
            None => {
                self.errors.push(ValidationError::UnknownVariable { name: name.to_string(), pos });
                None
            }
        }
    }

    fn number_operand(&mut self, a: &Atom, pos: Pos, callee: &str, index: usize) -> bool {
        let k = match a {
            Atom::Number(_) => Some(ArgKind::Number),
            Atom::Var(v) => self.var_kind(v, pos),
            Atom::Str(_) => Some(ArgKind::String),
            Atom::Point(..) => Some(ArgKind::Point),
            Atom::List(_) => Some(ArgKind::List),
        };
        match k {
            Some(ArgKind::Number) | None => true,
            Some(other) => {
                self.errors.push(ValidationError::KindMismatch {
                    callee: callee.to_string(),
                    index,
                    expected: "number operand".into(),
                    found: other.name().into(),
                    pos,
                });
                false
            }
        }
    }

    /// Static kind of `e`, or None when an error was already recorded.
    fn expr_kind(&mut self, e: &Expr, pos: Pos, callee: &str, index: usize) -> Option<ArgKind> {
        match e {
            Expr::Atom(Atom::Number(_)) => Some(ArgKind::Number),
            Expr::Atom(Atom::Str(_)) => Some(ArgKind::String),
            Expr::Atom(Atom::List(_)) => Some(ArgKind::List),
            Expr::Atom(Atom::Var(v)) => self.var_kind(v, pos),
            Expr::Atom(Atom::Point(x, y)) => {
                let ok = self.number_operand(x, pos, callee, index) & self.number_operand(y, pos, callee, index);
                ok.then_some(ArgKind::Point)
            }
            Expr::Binary(_, a, b) => {
                let ok = self.number_operand(a, pos, callee, index) & self.number_operand(b, pos, callee, index);
                ok.then_some(ArgKind::Number)
            }
        }
    }

    fn check_args(&mut self, callee: &str, args: &[Expr], slots: &[Slot], pos: Pos) {
        let (min, max) = arity_range(slots);
        if args.len() < min || args.len() > max {
            self.errors.push(ValidationError::ArityMismatch {
                callee: callee.to_string(),
                expected: arity_text(min, max),
                found: args.len(),
                pos,
            });
            return;
        }
        for (i, (arg, slot)) in args.iter().zip(slots).enumerate() {
            let Some(kind) = self.expr_kind(arg, pos, callee, i + 1) else { continue };
            let accepted = kind == slot.kind
                || (slot.kind == ArgKind::Label
                    && matches!(arg, Expr::Atom(Atom::Number(n)) if *n >= 1.0 && n.fract() == 0.0));
            if !accepted {
                self.errors.push(ValidationError::KindMismatch {
                    callee: callee.to_string(),
                    index: i + 1,
                    expected: slot.kind.name().into(),
                    found: kind.name().into(),
                    pos,
                });
                continue;
            }
            match (arg, slot.domain) {
                (Expr::Atom(Atom::Number(v)), Domain::Duration) if !(0.0..=self.ceiling).contains(v) => {
                    self.errors.push(ValidationError::DurationOutOfRange { value: *v, ceiling: self.ceiling, pos });
                }
                (Expr::Atom(Atom::Str(s)), d) => {
                    if let Err(message) = check_domain(d, s) {
                        self.errors.push(ValidationError::InvalidLiteral { message, pos });
                    }
                }
                (Expr::Atom(Atom::List(items)), d) => {
                    for s in items {
                        if let Err(message) = check_domain(d, s) {
                            self.errors.push(ValidationError::InvalidLiteral { message, pos });
                        }
                    }
                    let unique: BTreeSet<&String> = items.iter().collect();
                    if items.is_empty() || unique.len() != items.len() {
                        self.errors.push(ValidationError::InvalidLiteral {
                            message: "key list must be non-empty and without duplicates".into(),
                            pos,
                        });
                    }
                }
                _ => {}
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Prim { name, args, pos } => match primitive(name) {
                    Some(slots) => self.check_args(name, args, slots, *pos),
                    None => self.errors.push(ValidationError::UnknownPrimitive { name: name.clone(), pos: *pos }),
                },
                Stmt::Call { callee, args, pos } => {
                    let target = if *callee == self.script.name {
                        Some(self.script.params.clone())
                    } else {
                        self.lookup.lookup(callee).map(|r| r.params())
                    };
                    match target {
                        Some(params) => {
                            let slots: Vec<Slot> = params
                                .iter()
                                .map(|p| slot(ArgKind::of_param(p.kind), Default::Required, Domain::Any))
                                .collect();
                            self.check_args(callee, args, &slots, *pos);
                        }
                        None => self.errors.push(ValidationError::UnknownCallee { callee: callee.clone(), pos: *pos }),
                    }
                }
                Stmt::Repeat { body, .. } => self.stmts(body),
            }
        }
    }
}

/// First call cycle reachable from `start`, as a path ending where it began.
pub fn call_graph_cycle(start: &str, lookup: &dyn SkillLookup) -> Option<Vec<String>> {
    fn dfs(name: &str, lookup: &dyn SkillLookup, stack: &mut Vec<String>, done: &mut BTreeSet<String>) -> Option<Vec<String>> {
        if let Some(i) = stack.iter().position(|s| s == name) {
            let mut cycle = stack[i..].to_vec();
            cycle.push(name.to_string());
            return Some(cycle);
        }
        if done.contains(name) {
            return None;
        }
        let Some(SkillRef::Script(script)) = lookup.lookup(name) else { return None };
        stack.push(name.to_string());
        for callee in script.callees() {
            if let Some(c) = dfs(callee, lookup, stack, done) {
                return Some(c);
            }
        }
        stack.pop();
        done.insert(name.to_string());
        None
    }
    dfs(start, lookup, &mut Vec::new(), &mut BTreeSet::new())
}

/// Checks a script against a registry: name collision, documentation,
/// callees, argument arity and kinds, literal durations and recursion.
pub fn validate(script: &SkillScript, registry: &dyn SkillLookup, ceiling: f64) -> Result<(), Vec<ValidationError>> {
    validate_inner(script, registry, ceiling, false)
}

/// Like [`validate`] but for a new version of an existing skill.
pub fn validate_replacement(script: &SkillScript, registry: &dyn SkillLookup, ceiling: f64) -> Result<(), Vec<ValidationError>> {
    validate_inner(script, registry, ceiling, true)
}

fn validate_inner(
    script: &SkillScript,
    registry: &dyn SkillLookup,
    ceiling: f64,
    allow_existing: bool,
) -> Result<(), Vec<ValidationError>> {
    let mut c = Checker { script, lookup: registry, ceiling, errors: Vec::new() };
    if !allow_existing && registry.lookup(&script.name).is_some() {
        c.errors.push(ValidationError::DuplicateName(script.name.clone()));
    }
    if script.doc.trim().is_empty() {
        c.errors.push(ValidationError::EmptyDoc);
    }
    let mut seen = BTreeSet::new();
    for p in &script.params {
        if !seen.insert(&p.name) {
            c.errors.push(ValidationError::DuplicateParam(p.name.clone()));
        }
    }
    c.stmts(&script.body);
    let overlay = Overlay { base: registry, extra: script };
    if let Some(cycle) = call_graph_cycle(&script.name, &overlay) {
        c.errors.push(ValidationError::RecursionRejected(cycle));
    }
    if c.errors.is_empty() {
        Ok(())
    } else {
        Err(c.errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DEFAULT_DURATION_CEILING;
    use crate::skill::{parse, Registry, Skill};

    fn reg(srcs: &[&str]) -> Registry {
        let mut r = Registry::with_natives();
        for s in srcs {
            r.insert(Skill::Script(parse(s).unwrap()));
        }
        r
    }

    fn errs(src: &str, r: &Registry) -> Vec<ValidationError> {
        validate(&parse(src).unwrap(), r, DEFAULT_DURATION_CEILING).err().unwrap_or_default()
    }

    #[test]
    fn duplicate_name() {
        let r = reg(&[r#"skill fight() doc "punch" { key_press("f", 0.1) }"#]);
        let e = errs(r#"skill fight() doc "kick" { key_press("k", 0.1) }"#, &r);
        assert_eq!(e, vec![ValidationError::DuplicateName("fight".into())]);
    }

    #[test]
    fn unknown_callee() {
        let e = errs(r#"skill run() doc "r" { call sprint(2) }"#, &reg(&[]));
        assert!(matches!(&e[..], [ValidationError::UnknownCallee { callee, .. }] if callee == "sprint"));
    }

    #[test]
    fn self_and_mutual_recursion() {
        let e = errs(r#"skill loop_forever() doc "l" { call loop_forever() }"#, &reg(&[]));
        assert_eq!(e, vec![ValidationError::RecursionRejected(vec!["loop_forever".into(), "loop_forever".into()])]);

        // `b` already calls `a`, which does not exist yet; adding `a` that calls `b` closes a cycle.
        let mut r = reg(&[]);
        r.insert(Skill::Script(parse(r#"skill b() doc "b" { call a() }"#).unwrap()));
        let e = errs(r#"skill a() doc "a" { call b() }"#, &r);
        assert!(e.iter().any(|e| matches!(e, ValidationError::RecursionRejected(c) if c.len() == 3)));
    }

    #[test]
    fn arity_and_kinds() {
        let r = reg(&[r#"skill turn(degree: number) doc "t" { key_press("right", degree / 180) }"#]);
        let e = errs(r#"skill x() doc "x" { call turn(1, 2) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::ArityMismatch { .. }]));
        let e = errs(r#"skill x() doc "x" { call turn("left") }"#, &r);
        assert!(matches!(&e[..], [ValidationError::KindMismatch { .. }]));
        let e = errs(r#"skill x(p: point) doc "x" { wait(p) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::KindMismatch { .. }]));
        let e = errs(r#"skill x(s: string) doc "x" { wait(s + 1) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::KindMismatch { .. }]));
        assert!(errs(r#"skill x(l: label) doc "x" { click_on_label(l); click_on_label(3) }"#, &r).is_empty());
        assert!(!errs(r#"skill x() doc "x" { click_on_label(0) }"#, &r).is_empty());
    }

    #[test]
    fn literal_checks() {
        let r = reg(&[]);
        let e = errs(r#"skill x() doc "x" { key_press("e", 31) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::DurationOutOfRange { value, .. }] if *value == 31.0));
        let e = errs(r#"skill x() doc "x" { key_press("nope", 1) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::InvalidLiteral { .. }]));
        let e = errs(r#"skill x() doc "x" { key_combo(["ctrl", "ctrl"]) }"#, &r);
        assert!(matches!(&e[..], [ValidationError::InvalidLiteral { .. }]));
        let e = errs(r#"skill x() doc "x" { frobnicate() }"#, &r);
        assert!(matches!(&e[..], [ValidationError::UnknownPrimitive { .. }]));
        let e = errs(r#"skill x(a: number, a: number) doc " " { wait(b) }"#, &r);
        assert_eq!(e.len(), 3);
    }
}
