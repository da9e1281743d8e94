use std::collections::BTreeMap;

use thiserror::Error;

use super::check::{arity_range, arity_text, primitive, ArgKind, Default, Slot};
use super::{Atom, BinOp, Expr, Param, SkillCall, SkillLookup, SkillRef, Stmt, Value};
use crate::augment::MarkSet;
use crate::io::{
    ActionPrimitive, Button, CoordSystem, IoError, Key, ScreenSize, Tween, WaitMode, DEFAULT_DURATION_CEILING,
};

/// Nesting limit for skill calls during inlining.
pub const MAX_CALL_DEPTH: usize = 64;

/// Upper bound on the number of primitives one call may expand to.
const MAX_EXPANSION: usize = 100_000;

/// Hold time of the button press in label clicks.
const LABEL_CLICK_SECS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("`{callee}` takes {expected} arguments, got {found}")]
    ArityMismatch { callee: String, expected: String, found: usize },
    #[error("argument {index} of `{callee}` must be {expected}, got {found}")]
    KindMismatch { callee: String, index: usize, expected: String, found: String },
    #[error("label {0} is not on screen")]
    LabelNotFound(u32),
    #[error("expression `{0}` does not produce a finite number")]
    ExpressionOverflow(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("call nesting deeper than {MAX_CALL_DEPTH}")]
    DepthExceeded,
    #[error("expansion longer than {MAX_EXPANSION} primitives")]
    TooLong,
    #[error("invalid primitive: {0}")]
    Primitive(#[from] IoError),
    #[error("native skill `{name}` failed: {message}")]
    Native { name: String, message: String },
}

/// Screen facts needed to turn a call into concrete primitives.
#[derive(Debug, Clone, Copy)]
pub struct CompileContext<'a> {
    pub screen: ScreenSize,
    pub marks: Option<&'a MarkSet>,
    pub ceiling: f64,
}

impl<'a> CompileContext<'a> {
    pub fn new(screen: ScreenSize) -> Self {
        Self { screen, marks: None, ceiling: DEFAULT_DURATION_CEILING }
    }

    pub fn with_marks(mut self, marks: &'a MarkSet) -> Self {
        self.marks = Some(marks);
        self
    }

    pub fn label_point(&self, id: u32) -> Result<(f64, f64), CompileError> {
        let mark = self.marks.and_then(|m| m.get(id)).ok_or(CompileError::LabelNotFound(id))?;
        let c = mark.rect.centroid();
        Ok((c.x as f64, c.y as f64))
    }
}

/// Checks arity and argument kinds of a planner call against the registry.
pub fn check_call(call: &SkillCall, lookup: &dyn SkillLookup) -> Result<(), CompileError> {
    let skill = lookup.lookup(&call.name).ok_or_else(|| CompileError::UnknownSkill(call.name.clone()))?;
    check_values(&call.name, &call.args, &skill.params())
}

fn check_values(name: &str, args: &[Value], params: &[Param]) -> Result<(), CompileError> {
    if args.len() != params.len() {
        return Err(CompileError::ArityMismatch {
            callee: name.to_string(),
            expected: params.len().to_string(),
            found: args.len(),
        });
    }
    for (i, (a, p)) in args.iter().zip(params).enumerate() {
        if !a.fits(p.kind) {
            return Err(CompileError::KindMismatch {
                callee: name.to_string(),
                index: i + 1,
                expected: p.kind.to_string(),
                found: a.kind_name().to_string(),
            });
        }
    }
    Ok(())
}

/// Expands a call into primitives: parameters substituted, callees inlined
/// depth-first, repeats unrolled and labels resolved to mark centroids.
pub fn compile(call: &SkillCall, lookup: &dyn SkillLookup, ctx: &CompileContext) -> Result<Vec<ActionPrimitive>, CompileError> {
    let mut out = Vec::new();
    expand(&call.name, &call.args, lookup, ctx, 0, &mut out)?;
    Ok(out)
}

fn expand(
    name: &str,
    args: &[Value],
    lookup: &dyn SkillLookup,
    ctx: &CompileContext,
    depth: usize,
    out: &mut Vec<ActionPrimitive>,
) -> Result<(), CompileError> {
    if depth >= MAX_CALL_DEPTH {
        return Err(CompileError::DepthExceeded);
    }
    let skill = lookup.lookup(name).ok_or_else(|| CompileError::UnknownSkill(name.to_string()))?;
    check_values(name, args, &skill.params())?;
    match skill {
        SkillRef::Native(n) => {
            out.extend(n.compile(args, ctx)?);
            Ok(())
        }
        SkillRef::Script(script) => {
            let env: BTreeMap<&str, &Value> = script.params.iter().map(|p| p.name.as_str()).zip(args).collect();
            stmts(&script.body, &env, lookup, ctx, depth, out)
        }
    }
}

fn stmts(
    body: &[Stmt],
    env: &BTreeMap<&str, &Value>,
    lookup: &dyn SkillLookup,
    ctx: &CompileContext,
    depth: usize,
    out: &mut Vec<ActionPrimitive>,
) -> Result<(), CompileError> {
    for s in body {
        match s {
            Stmt::Prim { name, args, .. } => {
                let values = args.iter().map(|e| eval(e, env)).collect::<Result<Vec<_>, _>>()?;
                out.extend(lower(name, values, ctx)?);
            }
            Stmt::Call { callee, args, .. } => {
                let values = args.iter().map(|e| eval(e, env)).collect::<Result<Vec<_>, _>>()?;
                expand(callee, &values, lookup, ctx, depth + 1, out)?;
            }
            Stmt::Repeat { count, body, .. } => {
                for _ in 0..*count {
                    stmts(body, env, lookup, ctx, depth, out)?;
                    if out.len() > MAX_EXPANSION {
                        return Err(CompileError::TooLong);
                    }
                }
            }
        }
        if out.len() > MAX_EXPANSION {
            return Err(CompileError::TooLong);
        }
    }
    Ok(())
}

fn atom_value(a: &Atom, env: &BTreeMap<&str, &Value>) -> Result<Value, CompileError> {
    Ok(match a {
        Atom::Number(n) => Value::Number(*n),
        Atom::Str(s) => Value::Str(s.clone()),
        Atom::List(items) => Value::List(items.clone()),
        Atom::Var(v) => (*env.get(v.as_str()).ok_or_else(|| CompileError::UnboundVariable(v.clone()))?).clone(),
        Atom::Point(x, y) => Value::Point(number(x, env)?, number(y, env)?),
    })
}

fn number(a: &Atom, env: &BTreeMap<&str, &Value>) -> Result<f64, CompileError> {
    match atom_value(a, env)? {
        Value::Number(n) => Ok(n),
        other => Err(CompileError::KindMismatch {
            callee: "expression".into(),
            index: 0,
            expected: "number".into(),
            found: other.kind_name().into(),
        }),
    }
}

fn eval(e: &Expr, env: &BTreeMap<&str, &Value>) -> Result<Value, CompileError> {
    match e {
        Expr::Atom(a) => atom_value(a, env),
        Expr::Binary(op, a, b) => {
            let (x, y) = (number(a, env)?, number(b, env)?);
            let r = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            };
            if r.is_finite() {
                Ok(Value::Number(r))
            } else {
                Err(CompileError::ExpressionOverflow(e.to_string()))
            }
        }
    }
}

fn fill_defaults(name: &str, slots: &[Slot], mut values: Vec<Value>) -> Result<Vec<Value>, CompileError> {
    let (min, max) = arity_range(slots);
    if values.len() < min || values.len() > max {
        return Err(CompileError::ArityMismatch { callee: name.into(), expected: arity_text(min, max), found: values.len() });
    }
    for slot in &slots[values.len()..] {
        values.push(match slot.default {
            Default::Num(n) => Value::Number(n),
            Default::Str(s) => Value::Str(s.to_string()),
            Default::Required => unreachable!("required slots are covered by the arity check"),
        });
    }
    for (i, (v, slot)) in values.iter().zip(slots).enumerate() {
        let ok = match (v, slot.kind) {
            (Value::Number(_), ArgKind::Number) | (Value::Str(_), ArgKind::String) => true,
            (Value::Point(..), ArgKind::Point) | (Value::List(_), ArgKind::List) => true,
            (v, ArgKind::Label) => v.fits(super::ParamKind::Label),
            _ => false,
        };
        if !ok {
            return Err(CompileError::KindMismatch {
                callee: name.into(),
                index: i + 1,
                expected: slot.kind.name().into(),
                found: v.kind_name().into(),
            });
        }
    }
    Ok(values)
}

fn str_of(v: &Value) -> &str {
    match v {
        Value::Str(s) => s,
        _ => "",
    }
}

fn num_of(v: &Value) -> f64 {
    match v {
        Value::Number(n) => *n,
        _ => f64::NAN,
    }
}

fn wait_mode(s: &str) -> Result<WaitMode, IoError> {
    match s {
        "sync" => Ok(WaitMode::Sync),
        "async" => Ok(WaitMode::Async),
        other => Err(IoError::InvalidPrimitive(format!("unknown wait mode `{other}`"))),
    }
}

fn keys(v: &Value) -> Result<Vec<Key>, IoError> {
    match v {
        Value::List(items) => items.iter().map(|k| Key::new(k)).collect(),
        _ => Ok(Vec::new()),
    }
}

/// Turns one primitive statement with evaluated arguments into primitives.
fn lower(name: &str, values: Vec<Value>, ctx: &CompileContext) -> Result<Vec<ActionPrimitive>, CompileError> {
    use ActionPrimitive as P;
    let slots = primitive(name).ok_or_else(|| CompileError::UnknownSkill(name.to_string()))?;
    let v = fill_defaults(name, slots, values)?;
    let label = |i: usize| ctx.label_point(num_of(&v[i]) as u32);
    let move_to = |(x, y): (f64, f64)| P::MouseMove { x, y, speed: 0.0, coords: CoordSystem::Absolute, tween: Tween::Linear };
    let click = || P::ButtonClick { button: Button::Left, duration: LABEL_CLICK_SECS };
    let out = match name {
        "key_press" => vec![P::KeyPress { key: Key::new(str_of(&v[0]))?, duration: num_of(&v[1]) }],
        "key_hold" => vec![P::KeyHold { key: Key::new(str_of(&v[0]))? }],
        "key_release" => vec![P::KeyRelease { key: Key::new(str_of(&v[0]))? }],
        "key_combo" => vec![P::KeyCombo { keys: keys(&v[0])?, duration: num_of(&v[1]), wait: wait_mode(str_of(&v[2]))? }],
        "hotkey" => vec![P::Hotkey { keys: keys(&v[0])?, duration: num_of(&v[1]), wait: wait_mode(str_of(&v[2]))? }],
        "type_text" => vec![P::TypeText { text: str_of(&v[0]).to_string(), duration: num_of(&v[1]) }],
        "mouse_click" => vec![P::ButtonClick { button: str_of(&v[0]).parse()?, duration: num_of(&v[1]) }],
        "mouse_hold" => vec![P::ButtonHold { button: str_of(&v[0]).parse()? }],
        "mouse_release" => vec![P::ButtonRelease { button: str_of(&v[0]).parse()? }],
        "mouse_move" => {
            let Value::Point(x, y) = v[0] else { unreachable!("kind checked") };
            let coords = match str_of(&v[2]) {
                "absolute" => CoordSystem::Absolute,
                "relative" => CoordSystem::Relative,
                other => return Err(IoError::InvalidPrimitive(format!("unknown coordinate system `{other}`")).into()),
            };
            vec![P::MouseMove { x, y, speed: num_of(&v[1]), coords, tween: Tween::Linear }]
        }
        "mouse_drag" => {
            let Value::Point(x, y) = v[0] else { unreachable!("kind checked") };
            vec![P::MouseDrag { x, y }]
        }
        "wheel_scroll" => {
            let d = num_of(&v[0]);
            if d.fract() != 0.0 || d.abs() > i32::MAX as f64 {
                return Err(IoError::InvalidPrimitive(format!("scroll distance {d} is not an integer")).into());
            }
            vec![P::Scroll { distance: d as i32, duration: num_of(&v[1]) }]
        }
        "wait" => vec![P::Wait { duration: num_of(&v[0]) }],
        "click_on_label" => vec![move_to(label(0)?), click()],
        "double_click_on_label" => vec![move_to(label(0)?), click(), click()],
        "hover_over_label" => vec![move_to(label(0)?)],
        "mouse_drag_to_label" => {
            let (x, y) = label(0)?;
            vec![P::MouseDrag { x, y }]
        }
        other => return Err(CompileError::UnknownSkill(other.to_string())),
    };
    for p in &out {
        p.validate(ctx.screen, ctx.ceiling)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::skill::{parse, Registry, Skill};

    const SCREEN: ScreenSize = ScreenSize { width: 800, height: 600 };

    fn reg(srcs: &[&str]) -> Registry {
        let mut r = Registry::with_natives();
        for s in srcs {
            r.insert(Skill::Script(parse(s).unwrap()));
        }
        r
    }

    fn run(r: &Registry, call: &str) -> Result<Vec<ActionPrimitive>, CompileError> {
        compile(&super::super::parse_call(call).unwrap(), r, &CompileContext::new(SCREEN))
    }

    #[test]
    fn repeat_unrolls() {
        let r = reg(&[r#"skill f3() doc "f" { repeat 3 { key_press("f", 0.1) } }"#]);
        let ps = run(&r, "f3()").unwrap();
        assert_eq!(ps, vec![ActionPrimitive::key_press("f", 0.1).unwrap(); 3]);
    }

    #[test]
    fn composition_is_concatenation() {
        let r = reg(&[
            r#"skill turn(degree: number) doc "turn" { key_press("right", degree / 180) }"#,
            r#"skill move_forward(duration: number) doc "walk" { key_hold("w"); wait(duration); key_release("w") }"#,
            r#"skill turn_and_move_forward(degree: number, duration: number) doc "both" { call turn(degree); call move_forward(duration) }"#,
        ]);
        let both = run(&r, "turn_and_move_forward(90, 2)").unwrap();
        let mut parts = run(&r, "turn(90)").unwrap();
        parts.extend(run(&r, "move_forward(2)").unwrap());
        assert_eq!(both, parts);
        assert_eq!(both.len(), 4);
    }

    #[test]
    fn labels_resolve_to_centroids() {
        let r = reg(&[r#"skill open(l: label) doc "o" { click_on_label(l) }"#]);
        let marks = MarkSet::from_rects(vec![(Rect::new(10, 10, 30, 50), 1.0)]);
        let ctx = CompileContext::new(SCREEN).with_marks(&marks);
        let ps = compile(&SkillCall::new("open", vec![Value::Number(1.0)]), &r, &ctx).unwrap();
        assert_eq!(
            ps[0],
            ActionPrimitive::MouseMove { x: 20.0, y: 30.0, speed: 0.0, coords: CoordSystem::Absolute, tween: Tween::Linear }
        );
        assert_eq!(ps[1], ActionPrimitive::ButtonClick { button: Button::Left, duration: 0.1 });
        let missing = compile(&SkillCall::new("open", vec![Value::Number(7.0)]), &r, &ctx);
        assert_eq!(missing, Err(CompileError::LabelNotFound(7)));
    }

    #[test]
    fn overflow_and_bad_args() {
        let r = reg(&[r#"skill slow(d: number) doc "s" { wait(d / 0) }"#, r#"skill k(s: string) doc "k" { key_press(s) }"#]);
        assert!(matches!(run(&r, "slow(1)"), Err(CompileError::ExpressionOverflow(_))));
        assert!(matches!(run(&r, "k(\"zz\")"), Err(CompileError::Primitive(IoError::UnknownKey(_)))));
        assert!(matches!(run(&r, "k(1)"), Err(CompileError::KindMismatch { .. })));
        assert!(matches!(run(&r, "k()"), Err(CompileError::ArityMismatch { .. })));
        assert!(matches!(run(&r, "nope()"), Err(CompileError::UnknownSkill(_))));
    }

    #[test]
    fn runtime_duration_checked() {
        let r = reg(&[r#"skill hold(d: number) doc "h" { key_press("w", d * 10) }"#]);
        assert!(run(&r, "hold(2)").is_ok());
        assert!(matches!(run(&r, "hold(4)"), Err(CompileError::Primitive(IoError::DurationOutOfRange { .. }))));
    }

    #[test]
    fn defaults_filled() {
        let r = reg(&[r#"skill m() doc "m" { mouse_move((0.5, 0.5), 0, "relative"); mouse_click(); key_combo(["ctrl", "t"]) }"#]);
        let ps = run(&r, "m()").unwrap();
        assert_eq!(ps[1], ActionPrimitive::ButtonClick { button: Button::Left, duration: 0.1 });
        assert_eq!(ps[2], ActionPrimitive::key_combo(&["ctrl", "t"], 0.1, WaitMode::Sync).unwrap());
    }

    #[test]
    fn expansion_is_bounded() {
        let r = reg(&[
            r#"skill a() doc "a" { repeat 1000 { wait(0) } }"#,
            r#"skill b() doc "b" { repeat 1000 { call a() } }"#,
        ]);
        assert_eq!(run(&r, "a()").unwrap().len(), 1000);
        assert_eq!(run(&r, "b()"), Err(CompileError::TooLong));
    }
}
