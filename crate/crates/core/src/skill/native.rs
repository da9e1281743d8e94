use std::sync::Arc;

use super::{CompileContext, CompileError, Param, ParamKind, Value};
use crate::io::{ActionPrimitive, Key, WaitMode};

pub const TASK_IS_NOT_FEASIBLE: &str = "task_is_not_feasible";

/// A skill implemented in the runtime instead of the skill language.
pub trait NativeSkill: Send + Sync {
    fn name(&self) -> &str;
    fn params(&self) -> Vec<Param>;
    fn doc(&self) -> &str;
    /// Arguments have already been checked against [`NativeSkill::params`].
    fn compile(&self, args: &[Value], ctx: &CompileContext) -> Result<Vec<ActionPrimitive>, CompileError>;
}

/// Declares the task impossible. Compiles to nothing; the run loop stops
/// when it is chosen.
#[derive(Debug, Clone, Copy, Default)]
pub struct TaskIsNotFeasible;

impl NativeSkill for TaskIsNotFeasible {
    fn name(&self) -> &str {
        TASK_IS_NOT_FEASIBLE
    }

    fn params(&self) -> Vec<Param> {
        Vec::new()
    }

    fn doc(&self) -> &str {
        "Declare that the current task cannot be completed and stop."
    }

    fn compile(&self, _: &[Value], _: &CompileContext) -> Result<Vec<ActionPrimitive>, CompileError> {
        Ok(Vec::new())
    }
}

/// `press_hotkey("ctrl+shift+t")`: presses keys in order, releases in reverse.
#[derive(Debug, Clone, Copy, Default)]
pub struct PressHotkey;

impl NativeSkill for PressHotkey {
    fn name(&self) -> &str {
        "press_hotkey"
    }

    fn params(&self) -> Vec<Param> {
        vec![Param::new("keys", ParamKind::String)]
    }

    fn doc(&self) -> &str {
        "Press a keyboard shortcut such as \"ctrl+c\": keys go down in order and come up in reverse."
    }

    fn compile(&self, args: &[Value], ctx: &CompileContext) -> Result<Vec<ActionPrimitive>, CompileError> {
        let Some(Value::Str(spec)) = args.first() else {
            return Err(CompileError::Native { name: self.name().into(), message: "expected a key string".into() });
        };
        let keys = spec.split('+').map(|k| Key::new(&k.trim().to_ascii_lowercase())).collect::<Result<Vec<_>, _>>()?;
        let p = ActionPrimitive::Hotkey { keys, duration: 0.1, wait: WaitMode::Sync };
        p.validate(ctx.screen, ctx.ceiling)?;
        Ok(vec![p])
    }
}

/// All built-in native skills.
pub fn native_skills() -> Vec<Arc<dyn NativeSkill>> {
    vec![Arc::new(TaskIsNotFeasible), Arc::new(PressHotkey)]
}
