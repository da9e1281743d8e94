//! The keyboard and mouse action space and its executor.
//!
//! Every observable effect of the agent goes through [`Executor`], which turns
//! an [`ActionPrimitive`] into a timed sequence of low-level [`InputEvent`]s on
//! a [`Backend`]. Timing is expressed in clock ticks so the same code drives
//! the simulated desktop deterministically and a real machine in wall time.

mod backend;
mod executor;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{Backend, BackendError, InputEvent, LogBackend, LoggedEvent, LoggedKind, RecordingBackend};
pub use executor::{first_error, ExecConfig, ExecReport, Executed, Executor, Outcome};


/// Default upper bound for any primitive duration, in seconds.
pub const DEFAULT_DURATION_CEILING: f64 = 30.0;

const NAMED_KEYS: &[&str] = &[
    "esc", "enter", "space", "tab", "shift", "ctrl", "alt", "up", "down", "left", "right", "f1", "f2",
    "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11", "f12",
];

/// A key name from the canonical lowercase vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Key(String);

impl Key {
    pub fn new(name: &str) -> Result<Self, IoError> {
        let lower = name.trim().to_ascii_lowercase();
        let single = lower.len() == 1 && lower.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
        if single || NAMED_KEYS.contains(&lower.as_str()) {
            Ok(Key(lower))
        } else {
            Err(IoError::UnknownKey(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Every key in the vocabulary.
    pub fn all() -> Vec<Key> {
        let mut keys: Vec<Key> = ('a'..='z').chain('0'..='9').map(|c| Key(c.to_string())).collect();
        keys.extend(NAMED_KEYS.iter().map(|k| Key(k.to_string())));
        keys
    }
}

impl TryFrom<String> for Key {
    type Error = IoError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Key::new(&s)
    }
}

impl From<Key> for String {
    fn from(k: Key) -> String {
        k.0
    }
}

impl FromStr for Key {
    type Err = IoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Key::new(s)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Button {
    Left,
    Middle,
    Right,
}

impl FromStr for Button {
    type Err = IoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Button::Left),
            "middle" => Ok(Button::Middle),
            "right" => Ok(Button::Right),
            _ => Err(IoError::UnknownButton(s.to_string())),
        }
    }
}

impl fmt::Display for Button {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Button::Left => "left",
            Button::Middle => "middle",
            Button::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaitMode {
    #[default]
    Sync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSystem {
    #[default]
    Absolute,
    Relative,
}

/// Pointer easing. Only `Linear` is executed; the others are accepted and
/// treated as `Linear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tween {
    #[default]
    Linear,
    EaseIn,
    EaseOut,
    EaseInOut,
}

impl FromStr for Tween {
    type Err = IoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" | "identity" => Ok(Tween::Linear),
            "ease_in" => Ok(Tween::EaseIn),
            "ease_out" => Ok(Tween::EaseOut),
            "ease_in_out" => Ok(Tween::EaseInOut),
            other => Err(IoError::InvalidPrimitive(format!("unknown tween `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

impl ScreenSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// One command of the unified action space. Durations and speeds are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ActionPrimitive {
    KeyPress { key: Key, duration: f64 },
    KeyHold { key: Key },
    KeyRelease { key: Key },
    KeyCombo { keys: Vec<Key>, duration: f64, wait: WaitMode },
    Hotkey { keys: Vec<Key>, duration: f64, wait: WaitMode },
    TypeText { text: String, duration: f64 },
    ButtonClick { button: Button, duration: f64 },
    ButtonHold { button: Button },
    ButtonRelease { button: Button },
    MouseMove { x: f64, y: f64, speed: f64, coords: CoordSystem, tween: Tween },
    MouseDrag { x: f64, y: f64 },
    Scroll { distance: i32, duration: f64 },
    Wait { duration: f64 },
}

impl ActionPrimitive {
    pub fn key_press(key: &str, duration: f64) -> Result<Self, IoError> {
        Ok(ActionPrimitive::KeyPress { key: Key::new(key)?, duration })
    }

    pub fn key_hold(key: &str) -> Result<Self, IoError> {
        Ok(ActionPrimitive::KeyHold { key: Key::new(key)? })
    }

    pub fn key_release(key: &str) -> Result<Self, IoError> {
        Ok(ActionPrimitive::KeyRelease { key: Key::new(key)? })
    }

    pub fn key_combo(keys: &[&str], duration: f64, wait: WaitMode) -> Result<Self, IoError> {
        let keys = keys.iter().map(|k| Key::new(k)).collect::<Result<_, _>>()?;
        Ok(ActionPrimitive::KeyCombo { keys, duration, wait })
    }

    pub fn move_to(x: f64, y: f64) -> Self {
        ActionPrimitive::MouseMove { x, y, speed: 0.0, coords: CoordSystem::Absolute, tween: Tween::Linear }
    }

    pub fn wait(duration: f64) -> Self {
        ActionPrimitive::Wait { duration }
    }

    /// Short lowercase name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            ActionPrimitive::KeyPress { .. } => "key_press",
            ActionPrimitive::KeyHold { .. } => "key_hold",
            ActionPrimitive::KeyRelease { .. } => "key_release",
            ActionPrimitive::KeyCombo { .. } => "key_combo",
            ActionPrimitive::Hotkey { .. } => "hotkey",
            ActionPrimitive::TypeText { .. } => "type_text",
            ActionPrimitive::ButtonClick { .. } => "mouse_click",
            ActionPrimitive::ButtonHold { .. } => "mouse_hold",
            ActionPrimitive::ButtonRelease { .. } => "mouse_release",
            ActionPrimitive::MouseMove { .. } => "mouse_move",
            ActionPrimitive::MouseDrag { .. } => "mouse_drag",
            ActionPrimitive::Scroll { .. } => "wheel_scroll",
            ActionPrimitive::Wait { .. } => "wait",
        }
    }

    /// Duration-like fields (durations and mouse speed).
    pub fn durations(&self) -> Vec<f64> {
        match self {
            ActionPrimitive::KeyPress { duration, .. }
            | ActionPrimitive::KeyCombo { duration, .. }
            | ActionPrimitive::Hotkey { duration, .. }
            | ActionPrimitive::TypeText { duration, .. }
            | ActionPrimitive::ButtonClick { duration, .. }
            | ActionPrimitive::Scroll { duration, .. }
            | ActionPrimitive::Wait { duration } => vec![*duration],
            ActionPrimitive::MouseMove { speed, .. } => vec![*speed],
            _ => Vec::new(),
        }
    }

    /// Keys this primitive presses or holds.
    pub fn pressed_keys(&self) -> Vec<Key> {
        match self {
            ActionPrimitive::KeyPress { key, .. } | ActionPrimitive::KeyHold { key } => vec![key.clone()],
            ActionPrimitive::KeyCombo { keys, .. } | ActionPrimitive::Hotkey { keys, .. } => keys.clone(),
            ActionPrimitive::TypeText { text, .. } => {
                let mut keys: Vec<Key> = text.chars().filter_map(|c| char_keys(c).ok()).flatten().collect();
                keys.sort();
                keys.dedup();
                keys
            }
            _ => Vec::new(),
        }
    }

    pub fn pressed_buttons(&self) -> Vec<Button> {
        match self {
            ActionPrimitive::ButtonClick { button, .. } | ActionPrimitive::ButtonHold { button } => vec![*button],
            ActionPrimitive::MouseDrag { .. } => vec![Button::Left],
            _ => Vec::new(),
        }
    }

    /// Checks the type invariants: durations in range, key lists non-empty
    /// and duplicate-free, coordinates on screen.
    pub fn validate(&self, screen: ScreenSize, ceiling: f64) -> Result<(), IoError> {
        for d in self.durations() {
            if !d.is_finite() || d < 0.0 || d > ceiling {
                return Err(IoError::DurationOutOfRange { value: d, ceiling });
            }
        }
        match self {
            ActionPrimitive::KeyCombo { keys, .. } | ActionPrimitive::Hotkey { keys, .. } => {
                if keys.is_empty() {
                    return Err(IoError::InvalidPrimitive("key list is empty".into()));
                }
                let unique: BTreeSet<&Key> = keys.iter().collect();
                if unique.len() != keys.len() {
                    return Err(IoError::InvalidPrimitive("key list contains duplicates".into()));
                }
            }
            ActionPrimitive::TypeText { text, .. } => {
                for c in text.chars() {
                    char_keys(c)?;
                }
            }
            ActionPrimitive::MouseMove { x, y, coords, .. } => {
                resolve_coordinates(*x, *y, *coords, screen)?;
            }
            ActionPrimitive::MouseDrag { x, y } => {
                resolve_coordinates(*x, *y, CoordSystem::Absolute, screen)?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Keys typed for one character: the key itself, preceded by `shift` for
/// uppercase letters.
pub(crate) fn char_keys(c: char) -> Result<Vec<Key>, IoError> {
    let key = |s: &str| Key(s.to_string());
    match c {
        'a'..='z' | '0'..='9' => Ok(vec![key(&c.to_string())]),
        'A'..='Z' => Ok(vec![key("shift"), key(&c.to_ascii_lowercase().to_string())]),
        ' ' => Ok(vec![key("space")]),
        '\n' => Ok(vec![key("enter")]),
        '\t' => Ok(vec![key("tab")]),
        other => Err(IoError::UnsupportedCharacter(other)),
    }
}

/// Strategy used to freeze the environment while the agent is thinking.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PauseStrategy {
    KeyToggle { key: Key },
    FocusSwitch,
    #[default]
    None,
}

impl FromStr for PauseStrategy {
    type Err = IoError;
    /// `none`, `focus`, or a key name such as `esc`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(PauseStrategy::None),
            "focus" | "focus-switch" => Ok(PauseStrategy::FocusSwitch),
            other => Ok(PauseStrategy::KeyToggle { key: Key::new(other.strip_prefix("key:").unwrap_or(other))? }),
        }
    }
}

impl fmt::Display for PauseStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PauseStrategy::KeyToggle { key } => write!(f, "key:{key}"),
            PauseStrategy::FocusSwitch => f.write_str("focus"),
            PauseStrategy::None => f.write_str("none"),
        }
    }
}

/// Keys and buttons currently held down.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldState {
    pub keys: BTreeSet<Key>,
    pub buttons: BTreeSet<Button>,
}

impl HeldState {
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty() && self.buttons.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum IoError {
    #[error("release of `{0}` which is not held")]
    ReleaseNotHeld(String),
    #[error("`{0}` is already held")]
    AlreadyHeld(String),
    #[error("duration {value} s outside [0, {ceiling}]")]
    DurationOutOfRange { value: f64, ceiling: f64 },
    #[error("coordinate ({x}, {y}) out of bounds for {width}x{height}")]
    CoordinateOutOfBounds { x: f64, y: f64, width: u32, height: u32 },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("unknown mouse button `{0}`")]
    UnknownButton(String),
    #[error("character {0:?} cannot be typed")]
    UnsupportedCharacter(char),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("backend failure: {0}")]
    BackendFailure(String),
}

impl From<BackendError> for IoError {
    fn from(e: BackendError) -> Self {
        IoError::BackendFailure(e.0)
    }
}

/// Maps a coordinate to a screen pixel.
///
/// Relative coordinates are fractions of the screen, mapped with
/// `floor(x * w)`; 1.0 is the inclusive right/bottom edge and lands on the
/// last pixel. Absolute coordinates must already be on screen.
pub fn resolve_coordinates(x: f64, y: f64, coords: CoordSystem, screen: ScreenSize) -> Result<Point, IoError> {
    let oob = || IoError::CoordinateOutOfBounds { x, y, width: screen.width, height: screen.height };
    if !x.is_finite() || !y.is_finite() || screen.width == 0 || screen.height == 0 {
        return Err(oob());
    }
    match coords {
        CoordSystem::Relative => {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(oob());
            }
            // The epsilon keeps exact fractions like 3/49 from flooring to the
            // pixel below.
            let px = ((x * screen.width as f64 + 1e-9).floor() as u32).min(screen.width - 1);
            let py = ((y * screen.height as f64 + 1e-9).floor() as u32).min(screen.height - 1);
            Ok(Point::new(px, py))
        }
        CoordSystem::Absolute => {
            if x < 0.0 || y < 0.0 || x >= screen.width as f64 || y >= screen.height as f64 {
                return Err(oob());
            }
            Ok(Point::new(x.floor() as u32, y.floor() as u32))
        }
    }
}
