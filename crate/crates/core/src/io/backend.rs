use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Button, Key, Point, ScreenSize};
use crate::clock::Tick;

/// Low-level event delivered to an output sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum InputEvent {
    KeyDown { key: Key },
    KeyUp { key: Key },
    ButtonDown { button: Button },
    ButtonUp { button: Button },
    PointerTo { x: u32, y: u32 },
    Scroll { distance: i32 },
}

impl InputEvent {
    pub fn pointer(p: Point) -> Self {
        InputEvent::PointerTo { x: p.x, y: p.y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// Output sink for the executor.
///
/// Ticks passed to a backend are non-decreasing. `sync` tells the backend that
/// time has advanced to `tick` with no new input; simulated backends use it to
/// step their world.
pub trait Backend {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError>;

    fn sync(&mut self, _tick: Tick) -> Result<(), BackendError> {
        Ok(())
    }

    /// Moves input focus away from (`false`) or back to (`true`) the target.
    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError>;

    fn screen(&self) -> ScreenSize;
}

impl<B: Backend + ?Sized> Backend for &mut B {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        (**self).send(tick, event)
    }
    fn sync(&mut self, tick: Tick) -> Result<(), BackendError> {
        (**self).sync(tick)
    }
    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        (**self).set_focus(tick, focused)
    }
    fn screen(&self) -> ScreenSize {
        (**self).screen()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        (**self).send(tick, event)
    }
    fn sync(&mut self, tick: Tick) -> Result<(), BackendError> {
        (**self).sync(tick)
    }
    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        (**self).set_focus(tick, focused)
    }
    fn screen(&self) -> ScreenSize {
        (**self).screen()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoggedKind {
    Input { event: InputEvent },
    Sync,
    Focus { focused: bool },
}

/// One entry of a backend event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub tick: Tick,
    #[serde(flatten)]
    pub kind: LoggedKind,
}

impl LoggedEvent {
    pub fn input(&self) -> Option<&InputEvent> {
        match &self.kind {
            LoggedKind::Input { event } => Some(event),
            _ => None,
        }
    }

    /// Replays this entry against another backend.
    pub fn apply_to<B: Backend + ?Sized>(&self, backend: &mut B) -> Result<(), BackendError> {
        match &self.kind {
            LoggedKind::Input { event } => backend.send(self.tick, event),
            LoggedKind::Sync => backend.sync(self.tick),
            LoggedKind::Focus { focused } => backend.set_focus(self.tick, *focused),
        }
    }
}

/// Backend that only records what it receives. `sync` calls are not logged.
#[derive(Debug, Clone)]
pub struct LogBackend {
    screen: ScreenSize,
    pub events: Vec<LoggedEvent>,
    pub focused: bool,
    fail_after: Option<usize>,
}

impl LogBackend {
    pub fn new(screen: ScreenSize) -> Self {
        Self { screen, events: Vec::new(), focused: true, fail_after: None }
    }

    /// Fails every `send` once `n` input events have been accepted.
    pub fn failing_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn inputs(&self) -> Vec<(Tick, InputEvent)> {
        self.events.iter().filter_map(|e| e.input().map(|i| (e.tick, i.clone()))).collect()
    }
}

impl Backend for LogBackend {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        if let Some(n) = self.fail_after {
            if self.inputs().len() >= n {
                return Err(BackendError("injected failure".into()));
            }
        }
        self.events.push(LoggedEvent { tick, kind: LoggedKind::Input { event: event.clone() } });
        Ok(())
    }

    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        self.focused = focused;
        self.events.push(LoggedEvent { tick, kind: LoggedKind::Focus { focused } });
        Ok(())
    }

    fn screen(&self) -> ScreenSize {
        self.screen
    }
}

/// Wraps a backend and logs everything passed through, including `sync`.
pub struct RecordingBackend<B> {
    inner: B,
    log: Vec<LoggedEvent>,
    last_sync: Option<Tick>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Vec::new(), last_sync: None }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut B {
        &mut self.inner
    }

    pub fn into_inner(self) -> B {
        self.inner
    }

    /// Drains the log accumulated since the previous call.
    pub fn take_log(&mut self) -> Vec<LoggedEvent> {
        std::mem::take(&mut self.log)
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        self.inner.send(tick, event)?;
        self.log.push(LoggedEvent { tick, kind: LoggedKind::Input { event: event.clone() } });
        Ok(())
    }

    fn sync(&mut self, tick: Tick) -> Result<(), BackendError> {
        self.inner.sync(tick)?;
        // Repeated syncs to the same tick carry no information.
        if self.last_sync != Some(tick) {
            self.log.push(LoggedEvent { tick, kind: LoggedKind::Sync });
            self.last_sync = Some(tick);
        }
        Ok(())
    }

    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        self.inner.set_focus(tick, focused)?;
        self.log.push(LoggedEvent { tick, kind: LoggedKind::Focus { focused } });
        Ok(())
    }

    fn screen(&self) -> ScreenSize {
        self.inner.screen()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logged_event_json_shape() {
        let e = LoggedEvent { tick: 4, kind: LoggedKind::Input { event: InputEvent::KeyDown { key: Key::new("w").unwrap() } } };
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"tick":4,"kind":"input","event":{"ev":"key_down","key":"w"}}"#);
        let back: LoggedEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn recording_backend_dedups_syncs() {
        let mut rec = RecordingBackend::new(LogBackend::new(ScreenSize::new(10, 10)));
        rec.sync(1).unwrap();
        rec.sync(1).unwrap();
        rec.sync(2).unwrap();
        assert_eq!(rec.take_log().len(), 2);
    }
}
