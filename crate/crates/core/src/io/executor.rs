use serde::{Deserialize, Serialize};

use super::{
    char_keys, resolve_coordinates, ActionPrimitive, Backend, Button, CoordSystem, HeldState, InputEvent, IoError,
    Key, PauseStrategy, Point, WaitMode, DEFAULT_DURATION_CEILING,
};
use crate::clock::{Clock, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Upper bound for every duration and speed, in seconds.
    pub duration_ceiling: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { duration_ceiling: DEFAULT_DURATION_CEILING }
    }
}

/// What a report refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "what", rename_all = "snake_case")]
pub enum Executed {
    Primitive { primitive: ActionPrimitive },
    Pause,
    Unpause,
    ReleaseAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Failed(IoError),
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecReport {
    pub executed: Executed,
    pub started_at: Tick,
    pub finished_at: Tick,
    pub outcome: Outcome,
}

impl ExecReport {
    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }

    pub fn elapsed(&self) -> u64 {
        self.finished_at - self.started_at
    }
}

/// Event scheduled relative to the start of a primitive.
type Timeline = Vec<(u64, InputEvent)>;

/// Runs primitives against a backend, one at a time, and owns the held state.
///
/// Asynchronous combos return right after their key-down events; their
/// releases are queued and delivered when the clock reaches them during a
/// later call (or by [`Executor::settle`]).
#[derive(Debug, Clone, Default)]
pub struct Executor {
    config: ExecConfig,
    held: HeldState,
    pointer: Point,
    pending: Vec<(Tick, InputEvent)>,
}

impl Executor {
    pub fn new(config: ExecConfig) -> Self {
        Self { config, ..Default::default() }
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn held(&self) -> &HeldState {
        &self.held
    }

    pub fn pointer(&self) -> Point {
        self.pointer
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn execute<B, C>(&mut self, p: &ActionPrimitive, backend: &mut B, clock: &mut C) -> Result<ExecReport, IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        p.validate(backend.screen(), self.config.duration_ceiling)?;
        self.deliver_due(backend, clock.now())?;
        let (timeline, total) = self.timeline(p, backend, &*clock)?;
        self.check_timeline(&timeline)?;

        let start = clock.now();
        let is_async = matches!(
            p,
            ActionPrimitive::KeyCombo { wait: WaitMode::Async, .. } | ActionPrimitive::Hotkey { wait: WaitMode::Async, .. }
        );
        if is_async {
            for (offset, event) in timeline {
                if offset == 0 {
                    self.emit(backend, start, &event)?;
                } else {
                    self.pending.push((start + offset, event));
                }
            }
            self.pending.sort_by_key(|(t, _)| *t);
            return Ok(ExecReport {
                executed: Executed::Primitive { primitive: p.clone() },
                started_at: start,
                finished_at: start + total,
                outcome: Outcome::Ok,
            });
        }

        for (offset, event) in timeline {
            self.advance_to(backend, clock, start + offset)?;
            self.emit(backend, clock.now(), &event)?;
        }
        self.advance_to(backend, clock, start + total)?;
        Ok(ExecReport {
            executed: Executed::Primitive { primitive: p.clone() },
            started_at: start,
            finished_at: clock.now(),
            outcome: Outcome::Ok,
        })
    }

    /// Executes `ps` in order. With `abort_on_error`, everything after the
    /// first failure is reported as [`Outcome::NotRun`].
    pub fn execute_sequence<B, C>(
        &mut self,
        ps: &[ActionPrimitive],
        abort_on_error: bool,
        backend: &mut B,
        clock: &mut C,
    ) -> Vec<ExecReport>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        let mut reports = Vec::with_capacity(ps.len());
        let mut aborted = false;
        for p in ps {
            let now = clock.now();
            if aborted {
                reports.push(ExecReport {
                    executed: Executed::Primitive { primitive: p.clone() },
                    started_at: now,
                    finished_at: now,
                    outcome: Outcome::NotRun,
                });
                continue;
            }
            match self.execute(p, backend, clock) {
                Ok(r) => reports.push(r),
                Err(e) => {
                    reports.push(ExecReport {
                        executed: Executed::Primitive { primitive: p.clone() },
                        started_at: now,
                        finished_at: clock.now(),
                        outcome: Outcome::Failed(e),
                    });
                    aborted = abort_on_error;
                }
            }
        }
        reports
    }

    pub fn pause<B, C>(&mut self, strategy: &PauseStrategy, backend: &mut B, clock: &mut C) -> Result<ExecReport, IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        self.toggle(strategy, false, backend, clock).map(|(s, f)| ExecReport {
            executed: Executed::Pause,
            started_at: s,
            finished_at: f,
            outcome: Outcome::Ok,
        })
    }

    pub fn unpause<B, C>(&mut self, strategy: &PauseStrategy, backend: &mut B, clock: &mut C) -> Result<ExecReport, IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        self.toggle(strategy, true, backend, clock).map(|(s, f)| ExecReport {
            executed: Executed::Unpause,
            started_at: s,
            finished_at: f,
            outcome: Outcome::Ok,
        })
    }

    fn toggle<B, C>(&mut self, strategy: &PauseStrategy, running: bool, backend: &mut B, clock: &mut C) -> Result<(Tick, Tick), IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        let now = clock.now();
        self.deliver_due(backend, now)?;
        match strategy {
            PauseStrategy::KeyToggle { key } => {
                if self.held.keys.contains(key) {
                    return Err(IoError::AlreadyHeld(key.to_string()));
                }
                self.emit(backend, now, &InputEvent::KeyDown { key: key.clone() })?;
                self.emit(backend, now, &InputEvent::KeyUp { key: key.clone() })?;
            }
            PauseStrategy::FocusSwitch => backend.set_focus(now, running)?,
            PauseStrategy::None => {}
        }
        Ok((now, clock.now()))
    }

    /// Releases every held key and button and drops queued async events.
    pub fn release_all<B, C>(&mut self, backend: &mut B, clock: &mut C) -> Result<ExecReport, IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        let now = clock.now();
        self.pending.clear();
        let keys: Vec<Key> = self.held.keys.iter().cloned().collect();
        for key in keys {
            self.emit(backend, now, &InputEvent::KeyUp { key })?;
        }
        let buttons: Vec<Button> = self.held.buttons.iter().copied().collect();
        for button in buttons {
            self.emit(backend, now, &InputEvent::ButtonUp { button })?;
        }
        Ok(ExecReport { executed: Executed::ReleaseAll, started_at: now, finished_at: now, outcome: Outcome::Ok })
    }

    /// Sleeps until every queued async event has been delivered.
    pub fn settle<B, C>(&mut self, backend: &mut B, clock: &mut C) -> Result<(), IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        if let Some(&(last, _)) = self.pending.last() {
            self.advance_to(backend, clock, last)?;
        }
        Ok(())
    }

    /// Sleeps until `target`, delivering queued events on the way.
    fn advance_to<B, C>(&mut self, backend: &mut B, clock: &mut C, target: Tick) -> Result<(), IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        while clock.now() < target {
            let next = self.pending.first().map(|(t, _)| *t).filter(|t| *t < target).unwrap_or(target);
            let next = next.max(clock.now());
            clock.sleep(next - clock.now());
            backend.sync(clock.now())?;
            self.deliver_due(backend, clock.now())?;
        }
        backend.sync(clock.now())?;
        self.deliver_due(backend, clock.now())?;
        Ok(())
    }

    fn deliver_due<B: Backend + ?Sized>(&mut self, backend: &mut B, now: Tick) -> Result<(), IoError> {
        while self.pending.first().is_some_and(|(t, _)| *t <= now) {
            let (_, event) = self.pending.remove(0);
            self.emit(backend, now, &event)?;
        }
        Ok(())
    }

    fn emit<B: Backend + ?Sized>(&mut self, backend: &mut B, tick: Tick, event: &InputEvent) -> Result<(), IoError> {
        match event {
            InputEvent::KeyDown { key } => {
                if self.held.keys.contains(key) {
                    return Err(IoError::AlreadyHeld(key.to_string()));
                }
            }
            InputEvent::KeyUp { key } => {
                if !self.held.keys.contains(key) {
                    return Err(IoError::ReleaseNotHeld(key.to_string()));
                }
            }
            InputEvent::ButtonDown { button } => {
                if self.held.buttons.contains(button) {
                    return Err(IoError::AlreadyHeld(button.to_string()));
                }
            }
            InputEvent::ButtonUp { button } => {
                if !self.held.buttons.contains(button) {
                    return Err(IoError::ReleaseNotHeld(button.to_string()));
                }
            }
            _ => {}
        }
        backend.send(tick, event)?;
        if matches!(event, InputEvent::KeyUp { .. } | InputEvent::ButtonUp { .. }) {
            // An explicit release supersedes a queued one for the same input.
            self.pending.retain(|(_, e)| e != event);
        }
        match event {
            InputEvent::KeyDown { key } => {
                self.held.keys.insert(key.clone());
            }
            InputEvent::KeyUp { key } => {
                self.held.keys.remove(key);
            }
            InputEvent::ButtonDown { button } => {
                self.held.buttons.insert(*button);
            }
            InputEvent::ButtonUp { button } => {
                self.held.buttons.remove(button);
            }
            InputEvent::PointerTo { x, y } => self.pointer = Point::new(*x, *y),
            InputEvent::Scroll { .. } => {}
        }
        Ok(())
    }

    /// Replays the timeline's held-state effects on a copy of the state so a
    /// primitive that would fail part-way emits nothing at all.
    fn check_timeline(&self, timeline: &Timeline) -> Result<(), IoError> {
        let mut held = self.held.clone();
        for (_, event) in timeline {
            match event {
                InputEvent::KeyDown { key } => {
                    if !held.keys.insert(key.clone()) {
                        return Err(IoError::AlreadyHeld(key.to_string()));
                    }
                }
                InputEvent::KeyUp { key } => {
                    if !held.keys.remove(key) {
                        return Err(IoError::ReleaseNotHeld(key.to_string()));
                    }
                }
                InputEvent::ButtonDown { button } => {
                    if !held.buttons.insert(*button) {
                        return Err(IoError::AlreadyHeld(button.to_string()));
                    }
                }
                InputEvent::ButtonUp { button } => {
                    if !held.buttons.remove(button) {
                        return Err(IoError::ReleaseNotHeld(button.to_string()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn timeline<B, C>(&self, p: &ActionPrimitive, backend: &B, clock: &C) -> Result<(Timeline, u64), IoError>
    where
        B: Backend + ?Sized,
        C: Clock + ?Sized,
    {
        use ActionPrimitive::*;
        let ticks = |secs: f64| clock.ticks_for(secs);
        let down = |key: &Key| InputEvent::KeyDown { key: key.clone() };
        let up = |key: &Key| InputEvent::KeyUp { key: key.clone() };
        Ok(match p {
            KeyPress { key, duration } => {
                let n = ticks(*duration);
                (vec![(0, down(key)), (n, up(key))], n)
            }
            KeyHold { key } => (vec![(0, down(key))], 0),
            KeyRelease { key } => (vec![(0, up(key))], 0),
            KeyCombo { keys, duration, .. } => {
                let n = ticks(*duration);
                let mut tl: Timeline = keys.iter().map(|k| (0, down(k))).collect();
                tl.extend(keys.iter().rev().map(|k| (n, up(k))));
                (tl, n)
            }
            Hotkey { keys, duration, .. } => {
                // Keys go down one after another across the duration and are
                // released together in reverse order at the end.
                let n = ticks(*duration);
                let len = keys.len() as u64;
                let mut tl: Timeline = keys.iter().enumerate().map(|(i, k)| (i as u64 * n / len, down(k))).collect();
                tl.extend(keys.iter().rev().map(|k| (n, up(k))));
                (tl, n)
            }
            TypeText { text, duration } => {
                let n = ticks(*duration);
                let chars: Vec<char> = text.chars().collect();
                let len = chars.len().max(1) as u64;
                let mut tl = Timeline::new();
                for (i, c) in chars.iter().enumerate() {
                    let at = i as u64 * n / len;
                    let keys = char_keys(*c)?;
                    tl.extend(keys.iter().map(|k| (at, down(k))));
                    tl.extend(keys.iter().rev().map(|k| (at, up(k))));
                }
                (tl, n)
            }
            ButtonClick { button, duration } => {
                let n = ticks(*duration);
                (vec![(0, InputEvent::ButtonDown { button: *button }), (n, InputEvent::ButtonUp { button: *button })], n)
            }
            ButtonHold { button } => (vec![(0, InputEvent::ButtonDown { button: *button })], 0),
            ButtonRelease { button } => (vec![(0, InputEvent::ButtonUp { button: *button })], 0),
            MouseMove { x, y, speed, coords, .. } => {
                // Speed is the total travel time; one pointer event per tick
                // along a straight line.
                let target = resolve_coordinates(*x, *y, *coords, backend.screen())?;
                let n = ticks(*speed);
                if n == 0 {
                    (vec![(0, InputEvent::pointer(target))], 0)
                } else {
                    let from = self.pointer;
                    let lerp = |a: u32, b: u32, i: u64| -> u32 {
                        let v = a as f64 + (b as f64 - a as f64) * i as f64 / n as f64;
                        v.round() as u32
                    };
                    let tl = (1..=n)
                        .map(|i| (i, InputEvent::PointerTo { x: lerp(from.x, target.x, i), y: lerp(from.y, target.y, i) }))
                        .collect();
                    (tl, n)
                }
            }
            MouseDrag { x, y } => {
                let target = resolve_coordinates(*x, *y, CoordSystem::Absolute, backend.screen())?;
                (
                    vec![
                        (0, InputEvent::ButtonDown { button: Button::Left }),
                        (0, InputEvent::pointer(target)),
                        (0, InputEvent::ButtonUp { button: Button::Left }),
                    ],
                    0,
                )
            }
            Scroll { distance, duration } => (vec![(0, InputEvent::Scroll { distance: *distance })], ticks(*duration)),
            Wait { duration } => (Vec::new(), ticks(*duration)),
        })
    }
}

/// First failure in a batch of reports, if any.
pub fn first_error(reports: &[ExecReport]) -> Option<&IoError> {
    reports.iter().find_map(|r| match &r.outcome {
        Outcome::Failed(e) => Some(e),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::io::{LogBackend, ScreenSize, Tween};

    fn setup() -> (Executor, LogBackend, SimClock) {
        (Executor::default(), LogBackend::new(ScreenSize::new(1920, 1080)), SimClock::new(0.05))
    }

    fn k(s: &str) -> Key {
        Key::new(s).unwrap()
    }

    #[test]
    fn hold_adds_exactly_one_key() {
        let (mut ex, mut be, mut clock) = setup();
        ex.execute(&ActionPrimitive::key_hold("w").unwrap(), &mut be, &mut clock).unwrap();
        assert_eq!(ex.held().keys.iter().collect::<Vec<_>>(), vec![&k("w")]);
        assert!(ex.held().buttons.is_empty());
    }

    #[test]
    fn combo_presses_in_order_and_releases_in_reverse() {
        let (mut ex, mut be, mut clock) = setup();
        let combo = ActionPrimitive::key_combo(&["ctrl", "shift", "t"], 0.2, WaitMode::Sync).unwrap();
        let r = ex.execute(&combo, &mut be, &mut clock).unwrap();
        let expected = vec![
            (0, InputEvent::KeyDown { key: k("ctrl") }),
            (0, InputEvent::KeyDown { key: k("shift") }),
            (0, InputEvent::KeyDown { key: k("t") }),
            (4, InputEvent::KeyUp { key: k("t") }),
            (4, InputEvent::KeyUp { key: k("shift") }),
            (4, InputEvent::KeyUp { key: k("ctrl") }),
        ];
        assert_eq!(be.inputs(), expected);
        assert_eq!(r.elapsed(), 4);
        assert!(ex.held().is_empty());
    }

    #[test]
    fn press_duration_matches_clock() {
        let (mut ex, mut be, mut clock) = setup();
        clock.sleep(7);
        let r = ex.execute(&ActionPrimitive::key_press("e", 0.4).unwrap(), &mut be, &mut clock).unwrap();
        let expected = (0.4f64 / 0.05).round() as i64;
        assert!((r.elapsed() as i64 - expected).abs() <= 1);
        assert_eq!(r.started_at, 7);
        assert_eq!(clock.now(), r.finished_at);
    }

    #[test]
    fn async_combo_returns_immediately_with_projected_finish() {
        let (mut ex, mut be, mut clock) = setup();
        let combo = ActionPrimitive::key_combo(&["alt", "f4"], 1.0, WaitMode::Async).unwrap();
        let r = ex.execute(&combo, &mut be, &mut clock).unwrap();
        assert_eq!(clock.now(), 0);
        assert_eq!(r.finished_at, 20);
        assert_eq!(ex.held().keys.len(), 2);
        // A wait past the projected finish delivers the releases on time.
        ex.execute(&ActionPrimitive::wait(2.0), &mut be, &mut clock).unwrap();
        assert!(ex.held().is_empty());
        let ups: Vec<_> = be.inputs().into_iter().filter(|(_, e)| matches!(e, InputEvent::KeyUp { .. })).collect();
        assert_eq!(ups.len(), 2);
        assert!(ups.iter().all(|(t, _)| *t == 20));
    }

    #[test]
    fn explicit_release_cancels_queued_release() {
        let (mut ex, mut b, mut c) = setup();
        let combo = ActionPrimitive::key_combo(&["shift", "a"], 0.5, WaitMode::Async).unwrap();
        ex.execute(&combo, &mut b, &mut c).unwrap();
        ex.execute(&ActionPrimitive::key_release("shift").unwrap(), &mut b, &mut c).unwrap();
        ex.execute(&ActionPrimitive::key_hold("shift").unwrap(), &mut b, &mut c).unwrap();
        ex.settle(&mut b, &mut c).unwrap();
        assert!(ex.held().keys.contains(&k("shift")));
        assert!(!ex.has_pending());
    }

    #[test]
    fn settle_flushes_pending() {
        let (mut ex, mut be, mut clock) = setup();
        let combo = ActionPrimitive::key_combo(&["ctrl", "c"], 0.5, WaitMode::Async).unwrap();
        ex.execute(&combo, &mut be, &mut clock).unwrap();
        ex.settle(&mut be, &mut clock).unwrap();
        assert!(!ex.has_pending());
        assert!(ex.held().is_empty());
        assert_eq!(clock.now(), 10);
    }

    #[test]
    fn hotkey_staggers_presses() {
        let (mut ex, mut be, mut clock) = setup();
        let hk = ActionPrimitive::Hotkey { keys: vec![k("ctrl"), k("c")], duration: 0.2, wait: WaitMode::Sync };
        ex.execute(&hk, &mut be, &mut clock).unwrap();
        let ticks: Vec<Tick> = be.inputs().iter().map(|(t, _)| *t).collect();
        assert_eq!(ticks, vec![0, 2, 4, 4]);
    }

    #[test]
    fn wait_zero_sequence() {
        let (mut ex, mut be, mut clock) = setup();
        let reports = ex.execute_sequence(&[ActionPrimitive::wait(0.0), ActionPrimitive::wait(0.0)], true, &mut be, &mut clock);
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| r.is_ok() && r.elapsed() == 0));
        assert_eq!(clock.now(), 0);
    }

    #[test]
    fn balanced_hold_release() {
        let (mut ex, mut be, mut clock) = setup();
        let ps = [ActionPrimitive::key_hold("a").unwrap(), ActionPrimitive::key_release("a").unwrap()];
        let reports = ex.execute_sequence(&ps, true, &mut be, &mut clock);
        assert!(reports.iter().all(ExecReport::is_ok));
        assert!(ex.held().keys.is_empty());
    }

    #[test]
    fn abort_marks_rest_not_run() {
        let (mut ex, mut be, mut clock) = setup();
        let ps = [ActionPrimitive::key_release("x").unwrap(), ActionPrimitive::key_press("y", 0.1).unwrap()];
        let reports = ex.execute_sequence(&ps, true, &mut be, &mut clock);
        assert_eq!(reports[0].outcome, Outcome::Failed(IoError::ReleaseNotHeld("x".into())));
        assert_eq!(reports[1].outcome, Outcome::NotRun);
        assert_eq!(first_error(&reports), Some(&IoError::ReleaseNotHeld("x".into())));
        assert!(be.inputs().is_empty());

        let reports = ex.execute_sequence(&ps, false, &mut be, &mut clock);
        assert!(reports[1].is_ok());
    }

    #[test]
    fn failing_primitive_emits_nothing() {
        let (mut ex, mut be, mut clock) = setup();
        ex.execute(&ActionPrimitive::key_hold("shift").unwrap(), &mut be, &mut clock).unwrap();
        let before = be.inputs().len();
        let err = ex.execute(&ActionPrimitive::TypeText { text: "Hi".into(), duration: 0.1 }, &mut be, &mut clock);
        assert_eq!(err.unwrap_err(), IoError::AlreadyHeld("shift".into()));
        assert_eq!(be.inputs().len(), before);
    }

    #[test]
    fn type_text_spreads_over_duration() {
        let (mut ex, mut be, mut clock) = setup();
        let r = ex.execute(&ActionPrimitive::TypeText { text: "a1 ".into(), duration: 0.3 }, &mut be, &mut clock).unwrap();
        assert_eq!(r.elapsed(), 6);
        let downs: Vec<(Tick, String)> = be
            .inputs()
            .into_iter()
            .filter_map(|(t, e)| match e {
                InputEvent::KeyDown { key } => Some((t, key.to_string())),
                _ => None,
            })
            .collect();
        assert_eq!(downs, vec![(0, "a".into()), (2, "1".into()), (4, "space".into())]);
        assert!(ex.execute(&ActionPrimitive::TypeText { text: "é".into(), duration: 0.0 }, &mut be, &mut clock).is_err());
    }

    #[test]
    fn mouse_move_interpolates_per_tick() {
        let (mut ex, mut be, mut clock) = setup();
        let mv = ActionPrimitive::MouseMove { x: 100.0, y: 50.0, speed: 0.2, coords: CoordSystem::Absolute, tween: Tween::EaseIn };
        let r = ex.execute(&mv, &mut be, &mut clock).unwrap();
        assert_eq!(r.elapsed(), 4);
        let pts: Vec<InputEvent> = be.inputs().into_iter().map(|(_, e)| e).collect();
        assert_eq!(
            pts,
            vec![
                InputEvent::PointerTo { x: 25, y: 13 },
                InputEvent::PointerTo { x: 50, y: 25 },
                InputEvent::PointerTo { x: 75, y: 38 },
                InputEvent::PointerTo { x: 100, y: 50 },
            ]
        );
        assert_eq!(ex.pointer(), Point::new(100, 50));
    }

    #[test]
    fn relative_move_resolves_against_screen() {
        let (mut ex, mut be, mut clock) = setup();
        let mv = ActionPrimitive::MouseMove { x: 1.0, y: 0.5, speed: 0.0, coords: CoordSystem::Relative, tween: Tween::Linear };
        ex.execute(&mv, &mut be, &mut clock).unwrap();
        assert_eq!(ex.pointer(), Point::new(1919, 540));
        let bad = ActionPrimitive::MouseMove { x: 2000.0, y: 0.0, speed: 0.0, coords: CoordSystem::Absolute, tween: Tween::Linear };
        assert!(matches!(ex.execute(&bad, &mut be, &mut clock), Err(IoError::CoordinateOutOfBounds { .. })));
    }

    #[test]
    fn key_toggle_pause_presses_twice() {
        let (mut ex, mut be, mut clock) = setup();
        let s = PauseStrategy::KeyToggle { key: k("esc") };
        ex.pause(&s, &mut be, &mut clock).unwrap();
        ex.unpause(&s, &mut be, &mut clock).unwrap();
        let downs = be.inputs().iter().filter(|(_, e)| *e == InputEvent::KeyDown { key: k("esc") }).count();
        assert_eq!(downs, 2);
        assert_eq!(be.inputs().len(), 4);
    }

    #[test]
    fn no_pause_strategy_is_silent() {
        let (mut ex, mut be, mut clock) = setup();
        ex.pause(&PauseStrategy::None, &mut be, &mut clock).unwrap();
        ex.unpause(&PauseStrategy::None, &mut be, &mut clock).unwrap();
        assert!(be.events.is_empty());
    }

    #[test]
    fn focus_pause_switches_focus() {
        let (mut ex, mut be, mut clock) = setup();
        ex.pause(&PauseStrategy::FocusSwitch, &mut be, &mut clock).unwrap();
        assert!(!be.focused);
        ex.unpause(&PauseStrategy::FocusSwitch, &mut be, &mut clock).unwrap();
        assert!(be.focused);
    }

    #[test]
    fn release_all_cases() {
        let (mut ex, mut be, mut clock) = setup();
        ex.release_all(&mut be, &mut clock).unwrap();
        assert!(be.events.is_empty());

        ex.execute(&ActionPrimitive::key_hold("w").unwrap(), &mut be, &mut clock).unwrap();
        ex.execute(&ActionPrimitive::key_hold("shift").unwrap(), &mut be, &mut clock).unwrap();
        let n = be.inputs().len();
        ex.release_all(&mut be, &mut clock).unwrap();
        assert_eq!(be.inputs().len() - n, 2);
        assert!(ex.held().is_empty());

        ex.execute(&ActionPrimitive::ButtonHold { button: Button::Left }, &mut be, &mut clock).unwrap();
        ex.execute(&ActionPrimitive::key_hold("w").unwrap(), &mut be, &mut clock).unwrap();
        ex.release_all(&mut be, &mut clock).unwrap();
        assert!(ex.held().is_empty());
        assert!(matches!(
            ex.execute(&ActionPrimitive::ButtonRelease { button: Button::Left }, &mut be, &mut clock),
            Err(IoError::ReleaseNotHeld(_))
        ));
        assert!(matches!(ex.execute(&ActionPrimitive::key_release("w").unwrap(), &mut be, &mut clock), Err(IoError::ReleaseNotHeld(_))));
    }

    #[test]
    fn backend_failure_surfaces() {
        let (mut ex, _, mut clock) = setup();
        let mut be = LogBackend::new(ScreenSize::new(100, 100)).failing_after(1);
        let err = ex.execute(&ActionPrimitive::key_press("a", 0.1).unwrap(), &mut be, &mut clock).unwrap_err();
        assert!(matches!(err, IoError::BackendFailure(_)));
    }

    #[test]
    fn drag_emits_bracketed_button() {
        let (mut ex, mut be, mut clock) = setup();
        ex.execute(&ActionPrimitive::MouseDrag { x: 10.0, y: 20.0 }, &mut be, &mut clock).unwrap();
        let evs: Vec<InputEvent> = be.inputs().into_iter().map(|(_, e)| e).collect();
        assert_eq!(
            evs,
            vec![
                InputEvent::ButtonDown { button: Button::Left },
                InputEvent::PointerTo { x: 10, y: 20 },
                InputEvent::ButtonUp { button: Button::Left }
            ]
        );
    }
}
