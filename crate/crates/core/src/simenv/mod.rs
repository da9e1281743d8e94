//! A deterministic virtual desktop for end-to-end tests: a tile world with an
//! avatar, clickable widgets with tooltips, a numeric input field, and goal
//! predicates. It consumes input events as an output backend and renders
//! screenshots as a frame source.

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::Tick;
use crate::geom::Rect;
use crate::io::{Backend, BackendError, Button, InputEvent, Key, Point, ScreenSize};
use crate::observation::{pixel_digest, FrameSource, ObservationError};
use crate::text::{draw_text, fill_rect, stroke_rect, text_size};

pub use scenario::{Effect, Goal, ObstacleKind, Scenario, ScenarioError, Tile, Tool, WidgetSpec};

/// Ticks the pointer must rest on a widget before its tooltip shows.
pub const TOOLTIP_DELAY_TICKS: u64 = 2;
pub const TOOLTIP_BG: Rgb<u8> = Rgb([255, 255, 200]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    fn from_key(k: &str) -> Option<Self> {
        match k {
            "w" => Some(Dir::Up),
            "s" => Some(Dir::Down),
            "a" => Some(Dir::Left),
            "d" => Some(Dir::Right),
            _ => None,
        }
    }

    fn step(self, (x, y): (u32, u32)) -> Option<(u32, u32)> {
        match self {
            Dir::Up => y.checked_sub(1).map(|y| (x, y)),
            Dir::Down => Some((x, y + 1)),
            Dir::Left => x.checked_sub(1).map(|x| (x, y)),
            Dir::Right => Some((x + 1, y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Motion {
    dir: Dir,
    key_ticks: u64,
    moved: u64,
}

/// Everything that determines what the screen shows and whether the goal holds.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub tiles: Vec<Vec<Tile>>,
    pub avatar: (u32, u32),
    pub facing: Dir,
    pub inventory: BTreeMap<String, u32>,
    pub cleared: u32,
    pub blocked: bool,
    pub tool: Option<Tool>,
    pub open_group: Option<String>,
    pub flags: BTreeSet<String>,
    pub inputs: BTreeMap<String, String>,
    pub submitted: BTreeMap<String, i64>,
    pub focused_input: Option<String>,
    pub pointer: Point,
    pub pointer_since: Tick,
    pub keys: BTreeSet<Key>,
    pub buttons: BTreeSet<Button>,
    pub focused: bool,
    pub paused: bool,
    /// Simulated time, advancing only while the environment runs.
    pub clock: Tick,
    motion: Option<Motion>,
}

#[derive(Debug, Clone)]
pub struct SimEnv {
    scenario: Arc<Scenario>,
    shade: Vec<Vec<u8>>,
    state: SimState,
    last_tick: Option<Tick>,
    notes: Vec<String>,
}

impl SimEnv {
    pub fn new(scenario: Scenario) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let shade = scenario.grid.iter().map(|row| row.iter().map(|_| rng.gen_range(0..24)).collect()).collect();
        let state = SimState {
            tiles: scenario.grid.clone(),
            avatar: scenario.avatar,
            facing: Dir::Down,
            inventory: BTreeMap::new(),
            cleared: 0,
            blocked: false,
            tool: None,
            open_group: None,
            flags: BTreeSet::new(),
            inputs: BTreeMap::new(),
            submitted: BTreeMap::new(),
            focused_input: None,
            pointer: Point::new(0, 0),
            pointer_since: 0,
            keys: BTreeSet::new(),
            buttons: BTreeSet::new(),
            focused: true,
            paused: false,
            clock: 0,
            motion: None,
        };
        Self { scenario: Arc::new(scenario), shade, state, last_tick: None, notes: Vec::new() }
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Ok(Self::new(Scenario::load(path)?))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Events that were ignored, with the reason.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn running(&self) -> bool {
        self.state.focused && !self.state.paused
    }

    fn note(&mut self, msg: String) {
        self.notes.push(msg);
    }

    /// Advances the environment clock by `ticks` running ticks.
    pub fn step(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.tick_once();
        }
    }

    fn tick_once(&mut self) {
        if !self.running() {
            return;
        }
        self.state.clock += 1;
        let Some(mut m) = self.state.motion else { return };
        m.key_ticks += 1;
        let due = (m.key_ticks as f64 * self.scenario.move_rate * self.scenario.tick_secs + 1e-9).floor() as u64;
        while m.moved < due {
            m.moved += 1;
            self.try_move(m.dir);
        }
        self.state.motion = Some(m);
    }

    fn try_move(&mut self, dir: Dir) {
        let target = dir.step(self.state.avatar).filter(|&(x, y)| x < self.scenario.cols() && y < self.scenario.rows());
        match target {
            Some((x, y)) if self.state.tiles[y as usize][x as usize].walkable() => {
                self.state.avatar = (x, y);
                self.state.blocked = false;
            }
            _ => self.state.blocked = true,
        }
    }

    fn advance(&mut self, tick: Tick) {
        match self.last_tick {
            None => self.last_tick = Some(tick),
            Some(last) if tick > last => {
                self.step(tick - last);
                self.last_tick = Some(tick);
            }
            _ => {}
        }
    }

    fn faced_tile(&self) -> Option<(u32, u32)> {
        self.state.facing.step(self.state.avatar).filter(|&(x, y)| x < self.scenario.cols() && y < self.scenario.rows())
    }

    fn use_tool(&mut self) {
        let Some(tool) = self.state.tool else {
            return self.note("use with no tool selected".into());
        };
        let Some((x, y)) = self.faced_tile() else {
            return self.note("use facing the edge".into());
        };
        match self.state.tiles[y as usize][x as usize] {
            Tile::Obstacle(kind) if kind.tool() == Some(tool) => {
                self.state.tiles[y as usize][x as usize] = Tile::Free;
                self.state.cleared += 1;
                *self.state.inventory.entry(kind.drop_item().to_string()).or_default() += 1;
            }
            other => self.note(format!("{} has no effect on {other:?}", tool.name())),
        }
    }

    fn visible(&self, w: &WidgetSpec) -> bool {
        w.group.is_none() || w.group == self.state.open_group
    }

    /// Topmost visible widget under `p`. Later declarations are on top.
    pub fn widget_at(&self, p: Point) -> Option<&WidgetSpec> {
        self.scenario.widgets.iter().rev().find(|w| self.visible(w) && w.rect.contains(p.x, p.y))
    }

    pub fn widget_rect(&self, id: &str) -> Option<Rect> {
        self.scenario.widget(id).map(|w| w.rect)
    }

    /// Tooltip currently shown, if any.
    pub fn tooltip(&self) -> Option<&str> {
        let w = self.widget_at(self.state.pointer)?;
        (w.enabled && self.state.clock >= self.state.pointer_since + TOOLTIP_DELAY_TICKS).then_some(w.tooltip.as_str())
    }

    fn click(&mut self) {
        let Some(w) = self.widget_at(self.state.pointer).cloned() else {
            self.state.focused_input = None;
            return;
        };
        if !w.enabled {
            return self.note(format!("click on disabled widget `{}`", w.id));
        }
        if w.effect != Effect::Input {
            self.state.focused_input = None;
        }
        match w.effect {
            Effect::None => {}
            Effect::Open(g) => {
                self.state.open_group = if self.state.open_group.as_deref() == Some(g.as_str()) { None } else { Some(g) };
            }
            Effect::SetFlag(f) => {
                self.state.flags.insert(f);
            }
            Effect::Input => self.state.focused_input = Some(w.id.clone()),
        }
    }

    fn key_down(&mut self, key: &Key) {
        let k = key.as_str();
        if k == "esc" {
            self.state.paused = !self.state.paused;
            return;
        }
        if self.state.paused {
            return self.note(format!("`{k}` ignored while paused"));
        }
        if let Some(id) = self.state.focused_input.clone() {
            if k.len() == 1 && k.as_bytes()[0].is_ascii_digit() {
                let v = self.state.inputs.entry(id).or_default();
                if v.len() < 9 {
                    v.push_str(k);
                }
            } else if k == "enter" {
                let v = self.state.inputs.get(&id).cloned().unwrap_or_default();
                match v.parse::<i64>() {
                    Ok(n) => {
                        self.state.submitted.insert(id, n);
                    }
                    Err(_) => self.note(format!("empty submission for `{id}`")),
                }
            }
            return;
        }
        if let Some(dir) = Dir::from_key(k) {
            self.state.facing = dir;
            self.state.motion = Some(Motion { dir, key_ticks: 0, moved: 0 });
        } else if let Some(tool) = Tool::from_slot(k) {
            self.state.tool = Some(tool);
        } else if k == "c" {
            self.use_tool();
        }
    }

    fn apply(&mut self, event: &InputEvent) {
        match event {
            InputEvent::KeyDown { key } => {
                if !self.state.keys.insert(key.clone()) {
                    return self.note(format!("repeated key down `{key}`"));
                }
                if self.state.focused {
                    self.key_down(key);
                }
            }
            InputEvent::KeyUp { key } => {
                self.state.keys.remove(key);
                if self.state.motion.is_some_and(|m| Dir::from_key(key.as_str()) == Some(m.dir)) {
                    self.state.motion = None;
                }
            }
            InputEvent::ButtonDown { button } => {
                self.state.buttons.insert(*button);
                if *button == Button::Left && self.running() {
                    self.click();
                }
            }
            InputEvent::ButtonUp { button } => {
                self.state.buttons.remove(button);
            }
            InputEvent::PointerTo { x, y } => {
                let p = Point::new((*x).min(self.scenario.width - 1), (*y).min(self.scenario.height - 1));
                if p != self.state.pointer {
                    self.state.pointer = p;
                    self.state.pointer_since = self.state.clock;
                }
            }
            InputEvent::Scroll { .. } => self.note("scroll ignored".into()),
        }
    }

    pub fn goal_reached(&self) -> bool {
        let s = &self.state;
        let tile = s.tiles.get(s.avatar.1 as usize).and_then(|r| r.get(s.avatar.0 as usize)).copied();
        !self.scenario.goals.is_empty()
            && self.scenario.goals.iter().all(|g| match g {
                Goal::Cleared(n) => s.cleared >= *n,
                Goal::ReachDoor => tile == Some(Tile::Door),
                Goal::ReachGoal => tile == Some(Tile::Goal),
                Goal::Flag(f) => s.flags.contains(f),
                Goal::Submitted { id, lo, hi } => s.submitted.get(id).is_some_and(|v| (lo..=hi).contains(&v)),
            })
    }

    pub fn tile_rect(&self, x: u32, y: u32) -> Rect {
        let t = self.scenario.tile;
        Rect::from_size(self.scenario.origin.0 + x * t, self.scenario.origin.1 + y * t, t, t)
    }

    pub fn render_image(&self) -> RgbImage {
        let sc = &self.scenario;
        let s = &self.state;
        let mut img = RgbImage::from_pixel(sc.width, sc.height, Rgb([40, 40, 48]));

        for (y, row) in s.tiles.iter().enumerate() {
            for (x, tile) in row.iter().enumerate() {
                let r = self.tile_rect(x as u32, y as u32);
                let sh = self.shade[y][x];
                fill_rect(&mut img, r, Rgb([60 + sh, 130 + sh, 60]));
                let inset = Rect::new(r.x0 + 2, r.y0 + 2, r.x1.saturating_sub(2).max(r.x0 + 2), r.y1.saturating_sub(2).max(r.y0 + 2));
                match tile {
                    Tile::Free => {}
                    Tile::Obstacle(ObstacleKind::Wall) => fill_rect(&mut img, r, Rgb([90, 90, 90])),
                    Tile::Obstacle(ObstacleKind::Rock) => fill_rect(&mut img, inset, Rgb([150, 150, 150])),
                    Tile::Obstacle(ObstacleKind::Tree) => {
                        fill_rect(&mut img, inset, Rgb([20, 90, 30]));
                        let c = r.centroid();
                        fill_rect(&mut img, Rect::new(c.x.saturating_sub(1), c.y, c.x + 1, r.y1), Rgb([110, 70, 30]));
                    }
                    Tile::Obstacle(ObstacleKind::Weed) => fill_rect(&mut img, inset, Rgb([170, 200, 40])),
                    Tile::Door => fill_rect(&mut img, r, Rgb([130, 80, 40])),
                    Tile::Goal => fill_rect(&mut img, r, Rgb([230, 190, 40])),
                }
            }
        }
        if !s.tiles.is_empty() {
            let r = self.tile_rect(s.avatar.0, s.avatar.1);
            let body = Rect::new(r.x0 + 3, r.y0 + 3, r.x1.saturating_sub(3).max(r.x0 + 4), r.y1.saturating_sub(3).max(r.y0 + 4));
            fill_rect(&mut img, body, Rgb([40, 80, 220]));
            let c = body.centroid();
            let marker = match s.facing {
                Dir::Up => Rect::new(c.x - 1, body.y0, c.x + 1, body.y0 + 2),
                Dir::Down => Rect::new(c.x - 1, body.y1 - 2, c.x + 1, body.y1),
                Dir::Left => Rect::new(body.x0, c.y - 1, body.x0 + 2, c.y + 1),
                Dir::Right => Rect::new(body.x1 - 2, c.y - 1, body.x1, c.y + 1),
            };
            fill_rect(&mut img, marker, Rgb([255, 255, 255]));
        }

        if sc.origin.1 >= 10 {
            let mut status = String::new();
            if !sc.title.is_empty() {
                status.push_str(&sc.title);
                status.push_str("  ");
            }
            if !s.tiles.is_empty() {
                status.push_str(&format!("tool:{} cleared:{}", s.tool.map_or("-", |t| t.name()), s.cleared));
            }
            draw_text(&mut img, 2, 1, &status, 1, Rgb([230, 230, 230]), None);
        }

        for w in sc.widgets.iter().filter(|w| self.visible(w)) {
            let input = w.effect == Effect::Input;
            let bg = match (w.enabled, input) {
                (false, _) => Rgb([110, 110, 110]),
                (true, true) => Rgb([250, 250, 250]),
                (true, false) => Rgb([200, 200, 200]),
            };
            fill_rect(&mut img, w.rect, bg);
            // Unfocused widgets are flat so each one segments as a single region.
            if s.focused_input.as_deref() == Some(w.id.as_str()) {
                stroke_rect(&mut img, w.rect, 1, Rgb([0, 0, 220]));
            }
            let text = if input {
                format!("{}:{}", w.label, s.inputs.get(&w.id).map_or("", String::as_str))
            } else {
                w.label.clone()
            };
            let (_, th) = text_size(&text, 1);
            let ty = w.rect.y0 as i64 + (w.rect.height() as i64 - th as i64) / 2;
            draw_text(&mut img, w.rect.x0 as i64 + 3, ty, &text, 1, Rgb([0, 0, 0]), Some(w.rect));
        }

        if let Some(tip) = self.tooltip() {
            let (tw, th) = text_size(tip, 1);
            let (bw, bh) = ((tw + 6).min(sc.width), (th + 6).min(sc.height));
            let x = (s.pointer.x + 8).min(sc.width - bw);
            let y = s.pointer.y.saturating_sub(bh + 4);
            let r = Rect::from_size(x, y, bw, bh);
            fill_rect(&mut img, r, TOOLTIP_BG);
            stroke_rect(&mut img, r, 1, Rgb([0, 0, 0]));
            draw_text(&mut img, x as i64 + 3, y as i64 + 3, tip, 1, Rgb([0, 0, 0]), Some(r));
        }

        if s.paused {
            let (tw, _) = text_size("PAUSED", 2);
            let x = (sc.width as i64 - tw as i64) / 2;
            draw_text(&mut img, x, sc.height as i64 / 2 - 8, "PAUSED", 2, Rgb([255, 60, 60]), None);
        }
        img
    }

    pub fn render_digest(&self) -> String {
        pixel_digest(&self.render_image())
    }
}

impl Backend for SimEnv {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        self.advance(tick);
        self.apply(event);
        Ok(())
    }

    fn sync(&mut self, tick: Tick) -> Result<(), BackendError> {
        self.advance(tick);
        Ok(())
    }

    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        self.advance(tick);
        self.state.focused = focused;
        Ok(())
    }

    fn screen(&self) -> ScreenSize {
        ScreenSize::new(self.scenario.width, self.scenario.height)
    }
}

impl FrameSource for SimEnv {
    fn render(&self) -> Result<RgbImage, ObservationError> {
        Ok(self.render_image())
    }
}
