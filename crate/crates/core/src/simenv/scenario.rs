use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::geom::Rect;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObstacleKind {
    Rock,
    Tree,
    Weed,
    Wall,
}

impl ObstacleKind {
    /// Tool able to clear this obstacle. Walls cannot be cleared.
    pub fn tool(&self) -> Option<Tool> {
        match self {
            ObstacleKind::Rock => Some(Tool::Pickaxe),
            ObstacleKind::Tree => Some(Tool::Axe),
            ObstacleKind::Weed => Some(Tool::Scythe),
            ObstacleKind::Wall => None,
        }
    }

    /// Inventory item dropped when cleared.
    pub fn drop_item(&self) -> &'static str {
        match self {
            ObstacleKind::Rock => "stone",
            ObstacleKind::Tree => "wood",
            ObstacleKind::Weed => "fiber",
            ObstacleKind::Wall => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tool {
    Pickaxe,
    Axe,
    Scythe,
}

impl Tool {
    pub fn from_slot(key: &str) -> Option<Self> {
        match key {
            "1" => Some(Tool::Pickaxe),
            "2" => Some(Tool::Axe),
            "3" => Some(Tool::Scythe),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tool::Pickaxe => "pickaxe",
            Tool::Axe => "axe",
            Tool::Scythe => "scythe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tile {
    Free,
    Obstacle(ObstacleKind),
    Door,
    Goal,
}

impl Tile {
    pub fn walkable(&self) -> bool {
        !matches!(self, Tile::Obstacle(_))
    }

    fn from_char(c: char) -> Option<Self> {
        Some(match c {
            '.' | 'A' => Tile::Free,
            '#' => Tile::Obstacle(ObstacleKind::Wall),
            'R' => Tile::Obstacle(ObstacleKind::Rock),
            'T' => Tile::Obstacle(ObstacleKind::Tree),
            'W' => Tile::Obstacle(ObstacleKind::Weed),
            'D' => Tile::Door,
            'G' => Tile::Goal,
            _ => return None,
        })
    }

    fn to_char(self) -> char {
        match self {
            Tile::Free => '.',
            Tile::Obstacle(ObstacleKind::Wall) => '#',
            Tile::Obstacle(ObstacleKind::Rock) => 'R',
            Tile::Obstacle(ObstacleKind::Tree) => 'T',
            Tile::Obstacle(ObstacleKind::Weed) => 'W',
            Tile::Door => 'D',
            Tile::Goal => 'G',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    None,
    /// Shows the widgets of a group, hiding any other open group.
    Open(String),
    SetFlag(String),
    /// A numeric text field: click to focus, type digits, enter submits.
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidgetSpec {
    pub id: String,
    pub rect: Rect,
    pub label: String,
    pub tooltip: String,
    pub enabled: bool,
    pub effect: Effect,
    /// Widgets in a group are only visible while that group is open.
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    Cleared(u32),
    ReachDoor,
    ReachGoal,
    Flag(String),
    Submitted { id: String, lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub title: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub tile: u32,
    pub origin: (u32, u32),
    pub move_rate: f64,
    pub tick_secs: f64,
    pub grid: Vec<Vec<Tile>>,
    pub avatar: (u32, u32),
    pub widgets: Vec<WidgetSpec>,
    pub goals: Vec<Goal>,
}

impl Scenario {
    pub fn rows(&self) -> u32 {
        self.grid.len() as u32
    }

    pub fn cols(&self) -> u32 {
        self.grid.first().map_or(0, |r| r.len() as u32)
    }

    pub fn widget(&self, id: &str) -> Option<&WidgetSpec> {
        self.widgets.iter().find(|w| w.id == id)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(0, format!("{}: {e}", path.display())))?;
        text.parse()
    }
}

/// Splits a line into words, keeping double-quoted strings (with `\"` and
/// `\\` escapes) as single tokens.
fn tokens(line: &str, ln: usize) -> Result<Vec<String>, ScenarioError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(e) => s.push(e),
                        None => return Err(err(ln, "unterminated string")),
                    },
                    Some(ch) => s.push(ch),
                    None => return Err(err(ln, "unterminated string")),
                }
            }
            out.push(s);
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            out.push(s);
        }
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(s: &str, ln: usize, what: &str) -> Result<T, ScenarioError> {
    s.parse().map_err(|_| err(ln, format!("invalid {what} `{s}`")))
}

fn parse_widget(t: &[String], ln: usize) -> Result<WidgetSpec, ScenarioError> {
    if t.len() < 10 {
        return Err(err(ln, "widget needs: id x0 y0 x1 y1 \"label\" \"tooltip\" enabled|disabled effect=..."));
    }
    let rect = Rect::new(num(&t[2], ln, "x0")?, num(&t[3], ln, "y0")?, num(&t[4], ln, "x1")?, num(&t[5], ln, "y1")?);
    if !rect.is_valid() {
        return Err(err(ln, "widget rect is empty"));
    }
    let enabled = match t[8].as_str() {
        "enabled" => true,
        "disabled" => false,
        o => return Err(err(ln, format!("expected enabled or disabled, found `{o}`"))),
    };
    let mut effect = None;
    let mut group = None;
    for opt in &t[9..] {
        if let Some(e) = opt.strip_prefix("effect=") {
            effect = Some(match e.split_once(':') {
                None if e == "none" => Effect::None,
                None if e == "input" => Effect::Input,
                Some(("open", g)) if !g.is_empty() => Effect::Open(g.to_string()),
                Some(("flag", f)) if !f.is_empty() => Effect::SetFlag(f.to_string()),
                _ => return Err(err(ln, format!("unknown effect `{e}`"))),
            });
        } else if let Some(g) = opt.strip_prefix("group=") {
            group = Some(g.to_string());
        } else {
            return Err(err(ln, format!("unknown widget option `{opt}`")));
        }
    }
    let effect = effect.ok_or_else(|| err(ln, "widget needs effect=..."))?;
    Ok(WidgetSpec { id: t[1].clone(), rect, label: t[6].clone(), tooltip: t[7].clone(), enabled, effect, group })
}

fn parse_goal(t: &[String], ln: usize) -> Result<Goal, ScenarioError> {
    let words: Vec<&str> = t[1..].iter().map(String::as_str).collect();
    match words.as_slice() {
        ["cleared", n] => Ok(Goal::Cleared(num(n, ln, "count")?)),
        ["reach", "door"] => Ok(Goal::ReachDoor),
        ["reach", "goal"] => Ok(Goal::ReachGoal),
        ["flag", f] => Ok(Goal::Flag(f.to_string())),
        ["submitted", id, lo, hi] => {
            let (lo, hi) = (num(lo, ln, "bound")?, num(hi, ln, "bound")?);
            if lo > hi {
                return Err(err(ln, "empty submitted range"));
            }
            Ok(Goal::Submitted { id: id.to_string(), lo, hi })
        }
        _ => Err(err(ln, format!("unknown goal `{}`", words.join(" ")))),
    }
}

impl std::str::FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut sc = Scenario {
            title: String::new(),
            seed: 0,
            width: 320,
            height: 240,
            tile: 16,
            origin: (0, 16),
            move_rate: 2.0,
            tick_secs: crate::clock::DEFAULT_TICK_SECS,
            grid: Vec::new(),
            avatar: (0, 0),
            widgets: Vec::new(),
            goals: Vec::new(),
        };
        let mut avatar: Option<((u32, u32), usize)> = None;
        let mut grid_line = 0;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        while let Some((ln, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t = tokens(line, ln)?;
            match t[0].as_str() {
                "title" if t.len() == 2 => sc.title = t[1].clone(),
                "seed" if t.len() == 2 => sc.seed = num(&t[1], ln, "seed")?,
                "screen" if t.len() == 3 => {
                    sc.width = num(&t[1], ln, "width")?;
                    sc.height = num(&t[2], ln, "height")?;
                }
                "tile" if t.len() == 2 => sc.tile = num(&t[1], ln, "tile size")?,
                "origin" if t.len() == 3 => sc.origin = (num(&t[1], ln, "x")?, num(&t[2], ln, "y")?),
                "move_rate" if t.len() == 2 => sc.move_rate = num(&t[1], ln, "move rate")?,
                "tick" if t.len() == 2 => sc.tick_secs = num(&t[1], ln, "tick")?,
                "avatar" if t.len() == 3 => avatar = Some(((num(&t[1], ln, "x")?, num(&t[2], ln, "y")?), ln)),
                "widget" => sc.widgets.push(parse_widget(&t, ln)?),
                "goal" if t.len() >= 2 => sc.goals.push(parse_goal(&t, ln)?),
                "grid" if t.len() == 1 => {
                    grid_line = ln;
                    loop {
                        let (gl, row) = lines.next().ok_or_else(|| err(ln, "grid block without `end`"))?;
                        let row = row.trim();
                        if row == "end" {
                            break;
                        }
                        let mut cells = Vec::new();
                        for (x, c) in row.chars().enumerate() {
                            if c == 'A' {
                                if avatar.is_some() {
                                    return Err(err(gl, "avatar placed twice"));
                                }
                                avatar = Some(((x as u32, sc.grid.len() as u32), gl));
                            }
                            cells.push(Tile::from_char(c).ok_or_else(|| err(gl, format!("unknown tile `{c}`")))?);
                        }
                        if cells.is_empty() {
                            return Err(err(gl, "empty grid row"));
                        }
                        if sc.grid.first().is_some_and(|r| r.len() != cells.len()) {
                            return Err(err(gl, "grid rows differ in length"));
                        }
                        sc.grid.push(cells);
                    }
                }
                _ => return Err(err(ln, format!("unrecognized line `{line}`"))),
            }
        }
        sc.check(avatar, grid_line)?;
        Ok(sc)
    }
}

impl Scenario {
    fn check(&mut self, avatar: Option<((u32, u32), usize)>, grid_line: usize) -> Result<(), ScenarioError> {
        if self.width == 0 || self.height == 0 || self.width > 4096 || self.height > 4096 {
            return Err(err(0, "screen size must be within 1..=4096"));
        }
        if !(self.tick_secs > 0.0 && self.tick_secs.is_finite()) {
            return Err(err(0, "tick must be positive"));
        }
        if !(self.move_rate > 0.0 && self.move_rate.is_finite()) {
            return Err(err(0, "move_rate must be positive"));
        }
        if !self.grid.is_empty() {
            if self.tile == 0 {
                return Err(err(grid_line, "tile size must be positive"));
            }
            let w = self.origin.0 as u64 + self.cols() as u64 * self.tile as u64;
            let h = self.origin.1 as u64 + self.rows() as u64 * self.tile as u64;
            if w > self.width as u64 || h > self.height as u64 {
                return Err(err(grid_line, "grid does not fit on the screen"));
            }
            let ((x, y), ln) = avatar.ok_or_else(|| err(grid_line, "grid has no avatar"))?;
            if x >= self.cols() || y >= self.rows() {
                return Err(err(ln, "avatar outside the grid"));
            }
            if !self.grid[y as usize][x as usize].walkable() {
                return Err(err(ln, "avatar placed on an obstacle"));
            }
            self.avatar = (x, y);
        } else if let Some((_, ln)) = avatar {
            return Err(err(ln, "avatar without a grid"));
        }
        let mut ids = BTreeSet::new();
        for w in &self.widgets {
            if !ids.insert(w.id.as_str()) {
                return Err(err(0, format!("duplicate widget `{}`", w.id)));
            }
            if !w.rect.fits_in(self.width, self.height) {
                return Err(err(0, format!("widget `{}` is off screen", w.id)));
            }
        }
        for g in &self.goals {
            match g {
                Goal::Submitted { id, .. } if self.widget(id).map(|w| &w.effect) != Some(&Effect::Input) => {
                    return Err(err(0, format!("goal refers to `{id}`, which is not an input widget")));
                }
                Goal::Cleared(_) | Goal::ReachDoor | Goal::ReachGoal if self.grid.is_empty() => {
                    return Err(err(0, "grid goal without a grid"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.title.is_empty() {
            writeln!(f, "title {}", quote(&self.title))?;
        }
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "screen {} {}", self.width, self.height)?;
        writeln!(f, "tile {}", self.tile)?;
        writeln!(f, "origin {} {}", self.origin.0, self.origin.1)?;
        writeln!(f, "move_rate {}", self.move_rate)?;
        writeln!(f, "tick {}", self.tick_secs)?;
        if !self.grid.is_empty() {
            writeln!(f, "grid")?;
            for row in &self.grid {
                writeln!(f, "{}", row.iter().map(|t| t.to_char()).collect::<String>())?;
            }
            writeln!(f, "end")?;
            writeln!(f, "avatar {} {}", self.avatar.0, self.avatar.1)?;
        }
        for w in &self.widgets {
            let effect = match &w.effect {
                Effect::None => "none".to_string(),
                Effect::Input => "input".to_string(),
                Effect::Open(g) => format!("open:{g}"),
                Effect::SetFlag(n) => format!("flag:{n}"),
            };
            write!(
                f,
                "widget {} {} {} {} {} {} {} {} effect={effect}",
                w.id,
                w.rect.x0,
                w.rect.y0,
                w.rect.x1,
                w.rect.y1,
                quote(&w.label),
                quote(&w.tooltip),
                if w.enabled { "enabled" } else { "disabled" }
            )?;
            if let Some(g) = &w.group {
                write!(f, " group={g}")?;
            }
            writeln!(f)?;
        }
        for g in &self.goals {
            match g {
                Goal::Cleared(n) => writeln!(f, "goal cleared {n}")?,
                Goal::ReachDoor => writeln!(f, "goal reach door")?,
                Goal::ReachGoal => writeln!(f, "goal reach goal")?,
                Goal::Flag(n) => writeln!(f, "goal flag {n}")?,
                Goal::Submitted { id, lo, hi } => writeln!(f, "goal submitted {id} {lo} {hi}")?,
            }
        }
        Ok(())
    }
}
