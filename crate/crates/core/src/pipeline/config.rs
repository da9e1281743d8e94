use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::augment::MarkStyle;
use crate::geom::Rect;
use crate::io::{PauseStrategy, DEFAULT_DURATION_CEILING};
use crate::memory::{DEFAULT_CAPACITY, DEFAULT_SENTENCE_CAP, DEFAULT_TOP_K};
use crate::observation::{DEFAULT_FPS, DEFAULT_REFLECTION_FRAMES, DEFAULT_REFLECTION_WIDTH};
use crate::provider::DEFAULT_MODEL;

use super::DEFAULT_SHORT_TASK_WINDOW;

#[derive(Debug, Error, PartialEq)]
#[error("invalid run config: {0}")]
pub struct ConfigError(pub String);

/// Games run one skill per iteration and reflect over up to eight frames;
/// software runs up to two and compares only the first and last frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Games,
    Software,
}

impl Mode {
    pub fn preset(&self) -> &'static str {
        match self {
            Mode::Games => "games",
            Mode::Software => "software",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Overlay numbered marks on the frame sent for description and planning.
    /// Defaults to on for software and off for games.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marks: Option<bool>,
    pub style: MarkStyle,
    /// Smallest region, in pixels, that becomes a mark.
    pub min_area: u64,
    pub quant_step: u8,
    /// Image of a watermark whose marks are dropped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub watermark: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { marks: None, style: MarkStyle::Standard, min_area: 64, quant_step: 32, watermark: None }
    }
}

/// Toolbar exploration before the main loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    /// Screen area holding the first-level toolbar items.
    pub toolbar: Rect,
    /// Where the pointer rests while the screen is compared before and after
    /// opening a menu. Must not lie on a widget.
    pub park: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// The long-horizon task the run starts with.
    pub goal: String,
    pub max_steps: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions_per_step: Option<u32>,
    #[serde(with = "pause_text", skip_serializing_if = "Option::is_none")]
    pub pause: Option<PauseStrategy>,
    pub fps: f64,
    pub episodic_k: usize,
    pub top_k: usize,
    pub short_task_window: u32,
    /// Summarize episodic memory every this many iterations.
    pub summary_stride: u32,
    pub sentence_cap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection_frames: Option<usize>,
    pub reflection_width: u32,
    /// Area compared between frames to pick keyframes; the whole frame when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text_region: Option<Rect>,
    pub keyframe_threshold: f64,
    pub model: String,
    pub temperature: f64,
    pub duration_ceiling: f64,
    pub augment: AugmentConfig,
    /// Template overrides by purpose.
    pub prompts: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explore: Option<ExploreConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Games,
            goal: String::new(),
            max_steps: 100,
            actions_per_step: None,
            pause: None,
            fps: DEFAULT_FPS,
            episodic_k: DEFAULT_CAPACITY,
            top_k: DEFAULT_TOP_K,
            short_task_window: DEFAULT_SHORT_TASK_WINDOW,
            summary_stride: 1,
            sentence_cap: DEFAULT_SENTENCE_CAP,
            reflection_frames: None,
            reflection_width: DEFAULT_REFLECTION_WIDTH,
            text_region: None,
            keyframe_threshold: 0.02,
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            duration_ceiling: DEFAULT_DURATION_CEILING,
            augment: AugmentConfig::default(),
            prompts: BTreeMap::new(),
            explore: None,
        }
    }
}

impl RunConfig {
    pub fn games(goal: &str) -> Self {
        Self { mode: Mode::Games, goal: goal.to_string(), ..Self::default() }
    }

    pub fn software(goal: &str) -> Self {
        Self { mode: Mode::Software, goal: goal.to_string(), ..Self::default() }
    }

    pub fn actions_per_step(&self) -> u32 {
        self.actions_per_step.unwrap_or(match self.mode {
            Mode::Games => 1,
            Mode::Software => 2,
        })
    }

    pub fn pause(&self) -> PauseStrategy {
        self.pause.clone().unwrap_or_else(|| match self.mode {
            Mode::Games => "esc".parse().expect("esc is a key"),
            Mode::Software => PauseStrategy::None,
        })
    }

    pub fn reflection_frames(&self) -> usize {
        self.reflection_frames.unwrap_or(match self.mode {
            Mode::Games => DEFAULT_REFLECTION_FRAMES,
            Mode::Software => 2,
        })
    }

    pub fn marks_enabled(&self) -> bool {
        self.augment.marks.unwrap_or(self.mode == Mode::Software)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        if self.goal.trim().is_empty() {
            return fail("goal is empty".into());
        }
        if self.max_steps < 1 {
            return fail("max_steps must be at least 1".into());
        }
        let a = self.actions_per_step();
        match (self.mode, a) {
            (Mode::Games, 1) | (Mode::Software, 1 | 2) => {}
            (m, n) => return fail(format!("actions_per_step {n} not allowed in {} mode", m.preset())),
        }
        if !(self.fps > 0.0 && self.fps <= 60.0) {
            return fail(format!("fps {} outside (0, 60]", self.fps));
        }
        if self.episodic_k < 1 || self.top_k < 1 || self.sentence_cap < 1 {
            return fail("episodic_k, top_k and sentence_cap must be at least 1".into());
        }
        if self.short_task_window < 1 || self.summary_stride < 1 {
            return fail("short_task_window and summary_stride must be at least 1".into());
        }
        if !(1..=DEFAULT_REFLECTION_FRAMES).contains(&self.reflection_frames()) {
            return fail(format!("reflection_frames must be in 1..={DEFAULT_REFLECTION_FRAMES}"));
        }
        if self.reflection_width == 0 {
            return fail("reflection_width must be positive".into());
        }
        if !(self.keyframe_threshold > 0.0 && self.keyframe_threshold < 1.0) {
            return fail(format!("keyframe_threshold {} outside (0, 1)", self.keyframe_threshold));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.duration_ceiling > 0.0 && self.duration_ceiling.is_finite()) {
            return fail("duration_ceiling must be positive".into());
        }
        if self.augment.quant_step == 0 {
            return fail("augment.quant_step must be positive".into());
        }
        if let Some(r) = self.text_region {
            if !r.is_valid() {
                return fail(format!("text_region {r:?} is empty"));
            }
        }
        if let Some(e) = &self.explore {
            if !e.toolbar.is_valid() {
                return fail("explore.toolbar is empty".into());
            }
            if e.toolbar.contains(e.park.0, e.park.1) {
                return fail("explore.park lies inside the toolbar".into());
            }
        }
        for purpose in self.prompts.keys() {
            if !super::prompts::PURPOSES.contains(&purpose.as_str()) {
                return fail(format!("no prompt purpose `{purpose}`"));
            }
        }
        Ok(())
    }
}

mod pause_text {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<PauseStrategy>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(p) => s.serialize_str(&p.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<PauseStrategy>, D::Error> {
        let text = Option::<String>::deserialize(d)?;
        text.map(|t| t.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_defaults() {
        let g = RunConfig::games("clear the field");
        assert_eq!(g.actions_per_step(), 1);
        assert_eq!(g.reflection_frames(), 8);
        assert!(!g.marks_enabled());
        assert_eq!(g.pause().to_string(), "key:esc");
        let s = RunConfig::software("open the page");
        assert_eq!(s.actions_per_step(), 2);
        assert_eq!(s.reflection_frames(), 2);
        assert!(s.marks_enabled());
        assert_eq!(s.pause(), PauseStrategy::None);
        assert!(g.validate().is_ok() && s.validate().is_ok());
    }

    #[test]
    fn rejects_out_of_range() {
        let base = RunConfig::games("g");
        let cases: Vec<RunConfig> = vec![
            RunConfig { max_steps: 0, ..base.clone() },
            RunConfig { short_task_window: 0, ..base.clone() },
            RunConfig { actions_per_step: Some(2), ..base.clone() },
            RunConfig { actions_per_step: Some(3), mode: Mode::Software, ..base.clone() },
            RunConfig { fps: 0.0, ..base.clone() },
            RunConfig { reflection_frames: Some(9), ..base.clone() },
            RunConfig { goal: " ".into(), ..base.clone() },
            RunConfig { prompts: [("nope".to_string(), PathBuf::from("x"))].into(), ..base.clone() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::software("haggle");
        c.pause = Some(PauseStrategy::FocusSwitch);
        c.text_region = Some(Rect::new(0, 0, 10, 10));
        c.explore = Some(ExploreConfig { toolbar: Rect::new(0, 0, 100, 20), park: (5, 50) });
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
