//! The per-iteration stages. Each one builds a prompt, asks the provider and
//! reads the labelled sections of the answer.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::augment::{filter_watermarks, render_marks, segment_to_marks, AugmentError, ComponentSegmenter, MarkSet, Template};
use crate::geom::Rect;
use crate::memory::{EpisodicError, MemoryError, SkillSource, SkillStore};
use crate::observation::{downscale, extract_keyframes, reflection_size, sample_frames, Frame, ObservationError, VideoClip};
use crate::prompt::{PromptError, PromptVars};
use crate::provider::{parse_sections, CompletionRequest, Provider, ProviderError, SectionError, SectionSchema, Sections};
use crate::skill::{check_call, extract_code_blocks, native_skills, parse_call, parse_many, Skill, SkillCall, SkillLookup};

use super::config::RunConfig;
use super::prompts::{self, PromptSet};
use super::{Horizon, ReflectionOutcome, TaskSpec};

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Sections(#[from] SectionError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Episodic(#[from] EpisodicError),
    #[error("malformed call `{text}`: {message}")]
    MalformedCall { text: String, message: String },
    #[error("skill `{0}` was not among the offered skills")]
    UnknownSkillChosen(String),
}

fn fatal_provider(e: &ProviderError) -> bool {
    matches!(e, ProviderError::CassetteMiss { .. } | ProviderError::Config(_))
}

impl StageFailure {
    /// A missing cassette entry or a misconfigured provider cannot be
    /// recovered by trying again next iteration.
    pub fn is_fatal(&self) -> bool {
        match self {
            StageFailure::Provider(e) => fatal_provider(e),
            StageFailure::Memory(MemoryError::Provider(e)) => fatal_provider(e),
            StageFailure::Episodic(EpisodicError::Provider(e)) => fatal_provider(e),
            _ => false,
        }
    }
}

/// Sends stage requests and counts them per purpose.
pub struct Asker<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptSet,
    pub model: String,
    pub temperature: f64,
    pub calls: BTreeMap<String, u32>,
}

impl<'a> Asker<'a> {
    pub fn new(provider: &'a dyn Provider, prompts: &'a PromptSet, config: &RunConfig) -> Self {
        Self { provider, prompts, model: config.model.clone(), temperature: config.temperature, calls: BTreeMap::new() }
    }

    pub fn request(&self, purpose: &str, vars: &PromptVars) -> Result<CompletionRequest, StageFailure> {
        let mut req = CompletionRequest::new(purpose, self.prompts.get(purpose).render(vars)?);
        req.model = self.model.clone();
        req.temperature = self.temperature;
        Ok(req)
    }

    pub fn ask(&mut self, purpose: &str, vars: &PromptVars) -> Result<String, StageFailure> {
        let req = self.request(purpose, vars)?;
        *self.calls.entry(purpose.to_string()).or_insert(0) += 1;
        Ok(self.provider.complete(&req)?)
    }

    pub fn ask_sections(&mut self, purpose: &str, vars: &PromptVars, schema: &SectionSchema) -> Result<Sections, StageFailure> {
        let text = self.ask(purpose, vars)?;
        Ok(parse_sections(&text, schema)?)
    }

    pub fn take_calls(&mut self) -> BTreeMap<String, u32> {
        std::mem::take(&mut self.calls)
    }
}

fn is_none_text(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').trim_matches('"').to_ascii_lowercase();
    t.is_empty() || t == "none" || t == "n/a"
}

/// Marks for a frame, with watermark marks removed.
pub fn frame_marks(image: &RgbImage, config: &RunConfig, watermark: Option<&Template>) -> Result<MarkSet, AugmentError> {
    let seg = ComponentSegmenter { quant_step: config.augment.quant_step, min_area: config.augment.min_area };
    let marks = segment_to_marks(image, &seg)?;
    Ok(match watermark {
        Some(w) => filter_watermarks(&marks, image, w),
        None => marks,
    })
}

#[derive(Debug, Clone)]
pub struct Gathered {
    pub keyframe_texts: Vec<String>,
    pub description: String,
    pub guidance: Option<String>,
    pub marks: Option<MarkSet>,
    pub last_frame: Frame,
    /// What the description request saw: the last frame, marked when
    /// augmentation is on.
    pub screen: Arc<RgbImage>,
}

impl Gathered {
    pub fn as_text(&self) -> String {
        let mut out = self.description.clone();
        if let Some(g) = &self.guidance {
            out.push_str(&format!(" Guidance: {g}"));
        }
        if !self.keyframe_texts.is_empty() {
            out.push_str(&format!(" On-screen text: {}", self.keyframe_texts.join(" | ")));
        }
        out
    }
}

pub fn gather(
    asker: &mut Asker,
    clip: &VideoClip,
    config: &RunConfig,
    watermark: Option<&Template>,
    task: &str,
) -> Result<Gathered, StageFailure> {
    let last = clip.last().ok_or(ObservationError::EmptyClip)?.clone();
    let region = config.text_region.unwrap_or(Rect::full(last.width(), last.height()));
    let mut keyframe_texts = Vec::new();
    for kf in extract_keyframes(clip, &region, config.keyframe_threshold)? {
        let vars = PromptVars::new().text("task", task).images("keyframe", vec![kf.image.clone()]);
        let s = asker.ask_sections(prompts::OCR, &vars, &prompts::ocr_schema())?;
        let text = s.text("Text").unwrap_or_default();
        if !is_none_text(text) {
            keyframe_texts.push(text.to_string());
        }
    }

    let (marks, screen) = if config.marks_enabled() {
        let marks = frame_marks(&last.image, config, watermark)?;
        let rendered = render_marks(&last.image, &marks, config.augment.style);
        (Some(marks), Arc::new(rendered.image))
    } else {
        (None, last.image.clone())
    };
    let marks_text = marks.as_ref().filter(|m| !m.is_empty()).map_or("none".to_string(), MarkSet::to_text);
    let kf_text = if keyframe_texts.is_empty() { "none".to_string() } else { keyframe_texts.join("\n") };
    let vars = PromptVars::new()
        .text("task", task)
        .text("keyframe_texts", kf_text)
        .text("marks", marks_text)
        .images("screen", vec![screen.clone()]);
    let s = asker.ask_sections(prompts::DESCRIBE, &vars, &prompts::describe_schema())?;
    let description = s.text("Description").unwrap_or_default().to_string();
    let guidance = s.text("Guidance").filter(|g| !is_none_text(g)).map(str::to_string);
    Ok(Gathered { keyframe_texts, description, guidance, marks, last_frame: last, screen })
}

/// Judges the previous action from frames recorded while it ran.
pub fn reflect(
    asker: &mut Asker,
    clip: &VideoClip,
    config: &RunConfig,
    last_action: &[SkillCall],
    reasoning: &str,
    task: &str,
) -> Result<ReflectionOutcome, StageFailure> {
    if last_action.is_empty() {
        return Ok(ReflectionOutcome::bootstrap());
    }
    let mut images = Vec::new();
    for f in sample_frames(clip, config.reflection_frames())? {
        let (w, h) = reflection_size(f.width(), f.height(), config.reflection_width);
        images.push(downscale(&f, w, h)?.image);
    }
    let action: Vec<String> = last_action.iter().map(ToString::to_string).collect();
    let vars = PromptVars::new()
        .text("task", task)
        .text("last_action", action.join("; "))
        .text("reasoning", if reasoning.is_empty() { "none" } else { reasoning })
        .images("frames", images);
    let s = asker.ask_sections(prompts::REFLECT, &vars, &prompts::reflect_schema())?;
    Ok(ReflectionOutcome::new(
        s.bool("Success").unwrap_or(false),
        s.bool("Task done").unwrap_or(false),
        s.text("Analysis").unwrap_or_default(),
        s.bool("Continue").unwrap_or(false),
    ))
}

pub struct TaskContext<'a> {
    pub goal: &'a str,
    pub task: &'a str,
    pub summary: &'a str,
    pub gathered: &'a str,
    pub reflection: &'a ReflectionOutcome,
}

/// The provider's proposed task, if it proposed one. A missing horizon
/// counts as long.
pub fn infer_task(asker: &mut Asker, ctx: &TaskContext, iteration: u64) -> Result<Option<TaskSpec>, StageFailure> {
    let vars = PromptVars::new()
        .text("goal", ctx.goal)
        .text("task", ctx.task)
        .text("summary", or_none(ctx.summary))
        .text("gathered", ctx.gathered)
        .text("last_action_ok", ctx.reflection.last_action_ok.to_string())
        .text("task_done", ctx.reflection.task_done.to_string())
        .text("analysis", or_none(&ctx.reflection.failure_analysis));
    let s = asker.ask_sections(prompts::TASK, &vars, &prompts::task_schema())?;
    let Some(desc) = s.text("Task").filter(|t| !is_none_text(t)) else {
        return Ok(None);
    };
    let horizon = s.text("Horizon").and_then(Horizon::parse).unwrap_or(Horizon::Long);
    Ok(Some(TaskSpec::new(desc, horizon, iteration)))
}

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() {
        "none"
    } else {
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curated {
    pub new_skills: Vec<String>,
    /// `name: reason` for each generated skill that was not stored.
    pub rejected: Vec<String>,
}

/// Asks for new skills and stores every valid one found in fenced blocks.
pub fn curate(
    asker: &mut Asker,
    store: &mut SkillStore,
    task: &str,
    gathered: &str,
    iteration: u64,
) -> Result<Curated, StageFailure> {
    let names: Vec<&str> = store.names().collect();
    let vars = PromptVars::new().text("task", task).text("gathered", gathered).text("skills", names.join(", "));
    let text = asker.ask(prompts::CURATE, &vars)?;
    let mut out = Curated::default();
    store_generated(&text, store, iteration, asker.provider, &mut out)?;
    Ok(out)
}

/// Parses every ```skill block in `text` and adds the scripts to `store`.
/// Only provider failures are returned as errors; invalid scripts are
/// reported in `out.rejected`.
pub fn store_generated(
    text: &str,
    store: &mut SkillStore,
    iteration: u64,
    provider: &dyn Provider,
    out: &mut Curated,
) -> Result<(), StageFailure> {
    for block in extract_code_blocks(text) {
        let scripts = match parse_many(&block) {
            Ok(s) => s,
            Err(e) => {
                out.rejected.push(format!("<syntax>: {e}"));
                continue;
            }
        };
        for script in scripts {
            let name = script.name.clone();
            match store.add_skill(Skill::Script(script), SkillSource::Generated, iteration, provider) {
                Ok(()) => out.new_skills.push(name),
                Err(MemoryError::Provider(e)) => return Err(StageFailure::Provider(e)),
                Err(e) => out.rejected.push(format!("{name}: {e}")),
            }
        }
    }
    Ok(())
}

/// Names of the `k` skills most relevant to `task`.
pub fn retrieve(store: &SkillStore, task: &str, k: usize, provider: &dyn Provider) -> Result<Vec<String>, StageFailure> {
    Ok(store.retrieve(task, k, provider)?.into_iter().map(|s| s.entry.name().to_string()).collect())
}

pub struct PlanContext<'a> {
    pub goal: &'a str,
    pub task: &'a str,
    pub summary: &'a str,
    pub recent: &'a [String],
    pub gathered: &'a Gathered,
    pub reflection: &'a ReflectionOutcome,
    pub retrieved: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub reasoning: String,
    pub calls: Vec<SkillCall>,
}

/// Retrieved skills plus the built-in natives, in that order.
pub fn offered_skills(retrieved: &[String]) -> Vec<String> {
    let mut out: Vec<String> = retrieved.to_vec();
    for n in native_skills() {
        if !out.iter().any(|r| r == n.name()) {
            out.push(n.name().to_string());
        }
    }
    out
}

fn skill_listing(names: &[String], lookup: &dyn SkillLookup) -> String {
    let mut lines = Vec::new();
    for name in names {
        if let Some(r) = lookup.lookup(name) {
            let params: Vec<String> = r.params().iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
            lines.push(format!("- {name}({}): {}", params.join(", "), r.doc()));
        }
    }
    lines.join("\n")
}

pub fn plan(asker: &mut Asker, ctx: &PlanContext, config: &RunConfig, lookup: &dyn SkillLookup) -> Result<Plan, StageFailure> {
    let offered = offered_skills(ctx.retrieved);
    let marks = ctx.gathered.marks.as_ref().filter(|m| !m.is_empty()).map_or("none".to_string(), MarkSet::to_text);
    let recent = if ctx.recent.is_empty() { "none".to_string() } else { ctx.recent.join("\n") };
    let vars = PromptVars::new()
        .text("goal", ctx.goal)
        .text("task", ctx.task)
        .text("summary", or_none(ctx.summary))
        .text("recent", recent)
        .text("gathered", ctx.gathered.as_text())
        .text("last_action_ok", ctx.reflection.last_action_ok.to_string())
        .text("analysis", or_none(&ctx.reflection.failure_analysis))
        .text("skills", skill_listing(&offered, lookup))
        .text("marks", marks)
        .text("max_actions", config.actions_per_step().to_string())
        .images("screen", vec![ctx.gathered.screen.clone()]);
    let s = asker.ask_sections(prompts::PLAN, &vars, &prompts::plan_schema())?;
    let offered: BTreeSet<&str> = offered.iter().map(String::as_str).collect();
    let mut calls = Vec::new();
    for item in s.list("Actions").unwrap_or_default() {
        let text = item.trim().trim_matches('`').trim();
        if is_none_text(text) {
            continue;
        }
        let call = parse_call(text).map_err(|e| StageFailure::MalformedCall { text: text.into(), message: e.to_string() })?;
        calls.push(call);
    }
    // Later calls were planned against a screen that the earlier ones change.
    calls.truncate(config.actions_per_step() as usize);
    for call in &calls {
        if !offered.contains(call.name.as_str()) {
            return Err(StageFailure::UnknownSkillChosen(call.name.clone()));
        }
        check_call(call, lookup).map_err(|e| StageFailure::MalformedCall { text: call.to_string(), message: e.to_string() })?;
    }
    Ok(Plan { reasoning: s.text("Reasoning").unwrap_or_default().to_string(), calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::SkillEntry;
    use crate::provider::{ScriptedProvider, DEFAULT_EMBED_DIM};
    use crate::skill::presets;
    use image::Rgb;

    fn clip(n: usize) -> VideoClip {
        let frames = (0..n)
            .map(|i| Frame::new(i as u64, i as u64 * 10, RgbImage::from_pixel(64, 48, Rgb([i as u8 * 10, 0, 0]))))
            .collect();
        VideoClip { frames, fps: 2.0, action_marker_start: 0, action_marker_end: n as u64 * 10 }
    }

    fn store(preset: &str) -> SkillStore {
        let mut s = SkillStore::new(DEFAULT_EMBED_DIM);
        let p = ScriptedProvider::new();
        for n in native_skills() {
            s.add_skill(Skill::Native(n), SkillSource::Predefined, 0, &p).unwrap();
        }
        for script in presets::load(preset).unwrap() {
            s.add_skill(Skill::Script(script), SkillSource::Predefined, 0, &p).unwrap();
        }
        s
    }

    fn gathered() -> Gathered {
        let f = clip(1).frames.remove(0);
        Gathered {
            keyframe_texts: vec![],
            description: "a field".into(),
            guidance: None,
            marks: None,
            screen: f.image.clone(),
            last_frame: f,
        }
    }

    fn plan_with(response: &str, config: &RunConfig, retrieved: &[&str]) -> Result<Plan, StageFailure> {
        let p = ScriptedProvider::new();
        p.push_for(prompts::PLAN, response);
        let set = PromptSet::bundled();
        let mut asker = Asker::new(&p, &set, config);
        let s = store(config.mode.preset());
        let retrieved: Vec<String> = retrieved.iter().map(|r| r.to_string()).collect();
        let g = gathered();
        let r = ReflectionOutcome::bootstrap();
        let ctx = PlanContext {
            goal: "g",
            task: "t",
            summary: "",
            recent: &[],
            gathered: &g,
            reflection: &r,
            retrieved: &retrieved,
        };
        plan(&mut asker, &ctx, config, &s)
    }

    #[test]
    fn games_plan_keeps_first_call_only() {
        let cfg = RunConfig::games("g");
        let p = plan_with(
            "Reasoning: go\nActions:\n- move_up(0.5)\n- use_tool()\n- move_left(1)",
            &cfg,
            &["move_up", "use_tool", "move_left"],
        )
        .unwrap();
        assert_eq!(p.calls.len(), 1);
        assert_eq!(p.calls[0].name, "move_up");
        assert_eq!(p.reasoning, "go");
    }

    #[test]
    fn software_plan_keeps_two_calls() {
        let cfg = RunConfig::software("g");
        let p = plan_with(
            "Actions:\n1. type_text(\"120\")\n2. press_key(\"enter\")\n3. press_key(\"tab\")",
            &cfg,
            &["type_text", "press_key"],
        )
        .unwrap();
        let names: Vec<&str> = p.calls.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["type_text", "press_key"]);
    }

    #[test]
    fn plan_rejects_unoffered_and_malformed_calls() {
        let cfg = RunConfig::games("g");
        let e = plan_with("Actions:\n- use_tool()", &cfg, &["move_up"]).unwrap_err();
        assert!(matches!(e, StageFailure::UnknownSkillChosen(ref n) if n == "use_tool"));
        let e = plan_with("Actions:\n- move_up(", &cfg, &["move_up"]).unwrap_err();
        assert!(matches!(e, StageFailure::MalformedCall { .. }));
        let e = plan_with("Actions:\n- move_up(\"x\")", &cfg, &["move_up"]).unwrap_err();
        assert!(matches!(e, StageFailure::MalformedCall { .. }));
        // Built-ins are always on offer.
        let p = plan_with("Actions:\n- task_is_not_feasible()", &cfg, &["move_up"]).unwrap();
        assert_eq!(p.calls[0].name, "task_is_not_feasible");
    }

    #[test]
    fn reflection_sends_sampled_frames() {
        let p = ScriptedProvider::new();
        p.push_for(prompts::REFLECT, "Success: False\nAnalysis: blocked by obstacle");
        let set = PromptSet::bundled();
        let cfg = RunConfig::games("g");
        let mut asker = Asker::new(&p, &set, &cfg);
        let call = [SkillCall::new("use_tool", vec![])];
        let out = reflect(&mut asker, &clip(20), &cfg, &call, "", "t").unwrap();
        assert!(!out.last_action_ok);
        assert_eq!(out.failure_analysis, "blocked by obstacle");
        assert_eq!(p.requests()[0].image_count(), 8);
        assert_eq!(reflect(&mut asker, &clip(20), &cfg, &[], "", "t").unwrap(), ReflectionOutcome::bootstrap());
        assert_eq!(asker.calls[prompts::REFLECT], 1);
    }

    #[test]
    fn gather_one_keyframe_for_static_clip_and_marks_when_enabled() {
        let p = ScriptedProvider::new();
        p.set_fallback(prompts::OCR, "Text: none");
        p.set_fallback(prompts::DESCRIBE, "Description: a box\nGuidance: none");
        let set = PromptSet::bundled();
        let mut img = RgbImage::from_pixel(64, 48, Rgb([40, 40, 40]));
        for y in 10..30 {
            for x in 10..40 {
                img.put_pixel(x, y, Rgb([200, 200, 200]));
            }
        }
        let frames = (0..4).map(|i| Frame::new(i, i * 10, img.clone())).collect();
        let c = VideoClip { frames, fps: 2.0, action_marker_start: 0, action_marker_end: 40 };
        let cfg = RunConfig::software("g");
        let mut asker = Asker::new(&p, &set, &cfg);
        let g = gather(&mut asker, &c, &cfg, None, "t").unwrap();
        assert_eq!(asker.calls[prompts::OCR], 1);
        let marks = g.marks.as_ref().unwrap();
        assert_eq!(marks.len(), 1);
        assert_eq!(marks.get(1).unwrap().rect, Rect::new(10, 10, 40, 30));
        assert!(g.guidance.is_none());
        let describe = p.requests().into_iter().find(|r| r.purpose == prompts::DESCRIBE).unwrap();
        let sent: Vec<_> = describe.messages.iter().flat_map(|m| m.images()).collect();
        let expected = render_marks(&img, marks, cfg.augment.style).image;
        assert_eq!(crate::observation::pixel_digest(sent[0]), crate::observation::pixel_digest(&expected));
    }

    #[test]
    fn curate_adds_valid_and_reports_duplicates() {
        let p = ScriptedProvider::new();
        let body = "```skill\nskill hitch_horse()\ndoc \"Hitch the horse to the post.\"\n{\n    key_press(\"e\", 0.2);\n}\n```\n\
                    ```skill\nskill use_tool()\ndoc \"again\"\n{\n    key_press(\"c\", 0.1);\n}\n```";
        p.push_for(prompts::CURATE, body);
        p.push_for(prompts::CURATE, "No new skills.");
        let set = PromptSet::bundled();
        let cfg = RunConfig::games("g");
        let mut asker = Asker::new(&p, &set, &cfg);
        let mut s = store("games");
        let before = s.len();
        let c = curate(&mut asker, &mut s, "ride", "Press E to hitch", 4).unwrap();
        assert_eq!(c.new_skills, ["hitch_horse"]);
        assert_eq!(c.rejected.len(), 1);
        assert!(c.rejected[0].starts_with("use_tool"));
        assert_eq!(s.len(), before + 1);
        let e: &SkillEntry = s.get("hitch_horse").unwrap();
        assert_eq!(e.source, SkillSource::Generated);
        assert_eq!(e.created_at, 4);
        let c = curate(&mut asker, &mut s, "ride", "", 5).unwrap();
        assert!(c.new_skills.is_empty());
        let got = retrieve(&s, "ride", 3, &ScriptedProvider::new()).unwrap();
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn task_inference_reads_proposal() {
        let p = ScriptedProvider::new();
        p.push_for(prompts::TASK, "Task: pick up the axe\nHorizon: short");
        p.push_for(prompts::TASK, "Task: none");
        let set = PromptSet::bundled();
        let cfg = RunConfig::games("g");
        let mut asker = Asker::new(&p, &set, &cfg);
        let r = ReflectionOutcome::bootstrap();
        let ctx = TaskContext { goal: "g", task: "g", summary: "", gathered: "", reflection: &r };
        let t = infer_task(&mut asker, &ctx, 7).unwrap().unwrap();
        assert_eq!((t.description.as_str(), t.horizon, t.created_iter), ("pick up the axe", Horizon::Short, 7));
        assert!(infer_task(&mut asker, &ctx, 8).unwrap().is_none());
    }

    #[test]
    fn cassette_miss_is_fatal() {
        let e = StageFailure::Provider(ProviderError::CassetteMiss { digest: "d".into(), purpose: "plan".into() });
        assert!(e.is_fatal());
        assert!(!StageFailure::Provider(ProviderError::Timeout).is_fatal());
        assert!(StageFailure::Memory(MemoryError::Provider(ProviderError::Config("x".into()))).is_fatal());
    }
}
