use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::augment::{AugmentError, MarkSet, Template};
use crate::clock::Clock;
use crate::geom::Rect;
use crate::io::{
    ActionPrimitive, Backend, ExecConfig, ExecReport, Executor, InputEvent, IoError, Key, LoggedEvent, Outcome,
    RecordingBackend,
};
use crate::memory::{EpisodicError, EpisodicRecord, EpisodicStore, MemoryError, SkillSource, SkillStore};
use crate::observation::{start_capture, Capture, CaptureConfig, FrameSource, ObservationError, Observed, VideoClip};
use crate::prompt::{PromptError, PromptVars};
use crate::provider::Provider;
use crate::simenv::SimEnv;
use crate::skill::{compile, native_skills, presets, CompileContext, Skill, SkillCall, TASK_IS_NOT_FEASIBLE};
use crate::trajectory::{
    ExploredItem, GatheredSummary, IterationRecord, RunResult, StageError, Termination, TrajectoryError,
    TrajectoryWriter,
};

use super::config::{ConfigError, ExploreConfig, RunConfig};
use super::prompts::{self, PromptSet};
use super::stages::{self, Asker, Curated, Gathered, PlanContext, StageFailure, TaskContext};
use super::{ReflectionOutcome, TaskStack};

/// What the loop needs from the thing it controls beyond input and screenshots.
pub trait Environment: Backend + FrameSource {
    /// Whether the run's objective holds. Real applications without a
    /// checkable goal return `false` and rely on the step cap.
    fn goal_reached(&self) -> bool;

    /// Digest of the current screen, recorded per iteration for replay.
    fn render_digest(&self) -> String;
}

impl Environment for SimEnv {
    fn goal_reached(&self) -> bool {
        SimEnv::goal_reached(self)
    }

    fn render_digest(&self) -> String {
        SimEnv::render_digest(self)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub records: Vec<IterationRecord>,
    /// Set when the run stopped on an unrecoverable error.
    pub fatal: Option<String>,
}

/// Natives plus the preset skills for `preset`, embedded with `provider`.
pub fn default_store(preset: &str, provider: &dyn Provider, duration_ceiling: f64) -> Result<SkillStore, MemoryError> {
    let scripts = presets::load(preset).ok_or_else(|| MemoryError::NotFound(format!("preset {preset}")))?;
    let mut skills: Vec<Skill> = native_skills().into_iter().map(Skill::Native).collect();
    skills.extend(scripts.into_iter().map(Skill::Script));
    let probe = provider.embed(&[skills[0].as_ref().doc()])?;
    let dim = probe.first().map_or(0, Vec::len);
    let mut store = SkillStore::new(dim);
    store.duration_ceiling = duration_ceiling;
    for s in skills {
        store.add_skill(s, SkillSource::Predefined, 0, provider)?;
    }
    Ok(store)
}

/// Environment, clock and capture for one run. Everything sent to the
/// environment goes through [`Session::drive`] so it lands in the event log.
struct Session<'e, E, C> {
    env: &'e mut E,
    clock: &'e mut C,
    capture: Capture,
    executor: Executor,
    events: Vec<LoggedEvent>,
}

impl<E: Environment, C: Clock> Session<'_, E, C> {
    fn drive<R>(&mut self, f: impl FnOnce(&mut Executor, &mut dyn Backend, &mut C) -> R) -> Result<R, ObservationError> {
        let mut observed = Observed::new(&mut *self.env, &mut self.capture);
        let mut rec = RecordingBackend::new(&mut observed);
        let r = f(&mut self.executor, &mut rec, &mut *self.clock);
        self.events.extend(rec.take_log());
        drop(rec);
        match observed.take_error() {
            Some(e) => Err(e),
            None => Ok(r),
        }
    }

    /// Runs `ps` between an unpause and a pause.
    fn burst(&mut self, ps: &[ActionPrimitive], pause: &crate::io::PauseStrategy) -> Result<Vec<ExecReport>, Fatal> {
        let out = self.drive(|ex, b, clk| -> Result<Vec<ExecReport>, IoError> {
            let mut reps = vec![ex.unpause(pause, b, clk)?];
            reps.extend(ex.execute_sequence(ps, true, b, clk));
            ex.settle(b, clk)?;
            reps.push(ex.pause(pause, b, clk)?);
            Ok(reps)
        });
        flatten_exec(out)
    }

    fn clip(&mut self) -> Result<VideoClip, ObservationError> {
        let now = self.clock.now();
        self.capture.snapshot(now, &*self.env)?;
        match self.capture.clip_since_last_action(now) {
            Ok(c) => Ok(c),
            // Nothing new since the last clip: reuse the newest frame.
            Err(ObservationError::EmptyClip) => {
                let f = self.capture.ring().latest().ok_or(ObservationError::EmptyClip)?;
                Ok(VideoClip { frames: vec![f], fps: self.capture.config().fps, action_marker_start: now, action_marker_end: now })
            }
            Err(e) => Err(e),
        }
    }

    fn screen(&self) -> Result<RgbImage, ObservationError> {
        self.env.render()
    }
}

/// An error that ends the run.
#[derive(Debug)]
struct Fatal(String);

fn flatten_exec(r: Result<Result<Vec<ExecReport>, IoError>, ObservationError>) -> Result<Vec<ExecReport>, Fatal> {
    match r {
        Err(e) => Err(Fatal(format!("capture: {e}"))),
        Ok(Err(e)) => Err(Fatal(format!("execution: {e}"))),
        Ok(Ok(reps)) => {
            for r in &reps {
                if let Outcome::Failed(e @ IoError::BackendFailure(_)) = &r.outcome {
                    return Err(Fatal(format!("backend: {e}")));
                }
            }
            Ok(reps)
        }
    }
}

/// Records a stage failure; returns it back as fatal when it is.
fn record(errors: &mut Vec<StageError>, stage: &str, e: StageFailure) -> Result<(), Fatal> {
    let message = e.to_string();
    errors.push(StageError { stage: stage.to_string(), message: message.clone() });
    if e.is_fatal() {
        Err(Fatal(format!("{stage}: {message}")))
    } else {
        Ok(())
    }
}

#[derive(Default)]
struct Previous {
    action: Vec<SkillCall>,
    reasoning: String,
}

/// The agent: run configuration, memories and provider.
pub struct Agent<'p> {
    config: RunConfig,
    prompts: PromptSet,
    provider: &'p dyn Provider,
    store: SkillStore,
    episodic: EpisodicStore,
    tasks: TaskStack,
    watermark: Option<Template>,
}

impl<'p> Agent<'p> {
    /// Validates `config` and seeds the skill store with the mode's presets.
    pub fn new(config: RunConfig, provider: &'p dyn Provider) -> Result<Self, PipelineError> {
        config.validate()?;
        let store = default_store(config.mode.preset(), provider, config.duration_ceiling)?;
        let prompts = PromptSet::bundled();
        let episodic = EpisodicStore::new(config.episodic_k)
            .with_sentence_cap(config.sentence_cap)
            .with_template(prompts.get(prompts::SUMMARIZE).clone());
        let tasks = TaskStack::with_goal(config.short_task_window, &config.goal);
        Ok(Self { config, prompts, provider, store, episodic, tasks, watermark: None })
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.episodic = EpisodicStore::new(self.config.episodic_k)
            .with_sentence_cap(self.config.sentence_cap)
            .with_template(prompts.get(prompts::SUMMARIZE).clone());
        self.prompts = prompts;
        self
    }

    pub fn with_store(mut self, store: SkillStore) -> Self {
        self.store = store;
        self
    }

    pub fn with_watermark(mut self, watermark: Template) -> Self {
        self.watermark = Some(watermark);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn store(&self) -> &SkillStore {
        &self.store
    }

    pub fn episodic(&self) -> &EpisodicStore {
        &self.episodic
    }

    pub fn tasks(&self) -> &TaskStack {
        &self.tasks
    }

    /// Runs the loop until the goal holds, the provider declares the task
    /// infeasible, the step cap is hit, or an unrecoverable error occurs.
    /// Every iteration is appended to `trajectory` as it completes.
    pub fn run<E: Environment, C: Clock>(
        &mut self,
        env: &mut E,
        clock: &mut C,
        mut trajectory: Option<&mut TrajectoryWriter>,
    ) -> Result<RunOutput, PipelineError> {
        let capture_cfg = CaptureConfig { fps: self.config.fps, reflection_width: self.config.reflection_width, ..Default::default() };
        let capture = start_capture(&*env, capture_cfg, clock.now(), clock.tick_secs())?;
        let mut s = Session {
            env,
            clock,
            capture,
            executor: Executor::new(ExecConfig { duration_ceiling: self.config.duration_ceiling }),
            events: Vec::new(),
        };
        let prompts = self.prompts.clone();
        let mut asker = Asker::new(self.provider, &prompts, &self.config);
        let mut records: Vec<IterationRecord> = Vec::new();
        let mut fatal: Option<Fatal> = None;

        let pause = self.config.pause();
        let now = s.clock.now();
        s.capture.snapshot(now, &*s.env)?;
        if let Err(e) = flatten_exec(s.drive(|ex, b, clk| ex.pause(&pause, b, clk).map(|r| vec![r]))) {
            fatal = Some(e);
        }

        let mut explored = Vec::new();
        if fatal.is_none() {
            if let Some(ecfg) = self.config.explore.clone() {
                if let Err(e) = self.explore(&mut asker, &mut s, &ecfg, &mut explored) {
                    fatal = Some(e);
                }
            }
        }

        let mut prev = Previous::default();
        for i in 1..=self.config.max_steps as u64 {
            let mut rec = self.iterate(&mut asker, &mut s, i, &mut prev, fatal.take());
            if i == 1 {
                rec.explored = std::mem::take(&mut explored);
            }
            let stop = rec.terminated.is_some();
            let fatal_msg = (rec.terminated == Some(Termination::Fatal))
                .then(|| rec.errors.last().map(|e| format!("{}: {}", e.stage, e.message)).unwrap_or_default());
            if let Some(w) = trajectory.as_deref_mut() {
                w.append(&rec)?;
            }
            records.push(rec);
            if stop {
                let result = RunResult::from_records(&records, trajectory.as_ref().map(|w| w.path().to_path_buf()));
                return Ok(RunOutput { result, records, fatal: fatal_msg });
            }
        }
        unreachable!("the last iteration always terminates")
    }

    fn iterate<E: Environment, C: Clock>(
        &mut self,
        asker: &mut Asker,
        s: &mut Session<'_, E, C>,
        i: u64,
        prev: &mut Previous,
        pending_fatal: Option<Fatal>,
    ) -> IterationRecord {
        let cfg = self.config.clone();
        let tick_start = s.clock.now();
        let mut errors: Vec<StageError> = Vec::new();
        let mut notes: Vec<String> = Vec::new();
        let mut exec: Vec<ExecReport> = Vec::new();
        let mut stage_ticks = BTreeMap::new();
        let mut frames = Vec::new();
        let mut gathered_summary = GatheredSummary::default();
        let mut reflection = ReflectionOutcome::bootstrap();
        let mut task_changes = Vec::new();
        let mut curated = Curated::default();
        let mut retrieved: Vec<String> = Vec::new();
        let mut plan = stages::Plan::default();
        let mut terminated = None;
        let mut fatal = pending_fatal;
        let mut gathered: Option<Gathered> = None;

        let outcome: Result<(), Fatal> = 'stages: {
            if let Some(f) = fatal.take() {
                break 'stages Err(f);
            }
            let clip = match s.clip() {
                Ok(c) => c,
                Err(e) => break 'stages Err(Fatal(format!("capture: {e}"))),
            };
            frames = clip.frames.iter().map(|f| f.index).collect();
            let task_text = self.active_task();

            match stages::gather(asker, &clip, &cfg, self.watermark.as_ref(), &task_text) {
                Ok(g) => {
                    gathered_summary = GatheredSummary {
                        keyframe_texts: g.keyframe_texts.clone(),
                        description: g.description.clone(),
                        marks: g.marks.as_ref().map_or(0, MarkSet::len),
                        frame_digest: g.last_frame.digest(),
                    };
                    gathered = Some(g);
                }
                // Without a view of the screen nothing else can be decided.
                Err(e) => break 'stages record(&mut errors, "gather", e),
            }
            let g = gathered.as_ref().expect("set above");
            let gathered_text = g.as_text();

            match stages::reflect(asker, &clip, &cfg, &prev.action, &prev.reasoning, &task_text) {
                Ok(r) => reflection = r,
                Err(e) => {
                    if let Err(f) = record(&mut errors, "reflect", e) {
                        break 'stages Err(f);
                    }
                }
            }

            if i > 1 && (i - 1) % cfg.summary_stride as u64 == 0 {
                match self.episodic.update_summary(self.provider) {
                    Ok(_) | Err(EpisodicError::NothingToSummarize) => {}
                    Err(e) => {
                        if let Err(f) = record(&mut errors, "summarize", StageFailure::Episodic(e)) {
                            break 'stages Err(f);
                        }
                    }
                }
                *asker.calls.entry(prompts::SUMMARIZE.to_string()).or_insert(0) += 1;
            }
            let summary = self.episodic.summary().text.clone();

            let ctx = TaskContext {
                goal: &cfg.goal,
                task: &task_text,
                summary: &summary,
                gathered: &gathered_text,
                reflection: &reflection,
            };
            let proposed = match stages::infer_task(asker, &ctx, i) {
                Ok(p) => p,
                Err(e) => {
                    if let Err(f) = record(&mut errors, "task", e) {
                        break 'stages Err(f);
                    }
                    None
                }
            };
            task_changes = self.tasks.update(reflection.task_done, proposed);
            let task_text = self.active_task();

            match stages::curate(asker, &mut self.store, &task_text, &gathered_text, i) {
                Ok(c) => curated = c,
                Err(e) => {
                    if let Err(f) = record(&mut errors, "curate", e) {
                        break 'stages Err(f);
                    }
                }
            }
            match stages::retrieve(&self.store, &task_text, cfg.top_k, self.provider) {
                Ok(r) => retrieved = r,
                Err(e) => {
                    if let Err(f) = record(&mut errors, "retrieve", e) {
                        break 'stages Err(f);
                    }
                }
            }

            let recent: Vec<String> = self.episodic.recent(cfg.episodic_k).iter().map(EpisodicRecord::digest).collect();
            let ctx = PlanContext {
                goal: &cfg.goal,
                task: &task_text,
                summary: &summary,
                recent: &recent,
                gathered: g,
                reflection: &reflection,
                retrieved: &retrieved,
            };
            match stages::plan(asker, &ctx, &cfg, &self.store) {
                Ok(p) => plan = p,
                Err(e) => break 'stages record(&mut errors, "plan", e),
            }

            if plan.calls.iter().any(|c| c.name == TASK_IS_NOT_FEASIBLE) {
                terminated = Some(Termination::Infeasible);
                break 'stages Ok(());
            }
            let before = s.clock.now();
            let r = self.execute(s, &plan.calls, g.marks.as_ref(), &reflection, &mut errors, &mut notes, &mut exec);
            stage_ticks.insert("execute".to_string(), s.clock.now() - before);
            r
        };

        let goal_reached = s.env.goal_reached();
        if let Err(Fatal(msg)) = outcome {
            if errors.last().map(|e| format!("{}: {}", e.stage, e.message)) != Some(msg.clone()) {
                errors.push(StageError { stage: "run".into(), message: msg });
            }
            terminated = Some(Termination::Fatal);
        } else if goal_reached {
            terminated = Some(Termination::Goal);
        } else if terminated.is_none() && i >= cfg.max_steps as u64 {
            terminated = Some(Termination::MaxSteps);
        }
        if terminated.is_some() {
            match flatten_exec(s.drive(|ex, b, clk| ex.release_all(b, clk).map(|r| vec![r]))) {
                Ok(r) => exec.extend(r),
                Err(Fatal(m)) => errors.push(StageError { stage: "release".into(), message: m }),
            }
        }

        let mut ep = EpisodicRecord::new(i);
        ep.screenshot_refs = frames.clone();
        ep.info_text = gathered.as_ref().map(Gathered::as_text).unwrap_or_default();
        ep.task = self.tasks.active().cloned();
        ep.action = plan.calls.clone();
        ep.reflection = Some(reflection.clone());
        ep.reasoning = plan.reasoning.clone();
        if let Err(e) = self.episodic.append(ep) {
            errors.push(StageError { stage: "episodic".into(), message: e.to_string() });
        }
        prev.action = plan.calls.clone();
        prev.reasoning = plan.reasoning.clone();

        IterationRecord {
            iteration: i,
            tick_start,
            tick_end: s.clock.now(),
            frames,
            gathered: gathered_summary,
            reflection,
            task: self.tasks.active().cloned(),
            task_changes,
            new_skills: curated.new_skills,
            rejected_skills: curated.rejected,
            retrieved,
            reasoning: plan.reasoning,
            action: plan.calls,
            exec,
            errors,
            notes,
            explored: Vec::new(),
            provider_calls: asker.take_calls(),
            stage_ticks,
            events: std::mem::take(&mut s.events),
            render_digest: s.env.render_digest(),
            goal_reached,
            terminated,
        }
    }

    fn active_task(&self) -> String {
        self.tasks.active().map_or_else(|| self.config.goal.clone(), |t| t.description.clone())
    }

    /// Compiles every call, then runs them inside the pause bracket. A
    /// compile error means nothing runs.
    #[allow(clippy::too_many_arguments)]
    fn execute<E: Environment, C: Clock>(
        &self,
        s: &mut Session<'_, E, C>,
        calls: &[SkillCall],
        marks: Option<&MarkSet>,
        reflection: &ReflectionOutcome,
        errors: &mut Vec<StageError>,
        notes: &mut Vec<String>,
        exec: &mut Vec<ExecReport>,
    ) -> Result<(), Fatal> {
        let ctx = CompileContext { screen: s.env.screen(), marks, ceiling: self.config.duration_ceiling };
        let mut prims = Vec::new();
        for c in calls {
            match compile(c, &self.store, &ctx) {
                Ok(p) => prims.extend(p),
                Err(e) => {
                    errors.push(StageError { stage: "execute".into(), message: format!("{c}: {e}") });
                    return Ok(());
                }
            }
        }
        if prims.is_empty() {
            return Ok(());
        }
        let pause = self.config.pause();
        let keep = reflection.continue_held_action;
        let pressed: BTreeSet<Key> = prims.iter().flat_map(ActionPrimitive::pressed_keys).collect();
        let out = s.drive(|ex, b, clk| -> Result<(Vec<ExecReport>, Vec<String>), IoError> {
            let mut reps = vec![ex.unpause(&pause, b, clk)?];
            let mut notes = Vec::new();
            let held = ex.held().clone();
            if !held.is_empty() {
                if !keep {
                    notes.push(format!("released held input {:?} {:?}", held.keys, held.buttons));
                    reps.push(ex.release_all(b, clk)?);
                } else {
                    let mut conflicts = Vec::new();
                    for k in held.keys.intersection(&pressed) {
                        notes.push(format!("released conflicting hold `{k}`"));
                        conflicts.push(ActionPrimitive::KeyRelease { key: k.clone() });
                    }
                    reps.extend(ex.execute_sequence(&conflicts, false, b, clk));
                }
            }
            reps.extend(ex.execute_sequence(&prims, true, b, clk));
            ex.settle(b, clk)?;
            reps.push(ex.pause(&pause, b, clk)?);
            Ok((reps, notes))
        });
        let (reps, n) = match out {
            Err(e) => return Err(Fatal(format!("capture: {e}"))),
            Ok(Err(e @ IoError::BackendFailure(_))) => return Err(Fatal(format!("backend: {e}"))),
            Ok(Err(e)) => {
                errors.push(StageError { stage: "execute".into(), message: e.to_string() });
                return Ok(());
            }
            Ok(Ok(v)) => v,
        };
        notes.extend(n);
        for r in &reps {
            match &r.outcome {
                Outcome::Failed(e @ IoError::BackendFailure(_)) => {
                    exec.extend(reps.iter().cloned());
                    return Err(Fatal(format!("backend: {e}")));
                }
                Outcome::Failed(e) => errors.push(StageError { stage: "execute".into(), message: e.to_string() }),
                _ => {}
            }
        }
        exec.extend(reps);
        Ok(())
    }

    /// Visits every toolbar item: hover, read the tooltip, generate and store
    /// a skill for it, and for first-level items open the menu and visit the
    /// items that appear. Items whose tooltip says they are unavailable are
    /// skipped.
    fn explore<E: Environment, C: Clock>(
        &mut self,
        asker: &mut Asker,
        s: &mut Session<'_, E, C>,
        ecfg: &ExploreConfig,
        out: &mut Vec<ExploredItem>,
    ) -> Result<(), Fatal> {
        let pause = self.config.pause();
        let park = ActionPrimitive::move_to(ecfg.park.0 as f64, ecfg.park.1 as f64);
        s.burst(&[park.clone()], &pause)?;
        let first = self.marks_now(s)?;
        let items: Vec<Rect> = first.rects().into_iter().filter(|r| ecfg.toolbar.contains_rect(r)).collect();
        for rect in items {
            let Some(name) = self.visit_item(asker, s, rect, 1, out)? else {
                continue;
            };
            s.burst(&[park.clone()], &pause)?;
            let before_img = s.screen().map_err(|e| Fatal(format!("capture: {e}")))?;
            let before = self.marks_now(s)?.rects();
            let prims = match compile(&SkillCall::new(&name, vec![]), &self.store, &CompileContext::new(s.env.screen())) {
                Ok(p) => p,
                Err(e) => {
                    if let Some(item) = out.last_mut() {
                        item.error = Some(e.to_string());
                    }
                    continue;
                }
            };
            let mut ps = prims;
            ps.push(park.clone());
            s.burst(&ps, &pause)?;
            let after_img = s.screen().map_err(|e| Fatal(format!("capture: {e}")))?;
            let after = self.marks_now(s)?.rects();
            // A region is new when nothing like it was on screen before, or
            // when it sits where an old one was but looks different.
            let opened: Vec<Rect> = after
                .into_iter()
                .filter(|r| {
                    !ecfg.toolbar.contains_rect(r)
                        && (before.iter().all(|b| b.iou(r) < 0.9) || region_changed(&before_img, &after_img, r))
                })
                .collect();
            for r in opened {
                self.visit_item(asker, s, r, 2, out)?;
            }
        }
        Ok(())
    }

    fn marks_now<E: Environment, C: Clock>(&self, s: &Session<'_, E, C>) -> Result<MarkSet, Fatal> {
        let img = s.screen().map_err(|e| Fatal(format!("capture: {e}")))?;
        stages::frame_marks(&img, &self.config, self.watermark.as_ref()).map_err(|e| Fatal(format!("augment: {e}")))
    }

    /// Returns the name of the stored skill, if one was generated.
    fn visit_item<E: Environment, C: Clock>(
        &mut self,
        asker: &mut Asker,
        s: &mut Session<'_, E, C>,
        rect: Rect,
        level: u8,
        out: &mut Vec<ExploredItem>,
    ) -> Result<Option<String>, Fatal> {
        let pause = self.config.pause();
        let c = rect.centroid();
        s.burst(&[ActionPrimitive::move_to(c.x as f64, c.y as f64), ActionPrimitive::wait(0.15)], &pause)?;
        let screen = Arc::new(s.screen().map_err(|e| Fatal(format!("capture: {e}")))?);
        let position = format!("({}, {})", c.x, c.y);
        let mut item = ExploredItem { level, rect, tooltip: String::new(), available: false, skill: None, error: None };
        let mut errors = Vec::new();

        let vars = PromptVars::new().text("position", position.clone()).images("screen", vec![screen]);
        let sections = match asker.ask_sections(prompts::TOOLTIP, &vars, &prompts::tooltip_schema()) {
            Ok(s) => s,
            Err(e) => {
                record(&mut errors, "tooltip", e)?;
                item.error = errors.pop().map(|e| e.message);
                out.push(item);
                return Ok(None);
            }
        };
        item.tooltip = sections.text("Tooltip").unwrap_or_default().trim().to_string();
        let none = item.tooltip.is_empty() || item.tooltip.eq_ignore_ascii_case("none");
        item.available = !none && sections.bool("Available").unwrap_or(true);
        if !item.available {
            out.push(item);
            return Ok(None);
        }

        let (prefix, suffix, verb) = if level == 1 { ("open", "_menu", "Open the") } else { ("select", "", "Select") };
        let vars = PromptVars::new()
            .text("position", position)
            .text("tooltip", item.tooltip.clone())
            .text("prefix", prefix)
            .text("suffix", suffix)
            .text("verb", verb);
        let text = match asker.ask(prompts::SKILL_GEN, &vars) {
            Ok(t) => t,
            Err(e) => {
                record(&mut errors, "skill_gen", e)?;
                item.error = errors.pop().map(|e| e.message);
                out.push(item);
                return Ok(None);
            }
        };
        let mut curated = Curated::default();
        if let Err(e) = stages::store_generated(&text, &mut self.store, 0, self.provider, &mut curated) {
            record(&mut errors, "skill_gen", e)?;
            curated.rejected.extend(errors.pop().map(|e| e.message));
        }
        item.skill = curated.new_skills.first().cloned();
        if item.skill.is_none() {
            item.error = Some(if curated.rejected.is_empty() { "no skill block".into() } else { curated.rejected.join("; ") });
        }
        let name = item.skill.clone();
        out.push(item);
        Ok(name)
    }
}

fn region_changed(a: &RgbImage, b: &RgbImage, r: &Rect) -> bool {
    (r.y0..r.y1.min(a.height()).min(b.height()))
        .any(|y| (r.x0..r.x1.min(a.width()).min(b.width())).any(|x| a.get_pixel(x, y) != b.get_pixel(x, y)))
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("iteration {iteration}: replayed screen {actual} differs from recorded {expected}")]
    DigestMismatch { iteration: u64, expected: String, actual: String },
    #[error("iteration {iteration}: {message}")]
    Backend { iteration: u64, message: String },
    #[error("trajectory has no iterations")]
    Empty,
}

/// Feeds each line's logged events to `env` and checks the screen digest
/// after every line. Returns the number of lines verified.
pub fn replay<E: Environment>(records: &[IterationRecord], env: &mut E) -> Result<usize, ReplayError> {
    if records.is_empty() {
        return Err(ReplayError::Empty);
    }
    for r in records {
        for ev in &r.events {
            ev.apply_to(env).map_err(|e| ReplayError::Backend { iteration: r.iteration, message: e.to_string() })?;
        }
        let actual = env.render_digest();
        if actual != r.render_digest {
            return Err(ReplayError::DigestMismatch { iteration: r.iteration, expected: r.render_digest.clone(), actual });
        }
    }
    Ok(records.len())
}

/// Input events of a record, without clock syncs or focus changes.
pub fn input_events(record: &IterationRecord) -> Vec<&InputEvent> {
    record.events.iter().filter_map(LoggedEvent::input).collect()
}
