use std::path::{Path, PathBuf};

use cradle_core::augment::{segment_to_marks, ComponentSegmenter};
use cradle_core::clock::SimClock;
use cradle_core::io::{Executed, InputEvent};
use cradle_core::pipeline::{input_events, replay, Agent, ReplayError, RunConfig, RunOutput};
use cradle_core::profile::Profile;
use cradle_core::provider::ScriptedProvider;
use cradle_core::simenv::SimEnv;
use cradle_core::trajectory::{read_trajectory, Termination, TrajectoryWriter};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).join("profile.toml")
}

fn run_profile(p: &Profile) -> RunOutput {
    let provider = p.provider().unwrap();
    let mut env = p.environment().unwrap();
    let mut clock = SimClock::new(env.scenario().tick_secs);
    let mut agent = Agent::new(p.run.clone(), &*provider).unwrap().with_prompts(p.prompts().unwrap());
    agent.run(&mut env, &mut clock, None).unwrap()
}

fn run_fixture(name: &str) -> RunOutput {
    run_profile(&Profile::load(&fixture(name)).unwrap())
}

fn scenario(text: &str) -> SimEnv {
    SimEnv::new(text.parse().unwrap())
}

fn run_with(cfg: RunConfig, provider: &ScriptedProvider, env: &mut SimEnv) -> RunOutput {
    let mut clock = SimClock::new(env.scenario().tick_secs);
    let mut agent = Agent::new(cfg, provider).unwrap();
    agent.run(env, &mut clock, None).unwrap()
}

fn quiet_provider() -> ScriptedProvider {
    let p = ScriptedProvider::new();
    p.set_fallback("ocr", "Text: none");
    p.set_fallback("describe", "Description: a screen");
    p.set_fallback("reflect", "Success: true\nTask done: false");
    p.set_fallback("task", "Task: none");
    p.set_fallback("curate", "No new skills.");
    p.set_fallback("summarize", "Nothing happened yet.");
    p
}

const DOOR: &str = "grid\nA.D\nend\ngoal reach door\n";

#[test]
fn every_fixture_reaches_its_goal() {
    for name in ["clear-obstacles", "navigate-door", "haggle-dialog", "toolbar-explore"] {
        let out = run_fixture(name);
        let errs: Vec<_> = out.records.iter().flat_map(|r| r.errors.clone()).collect();
        assert!(out.result.success, "{name}: {:?} errors {errs:?}", out.result);
        assert_eq!(out.result.reason, Some(Termination::Goal), "{name}");
        assert!(out.fatal.is_none());
    }
}

#[test]
fn action_budget_per_mode() {
    for (name, cap) in [("clear-obstacles", 1), ("navigate-door", 1), ("toolbar-explore", 1), ("haggle-dialog", 2)] {
        for r in run_fixture(name).records {
            assert!(r.action.len() <= cap, "{name} iteration {} ran {:?}", r.iteration, r.action);
        }
    }
    let first = &run_fixture("clear-obstacles").records[0];
    assert_eq!(first.action.len(), 1, "games mode truncates a three-call plan");
    let haggle = run_fixture("haggle-dialog");
    assert_eq!(haggle.records[1].action.len(), 2);
}

#[test]
fn haggle_label_one_is_the_offer_box() {
    let p = Profile::load(&fixture("haggle-dialog")).unwrap();
    let env = p.environment().unwrap();
    let img = env.render_image();
    let marks = segment_to_marks(&img, &ComponentSegmenter { quant_step: p.run.augment.quant_step, min_area: p.run.augment.min_area })
        .unwrap();
    assert_eq!(marks.get(1).unwrap().rect, env.widget_rect("price").unwrap());
}

#[test]
fn exploration_registers_only_enabled_items() {
    let out = run_fixture("toolbar-explore");
    let explored = &out.records[0].explored;
    let skills: Vec<_> = explored.iter().filter_map(|e| e.skill.clone()).collect();
    assert_eq!(
        skills,
        ["open_roads_menu", "select_two_lane_road", "select_four_lane_road", "open_water_menu", "select_water_pipe"]
    );
    let skipped: Vec<_> = explored.iter().filter(|e| e.skill.is_none()).collect();
    assert_eq!(skipped.len(), 2, "{explored:#?}");
    assert!(skipped.iter().all(|e| !e.available && e.error.is_none()));
    assert!(skipped[0].tooltip.starts_with("Education"));
    assert_eq!(explored.iter().filter(|e| e.level == 2).count(), 3);
    assert_eq!(out.result.steps_used, 2);
}

#[test]
fn one_action_goal_takes_one_step() {
    let p = quiet_provider();
    p.push_for("plan", "Actions:\n- move_right(1.0)");
    let out = run_with(RunConfig::games("walk to the door"), &p, &mut scenario(DOOR));
    assert_eq!(out.result.steps_used, 1);
    assert!(out.result.success);
}

#[test]
fn step_cap_ends_in_failure() {
    let p = quiet_provider();
    p.set_fallback("plan", "Actions:\n- move_left(0.5)");
    let cfg = RunConfig { max_steps: 3, ..RunConfig::games("walk to the door") };
    let out = run_with(cfg, &p, &mut scenario(DOOR));
    assert_eq!(out.result.steps_used, 3);
    assert!(!out.result.success);
    assert_eq!(out.result.reason, Some(Termination::MaxSteps));
}

#[test]
fn infeasible_stops_the_run() {
    let p = quiet_provider();
    p.push_for("plan", "Actions:\n- move_left(0.5)");
    p.push_for("plan", "Actions:\n- task_is_not_feasible()");
    let out = run_with(RunConfig::games("walk to the door"), &p, &mut scenario(DOOR));
    assert_eq!(out.result.steps_used, 2);
    assert_eq!(out.result.reason, Some(Termination::Infeasible));
    assert!(!out.result.success);
}

fn key_names(events: &[&InputEvent]) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| match e {
            InputEvent::KeyDown { key: k } => Some(format!("+{k}")),
            InputEvent::KeyUp { key: k } => Some(format!("-{k}")),
            _ => None,
        })
        .collect()
}

#[test]
fn games_actions_are_bracketed_by_pause() {
    let p = quiet_provider();
    p.push_for("plan", "Actions:\n- move_right(1.0)");
    let out = run_with(RunConfig::games("walk to the door"), &p, &mut scenario(DOOR));
    let keys = key_names(&input_events(&out.records[0]));
    // The first record also carries the pause issued before the loop starts.
    assert_eq!(keys, ["+esc", "-esc", "+esc", "-esc", "+d", "-d", "+esc", "-esc"]);

    let p = quiet_provider();
    p.push_for("plan", "Actions:\n- move_right(1.0)");
    let cfg = RunConfig { pause: Some("none".parse().unwrap()), ..RunConfig::games("walk to the door") };
    let out = run_with(cfg, &p, &mut scenario(DOOR));
    assert_eq!(key_names(&input_events(&out.records[0])), ["+d", "-d"]);
}

#[test]
fn compile_error_runs_nothing() {
    let p = quiet_provider();
    // Games mode draws no marks, so a label cannot be resolved.
    p.push_for("plan", "Actions:\n- click_on_label(3)");
    let cfg = RunConfig { max_steps: 1, top_k: 30, ..RunConfig::games("walk to the door") };
    let store = cradle_core::pipeline::default_store("software", &p, 30.0).unwrap();
    let mut clock = SimClock::new(0.05);
    let mut env = scenario(DOOR);
    let out = Agent::new(cfg, &p).unwrap().with_store(store).run(&mut env, &mut clock, None).unwrap();
    let r = &out.records[0];
    assert!(r.exec.iter().all(|e| e.executed == Executed::ReleaseAll), "{:?}", r.exec);
    assert!(r.errors.iter().any(|e| e.message.contains("label 3 is not on screen")), "{:?}", r.errors);
    assert!(key_names(&input_events(r)).iter().all(|k| k.ends_with("esc")));
}

#[test]
fn short_task_yields_after_window() {
    let p = quiet_provider();
    p.push_for("task", "Task: pick up the key\nHorizon: short");
    p.set_fallback("plan", "Actions:\n- move_left(0.1)");
    let cfg = RunConfig { max_steps: 5, ..RunConfig::games("walk to the door") };
    let out = run_with(cfg, &p, &mut scenario(DOOR));
    let active: Vec<String> = out.records.iter().map(|r| r.task.as_ref().map(|t| t.description.clone()).unwrap_or_default()).collect();
    assert_eq!(active[0], "pick up the key");
    assert_eq!(active[1], "pick up the key");
    assert_eq!(active[2], "pick up the key");
    assert_eq!(active[3], "walk to the door");
}

#[test]
fn replay_verifies_and_detects_tampering() {
    let p = Profile::load(&fixture("clear-obstacles")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    {
        let provider = p.provider().unwrap();
        let mut env = p.environment().unwrap();
        let mut clock = SimClock::new(env.scenario().tick_secs);
        let mut w = TrajectoryWriter::create(&path).unwrap();
        let mut agent = Agent::new(p.run.clone(), &*provider).unwrap();
        agent.run(&mut env, &mut clock, Some(&mut w)).unwrap();
    }
    let records = read_trajectory(&path).unwrap();
    assert_eq!(replay(&records, &mut p.environment().unwrap()).unwrap(), records.len());

    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("\"ev\":\"key_down\",\"key\":\"d\"", "\"ev\":\"key_down\",\"key\":\"a\"", 1);
    assert_ne!(tampered, text, "fixture should press d");
    let bad = cradle_core::trajectory::parse_trajectory(&tampered).unwrap();
    let err = replay(&bad, &mut p.environment().unwrap()).unwrap_err();
    assert!(matches!(err, ReplayError::DigestMismatch { .. }), "{err}");
}
