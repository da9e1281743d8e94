use std::path::PathBuf;
use std::process::ExitCode;

use cradle_core::clock::SimClock;
use cradle_core::pipeline::{Agent, PipelineError};
use cradle_core::profile::Profile;
use cradle_core::provider::{CassetteProvider, Provider};
use cradle_core::trajectory::TrajectoryWriter;

use super::{config, failed, CmdResult};
use crate::RunArgs;

pub fn run(args: RunArgs) -> CmdResult {
    let mut profile = Profile::load(&args.profile).map_err(config)?;
    if let Some(n) = args.max_steps {
        profile.run.max_steps = n;
        profile.validate().map_err(config)?;
    }
    let provider: Box<dyn Provider> = match &args.cassette {
        None => profile.provider().map_err(config)?,
        Some(path) if args.strict => Box::new(CassetteProvider::replay(path).map_err(config)?),
        Some(path) if args.record => Box::new(CassetteProvider::record(path, profile.provider().map_err(config)?).map_err(config)?),
        Some(path) => Box::new(CassetteProvider::passthrough(path, profile.provider().map_err(config)?).map_err(config)?),
    };
    let mut env = profile.environment().map_err(config)?;
    let mut agent = Agent::new(profile.run.clone(), &*provider).map_err(config)?.with_prompts(profile.prompts().map_err(config)?);
    if let Some(w) = profile.watermark().map_err(config)? {
        agent = agent.with_watermark(w);
    }

    let path = args.trajectory.unwrap_or_else(|| PathBuf::from("trajectories").join(format!("{}.jsonl", profile.name)));
    let mut writer = TrajectoryWriter::create(&path).map_err(failed)?;
    let mut clock = SimClock::new(env.scenario().tick_secs);
    let out = agent.run(&mut env, &mut clock, Some(&mut writer)).map_err(|e| match e {
        PipelineError::Config(_) | PipelineError::Prompt(_) => config(e),
        other => failed(other),
    })?;

    println!("{}", serde_json::to_string(&out.result).expect("results serialize"));
    if let Some(msg) = &out.fatal {
        eprintln!("run stopped: {msg}");
    }
    Ok(if out.result.success { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
