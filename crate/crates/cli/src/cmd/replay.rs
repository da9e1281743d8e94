use std::path::Path;
use std::process::ExitCode;

use cradle_core::pipeline::{replay as replay_records, ReplayError};
use cradle_core::simenv::SimEnv;
use cradle_core::trajectory::read_trajectory;

use super::{config, failed, CmdResult};

pub fn replay(trajectory: &Path, scenario: &Path) -> CmdResult {
    let records = read_trajectory(trajectory).map_err(config)?;
    let mut env = SimEnv::load(scenario).map_err(config)?;
    match replay_records(&records, &mut env) {
        Ok(n) => {
            println!("verified {n} iterations; final screen {}", env.render_digest());
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ ReplayError::Empty) => Err(config(e)),
        Err(e) => Err(failed(e)),
    }
}
