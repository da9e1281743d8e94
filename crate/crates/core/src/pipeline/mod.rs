//! The agent loop: gather information, reflect on the last action, infer
//! the task, curate skills, plan, execute.

mod config;
pub mod prompts;
mod run;
pub mod stages;
mod task;

pub use config::{AugmentConfig, ConfigError, ExploreConfig, Mode, RunConfig};
pub use prompts::PromptSet;
pub use run::{default_store, input_events, replay, Agent, Environment, PipelineError, ReplayError, RunOutput};
pub use stages::{Gathered, Plan, StageFailure};
pub use task::{Horizon, ReflectionOutcome, TaskChange, TaskSpec, TaskStack, DEFAULT_SHORT_TASK_WINDOW};
