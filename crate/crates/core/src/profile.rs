//! Run profiles: a TOML file naming the scenario, the model provider and the
//! loop settings. Relative paths resolve against the profile's directory.
//!
//! ```toml
//! name = "clear-obstacles"
//! scenario = "scenario.txt"
//!
//! [provider]
//! kind = "scripted"
//! script = "script.toml"
//!
//! [run]
//! mode = "games"
//! goal = "Clear the rock, the tree and the weeds"
//! max_steps = 20
//! ```
//!
//! Credentials never live in a profile; the remote provider reads its key
//! from `CRADLE_PROVIDER_KEY`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::Template;
use crate::pipeline::{ConfigError, PromptSet, RunConfig};
use crate::prompt::PromptError;
use crate::provider::{Provider, ProviderError, RemoteConfig, RemoteProvider, ScriptedProvider};
use crate::simenv::{ScenarioError, SimEnv};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profile {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("profile syntax: {0}")]
    Syntax(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{what} {path} does not exist")]
    Missing { what: &'static str, path: PathBuf },
    #[error("profile: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("watermark {path}: {message}")]
    Watermark { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSpec {
    /// An OpenAI-compatible HTTP endpoint.
    Remote {
        base_url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embed_model: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<u64>,
    },
    /// Canned responses read from a script file.
    Scripted { script: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub scenario: PathBuf,
    pub provider: ProviderSpec,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Profile {
    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        toml::from_str(text).map_err(|e| ProfileError::Syntax(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profiles serialize")
    }

    /// Reads, resolves and validates a profile.
    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Read { path: path.to_path_buf(), source })?;
        let mut p = Self::parse(&text)?;
        p.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        p.validate()?;
        Ok(p)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    pub fn scenario_path(&self) -> PathBuf {
        self.resolve(&self.scenario)
    }

    /// Checks ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.name.trim().is_empty() {
            return Err(ProfileError::Invalid("name is empty".into()));
        }
        self.run.validate()?;
        let exists = |what: &'static str, p: &Path| {
            let full = self.resolve(p);
            if full.is_file() {
                Ok(())
            } else {
                Err(ProfileError::Missing { what, path: full })
            }
        };
        exists("scenario", &self.scenario)?;
        match &self.provider {
            ProviderSpec::Scripted { script } => exists("script", script)?,
            ProviderSpec::Remote { base_url, .. } => {
                if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                    return Err(ProfileError::Invalid(format!("base_url `{base_url}` is not an http(s) URL")));
                }
            }
        }
        for p in self.run.prompts.values() {
            exists("prompt", p)?;
        }
        if let Some(w) = &self.run.augment.watermark {
            exists("watermark", w)?;
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<SimEnv, ProfileError> {
        Ok(SimEnv::load(&self.scenario_path())?)
    }

    pub fn prompts(&self) -> Result<PromptSet, ProfileError> {
        Ok(PromptSet::with_overrides(&self.run.prompts, &self.base)?)
    }

    pub fn watermark(&self) -> Result<Option<Template>, ProfileError> {
        let Some(rel) = &self.run.augment.watermark else {
            return Ok(None);
        };
        let path = self.resolve(rel);
        let image = image::open(&path)
            .map_err(|e| ProfileError::Watermark { path: path.clone(), message: e.to_string() })?
            .to_rgb8();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Some(Template::new(name, image)))
    }

    /// The provider this profile talks to, before any cassette wrapping.
    pub fn provider(&self) -> Result<Box<dyn Provider>, ProfileError> {
        Ok(match &self.provider {
            ProviderSpec::Scripted { script } => Box::new(ScriptedProvider::load_script(&self.resolve(script))?),
            ProviderSpec::Remote { base_url, embed_model, timeout_secs } => {
                let mut cfg = RemoteConfig::from_env(base_url)?;
                if let Some(m) = embed_model {
                    cfg.embed_model = m.clone();
                }
                if let Some(t) = timeout_secs {
                    cfg.timeout = Duration::from_secs(*t);
                }
                Box::new(RemoteProvider::new(cfg)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "door"
scenario = "scenario.txt"

[provider]
kind = "scripted"
script = "script.toml"

[run]
mode = "games"
goal = "Walk to the door"
max_steps = 12
"#;

    fn write_fixture(dir: &Path) {
        std::fs::write(dir.join("scenario.txt"), "grid\nA.D\nend\ngoal reach door\n").unwrap();
        std::fs::write(dir.join("script.toml"), "[fallback]\nocr = \"Text: none\"\n").unwrap();
        std::fs::write(dir.join("profile.toml"), SAMPLE).unwrap();
    }

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        let p = Profile::load(&dir.path().join("profile.toml")).unwrap();
        assert_eq!(p.run.max_steps, 12);
        assert_eq!(p.run.fps, 2.0);
        assert_eq!(p.scenario_path(), dir.path().join("scenario.txt"));
        assert!(p.environment().is_ok());
        assert!(p.provider().is_ok());
    }

    #[test]
    fn missing_files_and_bad_ranges_fail() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        std::fs::remove_file(dir.path().join("script.toml")).unwrap();
        let err = Profile::load(&dir.path().join("profile.toml")).unwrap_err();
        assert!(matches!(err, ProfileError::Missing { what: "script", .. }), "{err}");

        write_fixture(dir.path());
        std::fs::write(dir.path().join("profile.toml"), SAMPLE.replace("max_steps = 12", "max_steps = 0")).unwrap();
        assert!(matches!(Profile::load(&dir.path().join("profile.toml")), Err(ProfileError::Config(_))));

        std::fs::write(dir.path().join("profile.toml"), format!("{SAMPLE}api_key = \"x\"\n")).unwrap();
        assert!(matches!(Profile::load(&dir.path().join("profile.toml")), Err(ProfileError::Syntax(_))));
    }

    #[test]
    fn remote_spec_round_trips() {
        let p = Profile {
            name: "r".into(),
            scenario: "s".into(),
            provider: ProviderSpec::Remote { base_url: "http://localhost:1".into(), embed_model: None, timeout_secs: Some(3) },
            run: RunConfig::games("g"),
            base: PathBuf::new(),
        };
        let back = Profile::parse(&p.to_toml()).unwrap();
        assert_eq!(back, p);
    }
}
