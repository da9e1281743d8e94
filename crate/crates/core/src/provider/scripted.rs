use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{CompletionRequest, HashEmbedder, Provider, ProviderError};

/// Computes a response from the request; used for scenario brains.
pub type Responder = Box<dyn Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync>;

#[derive(Default)]
struct State {
    by_purpose: BTreeMap<String, VecDeque<String>>,
    queue: VecDeque<String>,
    fallback: BTreeMap<String, String>,
    seen: Vec<CompletionRequest>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Script {
    #[serde(default)]
    queue: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    fallback: BTreeMap<String, String>,
}

/// Mock model answering from queued responses.
///
/// A request first takes from the queue registered for its purpose, then
/// from the shared queue, then the purpose's fallback response, then the
/// responder if one is set. When all are empty the call fails with
/// [`ProviderError::ScriptExhausted`].
pub struct ScriptedProvider {
    state: Mutex<State>,
    responder: Option<Responder>,
    embedder: HashEmbedder,
}

impl Default for ScriptedProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self { state: Mutex::new(State::default()), responder: None, embedder: HashEmbedder::default() }
    }

    pub fn with_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let p = Self::new();
        for r in responses {
            p.push(r);
        }
        p
    }

    pub fn with_responder(responder: Responder) -> Self {
        Self { responder: Some(responder), ..Self::new() }
    }

    pub fn with_embedder(mut self, embedder: HashEmbedder) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn push(&self, response: impl Into<String>) {
        self.state.lock().unwrap().queue.push_back(response.into());
    }

    pub fn push_for(&self, purpose: &str, response: impl Into<String>) {
        self.state.lock().unwrap().by_purpose.entry(purpose.to_string()).or_default().push_back(response.into());
    }

    /// Response repeated for `purpose` once its queue is empty.
    pub fn set_fallback(&self, purpose: &str, response: impl Into<String>) {
        self.state.lock().unwrap().fallback.insert(purpose.to_string(), response.into());
    }

    /// Builds a provider from a script file:
    ///
    /// ```toml
    /// [queue]
    /// plan = ["Actions:\n- use_tool()"]
    /// [fallback]
    /// ocr = "Text: none"
    /// ```
    pub fn from_script(text: &str) -> Result<Self, ProviderError> {
        let script: Script = toml::from_str(text).map_err(|e| ProviderError::Config(format!("script: {e}")))?;
        let p = Self::new();
        for (purpose, responses) in script.queue {
            for r in responses {
                p.push_for(&purpose, r);
            }
        }
        for (purpose, r) in script.fallback {
            p.set_fallback(&purpose, r);
        }
        Ok(p)
    }

    pub fn load_script(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_script(&text)
    }

    /// Every request received so far.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.state.lock().unwrap().seen.clone()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let next = {
            let mut s = self.state.lock().unwrap();
            s.seen.push(req.clone());
            let own = s.by_purpose.get_mut(&req.purpose).and_then(VecDeque::pop_front);
            own.or_else(|| s.queue.pop_front()).or_else(|| s.fallback.get(&req.purpose).cloned())
        };
        match (next, &self.responder) {
            (Some(r), _) => Ok(r),
            (None, Some(f)) => f(req),
            (None, None) => Err(ProviderError::ScriptExhausted(req.purpose.clone())),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.embedder.embed(texts)
    }
}
