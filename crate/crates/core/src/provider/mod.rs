//! Access to the multimodal model: chat completions with interleaved text and
//! images, text embeddings, and reading back labelled output sections.

mod cassette;
mod embed;
mod remote;
mod scripted;
mod sections;

use std::fmt;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::observation::pixel_digest;

pub use cassette::{CassetteMode, CassetteProvider};
pub use embed::{normalize, HashEmbedder, DEFAULT_EMBED_DIM};
pub use remote::{
    HttpTransport, RemoteConfig, RemoteProvider, Sleeper, ThreadSleeper, Transport, TransportError, API_KEY_VAR,
    BACKOFF_SECS,
};
pub use scripted::{Responder, ScriptedProvider};
pub use sections::{parse_sections, SectionError, FieldKind, FieldSpec, FieldValue, SectionSchema, Sections};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("rate limited")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("no cassette entry for `{purpose}` request {digest}")]
    CassetteMiss { digest: String, purpose: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("scripted responses exhausted for `{0}`")]
    ScriptExhausted(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ProviderError {
    /// Errors worth retrying after a pause.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::RateLimited | ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image { image: Arc<RgbImage>, detail: Option<String> },
}

impl Part {
    pub fn image(image: impl Into<Arc<RgbImage>>) -> Self {
        Part::Image { image: image.into(), detail: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, parts: vec![Part::Text(text.into())] }
    }

    pub fn user(parts: Vec<Part>) -> Self {
        Self { role: Role::User, parts }
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        Self::user(vec![Part::Text(text.into())])
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, parts: vec![Part::Text(text.into())] }
    }

    pub fn images(&self) -> impl Iterator<Item = &Arc<RgbImage>> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image { image, .. } => Some(image),
            _ => None,
        })
    }

    pub fn text(&self) -> String {
        let texts: Vec<&str> = self
            .parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                _ => None,
            })
            .collect();
        texts.join("\n")
    }
}

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Which stage is asking. Used for routing scripted responses and in
    /// error messages; not sent and not part of the digest.
    pub purpose: String,
}

impl CompletionRequest {
    pub fn new(purpose: &str, messages: Vec<Message>) -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            messages,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            purpose: purpose.to_string(),
        }
    }

    /// Checks the message invariants: at least one part per message, images
    /// only in user messages, temperature in [0, 2].
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("no messages".into()));
        }
        for m in &self.messages {
            if m.parts.is_empty() {
                return Err(ProviderError::InvalidRequest(format!("empty {} message", m.role.as_str())));
            }
            if m.role != Role::User && m.images().next().is_some() {
                return Err(ProviderError::InvalidRequest(format!("image in {} message", m.role.as_str())));
            }
        }
        Ok(())
    }

    pub fn image_count(&self) -> usize {
        self.messages.iter().map(|m| m.images().count()).sum()
    }

    /// Stable hash of model, temperature and messages. Images contribute
    /// their decoded pixels, so re-encoding a PNG does not change it.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"completion/1\n");
        h.update(self.model.as_bytes());
        h.update(b"\n");
        h.update(self.temperature.to_bits().to_le_bytes());
        for m in &self.messages {
            h.update(b"\nrole:");
            h.update(m.role.as_str().as_bytes());
            for p in &m.parts {
                match p {
                    Part::Text(t) => {
                        h.update(b"\ntext:");
                        h.update((t.len() as u64).to_le_bytes());
                        h.update(t.as_bytes());
                    }
                    Part::Image { image, detail } => {
                        h.update(b"\nimage:");
                        h.update(pixel_digest(image).as_bytes());
                        h.update(detail.as_deref().unwrap_or("").as_bytes());
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn embed_digest(texts: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(b"embedding/1\n");
    for t in texts {
        h.update((t.len() as u64).to_le_bytes());
        h.update(t.as_bytes());
    }
    hex::encode(h.finalize())
}

/// A chat model with an embeddings endpoint.
pub trait Provider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    /// One unit-norm vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed(texts)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed(texts)
    }
}

impl fmt::Display for CompletionRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.messages {
            writeln!(f, "[{}]", m.role.as_str())?;
            for p in &m.parts {
                match p {
                    Part::Text(t) => writeln!(f, "{t}")?,
                    Part::Image { image, .. } => writeln!(f, "<image {}x{}>", image.width(), image.height())?,
                }
            }
        }
        Ok(())
    }
}
