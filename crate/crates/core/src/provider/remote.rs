use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{normalize, CompletionRequest, Message, Part, Provider, ProviderError};

/// Environment variable holding the bearer token.
pub const API_KEY_VAR: &str = "CRADLE_PROVIDER_KEY";
/// Pause before each retry of a transient failure.
pub const BACKOFF_SECS: [u64; 3] = [1, 2, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub embed_model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            embed_model: "text-embedding-ada-002".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }
}

impl RemoteConfig {
    /// Fills `api_key` from the environment.
    pub fn from_env(base_url: &str) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_VAR)
            .map_err(|_| ProviderError::Config(format!("{API_KEY_VAR} is not set")))?;
        Ok(Self { base_url: base_url.trim_end_matches('/').to_string(), api_key: Some(key), ..Self::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connect(String),
}

/// Sends one JSON POST and returns status and body.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), TransportError>;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), TransportError> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok((status, text))
    }
}

/// Client for an OpenAI-compatible chat-completions and embeddings server.
pub struct RemoteProvider {
    config: RemoteConfig,
    transport: Box<dyn Transport>,
    sleeper: Box<dyn Sleeper>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let transport = HttpTransport::new(config.timeout)?;
        Ok(Self { config, transport: Box::new(transport), sleeper: Box::new(ThreadSleeper) })
    }

    pub fn with_transport(config: RemoteConfig, transport: Box<dyn Transport>, sleeper: Box<dyn Sleeper>) -> Self {
        Self { config, transport, sleeper }
    }

    fn post_once(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let (status, text) = self.transport.post(&url, self.config.api_key.as_deref(), body).map_err(|e| match e {
            TransportError::Timeout => ProviderError::Timeout,
            TransportError::Connect(m) => ProviderError::Transport(m),
        })?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse(e.to_string())),
            429 => Err(ProviderError::RateLimited),
            408 | 504 => Err(ProviderError::Timeout),
            _ => Err(ProviderError::Http { status, body: text }),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_transient() && attempt < BACKOFF_SECS.len() => {
                    self.sleeper.sleep(Duration::from_secs(BACKOFF_SECS[attempt]));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn png_data_url(image: &image::RgbImage) -> Result<String, ProviderError> {
    let mut png = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| ProviderError::InvalidRequest(e.to_string()))?;
    Ok(format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png)))
}

fn message_json(m: &Message) -> Result<Value, ProviderError> {
    if let [Part::Text(t)] = m.parts.as_slice() {
        return Ok(json!({"role": m.role.as_str(), "content": t}));
    }
    let mut content = Vec::new();
    for p in &m.parts {
        content.push(match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image { image, detail } => {
                let mut url = json!({"url": png_data_url(image)?});
                if let Some(d) = detail {
                    url["detail"] = json!(d);
                }
                json!({"type": "image_url", "image_url": url})
            }
        });
    }
    Ok(json!({"role": m.role.as_str(), "content": content}))
}

/// Request body for `POST /chat/completions`.
pub(crate) fn completion_body(req: &CompletionRequest) -> Result<Value, ProviderError> {
    let messages = req.messages.iter().map(message_json).collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }))
}

fn malformed(what: &str) -> ProviderError {
    ProviderError::MalformedResponse(what.to_string())
}

impl Provider for RemoteProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let resp = self.post("chat/completions", &completion_body(req)?)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| malformed("no choices[0].message.content"))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest("nothing to embed".into()));
        }
        let resp = self.post("embeddings", &json!({"model": self.config.embed_model, "input": texts}))?;
        let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| malformed("no data array"))?;
        if data.len() != texts.len() {
            return Err(malformed("embedding count does not match input"));
        }
        data.iter()
            .map(|d| {
                let v = d.get("embedding").and_then(Value::as_array).ok_or_else(|| malformed("no embedding"))?;
                let v = v.iter().map(|x| x.as_f64().ok_or_else(|| malformed("non-numeric embedding"))).collect::<Result<Vec<_>, _>>()?;
                Ok(normalize(v))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Log(Arc<Mutex<Vec<Duration>>>);

    impl Sleeper for Log {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    struct Canned {
        replies: Mutex<Vec<Result<(u16, String), TransportError>>>,
        calls: Arc<Mutex<Vec<Value>>>,
    }

    impl Transport for Canned {
        fn post(&self, _url: &str, _bearer: Option<&str>, body: &Value) -> Result<(u16, String), TransportError> {
            self.calls.lock().unwrap().push(body.clone());
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                Ok((500, "down".into()))
            } else {
                r.remove(0)
            }
        }
    }

    fn provider(replies: Vec<Result<(u16, String), TransportError>>) -> (RemoteProvider, Log, Arc<Mutex<Vec<Value>>>) {
        let log = Log::default();
        let calls = Arc::new(Mutex::new(Vec::new()));
        let t = Canned { replies: Mutex::new(replies), calls: calls.clone() };
        (RemoteProvider::with_transport(RemoteConfig::default(), Box::new(t), Box::new(log.clone())), log, calls)
    }

    fn ok(content: &str) -> Result<(u16, String), TransportError> {
        Ok((200, json!({"choices": [{"message": {"content": content}}]}).to_string()))
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("t", vec![Message::user(vec![Part::Text("look".into()), Part::image(image::RgbImage::new(2, 2))])])
    }

    #[test]
    fn retries_then_succeeds() {
        let (p, log, calls) = provider(vec![Ok((429, String::new())), Err(TransportError::Timeout), ok("done")]);
        assert_eq!(p.complete(&req()).unwrap(), "done");
        assert_eq!(calls.lock().unwrap().len(), 3);
        assert_eq!(*log.0.lock().unwrap(), [Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn retry_budget_bounded() {
        let (p, log, calls) = provider(vec![]);
        assert!(matches!(p.complete(&req()), Err(ProviderError::Http { status: 500, .. })));
        let slept: Duration = log.0.lock().unwrap().iter().sum();
        assert_eq!(slept, Duration::from_secs(7));
        assert_eq!(calls.lock().unwrap().len(), 4);
    }

    #[test]
    fn client_errors_not_retried() {
        let (p, log, _) = provider(vec![Ok((400, "bad".into()))]);
        assert!(matches!(p.complete(&req()), Err(ProviderError::Http { status: 400, .. })));
        assert!(log.0.lock().unwrap().is_empty());
        let (p, _, _) = provider(vec![Ok((200, "{}".into()))]);
        assert!(matches!(p.complete(&req()), Err(ProviderError::MalformedResponse(_))));
    }

    #[test]
    fn wire_format() {
        let body = completion_body(&req()).unwrap();
        let part = &body["messages"][0]["content"][1];
        assert_eq!(part["type"], "image_url");
        assert!(part["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn embeddings_normalized() {
        let reply = json!({"data": [{"embedding": [3.0, 4.0]}]}).to_string();
        let (p, _, _) = provider(vec![Ok((200, reply))]);
        assert_eq!(p.embed(&["x".into()]).unwrap(), vec![vec![0.6, 0.8]]);
    }
}
