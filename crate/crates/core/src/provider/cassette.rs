use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{embed_digest, CompletionRequest, Provider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Misses are errors.
    Strict,
    /// Misses go to the upstream provider and are appended to the cassette.
    Passthrough,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    digest: String,
    response: String,
}

#[derive(Default)]
struct Tape {
    /// Responses per digest, in recording order.
    entries: HashMap<String, Vec<String>>,
    /// How many times each digest has been served in this session.
    served: HashMap<String, usize>,
    file: Option<File>,
}

/// Record/replay provider keyed by request digest.
///
/// The cassette file is JSON lines of `{digest, response}`. A digest may be
/// recorded several times when the same request recurs; replay serves those
/// responses in order and repeats the last one once they run out.
pub struct CassetteProvider {
    mode: CassetteMode,
    upstream: Option<Box<dyn Provider>>,
    path: Option<PathBuf>,
    tape: Mutex<Tape>,
}

impl CassetteProvider {
    /// Opens a cassette for strict replay.
    pub fn replay(path: &Path) -> Result<Self, ProviderError> {
        let entries = load_entries(path)?;
        Ok(Self {
            mode: CassetteMode::Strict,
            upstream: None,
            path: Some(path.to_path_buf()),
            tape: Mutex::new(Tape { entries, ..Tape::default() }),
        })
    }

    /// Replays known requests and records new ones from `upstream`.
    pub fn passthrough(path: &Path, upstream: Box<dyn Provider>) -> Result<Self, ProviderError> {
        let entries = if path.exists() { load_entries(path)? } else { HashMap::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            mode: CassetteMode::Passthrough,
            upstream: Some(upstream),
            path: Some(path.to_path_buf()),
            tape: Mutex::new(Tape { entries, file: Some(file), ..Tape::default() }),
        })
    }

    /// Starts a fresh cassette at `path`, recording everything from `upstream`.
    pub fn record(path: &Path, upstream: Box<dyn Provider>) -> Result<Self, ProviderError> {
        File::create(path)?;
        Self::passthrough(path, upstream)
    }

    /// In-memory strict cassette, for tests.
    pub fn from_entries(entries: Vec<(String, String)>) -> Self {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for (d, r) in entries {
            map.entry(d).or_default().push(r);
        }
        Self { mode: CassetteMode::Strict, upstream: None, path: None, tape: Mutex::new(Tape { entries: map, ..Tape::default() }) }
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of recorded responses per digest.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.tape.lock().unwrap().entries.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    fn lookup_or_record(
        &self,
        digest: String,
        purpose: &str,
        fetch: impl FnOnce(&dyn Provider) -> Result<String, ProviderError>,
    ) -> Result<String, ProviderError> {
        let mut tape = self.tape.lock().unwrap();
        let served = tape.served.get(&digest).copied().unwrap_or(0);
        let recorded = tape.entries.get(&digest).map_or(0, Vec::len);
        let replay = match self.mode {
            CassetteMode::Strict => recorded > 0,
            CassetteMode::Passthrough => served < recorded,
        };
        if replay {
            let list = &tape.entries[&digest];
            let r = list[served.min(list.len() - 1)].clone();
            *tape.served.entry(digest).or_default() += 1;
            return Ok(r);
        }
        let Some(upstream) = self.upstream.as_deref() else {
            return Err(ProviderError::CassetteMiss { digest, purpose: purpose.to_string() });
        };
        let response = fetch(upstream)?;
        if let Some(f) = tape.file.as_mut() {
            let line = serde_json::to_string(&Entry { digest: digest.clone(), response: response.clone() })
                .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        tape.entries.entry(digest.clone()).or_default().push(response.clone());
        *tape.served.entry(digest).or_default() += 1;
        Ok(response)
    }
}

fn load_entries(path: &Path) -> Result<HashMap<String, Vec<String>>, ProviderError> {
    let mut map: HashMap<String, Vec<String>> = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Entry = serde_json::from_str(&line)
            .map_err(|err| ProviderError::MalformedResponse(format!("{}:{}: {err}", path.display(), i + 1)))?;
        map.entry(e.digest).or_default().push(e.response);
    }
    Ok(map)
}

impl Provider for CassetteProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.validate()?;
        self.lookup_or_record(req.digest(), &req.purpose, |up| up.complete(req))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let raw = self.lookup_or_record(embed_digest(texts), "embed", |up| {
            let v = up.embed(texts)?;
            serde_json::to_string(&v).map_err(|e| ProviderError::MalformedResponse(e.to_string()))
        })?;
        serde_json::from_str(&raw).map_err(|e| ProviderError::MalformedResponse(e.to_string()))
    }
}
