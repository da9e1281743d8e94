use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{normalize, Provider, ProviderError};
use crate::skill::{
    native_skills, parse, validate, validate_replacement, Skill, SkillLookup, SkillRef, SkillScript, ValidationError,
};

pub const DEFAULT_TOP_K: usize = 10;
const HEADER_PREFIX: &str = "skillstore v1 dim=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillSource {
    Predefined,
    Generated,
    Composed,
}

impl SkillSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkillSource::Predefined => "predefined",
            SkillSource::Generated => "generated",
            SkillSource::Composed => "composed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "predefined" => Some(SkillSource::Predefined),
            "generated" => Some(SkillSource::Generated),
            "composed" => Some(SkillSource::Composed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillEntry {
    pub skill: Skill,
    pub doc: String,
    pub embedding: Vec<f64>,
    pub source: SkillSource,
    pub created_at: u64,
}

impl SkillEntry {
    pub fn name(&self) -> &str {
        self.skill.name()
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("skill `{0}` already exists")]
    DuplicateName(String),
    #[error("embedding has dimension {got}, store uses {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no skill named `{0}`")]
    NotFound(String),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationError>),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("the store is empty")]
    EmptyStore,
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("unsupported store format `{0}`")]
    FormatVersionMismatch(String),
    #[error("corrupt entry at line {line}: {reason}")]
    CorruptEntry { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A retrieved entry with its cosine similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub entry: &'a SkillEntry,
    pub score: f64,
}

/// Skill entries keyed by name, each with a unit-norm embedding of its doc.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillStore {
    dim: usize,
    entries: BTreeMap<String, SkillEntry>,
    pub duration_ceiling: f64,
}

fn embed_doc(provider: &dyn Provider, doc: &str) -> Result<Vec<f64>, ProviderError> {
    provider
        .embed(&[doc.to_string()])?
        .pop()
        .ok_or_else(|| ProviderError::MalformedResponse("empty embedding response".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SkillStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, entries: BTreeMap::new(), duration_ceiling: crate::io::DEFAULT_DURATION_CEILING }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SkillEntry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &SkillEntry> {
        self.entries.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Inserts a prepared entry. Scripts are validated against the store.
    pub fn add(&mut self, mut entry: SkillEntry) -> Result<(), MemoryError> {
        let name = entry.name().to_string();
        if self.entries.contains_key(&name) {
            return Err(MemoryError::DuplicateName(name));
        }
        if entry.embedding.len() != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got: entry.embedding.len() });
        }
        if let Skill::Script(s) = &entry.skill {
            validate(s, self, self.duration_ceiling).map_err(MemoryError::Invalid)?;
            entry.doc = s.doc.clone();
        }
        entry.embedding = normalize(entry.embedding);
        self.entries.insert(name, entry);
        Ok(())
    }

    /// Validates, embeds and adds a skill.
    pub fn add_skill(
        &mut self,
        skill: Skill,
        source: SkillSource,
        created_at: u64,
        provider: &dyn Provider,
    ) -> Result<(), MemoryError> {
        if self.entries.contains_key(skill.name()) {
            return Err(MemoryError::DuplicateName(skill.name().to_string()));
        }
        if let Skill::Script(s) = &skill {
            validate(s, self, self.duration_ceiling).map_err(MemoryError::Invalid)?;
        }
        let doc = skill.as_ref().doc();
        let embedding = embed_doc(provider, &doc)?;
        self.add(SkillEntry { skill, doc, embedding, source, created_at })
    }

    /// Replaces a script. The embedding is recomputed only when the doc changed.
    pub fn update(&mut self, name: &str, script: SkillScript, provider: &dyn Provider) -> Result<(), MemoryError> {
        let old = self.entries.get(name).ok_or_else(|| MemoryError::NotFound(name.to_string()))?;
        if script.name != name {
            return Err(MemoryError::Invalid(vec![ValidationError::DuplicateName(script.name.clone())]));
        }
        validate_replacement(&script, self, self.duration_ceiling).map_err(MemoryError::Invalid)?;
        let embedding = if old.doc == script.doc { old.embedding.clone() } else { normalize(embed_doc(provider, &script.doc)?) };
        if embedding.len() != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got: embedding.len() });
        }
        let entry = self.entries.get_mut(name).expect("checked above");
        entry.doc = script.doc.clone();
        entry.skill = Skill::Script(script);
        entry.embedding = embedding;
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<SkillEntry> {
        self.entries.remove(name)
    }

    /// Top `k` entries by cosine similarity to `query`, ties by name.
    pub fn rank(&self, query: &[f64], k: usize) -> Result<Vec<Scored<'_>>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        if query.len() != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let norm = dot(query, query).sqrt();
        let mut scored: Vec<Scored<'_>> = self
            .entries
            .values()
            .map(|e| Scored { entry: e, score: if norm > 0.0 { dot(query, &e.embedding) / norm } else { 0.0 } })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entry.name().cmp(b.entry.name())));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn retrieve(&self, task: &str, k: usize, provider: &dyn Provider) -> Result<Vec<Scored<'_>>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        if self.is_empty() {
            return Err(MemoryError::EmptyStore);
        }
        let q = embed_doc(provider, task)?;
        self.rank(&q, k)
    }

    pub fn to_text(&self) -> String {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut out = format!("{HEADER_PREFIX}{}\n", self.dim);
        for e in self.entries.values() {
            let bytes: Vec<u8> = e.embedding.iter().flat_map(|x| x.to_le_bytes()).collect();
            let _ = writeln!(out, "\nentry {}", e.name());
            let _ = writeln!(out, "doc {}", serde_json::to_string(&e.doc).expect("strings serialize"));
            let _ = writeln!(out, "source {}", e.source.as_str());
            let _ = writeln!(out, "created {}", e.created_at);
            let _ = writeln!(out, "embedding {}", b64.encode(bytes));
            match &e.skill {
                Skill::Script(s) => {
                    let _ = writeln!(out, "```skill\n{s}\n```");
                }
                Skill::Native(n) => {
                    let _ = writeln!(out, "native {}", n.name());
                }
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MemoryError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let dim = header
            .strip_prefix(HEADER_PREFIX)
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|d| *d > 0)
            .ok_or_else(|| MemoryError::FormatVersionMismatch(header.to_string()))?;
        let natives = native_skills();
        let mut store = SkillStore::new(dim);
        let mut pending: Vec<SkillEntry> = Vec::new();
        loop {
            let Some((ln, line)) = lines.by_ref().find(|(_, l)| !l.trim().is_empty()) else { break };
            let corrupt = |line: usize, reason: &str| MemoryError::CorruptEntry { line, reason: reason.to_string() };
            let name = line.strip_prefix("entry ").ok_or_else(|| corrupt(ln, "expected `entry <name>`"))?;
            let mut field = |key: &str| -> Result<(usize, String), MemoryError> {
                let (n, l) = lines.next().ok_or_else(|| corrupt(ln, "entry is truncated"))?;
                l.strip_prefix(key)
                    .and_then(|r| r.strip_prefix(' '))
                    .map(|r| (n, r.to_string()))
                    .ok_or_else(|| corrupt(n, &format!("expected `{key}`")))
            };
            let (n, doc) = field("doc")?;
            let doc: String = serde_json::from_str(&doc).map_err(|_| corrupt(n, "bad doc string"))?;
            let (n, source) = field("source")?;
            let source = SkillSource::parse(&source).ok_or_else(|| corrupt(n, "unknown source"))?;
            let (n, created) = field("created")?;
            let created_at = created.parse().map_err(|_| corrupt(n, "bad created iteration"))?;
            let (n, emb) = field("embedding")?;
            let bytes = base64::engine::general_purpose::STANDARD.decode(emb).map_err(|_| corrupt(n, "bad embedding"))?;
            if bytes.len() != dim * 8 {
                return Err(corrupt(n, "embedding length does not match dim"));
            }
            let embedding: Vec<f64> =
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
            let (n, kind) = lines.next().ok_or_else(|| corrupt(ln, "entry is truncated"))?;
            let skill = if let Some(native) = kind.strip_prefix("native ") {
                let s = natives.iter().find(|s| s.name() == native).ok_or_else(|| corrupt(n, "unknown native skill"))?;
                Skill::Native(s.clone())
            } else if kind == "```skill" {
                let mut body = Vec::new();
                loop {
                    let (m, l) = lines.next().ok_or_else(|| corrupt(n, "unterminated script"))?;
                    if l == "```" {
                        break;
                    }
                    body.push(l);
                    let _ = m;
                }
                let s = parse(&body.join("\n")).map_err(|e| corrupt(n, &e.to_string()))?;
                Skill::Script(s)
            } else {
                return Err(corrupt(n, "expected a script or native reference"));
            };
            if skill.name() != name {
                return Err(corrupt(ln, "entry name does not match skill"));
            }
            match lines.next() {
                Some((_, "end")) => {}
                Some((m, _)) => return Err(corrupt(m, "expected `end`")),
                None => return Err(corrupt(ln, "entry is truncated")),
            }
            pending.push(SkillEntry { skill, doc, embedding, source, created_at });
        }
        // Entries may call skills that sort after them, so insert without
        // validation and check the finished store.
        for e in pending {
            if store.entries.contains_key(e.name()) {
                return Err(MemoryError::DuplicateName(e.name().to_string()));
            }
            store.entries.insert(e.name().to_string(), e);
        }
        for e in store.entries.values() {
            if let Skill::Script(s) = &e.skill {
                validate_replacement(s, &store, store.duration_ceiling).map_err(MemoryError::Invalid)?;
            }
        }
        Ok(store)
    }

    pub fn persist(&self, path: &Path) -> Result<(), MemoryError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

impl SkillLookup for SkillStore {
    fn lookup(&self, name: &str) -> Option<SkillRef<'_>> {
        self.entries.get(name).map(|e| e.skill.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedProvider;
    use crate::skill::{parse, TaskIsNotFeasible};
    use std::sync::Arc;

    fn script(src: &str) -> SkillScript {
        parse(src).unwrap()
    }

    fn entry(name: &str, emb: Vec<f64>) -> SkillEntry {
        let s = script(&format!(r#"skill {name}() doc "does {name}" {{ key_press("e", 0.1) }}"#));
        SkillEntry { doc: s.doc.clone(), skill: Skill::Script(s), embedding: emb, source: SkillSource::Generated, created_at: 0 }
    }

    #[test]
    fn add_duplicate_and_dimension() {
        let mut st = SkillStore::new(2);
        st.add(entry("a", vec![1.0, 0.0])).unwrap();
        assert_eq!(st.len(), 1);
        assert!(matches!(st.add(entry("a", vec![1.0, 0.0])), Err(MemoryError::DuplicateName(_))));
        assert!(matches!(st.add(entry("b", vec![1.0, 0.0, 0.0])), Err(MemoryError::DimensionMismatch { .. })));
    }

    #[test]
    fn rank_example() {
        let mut st = SkillStore::new(2);
        st.add(entry("A", vec![1.0, 0.0])).unwrap();
        st.add(entry("B", vec![0.0, 1.0])).unwrap();
        st.add(entry("C", vec![0.6, 0.8])).unwrap();
        let r = st.rank(&[1.0, 0.0], 2).unwrap();
        let got: Vec<(&str, f64)> = r.iter().map(|s| (s.entry.name(), s.score)).collect();
        assert_eq!(got[0].0, "A");
        assert!((got[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(got[1].0, "C");
        assert!((got[1].1 - 0.6).abs() < 1e-12);
        let tie = {
            let mut st = SkillStore::new(2);
            st.add(entry("zeta", vec![0.0, 1.0])).unwrap();
            st.add(entry("alpha", vec![0.0, 1.0])).unwrap();
            st.rank(&[0.0, 1.0], 1).unwrap()[0].entry.name().to_string()
        };
        assert_eq!(tie, "alpha");
    }

    #[test]
    fn update_reembeds_only_on_doc_change() {
        let p = ScriptedProvider::new();
        let mut st = SkillStore::new(8);
        st.add_skill(Skill::Script(script(r#"skill shoot() doc "shoot" { mouse_click("left", 0.1) }"#)), SkillSource::Predefined, 0, &p)
            .unwrap();
        let before = st.get("shoot").unwrap().embedding.clone();
        st.update("shoot", script(r#"skill shoot() doc "shoot" { mouse_click("right", 0.1) }"#), &p).unwrap();
        assert_eq!(st.get("shoot").unwrap().embedding, before);
        st.update("shoot", script(r#"skill shoot() doc "fire a gun at the target" { mouse_click("right", 0.1) }"#), &p).unwrap();
        assert_ne!(st.get("shoot").unwrap().embedding, before);
        assert_eq!(st.get("shoot").unwrap().source, SkillSource::Predefined);
        assert!(matches!(
            st.update("nope", script(r#"skill nope() doc "x" { wait(1) }"#), &p),
            Err(MemoryError::NotFound(_))
        ));
    }

    #[test]
    fn add_rejects_invalid_scripts() {
        let p = ScriptedProvider::new();
        let mut st = SkillStore::new(8);
        let r = st.add_skill(Skill::Script(script(r#"skill a() doc "x" { call missing() }"#)), SkillSource::Generated, 0, &p);
        assert!(matches!(r, Err(MemoryError::Invalid(_))));
        assert!(st.is_empty());
    }

    #[test]
    fn persist_round_trip() {
        let p = ScriptedProvider::new();
        let mut st = SkillStore::new(8);
        st.add_skill(Skill::Script(script(r#"skill zed() doc "line\nbreak \"q\"" { key_press("z", 0.2) }"#)), SkillSource::Generated, 4, &p)
            .unwrap();
        st.add_skill(Skill::Script(script(r#"skill alpha(n: number) doc "calls zed" { repeat 2 { call zed() } wait(n) }"#)), SkillSource::Composed, 5, &p)
            .unwrap();
        st.add_skill(Skill::Native(Arc::new(TaskIsNotFeasible)), SkillSource::Predefined, 0, &p).unwrap();
        let text = st.to_text();
        assert!(text.starts_with("skillstore v1 dim=8\n"));
        let back = SkillStore::from_text(&text).unwrap();
        assert_eq!(back, st);
        assert_eq!(back.dim(), 8);

        let cut = &text[..text.len() - 10];
        assert!(matches!(SkillStore::from_text(cut), Err(MemoryError::CorruptEntry { .. })));
        assert!(matches!(SkillStore::from_text("skillstore v2 dim=8\n"), Err(MemoryError::FormatVersionMismatch(_))));
    }
}
