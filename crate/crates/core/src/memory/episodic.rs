use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{ReflectionOutcome, TaskSpec};
use crate::prompt::{PromptError, PromptTemplate, PromptVars};
use crate::provider::{CompletionRequest, Provider, ProviderError};
use crate::skill::SkillCall;

pub const DEFAULT_CAPACITY: usize = 5;
pub const DEFAULT_SENTENCE_CAP: usize = 8;
const SUMMARY_TEMPLATE: &str = include_str!("../../prompts/summary.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub iteration: u64,
    /// Frame indices of the screenshots this record refers to.
    pub screenshot_refs: Vec<u64>,
    pub info_text: String,
    pub task: Option<TaskSpec>,
    pub action: Vec<SkillCall>,
    pub reflection: Option<ReflectionOutcome>,
    pub reasoning: String,
}

impl EpisodicRecord {
    pub fn new(iteration: u64) -> Self {
        Self {
            iteration,
            screenshot_refs: Vec::new(),
            info_text: String::new(),
            task: None,
            action: Vec::new(),
            reflection: None,
            reasoning: String::new(),
        }
    }

    /// One-line text form used in summary prompts.
    pub fn digest(&self) -> String {
        let mut s = format!("[{}]", self.iteration);
        if let Some(t) = &self.task {
            s.push_str(&format!(" task: {};", t.description));
        }
        if !self.info_text.is_empty() {
            s.push_str(&format!(" saw: {};", self.info_text.replace('\n', " ")));
        }
        if !self.action.is_empty() {
            let calls: Vec<String> = self.action.iter().map(ToString::to_string).collect();
            s.push_str(&format!(" did: {};", calls.join(", ")));
        }
        if let Some(r) = &self.reflection {
            if r.last_action_ok {
                s.push_str(" outcome: ok;");
            } else {
                s.push_str(&format!(" outcome: failed ({});", r.failure_analysis));
            }
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum EpisodicError {
    #[error("iteration {got} is not after the newest stored iteration {newest}")]
    NonMonotoneIteration { newest: u64, got: u64 },
    #[error("no new records since the last summary")]
    NothingToSummarize,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermSummary {
    pub text: String,
    pub sentence_cap: usize,
    pub last_updated_iteration: Option<u64>,
}

/// Sentences of `text`: a sentence ends at `.`, `!` or `?` followed by
/// whitespace, or at the end of the text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn truncate_sentences(text: &str, cap: usize) -> String {
    let s = split_sentences(text);
    if s.len() <= cap {
        return text.trim().to_string();
    }
    s[..cap].join(" ")
}

/// The last `k` interaction records plus a recurrent long-term summary.
#[derive(Debug, Clone)]
pub struct EpisodicStore {
    capacity: usize,
    records: VecDeque<EpisodicRecord>,
    newest: Option<u64>,
    summary: LongTermSummary,
    template: PromptTemplate,
}

impl EpisodicStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "episodic capacity must be at least 1");
        Self {
            capacity,
            records: VecDeque::with_capacity(capacity),
            newest: None,
            summary: LongTermSummary { text: String::new(), sentence_cap: DEFAULT_SENTENCE_CAP, last_updated_iteration: None },
            template: PromptTemplate::parse(SUMMARY_TEMPLATE).expect("bundled summary template parses"),
        }
    }

    pub fn with_sentence_cap(mut self, cap: usize) -> Self {
        self.summary.sentence_cap = cap.max(1);
        self
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summary(&self) -> &LongTermSummary {
        &self.summary
    }

    pub fn append(&mut self, record: EpisodicRecord) -> Result<(), EpisodicError> {
        if let Some(newest) = self.newest {
            if record.iteration <= newest {
                return Err(EpisodicError::NonMonotoneIteration { newest, got: record.iteration });
            }
        }
        self.newest = Some(record.iteration);
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
        Ok(())
    }

    /// Up to `n` newest records, oldest first.
    pub fn recent(&self, n: usize) -> Vec<EpisodicRecord> {
        let skip = self.records.len().saturating_sub(n);
        self.records.iter().skip(skip).cloned().collect()
    }

    pub fn iterations(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.iteration).collect()
    }

    fn unsummarized(&self) -> Vec<&EpisodicRecord> {
        let after = self.summary.last_updated_iteration;
        self.records.iter().filter(|r| after.map_or(true, |a| r.iteration > a)).collect()
    }

    /// Builds the summary request from the old summary and the records
    /// added since the last update.
    pub fn summary_request(&self) -> Result<CompletionRequest, EpisodicError> {
        let fresh = self.unsummarized();
        if fresh.is_empty() {
            return Err(EpisodicError::NothingToSummarize);
        }
        let records: Vec<String> = fresh.iter().map(|r| r.digest()).collect();
        let summary = if self.summary.text.is_empty() { "(none)".to_string() } else { self.summary.text.clone() };
        let vars = PromptVars::new()
            .text("summary", summary)
            .text("records", records.join("\n"))
            .text("sentence_cap", self.summary.sentence_cap.to_string());
        Ok(CompletionRequest::new("summarize", self.template.render(&vars)?))
    }

    /// Asks the provider for a new summary. On failure the old one is kept.
    pub fn update_summary(&mut self, provider: &dyn Provider) -> Result<&LongTermSummary, EpisodicError> {
        let req = self.summary_request()?;
        let text = provider.complete(&req)?;
        self.summary.text = truncate_sentences(&text, self.summary.sentence_cap);
        self.summary.last_updated_iteration = self.newest;
        Ok(&self.summary)
    }
}

impl Default for EpisodicStore {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}
