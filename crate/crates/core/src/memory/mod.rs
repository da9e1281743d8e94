//! Skill storage with embedding retrieval, and the short-term record ring
//! with its long-term summary.

pub mod episodic;
pub mod procedural;

pub use episodic::{
    split_sentences, truncate_sentences, EpisodicError, EpisodicRecord, EpisodicStore, LongTermSummary,
    DEFAULT_CAPACITY, DEFAULT_SENTENCE_CAP,
};
pub use procedural::{MemoryError, Scored, SkillEntry, SkillSource, SkillStore, DEFAULT_TOP_K};
