use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::prompt::{PromptError, PromptTemplate};
use crate::provider::{FieldKind, FieldSpec, SectionSchema};

pub const OCR: &str = "ocr";
pub const DESCRIBE: &str = "describe";
pub const REFLECT: &str = "reflect";
pub const TASK: &str = "task";
pub const CURATE: &str = "curate";
pub const PLAN: &str = "plan";
pub const TOOLTIP: &str = "tooltip";
pub const SKILL_GEN: &str = "skill_gen";
pub const SUMMARIZE: &str = "summarize";

/// Every request purpose the pipeline issues; also the keys accepted for
/// template overrides.
pub const PURPOSES: [&str; 9] = [OCR, DESCRIBE, REFLECT, TASK, CURATE, PLAN, TOOLTIP, SKILL_GEN, SUMMARIZE];

fn bundled(purpose: &str) -> &'static str {
    match purpose {
        OCR => include_str!("../../prompts/ocr.txt"),
        DESCRIBE => include_str!("../../prompts/describe.txt"),
        REFLECT => include_str!("../../prompts/reflect.txt"),
        TASK => include_str!("../../prompts/task.txt"),
        CURATE => include_str!("../../prompts/curate.txt"),
        PLAN => include_str!("../../prompts/plan.txt"),
        TOOLTIP => include_str!("../../prompts/tooltip.txt"),
        SKILL_GEN => include_str!("../../prompts/skill_gen.txt"),
        SUMMARIZE => include_str!("../../prompts/summary.txt"),
        other => unreachable!("no bundled prompt for `{other}`"),
    }
}

/// One template per purpose.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<&'static str, PromptTemplate>,
}

impl PromptSet {
    pub fn bundled() -> Self {
        let templates = PURPOSES
            .iter()
            .map(|p| (*p, PromptTemplate::parse(bundled(p)).expect("bundled prompts parse")))
            .collect();
        Self { templates }
    }

    /// Bundled templates with some replaced from files. Relative paths are
    /// resolved against `base`.
    pub fn with_overrides(overrides: &BTreeMap<String, PathBuf>, base: &Path) -> Result<Self, PromptError> {
        let mut set = Self::bundled();
        for (purpose, path) in overrides {
            let Some(key) = PURPOSES.iter().find(|p| **p == purpose.as_str()) else {
                continue;
            };
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            set.templates.insert(key, PromptTemplate::load(&full)?);
        }
        Ok(set)
    }

    pub fn get(&self, purpose: &str) -> &PromptTemplate {
        self.templates.get(purpose).unwrap_or_else(|| panic!("no template for `{purpose}`"))
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::bundled()
    }
}

fn schema(fields: Vec<FieldSpec>) -> SectionSchema {
    SectionSchema::new(fields).expect("labels are distinct")
}

pub fn ocr_schema() -> SectionSchema {
    schema(vec![FieldSpec::required("Text", FieldKind::Text)])
}

pub fn describe_schema() -> SectionSchema {
    schema(vec![FieldSpec::required("Description", FieldKind::Text), FieldSpec::optional("Guidance", FieldKind::Text)])
}

pub fn reflect_schema() -> SectionSchema {
    schema(vec![
        FieldSpec::required("Success", FieldKind::Bool),
        FieldSpec::optional("Task done", FieldKind::Bool),
        FieldSpec::optional("Analysis", FieldKind::Text),
        FieldSpec::optional("Continue", FieldKind::Bool),
    ])
}

pub fn task_schema() -> SectionSchema {
    schema(vec![FieldSpec::optional("Task", FieldKind::Text), FieldSpec::optional("Horizon", FieldKind::Text)])
}

pub fn plan_schema() -> SectionSchema {
    schema(vec![FieldSpec::optional("Reasoning", FieldKind::Text), FieldSpec::required("Actions", FieldKind::List)])
}

pub fn tooltip_schema() -> SectionSchema {
    schema(vec![FieldSpec::required("Tooltip", FieldKind::Text), FieldSpec::optional("Available", FieldKind::Bool)])
}
