//! Prompt templates with `{name}` text placeholders and `<image:name>` slots.
//!
//! A template is a system part and a user part separated by a line holding
//! only `---`. Text placeholders are `{` + lowercase identifier + `}`; other
//! braces are left alone, so skill code can appear in a template verbatim.
//! An image slot expands to zero or more image parts in the user message.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::provider::{Message, Part};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template has no value for `{{{0}}}`")]
    MissingValue(String),
    #[error("template has no image for `<image:{0}>`")]
    MissingImage(String),
    #[error("template is missing the `---` separator")]
    NoSeparator,
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system: String,
    user: String,
}

#[derive(Debug, Clone, Default)]
pub struct PromptVars {
    text: BTreeMap<String, String>,
    images: BTreeMap<String, Vec<Arc<RgbImage>>>,
}

impl PromptVars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, name: &str, value: impl Into<String>) -> Self {
        self.text.insert(name.to_string(), value.into());
        self
    }

    pub fn images(mut self, name: &str, images: Vec<Arc<RgbImage>>) -> Self {
        self.images.insert(name.to_string(), images);
        self
    }
}

enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
    Image(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn pieces(s: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let rest = s;
    let mut lit_start = 0;
    let mut i = 0;
    let bytes = rest.as_bytes();
    while i < bytes.len() {
        let found = if bytes[i] == b'{' {
            rest[i + 1..].find('}').map(|end| (end + 2, &rest[i + 1..i + 1 + end], false))
        } else if rest[i..].starts_with("<image:") {
            rest[i + 7..].find('>').map(|end| (end + 8, &rest[i + 7..i + 7 + end], true))
        } else {
            None
        };
        match found {
            Some((len, name, image)) if is_ident(name) => {
                if lit_start < i {
                    out.push(Piece::Text(&rest[lit_start..i]));
                }
                out.push(if image { Piece::Image(name) } else { Piece::Var(name) });
                i += len;
                lit_start = i;
            }
            _ => i += rest[i..].chars().next().map_or(1, char::len_utf8),
        }
    }
    if lit_start < rest.len() {
        out.push(Piece::Text(&rest[lit_start..]));
    }
    out
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut seen = false;
        for line in text.lines() {
            if !seen && line.trim() == "---" {
                seen = true;
            } else if seen {
                user.push(line);
            } else {
                system.push(line);
            }
        }
        if !seen {
            return Err(PromptError::NoSeparator);
        }
        Ok(Self { system: system.join("\n").trim().to_string(), user: user.join("\n").trim().to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Names of all text placeholders and image slots.
    pub fn placeholders(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut vars = BTreeSet::new();
        let mut images = BTreeSet::new();
        for p in pieces(&self.system).into_iter().chain(pieces(&self.user)) {
            match p {
                Piece::Var(n) => {
                    vars.insert(n.to_string());
                }
                Piece::Image(n) => {
                    images.insert(n.to_string());
                }
                Piece::Text(_) => {}
            }
        }
        (vars, images)
    }

    fn fill(&self, s: &str, vars: &PromptVars, parts: &mut Vec<Part>, allow_images: bool) -> Result<(), PromptError> {
        let mut buf = String::new();
        for p in pieces(s) {
            match p {
                Piece::Text(t) => buf.push_str(t),
                Piece::Var(n) => buf.push_str(vars.text.get(n).ok_or_else(|| PromptError::MissingValue(n.into()))?),
                Piece::Image(n) => {
                    let imgs = vars.images.get(n).ok_or_else(|| PromptError::MissingImage(n.into()))?;
                    if !allow_images {
                        return Err(PromptError::MissingImage(n.into()));
                    }
                    if !buf.trim().is_empty() {
                        parts.push(Part::Text(buf.trim().to_string()));
                    }
                    buf.clear();
                    parts.extend(imgs.iter().map(|i| Part::Image { image: i.clone(), detail: None }));
                }
            }
        }
        if !buf.trim().is_empty() {
            parts.push(Part::Text(buf.trim().to_string()));
        }
        Ok(())
    }

    /// Renders into a system message (when non-empty) and a user message.
    pub fn render(&self, vars: &PromptVars) -> Result<Vec<Message>, PromptError> {
        let mut out = Vec::new();
        if !self.system.is_empty() {
            let mut parts = Vec::new();
            self.fill(&self.system, vars, &mut parts, false)?;
            if !parts.is_empty() {
                out.push(Message { role: crate::provider::Role::System, parts });
            }
        }
        let mut parts = Vec::new();
        self.fill(&self.user, vars, &mut parts, true)?;
        if parts.is_empty() {
            parts.push(Part::Text(String::new()));
        }
        out.push(Message::user(parts));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_text_and_images() {
        let t = PromptTemplate::parse("You play {game}.\n---\nTask: {task}\n<image:frames>\nWhat now? { not_a_var }").unwrap();
        let img = Arc::new(RgbImage::new(2, 2));
        let msgs = t
            .render(&PromptVars::new().text("game", "chess").text("task", "win").images("frames", vec![img.clone(), img]))
            .unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].text(), "You play chess.");
        assert_eq!(msgs[1].parts.len(), 4);
        assert_eq!(msgs[1].images().count(), 2);
        assert_eq!(msgs[1].text(), "Task: win\nWhat now? { not_a_var }");
    }

    #[test]
    fn missing_values() {
        let t = PromptTemplate::parse("---\n{task} <image:x>").unwrap();
        assert!(matches!(t.render(&PromptVars::new()), Err(PromptError::MissingValue(_))));
        assert!(matches!(t.render(&PromptVars::new().text("task", "a")), Err(PromptError::MissingImage(_))));
        assert!(matches!(PromptTemplate::parse("no separator"), Err(PromptError::NoSeparator)));
        let (v, i) = t.placeholders();
        assert!(v.contains("task") && i.contains("x"));
    }
}
