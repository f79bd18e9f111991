//! Prompt templates mapping a (hyponym, hypernym) pair to a sentence.
//!
//! A pattern carries exactly one `[X]` slot, always filled with the input
//! (hyponym) term, and one `[Y]` slot for the hypernym or the mask literal.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terminology::Term;

pub const HYPONYM_SLOT: &str = "[X]";
pub const HYPERNYM_SLOT: &str = "[Y]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    name: String,
    pattern: String,
    /// Append a terminal period when rendering, unless the pattern already
    /// ends with one.
    #[serde(default)]
    period: bool,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, pattern: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let pattern = pattern.into();
        let invalid = |reason: String| Error::InvalidTemplate {
            name: name.clone(),
            reason,
        };
        if name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        for slot in [HYPONYM_SLOT, HYPERNYM_SLOT] {
            let found = pattern.matches(slot).count();
            if found != 1 {
                return Err(invalid(format!(
                    "pattern `{pattern}` has {found} {slot} slot(s), expected exactly 1"
                )));
            }
        }
        Ok(PromptTemplate {
            name,
            pattern,
            period: false,
        })
    }

    pub fn with_period(mut self, period: bool) -> Self {
        self.period = period;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn period(&self) -> bool {
        self.period
    }

    /// The text between the two slots, e.g. `is a type of`.
    pub fn connective(&self) -> &str {
        let x = self.pattern.find(HYPONYM_SLOT).unwrap_or(0);
        let y = self.pattern.find(HYPERNYM_SLOT).unwrap_or(0);
        let (first, second) = if x < y { (x, y) } else { (y, x) };
        self.pattern[first + 3..second].trim()
    }

    fn fill(&self, hyponym: &str, hypernym: &str) -> String {
        // Single pass over the pattern so slot markers inside term surfaces
        // are never substituted a second time.
        let mut out = String::with_capacity(self.pattern.len() + hyponym.len() + hypernym.len());
        let mut rest = self.pattern.as_str();
        while let Some(pos) = rest.find('[') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if tail.starts_with(HYPONYM_SLOT) {
                out.push_str(hyponym);
                rest = &tail[HYPONYM_SLOT.len()..];
            } else if tail.starts_with(HYPERNYM_SLOT) {
                out.push_str(hypernym);
                rest = &tail[HYPERNYM_SLOT.len()..];
            } else {
                out.push('[');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        if self.period && !out.ends_with('.') {
            out.push('.');
        }
        out
    }

    pub fn render(&self, hyponym: &Term, hypernym: &Term) -> String {
        self.fill(hyponym.as_str(), hypernym.as_str())
    }

    /// Renders with the hypernym slot holding `mask`. Fails unless the mask
    /// literal ends up occurring exactly once in the sentence.
    pub fn render_masked(&self, hyponym: &Term, mask: &str) -> Result<String> {
        let sentence = self.fill(hyponym.as_str(), mask);
        let found = if mask.is_empty() {
            0
        } else {
            sentence.matches(mask).count()
        };
        if found != 1 {
            return Err(Error::MaskCount {
                mask: mask.to_string(),
                sentence,
                found,
            });
        }
        Ok(sentence)
    }
}

/// Hand-crafted hypernymy prompts followed by the "is a subclass of" family
/// variants. Names are stable identifiers.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    [
        ("gen", "[Y] is more general than [X]"),
        ("spec", "[X] is more specific than [Y]"),
        ("type", "[X] is a type of [Y]"),
        ("the-type", "[X] is the type of [Y]"),
        ("kind", "[X] is a kind of [Y]"),
        ("form", "[X] is a form of [Y]"),
        ("one-form", "[X] is one form of [Y]"),
        ("is-a", "[X] is a [Y]"),
        ("a-type", "[X] is a type [Y]"),
    ]
    .into_iter()
    .map(|(name, pattern)| PromptTemplate::new(name, pattern).expect("builtin template"))
    .collect()
}

pub fn lookup<'a>(templates: &'a [PromptTemplate], name: &str) -> Result<&'a PromptTemplate> {
    templates
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::UnknownTemplate(name.to_string()))
}

/// Parses `name<TAB>pattern` lines. Blank lines and `#` comments are skipped.
pub fn parse_templates(text: &str) -> Result<Vec<PromptTemplate>> {
    let mut templates = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((name, pattern)) = line.split_once('\t') else {
            return Err(Error::InvalidTemplate {
                name: format!("line {}", idx + 1),
                reason: "expected `name<TAB>pattern`".into(),
            });
        };
        templates.push(PromptTemplate::new(name.trim(), pattern.trim())?);
    }
    Ok(templates)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<PromptTemplate>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text)
}
