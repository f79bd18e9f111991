//! Induction settings shared by `induce`, `sweep` and `analyze single-token`.
//!
//! Every flag has a key of the same name in the config file (TOML, or the
//! JSON manifest of an earlier run). Flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use taxoprompt::prompts::load_templates;
use taxoprompt::{builtin_templates, lookup, Method, Normalization, PromptTemplate, TermFormat};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// restrict-mlm, prompt-mlm or lm-scorer.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,

    /// Template name, or a literal pattern containing [X] and [Y].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,

    /// Extra templates, `name<TAB>pattern` per line.
    #[arg(long = "templates-file")]
    #[serde(rename = "templates-file", skip_serializing_if = "Option::is_none")]
    pub templates_file: Option<PathBuf>,

    /// Hypernyms predicted per term.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,

    /// `mock-masked:TABLE`, `mock-causal:TABLE`, a model name or a model directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,

    /// Terminology file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminology: Option<PathBuf>,

    /// Terminology file format: plain or tsv-id-term.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<TermFormat>,

    /// End rendered prompts with a period.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<bool>,

    /// Score normalization for lm-scorer: none or per-token.
    #[arg(long, value_parser = parse_normalization)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<Normalization>,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "none" => Ok(Normalization::None),
        "per-token" => Ok(Normalization::PerToken),
        other => Err(format!("unknown normalization `{other}` (expected none or per-token)")),
    }
}

#[derive(Deserialize)]
struct ManifestSettings {
    settings: Settings,
}

impl Settings {
    /// Reads a TOML config file, or the `settings` of a JSON run manifest.
    pub fn from_file(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let parsed = if is_json {
            serde_json::from_str::<ManifestSettings>(&text)
                .map(|m| m.settings)
                .or_else(|_| serde_json::from_str::<Settings>(&text))
                .map_err(anyhow::Error::from)
        } else {
            toml::from_str::<Settings>(&text).map_err(anyhow::Error::from)
        };
        parsed.map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    /// `self` with every field that `flags` sets replaced.
    pub fn overridden_by(self, flags: &Settings) -> Settings {
        Settings {
            method: flags.method.or(self.method),
            template: flags.template.clone().or(self.template),
            templates_file: flags.templates_file.clone().or(self.templates_file),
            k: flags.k.or(self.k),
            model: flags.model.clone().or(self.model),
            terminology: flags.terminology.clone().or(self.terminology),
            format: flags.format.or(self.format),
            period: flags.period.or(self.period),
            normalize: flags.normalize.or(self.normalize),
        }
    }

    pub fn merged(config: Option<&Path>, flags: &Settings) -> anyhow::Result<Settings> {
        Ok(match config {
            Some(path) => Settings::from_file(path)?.overridden_by(flags),
            None => flags.clone(),
        })
    }

    /// Fills in the defaults so that the recorded settings are complete.
    pub fn with_defaults(mut self) -> Settings {
        self.format.get_or_insert(TermFormat::Plain);
        self.period.get_or_insert(false);
        self.normalize.get_or_insert(Normalization::None);
        self
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> anyhow::Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| UsageError(format!("missing --{key} (or `{key}` in the config file)")).into())
    }

    /// All templates visible to this run: the built-in ones, overridden or
    /// extended by the templates file.
    pub fn template_library(&self) -> anyhow::Result<Vec<PromptTemplate>> {
        let mut library = builtin_templates();
        if let Some(path) = &self.templates_file {
            for template in load_templates(path)? {
                library.retain(|t| t.name() != template.name());
                library.push(template);
            }
        }
        Ok(library)
    }

    pub fn resolve_template(&self, library: &[PromptTemplate], name: &str) -> anyhow::Result<PromptTemplate> {
        let template = if name.contains("[X]") || name.contains("[Y]") {
            PromptTemplate::new(name, name).map_err(|e| UsageError(e.to_string()))?
        } else {
            lookup(library, name)
                .map_err(|e| UsageError(e.to_string()))?
                .clone()
        };
        Ok(template.with_period(self.period.unwrap_or(false)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "method = \"lm-scorer\"\nk = 3\ntemplate = \"gen\"\nperiod = true\n").unwrap();
        let flags = Settings {
            k: Some(5),
            ..Settings::default()
        };
        let merged = Settings::merged(Some(&path), &flags).unwrap();
        assert_eq!(merged.k, Some(5));
        assert_eq!(merged.method, Some(Method::LmScorer));
        assert_eq!(merged.template.as_deref(), Some("gen"));
        assert_eq!(merged.period, Some(true));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "methd = \"lm-scorer\"\n").unwrap();
        let err = Settings::from_file(&path).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn literal_templates() {
        let s = Settings::default();
        let t = s.resolve_template(&builtin_templates(), "[X] is a sort of [Y]").unwrap();
        assert_eq!(t.connective(), "is a sort of");
        assert!(s.resolve_template(&builtin_templates(), "nope").is_err());
    }
}
