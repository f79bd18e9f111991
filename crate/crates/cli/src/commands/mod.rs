pub mod analyze;
pub mod evaluate;
pub mod induce;
pub mod score;
pub mod sweep;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use taxoprompt::backend::LanguageModel;
use taxoprompt::terminology::TerminologyLoad;
use taxoprompt::{
    induce, load_terminology, write_taxonomy, InductionConfig, InductionRun, PromptTemplate, TermFormat,
};

use crate::manifest::{self, FileInfo, ModelInfo, RunManifest, TemplateInfo, ToolInfo};
use crate::settings::Settings;
use crate::UsageError;

/// A file, or stdout for `-`.
pub fn output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

pub fn load_terms(settings: &Settings) -> anyhow::Result<(PathBuf, TerminologyLoad)> {
    let path = Settings::require(&settings.terminology, "terminology")?.clone();
    let loaded = load_terminology(&path, settings.format.unwrap_or(TermFormat::Plain))?;
    if loaded.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate terms collapsed after canonicalization",
            path.display(),
            loaded.duplicates
        );
    }
    Ok((path, loaded))
}

pub fn checked_k(k: usize) -> anyhow::Result<usize> {
    if k == 0 {
        return Err(UsageError("k must be at least 1".into()).into());
    }
    Ok(k)
}

pub fn induction_config(settings: &Settings, template: PromptTemplate, k: usize) -> anyhow::Result<InductionConfig> {
    let method = *Settings::require(&settings.method, "method")?;
    Ok(InductionConfig::new(method, template, checked_k(k)?)?
        .with_normalization(settings.normalize.unwrap_or_default()))
}

/// Runs one induction, writes the predicted taxonomy to `out` and its
/// manifest to `manifest_path`.
pub fn induce_to_file(
    settings: &Settings,
    config: &InductionConfig,
    model: &dyn LanguageModel,
    terms: &(PathBuf, TerminologyLoad),
    out: &Path,
    manifest_path: &Path,
) -> anyhow::Result<(InductionRun, RunManifest)> {
    let started_at = manifest::timestamp();
    let (terms_path, loaded) = terms;
    let run = induce(config, model, &loaded.terminology)?;
    write_taxonomy(&run.taxonomy, out)?;
    for skipped in &run.skipped {
        log::info!("skipped `{}`: {}", skipped.term, skipped.reason);
    }
    let recorded = Settings {
        template: Some(config.template.pattern().to_string()),
        k: Some(config.k),
        ..settings.clone()
    }
    .with_defaults();
    let manifest = RunManifest {
        tool: ToolInfo::current(),
        method: config.method,
        template: TemplateInfo {
            name: config.template.name().to_string(),
            pattern: config.template.pattern().to_string(),
            period: config.template.period(),
        },
        k: config.k,
        normalization: config.normalization,
        model: ModelInfo {
            name: model.descriptor().name().to_string(),
            kind: model.descriptor().kind(),
        },
        terminology: FileInfo::of(terms_path)?,
        terms: loaded.terminology.len(),
        duplicate_terms: loaded.duplicates,
        output: FileInfo::of(out)?,
        edges: run.taxonomy.edge_count(),
        skipped: run.skipped.clone(),
        excluded_candidates: run.excluded_candidates.clone(),
        canonicalization: manifest::CANONICALIZATION.to_string(),
        started_at,
        finished_at: manifest::timestamp(),
        settings: recorded,
    };
    manifest.write(manifest_path)?;
    Ok((run, manifest))
}
