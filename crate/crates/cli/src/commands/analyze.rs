use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use taxoprompt::analysis::{count_prompt_frequency, filter_single_token, single_token_report};
use taxoprompt::{builtin_templates, load_taxonomy, write_taxonomy, PromptTemplate, Terminology};

use crate::commands::{induction_config, load_terms, output};
use crate::settings::Settings;
use crate::{model, OutputFormat, PromptFreqArgs, SingleTokenArgs, UsageError};

#[derive(Serialize)]
struct FilterOnly {
    total_terms: usize,
    kept_terms: usize,
    retained_pct: f64,
}

pub fn single_token(args: &SingleTokenArgs) -> anyhow::Result<()> {
    let settings = Settings::merged(args.config.as_deref(), &args.settings)?;
    let spec = Settings::require(&settings.model, "model")?;
    let gold = load_taxonomy(&args.gold)?.taxonomy;
    let mut out = output(&args.out)?;

    if args.filter_only {
        let backend = model::open_tokenizer(spec)?;
        let filter = filter_single_token(backend.as_ref(), &gold)?;
        if let Some(path) = &args.filtered_gold {
            write_taxonomy(&filter.gold, path)?;
        }
        let row = FilterOnly {
            total_terms: filter.total_terms,
            kept_terms: filter.kept_terms,
            retained_pct: filter.retained_pct,
        };
        match args.output_format {
            OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&row)?)?,
            OutputFormat::Tsv => {
                writeln!(out, "total_terms\tkept_terms\tretained_pct")?;
                writeln!(out, "{}\t{}\t{:.2}", row.total_terms, row.kept_terms, row.retained_pct)?;
            }
        }
        out.flush()?;
        return Ok(());
    }

    let library = settings.template_library()?;
    let template = settings.resolve_template(&library, Settings::require(&settings.template, "template")?)?;
    let config = induction_config(&settings, template, *Settings::require(&settings.k, "k")?)?;
    // Without a terminology file, the gold vertices are the terminology.
    let terminology: Terminology = match &settings.terminology {
        Some(_) => load_terms(&settings)?.1.terminology,
        None => gold.vertices().into_iter().cloned().collect(),
    };
    let backend = model::open(spec)?;
    let report = single_token_report(backend.as_ref(), &config, &terminology, &gold)?;
    if let Some(path) = &args.filtered_gold {
        write_taxonomy(&filter_single_token(backend.as_ref(), &gold)?.gold, path)?;
    }
    match args.output_format {
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        OutputFormat::Tsv => {
            writeln!(out, "total_terms\tkept_terms\tretained_pct\tf_original\tf_filtered\tincrease")?;
            writeln!(
                out,
                "{}\t{}\t{:.2}\t{:.1}\t{:.1}\t{:.2}",
                report.total_terms,
                report.kept_terms,
                report.retained_pct,
                report.f_original,
                report.f_filtered,
                report.increase_pct
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One pattern per line; a line holding a template pattern stands for its
/// connective.
fn read_patterns(path: &std::path::Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut patterns = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let pattern = if line.contains("[X]") || line.contains("[Y]") {
            PromptTemplate::new(line, line)?.connective().to_string()
        } else {
            line.to_string()
        };
        if !patterns.contains(&pattern) {
            patterns.push(pattern);
        }
    }
    Ok(patterns)
}

fn default_patterns() -> Vec<String> {
    let mut patterns: Vec<String> = Vec::new();
    for t in builtin_templates() {
        let c = t.connective().to_string();
        if !patterns.contains(&c) {
            patterns.push(c);
        }
    }
    patterns
}

fn corpus_files(roots: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for root in roots {
        if root.is_dir() {
            let mut found = Vec::new();
            for entry in walkdir::WalkDir::new(root) {
                let entry = entry.with_context(|| format!("cannot walk {}", root.display()))?;
                if entry.file_type().is_file() {
                    found.push(entry.into_path());
                }
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(root.clone());
        }
    }
    Ok(files)
}

/// Mean F per pattern from `pattern<TAB>F` rows.
fn read_scores(path: &std::path::Path) -> anyhow::Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (pattern, f) = line
            .rsplit_once('\t')
            .with_context(|| format!("{}:{}: expected pattern<TAB>F", path.display(), n + 1))?;
        let f: f64 = f
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: `{f}` is not a number", path.display(), n + 1))?;
        let pattern = if pattern.contains("[X]") {
            PromptTemplate::new(pattern, pattern)?.connective().to_string()
        } else {
            pattern.trim().to_string()
        };
        let entry = sums.entry(taxoprompt::analysis::normalize_text(&pattern)).or_default();
        entry.0 += f;
        entry.1 += 1;
    }
    Ok(sums.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect())
}

pub fn prompt_freq(args: &PromptFreqArgs) -> anyhow::Result<()> {
    let patterns = match &args.patterns {
        Some(path) => read_patterns(path)?,
        None => default_patterns(),
    };
    if patterns.is_empty() {
        return Err(UsageError("no patterns to count".into()).into());
    }
    let files = corpus_files(&args.corpus)?;
    let mut counts = count_prompt_frequency(&files, &patterns)?;
    if let Some(path) = &args.scores {
        let scores = read_scores(path)?;
        for row in &mut counts {
            row.avg_f = scores.get(&taxoprompt::analysis::normalize_text(&row.pattern)).copied();
        }
    }
    let mut out = output(&args.out)?;
    match args.output_format {
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&counts)?)?,
        OutputFormat::Tsv => {
            writeln!(out, "pattern\tcount\tavg_f")?;
            for row in &counts {
                let f = row.avg_f.map(|f| format!("{f:.1}")).unwrap_or_default();
                writeln!(out, "{}\t{}\t{f}", row.pattern, row.count)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
