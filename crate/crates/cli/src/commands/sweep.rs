use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use taxoprompt::{evaluate, induce, load_taxonomy, EdgeMetrics};

use crate::commands::{induce_to_file, induction_config, load_terms, output};
use crate::settings::Settings;
use crate::{model, SweepArgs, UsageError};

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub template: String,
    pub k: usize,
    #[serde(flatten)]
    pub metrics: EdgeMetrics,
}

/// Best F first; equal F falls back to (template, k) ascending.
pub fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    b.metrics
        .f_score
        .total_cmp(&a.metrics.f_score)
        .then_with(|| a.template.cmp(&b.template))
        .then_with(|| a.k.cmp(&b.k))
}

#[derive(Serialize)]
struct SweepReport<'a> {
    rows: &'a [Cell],
    best: &'a Cell,
}

pub fn run(args: &SweepArgs) -> anyhow::Result<()> {
    let settings = Settings::merged(args.config.as_deref(), &args.settings)?;
    if args.templates.is_empty() || args.ks.is_empty() {
        return Err(UsageError("empty sweep grid".into()).into());
    }
    let library = settings.template_library()?;
    let templates = args
        .templates
        .iter()
        .map(|name| settings.resolve_template(&library, name))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let spec = Settings::require(&settings.model, "model")?;
    let terms = load_terms(&settings)?;
    let gold = load_taxonomy(&args.gold)?.taxonomy;
    let model = model::open(spec)?;
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut cells = Vec::with_capacity(templates.len() * args.ks.len());
    for template in &templates {
        for &k in &args.ks {
            let config = induction_config(&settings, template.clone(), k)?;
            let taxonomy = match &args.out_dir {
                Some(dir) => {
                    let stem = format!("{}.k{k}", file_stem(template.name()));
                    let out = dir.join(format!("{stem}.tsv"));
                    let manifest = dir.join(format!("{stem}.manifest.json"));
                    induce_to_file(&settings, &config, model.as_ref(), &terms, &out, &manifest)?.0.taxonomy
                }
                None => induce(&config, model.as_ref(), &terms.1.terminology)?.taxonomy,
            };
            let metrics = evaluate(&taxonomy, &gold)?;
            log::info!("{} k={k}: {metrics}", template.name());
            cells.push(Cell {
                template: template.name().to_string(),
                k,
                metrics,
            });
        }
    }
    cells.sort_by(cell_order);
    let best = &cells[0];

    let json_to_stdout = args.json.as_deref() == Some(Path::new("-"));
    if let Some(path) = &args.json {
        let mut out = output(path)?;
        serde_json::to_writer_pretty(&mut out, &SweepReport { rows: &cells, best })?;
        writeln!(out)?;
        out.flush()?;
    }
    if !json_to_stdout {
        let width = cells.iter().map(|c| c.template.len()).max().unwrap_or(0).max(8);
        println!("{:<width$}  {:>3}  {:>6}  {:>6}  {:>6}", "template", "k", "P", "R", "F");
        for c in &cells {
            let m = &c.metrics;
            println!(
                "{:<width$}  {:>3}  {:>6.1}  {:>6.1}  {:>6.1}",
                c.template, c.k, m.precision, m.recall, m.f_score
            );
        }
        println!("best: {} k={} F={:.1}", best.template, best.k, best.metrics.f_score);
    }
    Ok(())
}

/// Template names may be literal patterns; keep file names tame.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
