use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use taxoprompt::{average_metrics, evaluate, load_taxonomy, EdgeMetrics};

use crate::commands::output;
use crate::{EvaluateArgs, UsageError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    #[serde(flatten)]
    pub metrics: EdgeMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<Row>,
    /// The single row, or the unweighted mean over rows.
    pub summary: EdgeMetrics,
    /// Harmonic mean of the summary's P and R.
    pub f_of_mean_pr: f64,
}

/// The summary metrics of an earlier report, or a bare metrics object.
fn read_metrics(path: &Path) -> anyhow::Result<EdgeMetrics> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str::<Report>(&text)
        .map(|r| r.summary)
        .or_else(|_| serde_json::from_str::<EdgeMetrics>(&text))
        .with_context(|| format!("{}: not a metrics file", path.display()))
}

pub fn table(rows: &[Row], summary: Option<&Row>) -> String {
    let all: Vec<&Row> = rows.iter().chain(summary).collect();
    let width = all.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    let mut s = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>7}  {:>7}\n",
        "run", "P", "R", "F", "pred", "gold", "correct"
    );
    for row in all {
        let m = &row.metrics;
        s += &format!(
            "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1}  {:>7}  {:>7}  {:>7}\n",
            row.name, m.precision, m.recall, m.f_score, m.n_predicted, m.n_gold, m.n_correct
        );
    }
    s
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    if let (Some(pred), Some(gold)) = (&args.pred, &args.gold) {
        let predicted = load_taxonomy(pred)?;
        let gold_load = load_taxonomy(gold)?;
        for (path, dup) in [(pred, predicted.duplicates), (gold, gold_load.duplicates)] {
            if dup > 0 {
                log::warn!("{}: {dup} duplicate edges collapsed", path.display());
            }
        }
        rows.push(Row {
            name: pred.display().to_string(),
            metrics: evaluate(&predicted.taxonomy, &gold_load.taxonomy)?,
        });
    }
    for path in &args.avg {
        rows.push(Row {
            name: path.display().to_string(),
            metrics: read_metrics(path)?,
        });
    }
    if rows.is_empty() {
        return Err(UsageError("nothing to evaluate: give --pred and --gold, or --avg".into()).into());
    }
    let metrics: Vec<EdgeMetrics> = rows.iter().map(|r| r.metrics).collect();
    let summary = average_metrics(&metrics)?;
    let report = Report {
        f_of_mean_pr: summary.f_of_precision_recall(),
        rows,
        summary,
    };

    let json_to_stdout = args.json.as_deref() == Some(Path::new("-"));
    if let Some(path) = &args.json {
        let mut out = output(path)?;
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
        out.flush()?;
    }
    if !json_to_stdout {
        let average = (report.rows.len() > 1).then(|| Row {
            name: format!("average ({})", report.rows.len()),
            metrics: report.summary,
        });
        print!("{}", table(&report.rows, average.as_ref()));
        if args.verbose {
            println!("F of mean P and R: {:.1}", report.f_of_mean_pr);
        }
    }
    Ok(())
}
