use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use anyhow::Context;
use taxoprompt::score_sentence;

use crate::commands::output;
use crate::{model, ScoreArgs};

pub fn run(args: &ScoreArgs) -> anyhow::Result<()> {
    let model = model::open(&args.model)?;
    let input: Box<dyn BufRead> = if args.input == Path::new("-") {
        Box::new(io::stdin().lock())
    } else {
        let file = File::open(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
        Box::new(BufReader::new(file))
    };
    let mut out = output(&args.out)?;
    for (n, line) in input.lines().enumerate() {
        let line = line.context("cannot read input")?;
        let sentence = line.trim();
        if sentence.is_empty() {
            continue;
        }
        let score = score_sentence(model.as_ref(), sentence).with_context(|| format!("line {}", n + 1))?;
        writeln!(out, "{}\t{sentence}", score.log_score)?;
    }
    out.flush()?;
    Ok(())
}
