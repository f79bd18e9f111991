use crate::commands::{induce_to_file, induction_config, load_terms};
use crate::settings::Settings;
use crate::{manifest, model, InduceArgs};

pub fn run(args: &InduceArgs) -> anyhow::Result<()> {
    let settings = Settings::merged(args.config.as_deref(), &args.settings)?;
    let library = settings.template_library()?;
    let name = Settings::require(&settings.template, "template")?;
    let template = settings.resolve_template(&library, name)?;
    let k = *Settings::require(&settings.k, "k")?;
    let config = induction_config(&settings, template, k)?;
    let spec = Settings::require(&settings.model, "model")?;
    let terms = load_terms(&settings)?;
    let model = model::open(spec)?;

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| manifest::default_path(&args.out));
    let (run, _) = induce_to_file(&settings, &config, model.as_ref(), &terms, &args.out, &manifest_path)?;
    eprintln!(
        "{} edges for {} terms ({} skipped) -> {}",
        run.taxonomy.edge_count(),
        terms.1.terminology.len(),
        run.skipped.len(),
        args.out.display()
    );
    Ok(())
}
