//! Zero-shot taxonomy induction with pretrained language models.
//!
//! Given a flat terminology, each term is paired with candidate hypernyms
//! through a natural-language prompt such as `"[X] is a type of [Y]"`. A
//! masked model either fills the `[Y]` slot directly ([`Method::RestrictMlm`],
//! [`Method::PromptMlm`]) or every candidate sentence is scored by a masked or
//! causal model and the best ones are kept ([`Method::LmScorer`]). Predicted
//! edges are compared against a gold taxonomy at the edge level.
//!
//! ```
//! use taxoprompt::backend::{MockBuilder, ModelKind};
//! use taxoprompt::{induce, lookup, builtin_templates, InductionConfig, Method, Term, Terminology};
//!
//! let model = MockBuilder::new(ModelKind::Masked)
//!     .entry("trout is a type of [MASK]", "fish", 0.8)
//!     .build()
//!     .unwrap();
//! let terms: Terminology = ["trout", "fish", "animal"]
//!     .iter()
//!     .map(|s| Term::new(s).unwrap())
//!     .collect();
//! let template = lookup(&builtin_templates(), "type").unwrap().clone();
//! let config = InductionConfig::new(Method::RestrictMlm, template, 1).unwrap();
//! let run = induce(&config, &model, &terms).unwrap();
//! assert!(run.taxonomy.edges().any(|e| e.hyponym().as_str() == "trout"
//!     && e.hypernym().as_str() == "fish"));
//! ```

pub mod analysis;
pub mod backend;
pub mod error;
pub mod evaluation;
pub mod induction;
pub mod prompts;
pub mod scoring;
pub mod terminology;

pub use backend::{BackendDescriptor, LanguageModel, ModelKind, TokenId, TokenizedSentence};
pub use error::{Error, Result};
pub use evaluation::{average_metrics, evaluate, stats, EdgeMetrics, TaxonomyStats};
pub use induction::{
    induce, induce_queries, InductionConfig, InductionRun, Method, ScoredCandidate,
};
pub use prompts::{builtin_templates, lookup, PromptTemplate};
pub use scoring::{score_causal, score_masked, score_sentence, Normalization, SentenceScore};
pub use terminology::{
    canonicalize, load_taxonomy, load_terminology, write_taxonomy, Taxonomy, TaxonomyEdge, Term,
    TermFormat, Terminology,
};
