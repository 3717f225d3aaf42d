//! Zero- and few-shot biomedical question answering over LLM chat backends.
//!
//! * [`retrieval`]: LLM query expansion, PubMed search with a one-shot
//!   reformulation fallback, and title reranking.
//! * [`answer`]: grounded or ungrounded yes/no, factoid, list and ideal
//!   answers with output repair and format limits.
//! * [`medproc`]: few-shot Spanish procedure extraction, gazetteer linking
//!   with stemmed Levenshtein matching, and document indexing.
//! * [`metrics`]: offline evaluation (MAP/GMAP, yes/no F1, factoid MRR, list
//!   P/R/F, span micro-F1, repeated-run variance).
//!
//! [`llm`] and [`pubmed`] are the two external-service clients; both come
//! with record/replay backends so every pipeline runs hermetically in tests.

pub mod answer;
pub mod bioasq;
pub mod config;
pub mod llm;
pub mod medproc;
pub mod metrics;
pub mod prompts;
pub mod pubmed;
pub mod retrieval;
pub mod text;
pub mod types;

pub use types::{GenerationProfile, Question, QuestionType, Snippet, SnippetSection};
