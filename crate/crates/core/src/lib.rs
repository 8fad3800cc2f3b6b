//! Core machinery for building and meta-evaluating NLG evaluation corpora:
//! the corpus data model, annotation prompt rendering and parsing,
//! multi-perspective consistency verification, balanced fine-tuning set
//! curation, preference pair construction, the rating-guided DPO objective,
//! and correlation/perturbation reports.
//!
//! Everything here is pure and deterministic: file and network I/O live in
//! the companion client and CLI crates.

pub mod consistency;
pub mod curation;
pub mod manifest;
pub mod metaeval;
pub mod model;
pub mod preference;
pub mod prompt;
pub mod rgdpo;

pub use consistency::{
    consistent_rating, cross_validate, join_pool, verify_pipeline, ConsensusResult,
    CrossValidationResult, CuratedPool, PoolEntry, PoolRecord, VerificationConfig,
};
pub use curation::{
    balanced_sample, category_key, diversity_select, emit_sft_dataset, oversample_analyses,
    CategoryKey, ParaphraseTable, SftExample,
};
pub use manifest::{manifest_stats, DatasetManifest, ManifestEntry, ManifestStats, TaskStats};
pub use metaeval::{
    correlation_report, kendall, pearson, perturbation_report, spearman, CorrelationReport,
    Grouping, PerturbationReport, RatingEntry,
};
pub use model::{
    parse_sample_record, scale_rating, serialize_sample_record, validate_corpus, AspectCriterion,
    EvaluationRecord, EvaluationSample, HumanScore, InspectionVerdict, ModelError, Provenance,
    Rating, RatingScale, Task, ValidationReport,
};
pub use preference::{build_pairs, prioritize_pairs, PairRecord, PreferencePair};
pub use prompt::{
    parse_evaluation, parse_inspection_verdict, render_eval_prompt, render_inspection_prompt,
    InspectionKind, PromptText, SamplingPlan,
};
pub use rgdpo::{
    bt_probability, check_gradient, evaluate_batch, implicit_reward_margin, rg_bt_probability,
    rgdpo_grad, rgdpo_loss, BatchExample, DpoConfig, DpoExample, DpoReport,
};
