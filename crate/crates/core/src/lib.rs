//! Probabilistic record linkage for incident-level datasets that share no
//! unique identifier.
//!
//! The crate implements the canonical Fellegi-Sunter latent-class model:
//! candidate pairs are compared field by field into discrete agreement
//! patterns, the pattern counts are fitted by EM into match prevalence and
//! per-class level distributions, and Bayes' rule turns each pattern into a
//! posterior match probability. Around that model sit state blocking, match
//! declaration at a threshold, greedy one-to-one resolution, a synthetic
//! ground-truth generator and the evaluation arithmetic used for clerical
//! review.
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and the review
//! service live in the `fslink` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod compare;
pub mod date;
pub mod engine;
pub mod eval;
pub mod filter;
pub mod model;
pub mod normalize;
pub mod record;
pub mod synth;

pub use compare::{
    build_agreement_vector, compare_numeric, discretize_string, jaro, jaro_winkler,
    AgreementPattern, Comparator, FieldConfig, Level,
};
pub use date::{days_since_start, DateError, DEFAULT_EPOCH};
pub use engine::{
    block_by_state, declare_matches, link_block, merge_linked, resolve_one_to_one, Block,
    BlockLinkage, BlockScorer, Blocking, LinkError, LinkOptions, LinkedDataset, LinkedRow,
    ScoredPair,
};
pub use eval::{
    deterministic_baseline, score_against_truth, sensitivity_report, Adjudication,
    AdjudicationSummary, Decision, Metrics, TruthSet,
};
pub use filter::{EligibilityEntry, FilterDecision, FilterRuleSet, ScopeFields};
pub use model::{
    em_fit, estimate_error_rates, pattern_likelihood, posterior, Class, EmDiagnostics, EmFit,
    EmOptions, ErrorRates, ModelError, ModelParams, PatternCounts,
};
pub use normalize::{normalize_city, normalize_state, normalize_zip};
pub use record::{CanonicalRecord, Dataset, LinkField, RecordId, Source, StateCode};
pub use synth::{generate_synthetic, Corruption, SyntheticData, SyntheticSpec};
