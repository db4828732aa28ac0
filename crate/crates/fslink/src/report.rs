//! Run report schema (`report.json`) and stage timings (`timings.json`).
//!
//! The report holds only values derived from inputs and config, so reruns
//! produce identical bytes. Wall-clock numbers go to the timings file.

use std::collections::BTreeMap;

use fslink_core::engine::ParamSource;
use fslink_core::model::ModelParams;
use fslink_core::FieldConfig;
use serde::{Deserialize, Serialize};

use crate::ingest::Loaded;
use crate::link::{BlockResult, LinkOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub name: String,
    pub rows: usize,
    pub loaded: usize,
    pub rejected: usize,
    pub rejects_by_reason: BTreeMap<String, usize>,
    pub filtered: usize,
    pub filtered_by_reason: BTreeMap<String, usize>,
    pub linkable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub state: String,
    pub n_a: usize,
    pub n_b: usize,
    pub candidate_pairs: u64,
    pub declared: usize,
    pub matches: usize,
    /// `fitted` or `pooled`.
    pub params: String,
    pub em_iterations: Option<usize>,
    pub em_converged: Option<bool>,
    pub log_likelihood: Option<f64>,
    pub lambda: f64,
    pub fdr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrphanReport {
    pub state: String,
    pub source: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub lambda: f64,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub log_likelihood: f64,
    pub blocks_using: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub blocks: usize,
    pub candidate_pairs: u64,
    pub declared: usize,
    pub matches: usize,
    pub fdr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub threshold: f64,
    pub epoch: String,
    pub min_block_size: usize,
    pub fields: Vec<String>,
    pub a: SourceReport,
    pub b: SourceReport,
    pub blocks: Vec<BlockReport>,
    pub orphans: Vec<OrphanReport>,
    pub pooled: Option<PooledReport>,
    pub totals: Totals,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
    pub total: f64,
}

impl Timings {
    pub fn push(&mut self, stage: &str, d: std::time::Duration) {
        self.stages.push((stage.to_string(), d.as_secs_f64()));
    }
}

pub fn describe_field(f: &FieldConfig) -> String {
    match &f.comparator {
        fslink_core::Comparator::JaroWinkler { cutoffs } => {
            let c: Vec<String> = cutoffs.iter().map(|c| c.to_string()).collect();
            format!("{}:jaro_winkler[{}]", f.field, c.join(","))
        }
        fslink_core::Comparator::Numeric { tolerance } => {
            format!("{}:numeric[tol={tolerance}]", f.field)
        }
    }
}

pub fn count_by<I: IntoIterator<Item = String>>(codes: I) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for c in codes {
        *out.entry(c).or_insert(0) += 1;
    }
    out
}

pub fn source_report(loaded: &Loaded, filtered: &[crate::ingest::Filtered], name: &str) -> SourceReport {
    SourceReport {
        name: name.to_string(),
        rows: loaded.rows_read,
        loaded: loaded.dataset.len(),
        rejected: loaded.rejects.len(),
        rejects_by_reason: count_by(loaded.rejects.iter().map(|r| r.reason.code().to_string())),
        filtered: filtered.len(),
        filtered_by_reason: count_by(filtered.iter().map(|f| f.reason.code().to_string())),
        linkable: loaded.dataset.len() - filtered.len(),
    }
}

pub fn block_report(b: &BlockResult) -> BlockReport {
    let (kind, it, conv, ll) = match &b.source {
        ParamSource::Fitted(d) => ("fitted", Some(d.iterations), Some(d.converged), Some(d.log_likelihood)),
        ParamSource::Pooled => ("pooled", None, None, None),
    };
    BlockReport {
        state: b.state.to_string(),
        n_a: b.n_a,
        n_b: b.n_b,
        candidate_pairs: b.candidate_pairs(),
        declared: b.declared,
        matches: b.matches,
        params: kind.to_string(),
        em_iterations: it,
        em_converged: conv,
        log_likelihood: ll,
        lambda: b.params.lambda,
        fdr: b.error_rates.fdr,
        fnr: b.error_rates.fnr,
    }
}

pub fn link_sections(outcome: &LinkOutcome) -> (Vec<BlockReport>, Vec<OrphanReport>, Option<PooledReport>, Totals) {
    let blocks: Vec<BlockReport> = outcome.blocks.iter().map(block_report).collect();
    let orphans = outcome
        .orphans
        .iter()
        .map(|o| OrphanReport {
            state: o.state.to_string(),
            source: o.source.to_string(),
            records: o.records,
        })
        .collect();
    let pooled = outcome.pooled.as_ref().map(|p| PooledReport {
        lambda: p.params.lambda,
        em_iterations: p.diagnostics.iterations,
        em_converged: p.diagnostics.converged,
        log_likelihood: p.diagnostics.log_likelihood,
        blocks_using: outcome
            .blocks
            .iter()
            .filter(|b| b.source == ParamSource::Pooled)
            .count(),
    });
    let totals = Totals {
        blocks: outcome.blocks.len(),
        candidate_pairs: outcome.candidate_pairs(),
        declared: outcome.declared.len(),
        matches: outcome.matches.len(),
        fdr: outcome.error_rates.fdr,
        fnr: outcome.error_rates.fnr,
    };
    (blocks, orphans, pooled, totals)
}

/// Parameter file body for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub state: String,
    pub source: String,
    pub fields: Vec<String>,
    pub lambda: f64,
    pub m: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl ParamsFile {
    pub fn new(state: &str, source: &str, fields: &[FieldConfig], p: &ModelParams) -> Self {
        ParamsFile {
            state: state.to_string(),
            source: source.to_string(),
            fields: fields.iter().map(|f| f.field.to_string()).collect(),
            lambda: p.lambda,
            m: p.m.clone(),
            u: p.u.clone(),
        }
    }
}
