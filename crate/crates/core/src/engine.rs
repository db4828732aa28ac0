//! Blocking, per-block scoring, match declaration, one-to-one resolution
//! and merging.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::compare::{
    build_agreement_vector, discretize_string, jaro_winkler, AgreementPattern, Comparator,
    ConfigError, FieldConfig, PatternCodec,
};
use crate::model::{em_fit, EmDiagnostics, EmOptions, ModelError, ModelParams, PatternCounts};
use crate::record::{CanonicalRecord, Dataset, RecordId, Source, StateCode};

pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const DEFAULT_MIN_BLOCK_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("block {0}: one side has no records")]
    EmptyBlockSide(StateCode),
    #[error("block {0} is below the minimum size and no pooled parameters are available")]
    NoPooledParams(StateCode),
    #[error("threshold {0} is not inside (0, 1)")]
    BadThreshold(f64),
    #[error("dataset {side} has no record with id {id}")]
    DanglingId { side: Source, id: RecordId },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOptions {
    pub threshold: f64,
    /// Blocks with fewer records than this on either side use pooled parameters.
    pub min_block_size: usize,
    pub em: EmOptions,
}

impl Default for LinkOptions {
    fn default() -> Self {
        LinkOptions {
            threshold: DEFAULT_THRESHOLD,
            min_block_size: DEFAULT_MIN_BLOCK_SIZE,
            em: EmOptions::default(),
        }
    }
}

impl LinkOptions {
    pub fn validate(&self) -> Result<(), LinkError> {
        check_threshold(self.threshold)
    }
}

fn check_threshold(t: f64) -> Result<(), LinkError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(LinkError::BadThreshold(t))
    }
}

#[derive(Debug, Clone)]
pub struct Block<'a> {
    pub key: StateCode,
    pub a: Vec<&'a CanonicalRecord>,
    pub b: Vec<&'a CanonicalRecord>,
}

impl Block<'_> {
    pub fn candidate_pairs(&self) -> u64 {
        self.a.len() as u64 * self.b.len() as u64
    }
}

/// A state present on only one side; its records cannot be linked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrphanState {
    pub state: StateCode,
    pub source: Source,
    pub records: usize,
}

#[derive(Debug, Clone)]
pub struct Blocking<'a> {
    pub blocks: Vec<Block<'a>>,
    pub orphans: Vec<OrphanState>,
}

/// One block per state present in both datasets, ordered by state code.
pub fn block_by_state<'a>(a: &'a Dataset, b: &'a Dataset) -> Blocking<'a> {
    let mut by_state: BTreeMap<StateCode, (Vec<&CanonicalRecord>, Vec<&CanonicalRecord>)> =
        BTreeMap::new();
    for r in &a.records {
        by_state.entry(r.state).or_default().0.push(r);
    }
    for r in &b.records {
        by_state.entry(r.state).or_default().1.push(r);
    }
    let mut blocks = Vec::new();
    let mut orphans = Vec::new();
    for (state, (ra, rb)) in by_state {
        match (ra.is_empty(), rb.is_empty()) {
            (false, false) => blocks.push(Block {
                key: state,
                a: ra,
                b: rb,
            }),
            (false, true) => orphans.push(OrphanState {
                state,
                source: Source::A,
                records: ra.len(),
            }),
            (true, false) => orphans.push(OrphanState {
                state,
                source: Source::B,
                records: rb.len(),
            }),
            (true, true) => {}
        }
    }
    Blocking { blocks, orphans }
}

/// A candidate pair with its posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub id_a: RecordId,
    pub id_b: RecordId,
    pub state: StateCode,
    pub pattern: AgreementPattern,
    pub xi: f64,
    pub declared: bool,
}

enum Feature {
    /// Interned strings; id 0 is MISSING. `table` holds the stride-scaled
    /// code for every (a_id, b_id) combination.
    Text {
        a_ids: Vec<u32>,
        b_ids: Vec<u32>,
        b_unique: usize,
        table: Vec<u32>,
    },
    /// `i64::MIN` is MISSING.
    Number {
        stride: u32,
        a: Vec<i64>,
        b: Vec<i64>,
        tolerance: i64,
    },
}

const NO_NUMBER: i64 = i64::MIN;

fn intern<'r>(
    records: &[&'r CanonicalRecord],
    field: crate::record::LinkField,
    dict: &mut BTreeMap<&'r str, u32>,
    values: &mut Vec<&'r str>,
) -> Vec<u32> {
    records
        .iter()
        .map(|r| match r.text(field).filter(|s| !s.is_empty()) {
            None => 0,
            Some(s) => *dict.entry(s).or_insert_with(|| {
                values.push(s);
                values.len() as u32
            }),
        })
        .collect()
}

/// Precomputed comparison state for one block.
///
/// String similarities are evaluated once per distinct value pair, so a
/// row scan only does table lookups and integer compares. Pattern codes
/// follow [`PatternCodec`].
pub struct BlockScorer<'a> {
    block: &'a Block<'a>,
    codec: PatternCodec,
    features: Vec<Feature>,
}

impl<'a> BlockScorer<'a> {
    pub fn new(block: &'a Block<'a>, fields: &[FieldConfig]) -> Result<Self, LinkError> {
        FieldConfig::validate_set(fields)?;
        let codec = PatternCodec::new(fields);
        let mut features = Vec::with_capacity(fields.len());
        for (k, f) in fields.iter().enumerate() {
            let stride = codec.stride(k);
            let feature = match &f.comparator {
                Comparator::JaroWinkler { cutoffs } => {
                    let mut a_dict = BTreeMap::new();
                    let mut a_vals = Vec::new();
                    let a_ids = intern(&block.a, f.field, &mut a_dict, &mut a_vals);
                    let mut b_dict = BTreeMap::new();
                    let mut b_vals = Vec::new();
                    let b_ids = intern(&block.b, f.field, &mut b_dict, &mut b_vals);
                    let b_unique = b_vals.len() + 1;
                    let mut table = vec![0u32; (a_vals.len() + 1) * b_unique];
                    for (ia, sa) in a_vals.iter().enumerate() {
                        let row = &mut table[(ia + 1) * b_unique..(ia + 2) * b_unique];
                        for (ib, sb) in b_vals.iter().enumerate() {
                            let level = discretize_string(jaro_winkler(sa, sb), cutoffs);
                            row[ib + 1] = (u32::from(level) + 1) * stride;
                        }
                    }
                    Feature::Text {
                        a_ids,
                        b_ids,
                        b_unique,
                        table,
                    }
                }
                Comparator::Numeric { tolerance } => {
                    let grab = |rs: &[&CanonicalRecord]| -> Vec<i64> {
                        rs.iter().map(|r| r.number(f.field).unwrap_or(NO_NUMBER)).collect()
                    };
                    Feature::Number {
                        stride,
                        a: grab(&block.a),
                        b: grab(&block.b),
                        tolerance: libm::floor(*tolerance).min(i64::MAX as f64) as i64,
                    }
                }
            };
            features.push(feature);
        }
        Ok(BlockScorer {
            block,
            codec,
            features,
        })
    }

    pub fn block(&self) -> &Block<'a> {
        self.block
    }

    pub fn codec(&self) -> &PatternCodec {
        &self.codec
    }

    pub fn rows(&self) -> usize {
        self.block.a.len()
    }

    /// Pattern codes of A-row `i` against every B record.
    pub fn row_codes(&self, i: usize, buf: &mut [u32]) {
        buf.fill(0);
        for f in &self.features {
            match f {
                Feature::Text {
                    a_ids,
                    b_ids,
                    b_unique,
                    table,
                } => {
                    let base = a_ids[i] as usize * b_unique;
                    let row = &table[base..base + b_unique];
                    for (slot, &ib) in buf.iter_mut().zip(b_ids) {
                        *slot += row[ib as usize];
                    }
                }
                Feature::Number {
                    stride,
                    a,
                    b,
                    tolerance,
                } => {
                    let x = a[i];
                    if x == NO_NUMBER {
                        continue;
                    }
                    let agree = 2 * stride;
                    for (slot, &y) in buf.iter_mut().zip(b) {
                        if y != NO_NUMBER {
                            *slot += if x.abs_diff(y) <= *tolerance as u64 {
                                agree
                            } else {
                                *stride
                            };
                        }
                    }
                }
            }
        }
    }

    /// Dense pattern counts over A-rows in `rows`.
    pub fn count_rows(&self, rows: Range<usize>) -> Vec<u64> {
        let mut counts = vec![0u64; self.codec.size()];
        let mut buf = vec![0u32; self.block.b.len()];
        for i in rows {
            self.row_codes(i, &mut buf);
            for &c in &buf {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    pub fn count_all(&self) -> PatternCounts {
        PatternCounts::from_dense(&self.codec, &self.count_rows(0..self.rows()))
    }

    /// Pairs in `rows` whose posterior (looked up by code) is at least `retain`.
    pub fn collect_rows(&self, rows: Range<usize>, xi_by_code: &[f64], retain: f64) -> Vec<ScoredPair> {
        let mut out = Vec::new();
        let mut buf = vec![0u32; self.block.b.len()];
        for i in rows {
            self.row_codes(i, &mut buf);
            for (j, &c) in buf.iter().enumerate() {
                let xi = xi_by_code[c as usize];
                if xi >= retain {
                    out.push(ScoredPair {
                        id_a: self.block.a[i].id.clone(),
                        id_b: self.block.b[j].id.clone(),
                        state: self.block.key,
                        pattern: self.codec.decode(c),
                        xi,
                        declared: false,
                    });
                }
            }
        }
        out
    }
}

/// Where a block's parameters came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    Fitted(EmDiagnostics),
    Pooled,
}

/// Fits a block's own model, or falls back to `pooled` for small blocks.
pub fn fit_block_params(
    state: StateCode,
    counts: &PatternCounts,
    levels: &[usize],
    sizes: (usize, usize),
    opts: &LinkOptions,
    pooled: Option<&ModelParams>,
) -> Result<(ModelParams, ParamSource), LinkError> {
    if sizes.0 < opts.min_block_size || sizes.1 < opts.min_block_size {
        let p = pooled.ok_or(LinkError::NoPooledParams(state))?;
        return Ok((p.clone(), ParamSource::Pooled));
    }
    let init = ModelParams::initial(counts, levels)?;
    let fit = em_fit(counts, &init, &opts.em)?;
    Ok((fit.params, ParamSource::Fitted(fit.diagnostics)))
}

#[derive(Debug, Clone)]
pub struct BlockLinkage {
    pub state: StateCode,
    pub n_a: usize,
    pub n_b: usize,
    pub counts: PatternCounts,
    pub params: ModelParams,
    pub source: ParamSource,
    /// Declared pairs only (`xi >= threshold`).
    pub pairs: Vec<ScoredPair>,
}

/// Scores every candidate pair of one block and keeps the declared ones.
pub fn link_block(
    block: &Block<'_>,
    fields: &[FieldConfig],
    opts: &LinkOptions,
    pooled: Option<&ModelParams>,
) -> Result<BlockLinkage, LinkError> {
    opts.validate()?;
    if block.a.is_empty() || block.b.is_empty() {
        return Err(LinkError::EmptyBlockSide(block.key));
    }
    let scorer = BlockScorer::new(block, fields)?;
    let counts = scorer.count_all();
    let (params, source) = fit_block_params(
        block.key,
        &counts,
        scorer.codec().levels(),
        (block.a.len(), block.b.len()),
        opts,
        pooled,
    )?;
    let xi = params.xi_table(scorer.codec())?;
    let mut pairs = scorer.collect_rows(0..scorer.rows(), &xi, opts.threshold);
    pairs.iter_mut().for_each(|p| p.declared = true);
    Ok(BlockLinkage {
        state: block.key,
        n_a: block.a.len(),
        n_b: block.b.len(),
        counts,
        params,
        source,
        pairs,
    })
}

/// Every candidate pair of a block under fixed parameters, via the
/// record-level comparator path. Quadratic memory; meant for small blocks.
pub fn score_all_pairs(
    block: &Block<'_>,
    fields: &[FieldConfig],
    params: &ModelParams,
) -> Result<Vec<ScoredPair>, LinkError> {
    let mut out = Vec::with_capacity(block.a.len() * block.b.len());
    for ra in &block.a {
        for rb in &block.b {
            let pattern = build_agreement_vector(ra, rb, fields);
            let xi = crate::model::posterior(&pattern, params)?;
            out.push(ScoredPair {
                id_a: ra.id.clone(),
                id_b: rb.id.clone(),
                state: block.key,
                pattern,
                xi,
                declared: false,
            });
        }
    }
    Ok(out)
}

/// Marks `xi >= threshold` as declared (inclusive comparison).
pub fn declare_matches(mut pairs: Vec<ScoredPair>, threshold: f64) -> Result<Vec<ScoredPair>, LinkError> {
    check_threshold(threshold)?;
    for p in &mut pairs {
        p.declared = p.xi >= threshold;
    }
    Ok(pairs)
}

fn greedy_order(x: &ScoredPair, y: &ScoredPair) -> Ordering {
    y.xi.total_cmp(&x.xi)
        .then_with(|| x.id_a.cmp(&y.id_a))
        .then_with(|| x.id_b.cmp(&y.id_b))
}

/// Greedy one-to-one: highest posterior first, ties by ascending
/// `(id_a, id_b)`; a pair survives only if neither id is taken. Undeclared
/// pairs are ignored.
pub fn resolve_one_to_one(declared: Vec<ScoredPair>) -> Vec<ScoredPair> {
    let mut pairs: Vec<ScoredPair> = declared.into_iter().filter(|p| p.declared).collect();
    pairs.sort_by(greedy_order);
    let mut used_a = BTreeSet::new();
    let mut used_b = BTreeSet::new();
    let mut kept = Vec::new();
    for p in pairs {
        if used_a.contains(&p.id_a) || used_b.contains(&p.id_b) {
            continue;
        }
        used_a.insert(p.id_a.clone());
        used_b.insert(p.id_b.clone());
        kept.push(p);
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedRow {
    pub id_a: RecordId,
    pub id_b: RecordId,
    pub state: StateCode,
    pub xi: f64,
    pub pattern: AgreementPattern,
    /// A payload then B payload, aligned with `LinkedDataset::columns` minus `xi`.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedDataset {
    /// `a_*` columns, `b_*` columns, then `xi`.
    pub columns: Vec<String>,
    pub rows: Vec<LinkedRow>,
}

impl LinkedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Joins final pairs with both payloads, ordered by `(state, id_a)`.
pub fn merge_linked(final_pairs: &[ScoredPair], a: &Dataset, b: &Dataset) -> Result<LinkedDataset, LinkError> {
    fn index(d: &Dataset) -> BTreeMap<&str, usize> {
        d.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }
    let a_index = index(a);
    let b_index = index(b);

    let mut columns: Vec<String> = Vec::with_capacity(a.columns.len() + b.columns.len() + 1);
    columns.extend(a.columns.iter().map(|c| format!("a_{c}")));
    columns.extend(b.columns.iter().map(|c| format!("b_{c}")));
    columns.push(String::from("xi"));

    let mut rows = Vec::with_capacity(final_pairs.len());
    for p in final_pairs {
        let ra = a_index
            .get(p.id_a.as_str())
            .map(|&i| &a.records[i])
            .ok_or_else(|| LinkError::DanglingId {
                side: Source::A,
                id: p.id_a.clone(),
            })?;
        let rb = b_index
            .get(p.id_b.as_str())
            .map(|&i| &b.records[i])
            .ok_or_else(|| LinkError::DanglingId {
                side: Source::B,
                id: p.id_b.clone(),
            })?;
        let mut values = Vec::with_capacity(columns.len() - 1);
        values.extend(ra.payload.iter().cloned());
        values.resize(a.columns.len(), String::new());
        values.extend(rb.payload.iter().cloned());
        values.resize(a.columns.len() + b.columns.len(), String::new());
        rows.push(LinkedRow {
            id_a: p.id_a.clone(),
            id_b: p.id_b.clone(),
            state: p.state,
            xi: p.xi,
            pattern: p.pattern.clone(),
            values,
        });
    }
    rows.sort_by(|x, y| {
        x.state
            .cmp(&y.state)
            .then_with(|| x.id_a.cmp(&y.id_a))
            .then_with(|| x.id_b.cmp(&y.id_b))
    });
    Ok(LinkedDataset { columns, rows })
}
