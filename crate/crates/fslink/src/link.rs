//! Parallel driver for a full two-dataset linkage.
//!
//! Blocks are scored independently. Each block is counted first so that
//! pooled parameters exist before any small block needs them; the second
//! pass keeps only pairs at or above the threshold.

use std::time::{Duration, Instant};

use fslink_core::engine::{fit_block_params, Block, BlockScorer, OrphanState, ParamSource};
use fslink_core::model::{em_fit, EmDiagnostics, ErrorRates, ModelParams, PatternCounts};
use fslink_core::{
    block_by_state, resolve_one_to_one, Dataset, FieldConfig, LinkError, LinkOptions, ScoredPair,
    StateCode,
};
use rayon::prelude::*;

/// A-rows handed to one rayon task inside a block.
const ROW_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub state: StateCode,
    pub n_a: usize,
    pub n_b: usize,
    pub counts: PatternCounts,
    pub params: ModelParams,
    pub source: ParamSource,
    pub declared: usize,
    pub matches: usize,
    pub error_rates: ErrorRates,
}

impl BlockResult {
    pub fn candidate_pairs(&self) -> u64 {
        self.n_a as u64 * self.n_b as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledFit {
    pub counts: PatternCounts,
    pub params: ModelParams,
    pub diagnostics: EmDiagnostics,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTimings {
    pub block: Duration,
    pub count: Duration,
    pub fit: Duration,
    pub score: Duration,
    pub resolve: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub blocks: Vec<BlockResult>,
    pub orphans: Vec<OrphanState>,
    pub pooled: Option<PooledFit>,
    /// Every declared pair before one-to-one resolution.
    pub declared: Vec<ScoredPair>,
    /// Final one-to-one match set, ordered by `(state, id_a, id_b)`.
    pub matches: Vec<ScoredPair>,
    pub error_rates: ErrorRates,
    pub timings: LinkTimings,
}

impl LinkOutcome {
    pub fn candidate_pairs(&self) -> u64 {
        self.blocks.iter().map(BlockResult::candidate_pairs).sum()
    }
}

fn count_block(scorer: &BlockScorer<'_>) -> PatternCounts {
    let rows = scorer.rows();
    let dense = (0..rows)
        .into_par_iter()
        .step_by(ROW_CHUNK)
        .map(|start| scorer.count_rows(start..(start + ROW_CHUNK).min(rows)))
        .reduce(
            || vec![0u64; scorer.codec().size()],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                x
            },
        );
    PatternCounts::from_dense(scorer.codec(), &dense)
}

fn collect_block(scorer: &BlockScorer<'_>, xi: &[f64], threshold: f64) -> Vec<ScoredPair> {
    let rows = scorer.rows();
    let chunks: Vec<Vec<ScoredPair>> = (0..rows)
        .into_par_iter()
        .step_by(ROW_CHUNK)
        .map(|start| scorer.collect_rows(start..(start + ROW_CHUNK).min(rows), xi, threshold))
        .collect();
    let mut out: Vec<ScoredPair> = chunks.into_iter().flatten().collect();
    out.iter_mut().for_each(|p| p.declared = true);
    out
}

/// Links `a` against `b`. Runs on the current rayon pool; wrap in
/// [`with_jobs`] to bound parallelism.
pub fn link_datasets(
    a: &Dataset,
    b: &Dataset,
    fields: &[FieldConfig],
    opts: &LinkOptions,
) -> Result<LinkOutcome, LinkError> {
    opts.validate()?;
    FieldConfig::validate_set(fields)?;
    let mut timings = LinkTimings::default();

    let t = Instant::now();
    let blocking = block_by_state(a, b);
    let blocks: Vec<Block<'_>> = blocking.blocks;
    let scorers = blocks
        .par_iter()
        .map(|blk| BlockScorer::new(blk, fields))
        .collect::<Result<Vec<_>, _>>()?;
    timings.block = t.elapsed();

    let t = Instant::now();
    let counts: Vec<PatternCounts> = scorers.iter().map(count_block).collect();
    timings.count = t.elapsed();

    let t = Instant::now();
    let levels: Vec<usize> = fields.iter().map(FieldConfig::levels).collect();
    let mut pooled_counts = PatternCounts::new(fields.len());
    for c in &counts {
        pooled_counts.merge(c)?;
    }
    let pooled = if pooled_counts.is_empty() {
        None
    } else {
        let init = ModelParams::initial(&pooled_counts, &levels)?;
        let fit = em_fit(&pooled_counts, &init, &opts.em)?;
        Some(PooledFit {
            counts: pooled_counts,
            params: fit.params,
            diagnostics: fit.diagnostics,
        })
    };
    let pooled_params = pooled.as_ref().map(|p| &p.params);
    let fitted = blocks
        .par_iter()
        .zip(counts.par_iter())
        .map(|(blk, c)| {
            fit_block_params(blk.key, c, &levels, (blk.a.len(), blk.b.len()), opts, pooled_params)
        })
        .collect::<Result<Vec<_>, _>>()?;
    timings.fit = t.elapsed();

    let t = Instant::now();
    let mut per_block: Vec<Vec<ScoredPair>> = Vec::with_capacity(blocks.len());
    for (scorer, (params, _)) in scorers.iter().zip(&fitted) {
        let xi = params.xi_table(scorer.codec())?;
        per_block.push(collect_block(scorer, &xi, opts.threshold));
    }
    timings.score = t.elapsed();

    let t = Instant::now();
    let declared: Vec<ScoredPair> = per_block.iter().flatten().cloned().collect();
    let mut matches = resolve_one_to_one(declared.clone());
    matches.sort_by(|x, y| {
        x.state
            .cmp(&y.state)
            .then_with(|| x.id_a.cmp(&y.id_a))
            .then_with(|| x.id_b.cmp(&y.id_b))
    });
    timings.resolve = t.elapsed();

    let mut results = Vec::with_capacity(blocks.len());
    let mut weighted = Vec::new();
    for ((blk, c), ((params, source), pairs)) in blocks
        .iter()
        .zip(counts)
        .zip(fitted.into_iter().zip(&per_block))
    {
        let mut items = Vec::with_capacity(c.distinct());
        for (p, n) in c.iter() {
            let xi = fslink_core::posterior(p, &params)?;
            items.push((xi, xi >= opts.threshold, n as f64));
        }
        let error_rates = ErrorRates::weighted(items.iter().copied());
        weighted.extend(items);
        let n_matches = matches.iter().filter(|m| m.state == blk.key).count();
        results.push(BlockResult {
            state: blk.key,
            n_a: blk.a.len(),
            n_b: blk.b.len(),
            counts: c,
            params,
            source,
            declared: pairs.len(),
            matches: n_matches,
            error_rates,
        });
    }

    Ok(LinkOutcome {
        blocks: results,
        orphans: blocking.orphans,
        pooled,
        declared,
        matches,
        error_rates: ErrorRates::weighted(weighted),
        timings,
    })
}

/// Runs `f` on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
