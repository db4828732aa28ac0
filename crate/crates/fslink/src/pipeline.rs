//! Stage-by-stage orchestration behind the CLI subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fslink_core::eval::{score_against_truth, deterministic_baseline, Metrics, TruthSet};
use fslink_core::filter::FilterRuleSet;
use fslink_core::{generate_synthetic, merge_linked, Dataset, LinkedDataset, Source};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::ingest::{apply_filters, load_csv, Filtered, Loaded};
use crate::link::{link_datasets, with_jobs, LinkOutcome};
use crate::output;
use crate::report::{self, ParamsFile, RunReport, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Link,
    Merge,
    Output,
    Synth,
    Evaluate,
    Review,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Link => "link",
            Stage::Merge => "merge",
            Stage::Output => "output",
            Stage::Synth => "synth",
            Stage::Evaluate => "evaluate",
            Stage::Review => "review",
        }
    }

    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Ingest => 4,
            Stage::Link => 5,
            Stage::Merge => 6,
            Stage::Output => 7,
            Stage::Synth => 8,
            Stage::Evaluate => 9,
            Stage::Review => 10,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage.name(), self.error)
    }
}

impl std::error::Error for StageError {}

pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            error: e.into(),
        })
    }
}

/// One side after loading and filtering.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub loaded: Loaded,
    pub filtered: Vec<Filtered>,
    pub dataset: Dataset,
}

pub fn ingest_side(cfg: &Config, side: Source, rules: &FilterRuleSet) -> Result<Ingested, StageError> {
    let mapping = cfg.mapping(side);
    let loaded = load_csv(&mapping.path, mapping, side, cfg.epoch).stage(Stage::Ingest)?;
    let (dataset, filtered) = apply_filters(&loaded, mapping, rules);
    Ok(Ingested {
        loaded,
        filtered,
        dataset,
    })
}

pub fn ingest_both(cfg: &Config) -> Result<(Ingested, Ingested), StageError> {
    let rules = cfg.filter.rules().stage(Stage::Config)?;
    Ok((ingest_side(cfg, Source::A, &rules)?, ingest_side(cfg, Source::B, &rules)?))
}

pub struct PipelineRun {
    pub a: Ingested,
    pub b: Ingested,
    pub outcome: LinkOutcome,
    pub linked: LinkedDataset,
    pub report: RunReport,
    pub timings: Timings,
}

/// ingest -> filter -> block -> link -> declare -> one-to-one -> merge.
pub fn run_pipeline(cfg: &Config, jobs: Option<usize>) -> Result<PipelineRun, StageError> {
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let (a, b) = ingest_both(cfg)?;
    timings.push("ingest", t.elapsed());

    let fields = cfg.linkage.field_configs();
    let opts = cfg.linkage.options();
    let outcome = with_jobs(jobs, || link_datasets(&a.dataset, &b.dataset, &fields, &opts)).stage(Stage::Link)?;
    let lt = &outcome.timings;
    timings.push("block", lt.block);
    timings.push("count", lt.count);
    timings.push("fit", lt.fit);
    timings.push("score", lt.score);
    timings.push("resolve", lt.resolve);

    let t = Instant::now();
    let linked = merge_linked(&outcome.matches, &a.dataset, &b.dataset).stage(Stage::Merge)?;
    timings.push("merge", t.elapsed());

    let (blocks, orphans, pooled, totals) = report::link_sections(&outcome);
    let report = RunReport {
        threshold: opts.threshold,
        epoch: cfg.epoch.to_string(),
        min_block_size: opts.min_block_size,
        fields: fields.iter().map(report::describe_field).collect(),
        a: report::source_report(&a.loaded, &a.filtered, &cfg.a.name),
        b: report::source_report(&b.loaded, &b.filtered, &cfg.b.name),
        blocks,
        orphans,
        pooled,
        totals,
    };
    timings.total = start.elapsed().as_secs_f64();
    Ok(PipelineRun {
        a,
        b,
        outcome,
        linked,
        report,
        timings,
    })
}

fn write_ingest_files(out: &Path, a: &Ingested, b: &Ingested) -> anyhow::Result<()> {
    output::write_rejects(&out.join("rejects_a.csv"), &a.loaded)?;
    output::write_rejects(&out.join("rejects_b.csv"), &b.loaded)?;
    output::write_filtered(&out.join("filtered_a.csv"), &a.filtered)?;
    output::write_filtered(&out.join("filtered_b.csv"), &b.filtered)?;
    Ok(())
}

pub fn write_run(cfg: &Config, run: &mut PipelineRun) -> Result<(), StageError> {
    let t = Instant::now();
    let out = &cfg.out;
    let write = || -> anyhow::Result<()> {
        output::ensure_dir(out)?;
        write_ingest_files(out, &run.a, &run.b)?;
        output::write_merged(&out.join("merged.csv"), &run.linked)?;
        output::write_matches(&out.join("matches.csv"), &run.outcome.matches)?;
        output::write_json(&out.join("report.json"), &run.report)?;
        let params_dir = out.join("params");
        if params_dir.exists() {
            std::fs::remove_dir_all(&params_dir)?;
        }
        output::ensure_dir(&params_dir)?;
        let fields = cfg.linkage.field_configs();
        for blk in &run.outcome.blocks {
            let kind = if blk.source == fslink_core::engine::ParamSource::Pooled {
                "pooled"
            } else {
                "fitted"
            };
            let state = blk.state.to_string();
            output::write_toml(
                &params_dir.join(format!("{state}.toml")),
                &ParamsFile::new(&state, kind, &fields, &blk.params),
            )?;
        }
        if let Some(p) = &run.outcome.pooled {
            output::write_toml(
                &params_dir.join("pooled.toml"),
                &ParamsFile::new("*", "pooled", &fields, &p.params),
            )?;
        }
        Ok(())
    };
    write().stage(Stage::Output)?;
    run.timings.push("write", t.elapsed());
    output::write_json(&out.join("timings.json"), &run.timings).stage(Stage::Output)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub a: report::SourceReport,
    pub b: report::SourceReport,
}

/// `ingest`: load and filter both sides, write canonical views and side files.
pub fn run_ingest(cfg: &Config) -> Result<IngestSummary, StageError> {
    let (a, b) = ingest_both(cfg)?;
    let out = &cfg.out;
    let write = || -> anyhow::Result<()> {
        output::ensure_dir(out)?;
        write_ingest_files(out, &a, &b)?;
        output::write_canonical(&out.join("canonical_a.csv"), &a.dataset)?;
        output::write_canonical(&out.join("canonical_b.csv"), &b.dataset)?;
        Ok(())
    };
    write().stage(Stage::Output)?;
    let summary = IngestSummary {
        a: report::source_report(&a.loaded, &a.filtered, &cfg.a.name),
        b: report::source_report(&b.loaded, &b.filtered, &cfg.b.name),
    };
    output::write_json(&out.join("ingest.json"), &summary).stage(Stage::Output)?;
    Ok(summary)
}

/// `synth`: writes `a.csv`, `b.csv` and `truth.csv` into `dir`.
pub fn run_synth(cfg: &Config, seed: Option<u64>, dir: Option<&Path>) -> Result<PathBuf, StageError> {
    let section = cfg
        .synth
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config has no [synth] section"))
        .stage(Stage::Config)?;
    let rules = cfg.filter.rules().stage(Stage::Config)?;
    let mut spec = section.spec(cfg.epoch, &rules).stage(Stage::Config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = generate_synthetic(&spec).stage(Stage::Synth)?;
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| section.dir.clone());
    let write = || -> anyhow::Result<()> {
        output::ensure_dir(&dir)?;
        output::write_dataset(&dir.join("a.csv"), &data.a)?;
        output::write_dataset(&dir.join("b.csv"), &data.b)?;
        output::write_truth(&dir.join("truth.csv"), &data.truth)?;
        Ok(())
    };
    write().stage(Stage::Output)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub declared: usize,
    pub truth: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl From<Metrics> for MetricsReport {
    fn from(m: Metrics) -> Self {
        MetricsReport {
            true_positives: m.true_positives,
            declared: m.declared,
            truth: m.truth,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub truth_pairs: usize,
    pub probabilistic: MetricsReport,
    pub baseline_fields: Vec<String>,
    pub baseline: MetricsReport,
    pub review: Option<crate::review::SummaryView>,
}

/// `evaluate`: scores `<out>/matches.csv` and the exact-match baseline
/// against the truth file, and summarizes the review log if one exists.
pub fn run_evaluate(cfg: &Config, truth_path: Option<&Path>) -> Result<Evaluation, StageError> {
    let truth_path = truth_path
        .map(Path::to_path_buf)
        .or_else(|| cfg.truth.clone())
        .ok_or_else(|| anyhow::anyhow!("no truth file: set `truth` in the config or pass --truth"))
        .stage(Stage::Config)?;
    let truth = output::read_pairs(&truth_path)
        .and_then(|p| TruthSet::new(p).map_err(anyhow::Error::from))
        .stage(Stage::Evaluate)?;
    let declared = output::read_pairs(&cfg.out.join("matches.csv")).stage(Stage::Evaluate)?;
    let probabilistic = score_against_truth(declared.iter().map(|(a, b)| (a, b)), &truth);

    let (a, b) = ingest_both(cfg)?;
    let fields = &cfg.linkage.baseline_fields;
    let base = deterministic_baseline(&a.dataset, &b.dataset, fields);
    let baseline = score_against_truth(base.iter().map(|(a, b)| (a, b)), &truth);

    let log = cfg.review_log();
    let review = if log.exists() {
        let entries = crate::review::read_log(&log).stage(Stage::Evaluate)?;
        Some(crate::review::summarize_log(&entries, None))
    } else {
        None
    };
    let eval = Evaluation {
        truth_pairs: truth.len(),
        probabilistic: probabilistic.into(),
        baseline_fields: fields.iter().map(|f| f.to_string()).collect(),
        baseline: baseline.into(),
        review,
    };
    output::write_json(&cfg.out.join("evaluation.json"), &eval).stage(Stage::Output)?;
    Ok(eval)
}
