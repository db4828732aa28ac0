//! Shared setup: configs pointed at temporary directories and small
//! count-table builders.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fslink::config::Config;
use fslink::pipeline;
use fslink_core::model::PatternCounts;
use fslink_core::AgreementPattern;

use super::em_oracle::BinaryInstance;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The bundled synthetic config with every output redirected into `dir`.
pub fn synthetic_config(dir: &Path) -> Config {
    let mut cfg = Config::load(&workspace_root().join("configs/synthetic.toml")).expect("bundled config");
    let data = dir.join("data");
    cfg.out = dir.join("out");
    cfg.truth = Some(data.join("truth.csv"));
    cfg.a.path = data.join("a.csv");
    cfg.b.path = data.join("b.csv");
    if let Some(s) = cfg.synth.as_mut() {
        s.dir = data.clone();
    }
    cfg.review.log = Some(dir.join("decisions.ndjson"));
    cfg
}

/// Synthetic config plus generated inputs.
pub fn synthetic_inputs(dir: &Path, seed: u64) -> Config {
    let cfg = synthetic_config(dir);
    pipeline::run_synth(&cfg, Some(seed), None).expect("synth");
    cfg
}

/// Synthetic inputs plus a full link run written to `<dir>/out`.
pub fn linked_run(dir: &Path, seed: u64) -> Config {
    let cfg = synthetic_inputs(dir, seed);
    let mut run = pipeline::run_pipeline(&cfg, Some(1)).expect("pipeline");
    pipeline::write_run(&cfg, &mut run).expect("write");
    cfg
}

/// Writes the bundled config, with paths redirected into `dir`, to
/// `<dir>/run.toml` for driving the binary.
pub fn write_config(dir: &Path) -> String {
    let text = std::fs::read_to_string(workspace_root().join("configs/synthetic.toml"))
        .unwrap()
        .replace("../out/synthetic", &dir.join("out").display().to_string())
        .replace("../data/synthetic", &dir.join("data").display().to_string())
        .replace("order = \"xi\"", &format!("order = \"xi\"\nlog = {:?}", dir.join("decisions.ndjson")));
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

pub fn binary_pattern(code: usize, fields: usize) -> AgreementPattern {
    AgreementPattern((0..fields).map(|f| Some((code >> f & 1) as u8)).collect())
}

pub fn counts_of(inst: &BinaryInstance) -> PatternCounts {
    let mut c = PatternCounts::new(inst.fields);
    for (code, &n) in inst.counts.iter().enumerate() {
        if n > 0 {
            c.add(binary_pattern(code, inst.fields), n).unwrap();
        }
    }
    c
}

/// One entry per pair, in code order, as the per-pair oracle expects.
pub fn expand(inst: &BinaryInstance) -> Vec<Vec<Option<usize>>> {
    let mut pairs = Vec::new();
    for (code, &n) in inst.counts.iter().enumerate() {
        for _ in 0..n {
            pairs.push((0..inst.fields).map(|f| Some(code >> f & 1)).collect());
        }
    }
    pairs
}

/// `[lambda, m_1..m_F, u_1..u_F]` as agreement probabilities.
pub fn binary_theta(p: &fslink_core::model::ModelParams) -> Vec<f64> {
    let mut t = vec![p.lambda];
    t.extend(p.m.iter().map(|r| r[1]));
    t.extend(p.u.iter().map(|r| r[1]));
    t
}
