//! End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero
//! exit if any fails.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::Utc;
use common::em_oracle::{draw_instance, em_per_pair, label_free_distance, lattice_search, seeded};
use common::fixtures::{binary_theta, counts_of, expand, synthetic_config, synthetic_inputs};
use common::oracle;
use common::review_checks::{api_contract, kill_and_restart};
use fslink::link::link_datasets;
use fslink::pipeline::{self, ingest_both, run_evaluate};
use fslink_core::compare::jaro_winkler;
use fslink_core::eval::{sensitivity_report, Adjudication, Decision};
use fslink_core::model::{em_fit, EmOptions, ModelParams};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn sensitivity() -> Check {
    let now = Utc::now();
    let mut adj = Vec::new();
    for (decision, n) in [(Decision::Match, 849), (Decision::NonMatch, 72), (Decision::Undetermined, 21)] {
        for _ in 0..n {
            adj.push(Adjudication {
                pair_id: format!("p{}", adj.len()),
                decision,
                reviewer: "r".into(),
                timestamp: now,
            });
        }
    }
    sensitivity_report(&adj).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let s = sensitivity_report(&adj).map_err(|e| e.to_string())?;
    let percents = s.percents_1dp();
    let precision = s.review_precision_percent();
    let elapsed = t.elapsed();
    let detail = format!("{percents:?} precision {precision:?} in {elapsed:?}");
    if percents == [90.1, 7.6, 2.2] && precision == Some(90.12) && elapsed < Duration::from_millis(1) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn jaro_winkler_suite() -> Check {
    let cases = [("MARTHA", "MARHTA", 0.961111), ("DIXON", "DICKSONX", 0.813333), ("JOHNSON", "JOHNSON", 1.0)];
    let mut worst: f64 = 0.0;
    for (a, b, expected) in cases {
        let got = jaro_winkler(a, b);
        let off = (got - oracle::jaro_winkler(a, b)).abs();
        worst = worst.max(off);
        if off > 1e-9 || (got - expected).abs() > 5e-7 {
            return Err(format!("{a}/{b}: {got} (oracle {})", oracle::jaro_winkler(a, b)));
        }
    }
    Ok(format!("3 reference pairs, max deviation from oracle {worst:.1e}"))
}

fn em_oracle() -> Check {
    let mut rng = seeded(2024);
    let instances = 24;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let inst = draw_instance(&mut rng, 3, 200);
        let counts = counts_of(&inst);
        let init = ModelParams::initial(&counts, &[2, 2, 2]).unwrap();
        let fit = em_fit(&counts, &init, &EmOptions::default()).unwrap();
        if let Some(w) = fit.diagnostics.trace.windows(2).find(|w| w[1] < w[0] - 1e-10) {
            return Err(format!("instance {i}: log-likelihood fell {} -> {}", w[0], w[1]));
        }
        let (grid, _) = lattice_search(&inst.counts, 3, 6, i as u64);
        let d = label_free_distance(&binary_theta(&fit.params), &grid, 3);
        worst = worst.max(d);
        if d > 1e-3 {
            return Err(format!("instance {i}: distance to lattice optimum {d}"));
        }
    }
    Ok(format!("{instances} instances, 3 binary fields, 200 pairs; max distance {worst:.5}, traces monotone"))
}

fn count_sufficiency() -> Check {
    let mut rng = seeded(31);
    let mut worst: f64 = 0.0;
    let n = 20;
    for _ in 0..n {
        let inst = draw_instance(&mut rng, 3, 200);
        let counts = counts_of(&inst);
        let init = ModelParams::initial(&counts, &[2, 2, 2]).unwrap();
        let fit = em_fit(&counts, &init, &EmOptions::default()).unwrap();
        let r = em_per_pair(&expand(&inst), &[2, 2, 2], 1e-6, 5000);
        let p = &fit.params;
        let mut d = (p.lambda - r.lambda).abs();
        for (x, y) in p.m.iter().chain(&p.u).flatten().zip(r.m.iter().chain(&r.u).flatten()) {
            d = d.max((x - y).abs());
        }
        worst = worst.max(d);
    }
    let detail = format!("{n} instances, max parameter difference {worst:.1e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pipeline_recovery(dir: &Path) -> Check {
    let cfg = synthetic_inputs(dir, 42);
    let t = Instant::now();
    let mut run = pipeline::run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    pipeline::write_run(&cfg, &mut run).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let e = run_evaluate(&cfg, None).map_err(|e| e.to_string())?;
    let f1 = e.probabilistic.f1.unwrap_or(0.0);
    let recall = e.probabilistic.recall.unwrap_or(0.0);
    let base = e.baseline.recall.unwrap_or(0.0);
    let detail = format!("f1 {f1:.4}, recall {recall:.4} vs baseline {base:.4}, {:.2}s", elapsed.as_secs_f64());
    if f1 >= 0.95 && recall > base && elapsed < Duration::from_secs(5) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn full_scale(dir: &Path) -> Check {
    let mut cfg = synthetic_config(dir);
    let s = cfg.synth.as_mut().unwrap();
    s.n_a = 36_245;
    s.n_b = 30_592;
    s.n_overlap = 27_420;
    pipeline::run_synth(&cfg, None, None).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let mut run = pipeline::run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    pipeline::write_run(&cfg, &mut run).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let blocks = run.outcome.blocks.len();
    let detail = format!(
        "{} x {} records, {blocks} blocks, {} candidate pairs, {} matches, {:.1}s on {} threads",
        run.a.dataset.records.len(),
        run.b.dataset.records.len(),
        run.outcome.candidate_pairs(),
        run.outcome.matches.len(),
        elapsed.as_secs_f64(),
        rayon::current_num_threads()
    );
    if blocks == 41 && elapsed <= Duration::from_secs(120) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn structural(dir: &Path) -> Check {
    let x = dir.join("x");
    let y = dir.join("y");
    let cx = synthetic_inputs(&x, 9);
    let cy = synthetic_inputs(&y, 9);
    let mut rx = pipeline::run_pipeline(&cx, Some(1)).map_err(|e| e.to_string())?;
    pipeline::write_run(&cx, &mut rx).map_err(|e| e.to_string())?;
    let mut ry = pipeline::run_pipeline(&cy, Some(4)).map_err(|e| e.to_string())?;
    pipeline::write_run(&cy, &mut ry).map_err(|e| e.to_string())?;

    let m = &rx.outcome.matches;
    let ids_a: BTreeSet<_> = m.iter().map(|p| &p.id_a).collect();
    let ids_b: BTreeSet<_> = m.iter().map(|p| &p.id_b).collect();
    if ids_a.len() != m.len() || ids_b.len() != m.len() {
        return Err("a record id appears in two matches".into());
    }
    let state_a: HashMap<_, _> = rx.a.dataset.records.iter().map(|r| (&r.id, r.state)).collect();
    let state_b: HashMap<_, _> = rx.b.dataset.records.iter().map(|r| (&r.id, r.state)).collect();
    if m.iter().any(|p| state_a[&p.id_a] != state_b[&p.id_b]) {
        return Err("cross-state match".into());
    }

    let (a, b) = ingest_both(&cx).map_err(|e| e.to_string())?;
    let fields = cx.linkage.field_configs();
    let mut sweep = Vec::new();
    for i in 0..10 {
        let mut opts = cx.linkage.options();
        opts.threshold = 0.5 + 0.05 * i as f64;
        sweep.push(link_datasets(&a.dataset, &b.dataset, &fields, &opts).map_err(|e| e.to_string())?.matches.len());
    }
    if sweep.windows(2).any(|w| w[1] > w[0]) {
        return Err(format!("match counts over thresholds 0.50..0.95 not non-increasing: {sweep:?}"));
    }

    for name in ["merged.csv", "matches.csv", "report.json", "params/pooled.toml"] {
        let p = std::fs::read(cx.out.join(name)).map_err(|e| e.to_string())?;
        let q = std::fs::read(cy.out.join(name)).map_err(|e| e.to_string())?;
        if p != q {
            return Err(format!("{name} differs between reruns"));
        }
    }
    Ok(format!("{} matches one-to-one within state; sweep {sweep:?}; reruns identical", m.len()))
}

fn review(dir: &Path) -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(api_contract(&dir.join("api")))?;
    kill_and_restart(&dir.join("kill"))?;
    Ok("all endpoints, no UI bundle; SIGKILL plus torn log tail, summary identical after restart".into())
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let checks: Vec<Criterion> = vec![
        ("sensitivity arithmetic", Box::new(sensitivity)),
        ("jaro-winkler reference suite", Box::new(jaro_winkler_suite)),
        ("em oracle equivalence", Box::new(em_oracle)),
        ("pattern-count sufficiency", Box::new(count_sufficiency)),
        ("pipeline recovery", Box::new(|| pipeline_recovery(&t.join("recovery")))),
        ("full-scale performance", Box::new(|| full_scale(&t.join("scale")))),
        ("structural invariants", Box::new(|| structural(&t.join("structure")))),
        ("review service durability", Box::new(|| review(&t.join("review")))),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
