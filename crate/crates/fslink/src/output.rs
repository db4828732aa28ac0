//! File writers. Every writer produces the same bytes for the same input.

use std::fs;
use std::io::Write;
use std::path::Path;

use fslink_core::eval::TruthSet;
use fslink_core::{Dataset, LinkedDataset, RecordId, ScoredPair};
use serde::Serialize;

use crate::ingest::{Filtered, Loaded};

pub fn ensure_dir(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)
}

fn csv_writer(path: &Path) -> csv::Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new().from_path(path)
}

pub fn write_merged(path: &Path, linked: &LinkedDataset) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(&linked.columns)?;
    for row in &linked.rows {
        let xi = row.xi.to_string();
        w.write_record(row.values.iter().map(String::as_str).chain([xi.as_str()]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matches(path: &Path, pairs: &[ScoredPair]) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["state", "id_a", "id_b", "xi", "pattern"])?;
    for p in pairs {
        w.write_record([
            p.state.as_str(),
            p.id_a.as_str(),
            p.id_b.as_str(),
            &p.xi.to_string(),
            &p.pattern.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `id_a,id_b` (plus any extra columns) from a match or truth file.
pub fn read_pairs(path: &Path) -> anyhow::Result<Vec<(RecordId, RecordId)>> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    let ia = h
        .iter()
        .position(|c| c == "id_a")
        .ok_or_else(|| anyhow::anyhow!("{}: no id_a column", path.display()))?;
    let ib = h
        .iter()
        .position(|c| c == "id_b")
        .ok_or_else(|| anyhow::anyhow!("{}: no id_b column", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((RecordId::from(&rec[ia]), RecordId::from(&rec[ib])));
    }
    Ok(out)
}

pub fn write_truth(path: &Path, truth: &TruthSet) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id_a", "id_b"])?;
    for (a, b) in truth.iter() {
        w.write_record([a.as_str(), b.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a dataset's raw payload as CSV under its own header.
pub fn write_dataset(path: &Path, d: &Dataset) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(&d.columns)?;
    for r in &d.records {
        w.write_record(&r.payload)?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical linkage view of a dataset, one row per record.
pub fn write_canonical(path: &Path, d: &Dataset) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "state", "city", "zip", "event_date", "days_since_start", "num_killed"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in &d.records {
        w.write_record([
            r.id.to_string(),
            r.state.to_string(),
            opt(r.city.clone()),
            opt(r.zip.clone()),
            opt(r.event_date().map(|d| d.to_string())),
            opt(r.days_since_start().map(|d| d.to_string())),
            opt(r.num_killed.map(|k| k.to_string())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects(path: &Path, loaded: &Loaded) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = loaded.header.clone();
    header.extend(["row_number".to_string(), "reject_reason".to_string(), "reject_field".to_string()]);
    w.write_record(&header)?;
    for r in &loaded.rejects {
        let mut row = r.raw.clone();
        row.resize(loaded.header.len(), String::new());
        row.push(r.row.to_string());
        row.push(r.reason.code().to_string());
        row.push(r.field.map(|f| f.name().to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_filtered(path: &Path, filtered: &[Filtered]) -> csv::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "state", "filter_reason"])?;
    for f in filtered {
        w.write_record([f.id.as_str(), f.state.as_str(), f.reason.code()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    fs::File::create(path)?.write_all(&body)?;
    Ok(())
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, toml::to_string(value)?)?;
    Ok(())
}
